// Copyright 2026 The structkd Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include "structkd/teacher_cache.hpp"

#include <fmt/format.h>
#include <json.hpp>

#include <cmath>
#include <fstream>

#include "structkd/errors.hpp"

namespace structkd {

namespace {

void append_double(std::string& out, double v) {
  if (!std::isfinite(v)) throw DataError("cannot serialise a non-finite value");
  out += fmt::format("{:.17g}", v);
}

std::string quoted(const std::string& s) { return nlohmann::json(s).dump(); }

}  // namespace

void TeacherCacheRecord::validate() const {
  if (!kbest && !posteriors) throw DataError("cache record " + sentence_id + " has no targets");
  if (kbest) {
    if (kbest->empty()) throw DataError("cache record " + sentence_id + " has an empty k-best list");
    double total = 0;
    for (const auto& e : kbest->entries) total += e.weight;
    if (std::abs(total - 1.0) > 1e-6)
      throw DataError("cache record " + sentence_id + " k-best weights sum to " + std::to_string(total));
  }
  if (posteriors) {
    for (Eigen::Index i = 0; i < posteriors->rows(); ++i)
      if (std::abs(posteriors->row(i).sum() - 1.0) > 1e-6)
        throw DataError("cache record " + sentence_id + " posterior row is not a distribution");
  }
}

std::string to_json_line(const TeacherCacheRecord& r) {
  std::string out = "{\"sentence_id\":" + quoted(r.sentence_id) + ",\"language\":" + quoted(r.language);
  if (r.kbest) {
    out += ",\"kbest\":[";
    for (std::size_t i = 0; i < r.kbest->size(); ++i) {
      const KBestEntry& e = (*r.kbest)[i];
      if (i) out += ',';
      out += "{\"labels\":[";
      for (std::size_t t = 0; t < e.labels.size(); ++t) {
        if (t) out += ',';
        out += std::to_string(e.labels[t]);
      }
      out += "],\"weight\":";
      append_double(out, e.weight);
      out += '}';
    }
    out += ']';
  }
  if (r.posteriors) {
    out += ",\"posteriors\":[";
    for (Eigen::Index i = 0; i < r.posteriors->rows(); ++i) {
      if (i) out += ',';
      out += '[';
      for (Eigen::Index j = 0; j < r.posteriors->cols(); ++j) {
        if (j) out += ',';
        append_double(out, (*r.posteriors)(i, j));
      }
      out += ']';
    }
    out += ']';
  }
  out += ",\"teacher_hash\":" + quoted(r.teacher_hash) + "}";
  return out;
}

TeacherCacheRecord from_json_line(const std::string& line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("bad cache record: ") + e.what(), 0);
  }
  TeacherCacheRecord r;
  try {
    r.sentence_id = j.at("sentence_id").get<std::string>();
    r.language = j.at("language").get<std::string>();
    r.teacher_hash = j.value("teacher_hash", std::string());
    if (j.contains("kbest") && !j["kbest"].is_null()) {
      KBestList list;
      for (const auto& e : j["kbest"]) {
        const double w = e.at("weight").get<double>();
        // Only relative scores matter downstream; log weight preserves them.
        list.entries.push_back({e.at("labels").get<LabelSequence>(), std::log(w), w});
      }
      r.kbest = std::move(list);
    }
    if (j.contains("posteriors") && !j["posteriors"].is_null()) {
      const auto rows = j["posteriors"].get<std::vector<std::vector<double>>>();
      const std::size_t cols = rows.empty() ? 0 : rows.front().size();
      Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols));
      for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != cols) throw DataError("ragged posterior matrix in " + r.sentence_id);
        for (std::size_t c = 0; c < cols; ++c) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = rows[i][c];
      }
      r.posteriors = std::move(m);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("bad cache record: ") + e.what(), 0);
  }
  r.validate();
  return r;
}

void write_teacher_cache(std::ostream& out, const std::vector<TeacherCacheRecord>& records) {
  for (const auto& r : records) out << to_json_line(r) << '\n';
}

void write_teacher_cache(const std::filesystem::path& path, const std::vector<TeacherCacheRecord>& records) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write teacher cache " + path.string());
  write_teacher_cache(out, records);
}

std::vector<TeacherCacheRecord> read_teacher_cache(std::istream& in) {
  std::vector<TeacherCacheRecord> out;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      out.push_back(from_json_line(line));
    } catch (const ParseError& e) {
      throw ParseError(e.what(), line_no);
    }
  }
  return out;
}

std::vector<TeacherCacheRecord> read_teacher_cache(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open teacher cache " + path.string());
  return read_teacher_cache(in);
}

std::map<std::string, TeacherTargets> index_cache(const std::vector<TeacherCacheRecord>& records) {
  std::map<std::string, TeacherTargets> out;
  for (const auto& r : records)
    if (!out.emplace(r.sentence_id, r.targets()).second)
      throw DataError("duplicate cache record for " + r.sentence_id);
  return out;
}

}  // namespace structkd

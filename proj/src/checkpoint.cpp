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


#include "structkd/checkpoint.hpp"

#include <openssl/evp.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <unordered_map>
#include <utility>

#include "structkd/corpus.hpp"
#include "structkd/errors.hpp"

namespace structkd {

namespace {

constexpr char kMagic[8] = {'S', 'K', 'D', 'C', 'K', 'P', 'T', '\0'};

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian");

template <typename T>
void put(std::string& out, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.append(buf, sizeof(T));
}

void put_string(std::string& out, const std::string& s) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out += s;
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }

  std::string get_string() {
    const auto len = get<std::uint32_t>();
    need(len);
    std::string s = bytes_.substr(pos_, len);
    pos_ += len;
    return s;
  }

  void get_raw(void* dst, std::size_t n) {
    need(n);
    std::memcpy(dst, bytes_.data() + pos_, n);
    pos_ += n;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw DataError("checkpoint is truncated");
  }

  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  std::string out(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint64_t>(out, ckpt.params.rng_seed);
  const auto tensors = ckpt.params.tensors();
  put<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    put_string(out, name);
    put<std::uint64_t>(out, static_cast<std::uint64_t>(t->rows()));
    put<std::uint64_t>(out, static_cast<std::uint64_t>(t->cols()));
    out.append(reinterpret_cast<const char*>(t->data()), static_cast<std::size_t>(t->size()) * sizeof(double));
  }
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.strings.size()));
  for (const auto& [name, list] : ckpt.strings) {
    put_string(out, name);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(list.size()));
    for (const auto& s : list) put_string(out, s);
  }
  return out;
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  if (bytes.size() < sizeof(kMagic) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0)
    throw DataError("not a structkd checkpoint");
  Reader in(bytes);
  char magic[sizeof(kMagic)];
  in.get_raw(magic, sizeof(magic));
  const auto version = in.get<std::uint32_t>();
  if (version != kCheckpointVersion)
    throw DataError("unsupported checkpoint version " + std::to_string(version));

  Checkpoint ckpt;
  ckpt.params.rng_seed = in.get<std::uint64_t>();
  std::unordered_map<std::string, Matrix> found;
  const auto count = in.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = in.get_string();
    const auto rows = in.get<std::uint64_t>();
    const auto cols = in.get<std::uint64_t>();
    if (rows > (1u << 28) || cols > (1u << 28)) throw DataError("implausible tensor shape for " + name);
    Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    in.get_raw(m.data(), static_cast<std::size_t>(m.size()) * sizeof(double));
    found.emplace(std::move(name), std::move(m));
  }
  for (auto& [name, t] : ckpt.params.tensors()) {
    auto it = found.find(name);
    if (it == found.end()) throw DataError("checkpoint lacks tensor " + name);
    *t = std::move(it->second);
  }
  if (found.size() != ckpt.params.tensors().size()) throw DataError("unexpected tensors in checkpoint");
  const ModelParams expected = ModelParams::zeros(ckpt.params.shape());
  const auto want = expected.tensors();
  const auto got = std::as_const(ckpt.params).tensors();
  for (std::size_t i = 0; i < want.size(); ++i)
    if (want[i].second->rows() != got[i].second->rows() || want[i].second->cols() != got[i].second->cols())
      throw DataError("tensor " + want[i].first + " has inconsistent dimensions");
  const auto lists = in.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < lists; ++i) {
    std::string name = in.get_string();
    const auto n = in.get<std::uint32_t>();
    std::vector<std::string> list;
    list.reserve(n);
    for (std::uint32_t j = 0; j < n; ++j) list.push_back(in.get_string());
    ckpt.strings.emplace(std::move(name), std::move(list));
  }
  if (!in.done()) throw DataError("trailing bytes after checkpoint");
  return ckpt;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  const std::string bytes = serialize_checkpoint(ckpt);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

namespace {
std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}
}  // namespace

Checkpoint read_checkpoint(const std::filesystem::path& path) { return deserialize_checkpoint(slurp(path)); }

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("SHA-256 failed");
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return hex.str();
}

std::string sha256_file(const std::filesystem::path& path) { return sha256_hex(slurp(path)); }

int load_pretrained_embeddings(const std::filesystem::path& path,
                               const std::vector<std::string>& vocab_words, ModelParams& params) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open embedding file " + path.string());
  std::unordered_map<std::string, int> index;
  for (int i = 0; i < static_cast<int>(vocab_words.size()); ++i) index.emplace(vocab_words[i], i);
  const Eigen::Index dim = params.embeddings.cols();
  int hits = 0;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream fields(line);
    std::string word;
    if (!(fields >> word)) continue;
    std::vector<double> values;
    for (double v; fields >> v;) values.push_back(v);
    if (line_no == 1 && values.size() == 1) continue;  // word2vec "count dim" header
    if (static_cast<Eigen::Index>(values.size()) != dim)
      throw ParseError("embedding has " + std::to_string(values.size()) + " values, expected " +
                           std::to_string(dim),
                       line_no);
    auto it = index.find(Vocab::normalize(word));
    if (it == index.end()) continue;
    for (Eigen::Index j = 0; j < dim; ++j) params.embeddings(it->second, j) = values[static_cast<std::size_t>(j)];
    ++hits;
  }
  return hits;
}

}  // namespace structkd

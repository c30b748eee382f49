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


#ifndef STRUCTKD_TEACHER_CACHE_HPP_
#define STRUCTKD_TEACHER_CACHE_HPP_

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "structkd/losses.hpp"

namespace structkd {

// Frozen pseudo-targets for one training sentence.
struct TeacherCacheRecord {
  std::string sentence_id;
  std::string language;
  std::optional<KBestList> kbest;
  std::optional<PosteriorMatrix> posteriors;
  std::string teacher_hash;

  TeacherTargets targets() const { return {kbest, posteriors}; }
  // Throws DataError when neither target is present or weights are off.
  void validate() const;
};

// One JSON object per line:
//   {"sentence_id":..,"language":..,"kbest":[{"labels":[..],"weight":..}],
//    "posteriors":[[..]],"teacher_hash":..}
// Doubles are written with 17 significant digits.
std::string to_json_line(const TeacherCacheRecord& record);
TeacherCacheRecord from_json_line(const std::string& line);

void write_teacher_cache(std::ostream& out, const std::vector<TeacherCacheRecord>& records);
void write_teacher_cache(const std::filesystem::path& path, const std::vector<TeacherCacheRecord>& records);
std::vector<TeacherCacheRecord> read_teacher_cache(std::istream& in);
std::vector<TeacherCacheRecord> read_teacher_cache(const std::filesystem::path& path);

// sentence_id -> targets, for the training loop.
std::map<std::string, TeacherTargets> index_cache(const std::vector<TeacherCacheRecord>& records);

}  // namespace structkd

#endif  // STRUCTKD_TEACHER_CACHE_HPP_

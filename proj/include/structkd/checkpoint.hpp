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


#ifndef STRUCTKD_CHECKPOINT_HPP_
#define STRUCTKD_CHECKPOINT_HPP_

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "structkd/encoder.hpp"

namespace structkd {

// Binary container: "SKDCKPT\0", u32 version, u64 rng_seed, named tensors
// (u32 name length, name, u64 rows, u64 cols, row-major little-endian
// doubles), then named string lists. Round-trips bitwise.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ModelParams params;
  // Free-form metadata kept alongside the weights: "tagset", "vocab",
  // "decoder", "languages", ...
  std::map<std::string, std::vector<std::string>> strings;

  bool operator==(const Checkpoint&) const = default;
};

std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(const std::string& bytes);

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

// Hex SHA-256.
std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const std::filesystem::path& path);

// Replaces embedding rows with vectors from a "word v1 v2 ..." text file;
// returns how many vocabulary entries were found.
int load_pretrained_embeddings(const std::filesystem::path& path,
                               const std::vector<std::string>& vocab_words, ModelParams& params);

}  // namespace structkd

#endif  // STRUCTKD_CHECKPOINT_HPP_

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


#ifndef STRUCTKD_TAGSET_HPP_
#define STRUCTKD_TAGSET_HPP_

#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "structkd/errors.hpp"

namespace structkd {

// Ordered set of predictable labels. The start symbol is not a label; its
// index is size(), one past the last predictable label.
class Tagset {
 public:
  Tagset() = default;
  explicit Tagset(std::vector<std::string> labels) : labels_(std::move(labels)) {
    if (labels_.empty()) throw ContractViolation("tagset must contain at least one label");
    for (int i = 0; i < static_cast<int>(labels_.size()); ++i) {
      if (labels_[i].empty()) throw ContractViolation("tagset label names must be non-empty");
      if (!index_.emplace(labels_[i], i).second)
        throw ContractViolation("duplicate tagset label '" + labels_[i] + "'");
    }
  }

  int size() const { return static_cast<int>(labels_.size()); }
  int start_id() const { return size(); }
  bool empty() const { return labels_.empty(); }

  const std::string& name(int id) const {
    if (id < 0 || id >= size()) throw IndexError("label id " + std::to_string(id) + " out of range");
    return labels_[id];
  }

  int id(std::string_view label) const {
    auto it = index_.find(std::string(label));
    if (it == index_.end()) throw IndexError("unknown label '" + std::string(label) + "'");
    return it->second;
  }

  bool contains(std::string_view label) const { return index_.count(std::string(label)) > 0; }

  const std::vector<std::string>& labels() const { return labels_; }

  bool operator==(const Tagset& other) const { return labels_ == other.labels_; }

 private:
  std::vector<std::string> labels_;
  std::unordered_map<std::string, int> index_;
};

}  // namespace structkd

#endif  // STRUCTKD_TAGSET_HPP_

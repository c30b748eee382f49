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


#ifndef STRUCTKD_METRICS_HPP_
#define STRUCTKD_METRICS_HPP_

#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "structkd/lattice.hpp"
#include "structkd/tagset.hpp"

namespace structkd {

struct Span {
  int start = 0;
  int end = 0;  // inclusive
  std::string type;

  auto operator<=>(const Span&) const = default;
};

using SpanSet = std::set<Span>;

// Maximal BIO spans with conlleval's lenient rule: an I-X that does not
// continue an X span opens a new one.
SpanSet decode_spans(const std::vector<std::string>& labels);
SpanSet decode_spans(const LabelSequence& labels, const Tagset& tagset);

// Canonical BIO labelling of non-overlapping spans over n tokens.
std::vector<std::string> encode_spans(const SpanSet& spans, int n);

struct PRF {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  long correct = 0;
  long gold = 0;
  long predicted = 0;
};

// Micro-averaged over all sentences.
PRF span_f1(const std::vector<SpanSet>& gold, const std::vector<SpanSet>& pred);

double token_accuracy(const std::vector<LabelSequence>& gold, const std::vector<LabelSequence>& pred);

enum class LabelScheme { BIO, Raw };

LabelScheme parse_label_scheme(const std::string& text);

// Span F1 for BIO tasks, token accuracy for raw-tag tasks, in [0, 1].
double task_metric(LabelScheme scheme, const Tagset& tagset, const std::vector<LabelSequence>& gold,
                   const std::vector<LabelSequence>& pred);

}  // namespace structkd

#endif  // STRUCTKD_METRICS_HPP_

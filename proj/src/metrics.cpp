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


#include "structkd/metrics.hpp"

#include "structkd/errors.hpp"

namespace structkd {

namespace {

// (tag, type): tag is 'B', 'I' or 'O'.
std::pair<char, std::string> split_label(const std::string& label) {
  if (label == "O") return {'O', ""};
  if (label.size() >= 2 && label[1] == '-' && (label[0] == 'B' || label[0] == 'I'))
    return {label[0], label.substr(2)};
  return {'I', label};
}

}  // namespace

SpanSet decode_spans(const std::vector<std::string>& labels) {
  SpanSet spans;
  int open_start = -1;
  std::string open_type;
  const auto close = [&](int end) {
    if (open_start >= 0) spans.insert({open_start, end, open_type});
    open_start = -1;
  };
  for (int i = 0; i < static_cast<int>(labels.size()); ++i) {
    const auto [tag, type] = split_label(labels[static_cast<std::size_t>(i)]);
    if (tag == 'O') {
      close(i - 1);
    } else if (tag == 'B' || open_start < 0 || type != open_type) {
      close(i - 1);
      open_start = i;
      open_type = type;
    }
  }
  close(static_cast<int>(labels.size()) - 1);
  return spans;
}

SpanSet decode_spans(const LabelSequence& labels, const Tagset& tagset) {
  std::vector<std::string> names;
  names.reserve(labels.size());
  for (int id : labels) names.push_back(tagset.name(id));
  return decode_spans(names);
}

std::vector<std::string> encode_spans(const SpanSet& spans, int n) {
  std::vector<std::string> labels(static_cast<std::size_t>(n), "O");
  int last_end = -1;
  for (const Span& s : spans) {
    if (s.start < 0 || s.end < s.start || s.end >= n)
      throw ContractViolation("span out of range");
    if (s.start <= last_end) throw ContractViolation("spans overlap");
    labels[static_cast<std::size_t>(s.start)] = "B-" + s.type;
    for (int i = s.start + 1; i <= s.end; ++i) labels[static_cast<std::size_t>(i)] = "I-" + s.type;
    last_end = s.end;
  }
  return labels;
}

PRF span_f1(const std::vector<SpanSet>& gold, const std::vector<SpanSet>& pred) {
  if (gold.size() != pred.size()) throw ContractViolation("gold and predicted sentence counts differ");
  PRF r;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    r.gold += static_cast<long>(gold[i].size());
    r.predicted += static_cast<long>(pred[i].size());
    for (const Span& s : pred[i]) r.correct += static_cast<long>(gold[i].count(s));
  }
  r.precision = r.predicted > 0 ? static_cast<double>(r.correct) / static_cast<double>(r.predicted) : 0.0;
  r.recall = r.gold > 0 ? static_cast<double>(r.correct) / static_cast<double>(r.gold) : 0.0;
  r.f1 = r.precision + r.recall > 0.0 ? 2.0 * r.precision * r.recall / (r.precision + r.recall) : 0.0;
  return r;
}

double token_accuracy(const std::vector<LabelSequence>& gold, const std::vector<LabelSequence>& pred) {
  if (gold.size() != pred.size()) throw ContractViolation("gold and predicted sentence counts differ");
  long total = 0;
  long right = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (gold[i].size() != pred[i].size())
      throw ContractViolation("sentence " + std::to_string(i) + " length mismatch");
    for (std::size_t t = 0; t < gold[i].size(); ++t) right += gold[i][t] == pred[i][t];
    total += static_cast<long>(gold[i].size());
  }
  return total > 0 ? static_cast<double>(right) / static_cast<double>(total) : 0.0;
}

LabelScheme parse_label_scheme(const std::string& text) {
  if (text == "bio") return LabelScheme::BIO;
  if (text == "raw") return LabelScheme::Raw;
  throw ConfigError("unknown label scheme '" + text + "' (expected bio or raw)");
}

double task_metric(LabelScheme scheme, const Tagset& tagset, const std::vector<LabelSequence>& gold,
                   const std::vector<LabelSequence>& pred) {
  if (scheme == LabelScheme::Raw) return token_accuracy(gold, pred);
  if (gold.size() != pred.size()) throw ContractViolation("gold and predicted sentence counts differ");
  std::vector<SpanSet> g, p;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    g.push_back(decode_spans(gold[i], tagset));
    p.push_back(decode_spans(pred[i], tagset));
  }
  return span_f1(g, p).f1;
}

}  // namespace structkd

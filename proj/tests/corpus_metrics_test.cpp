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


#include <filesystem>
#include <random>
#include <sstream>

#include "doctest.h"
#include "structkd/corpus.hpp"
#include "structkd/errors.hpp"
#include "structkd/metrics.hpp"

using namespace structkd;

namespace {

RawSplit parse(const std::string& text, int token_col = 0, int label_col = -1) {
  std::istringstream in(text);
  return read_conll(in, token_col, label_col);
}

SpanSet spans(std::initializer_list<Span> s) { return SpanSet(s); }

}  // namespace

TEST_CASE("read_conll splits sentences on blank lines and skips DOCSTART") {
  const RawSplit split = parse("-DOCSTART- -X- O\n\nEU NNP B-ORG\nrejects VBZ O\n\n\nPeter NNP B-PER\n");
  REQUIRE(split.size() == 2);
  CHECK(split[0].tokens == std::vector<std::string>{"EU", "rejects"});
  CHECK(split[0].labels == std::vector<std::string>{"B-ORG", "O"});
  CHECK(split[1].labels == std::vector<std::string>{"B-PER"});

  const RawSplit pos = parse("EU NNP B-ORG\nrejects VBZ O\n", 0, 1);
  CHECK(pos[0].labels == std::vector<std::string>{"NNP", "VBZ"});
  // trailing sentence without a final newline, tabs as separators
  const RawSplit tabs = parse("a\tX\nb\tY");
  REQUIRE(tabs.size() == 1);
  CHECK(tabs[0].labels == std::vector<std::string>{"X", "Y"});
}

TEST_CASE("ragged rows are a parse error naming the line") {
  try {
    parse("a B-X\nb O\n\nc d O\ne O\n");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 4);  // column count is fixed by the first row of the file
  }
  CHECK_THROWS_AS(parse("a O\n", 0, 4), ParseError);
}

TEST_CASE("blank-only input is an empty corpus") {
  CHECK(parse("").empty());
  CHECK(parse("\n\n  \n").empty());
  CHECK_THROWS_AS(read_conll(std::filesystem::path("/nonexistent/x.conll")), DataError);
}

TEST_CASE("write then read round-trips") {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> len(1, 6), word(0, 50), lab(0, 3);
  const std::vector<std::string> labels{"O", "B-A", "I-A", "B-B"};
  for (int trial = 0; trial < 20; ++trial) {
    RawSplit split(static_cast<std::size_t>(len(rng)));
    for (auto& s : split) {
      const int n = len(rng);
      for (int i = 0; i < n; ++i) {
        s.tokens.push_back("w" + std::to_string(word(rng)));
        s.labels.push_back(labels[static_cast<std::size_t>(lab(rng))]);
      }
    }
    std::stringstream io;
    write_conll(io, split);
    CHECK(read_conll(io) == split);
  }
}

TEST_CASE("decode_spans follows the lenient BIO reading") {
  CHECK(decode_spans({"B-PER", "I-PER", "O", "B-LOC"}) == spans({{0, 1, "PER"}, {3, 3, "LOC"}}));
  CHECK(decode_spans({"I-PER", "I-PER"}) == spans({{0, 1, "PER"}}));
  CHECK(decode_spans({"B-PER", "I-LOC"}) == spans({{0, 0, "PER"}, {1, 1, "LOC"}}));
  CHECK(decode_spans({"B-PER", "B-PER"}) == spans({{0, 0, "PER"}, {1, 1, "PER"}}));
  CHECK(decode_spans({"O", "I-X", "O"}) == spans({{1, 1, "X"}}));
  CHECK(decode_spans({"O", "O"}).empty());
  CHECK(decode_spans(std::vector<std::string>{}).empty());

  const Tagset tags({"O", "B-X", "I-X"});
  CHECK(decode_spans(LabelSequence{1, 2, 0, 2}, tags) == spans({{0, 1, "X"}, {3, 3, "X"}}));
}

TEST_CASE("encode_spans inverts decode_spans") {
  std::mt19937_64 rng(5);
  const std::vector<std::string> types{"A", "B", "C"};
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 1 + static_cast<int>(rng() % 10);
    SpanSet set;
    int pos = 0;
    while (pos < n) {
      if (rng() % 2) {
        const int end = std::min(n - 1, pos + static_cast<int>(rng() % 3));
        set.insert({pos, end, types[rng() % 3]});
        pos = end + 1;
      } else {
        ++pos;
      }
    }
    const auto labels = encode_spans(set, n);
    CHECK(static_cast<int>(labels.size()) == n);
    CHECK(decode_spans(labels) == set);
  }
  CHECK_THROWS_AS(encode_spans(spans({{0, 2, "A"}, {2, 3, "B"}}), 5), ContractViolation);
  CHECK_THROWS_AS(encode_spans(spans({{3, 5, "A"}}), 5), ContractViolation);
}

TEST_CASE("span_f1 is micro-averaged") {
  const std::vector<SpanSet> gold{spans({{0, 1, "PER"}, {3, 3, "LOC"}}), spans({{0, 0, "ORG"}})};
  const std::vector<SpanSet> pred{spans({{0, 1, "PER"}, {3, 3, "ORG"}}), spans({})};
  const PRF r = span_f1(gold, pred);
  CHECK(r.correct == 1);
  CHECK(r.gold == 3);
  CHECK(r.predicted == 2);
  CHECK(r.precision == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(r.recall == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(r.f1 == doctest::Approx(0.4).epsilon(1e-12));

  // boundary mismatch counts as wrong
  CHECK(span_f1({spans({{0, 1, "PER"}})}, {spans({{0, 0, "PER"}})}).f1 == 0.0);
  CHECK(span_f1(gold, gold).f1 == 1.0);
  CHECK(span_f1({spans({})}, {spans({})}).f1 == 0.0);
  CHECK_THROWS_AS(span_f1(gold, {spans({})}), ContractViolation);

  // swapping gold and prediction swaps precision and recall
  const PRF swapped = span_f1(pred, gold);
  CHECK(swapped.precision == r.recall);
  CHECK(swapped.recall == r.precision);
  CHECK(swapped.f1 == r.f1);

  // sentence order does not matter
  const PRF reordered = span_f1({gold[1], gold[0]}, {pred[1], pred[0]});
  CHECK(reordered.f1 == r.f1);
}

TEST_CASE("token accuracy and task metric") {
  CHECK(token_accuracy({{0, 1, 2}, {1}}, {{0, 1, 1}, {1}}) == doctest::Approx(0.75));
  CHECK(token_accuracy({}, {}) == 0.0);
  CHECK_THROWS_AS(token_accuracy({{0, 1}}, {{0}}), ContractViolation);
  const Tagset tags({"O", "B-X", "I-X"});
  CHECK(task_metric(LabelScheme::Raw, tags, {{0, 1}}, {{0, 2}}) == 0.5);
  CHECK(task_metric(LabelScheme::BIO, tags, {{1, 2}}, {{1, 2}}) == 1.0);
  CHECK(task_metric(LabelScheme::BIO, tags, {{1, 2}}, {{1, 0}}) == 0.0);
  CHECK(parse_label_scheme("bio") == LabelScheme::BIO);
  CHECK_THROWS_AS(parse_label_scheme("iobes"), ConfigError);
}

TEST_CASE("tagset covers every split and puts O first") {
  const RawSplit a = parse("x B-PER\ny O\n");
  const RawSplit b = parse("z I-LOC\n");
  const Tagset tags = build_tagset({&a, &b});
  CHECK(tags.labels() == std::vector<std::string>{"O", "B-PER", "I-LOC"});
  CHECK(tags.start_id() == 3);
  CHECK(build_tagset({&b, &a}) == tags);
  CHECK_THROWS_AS(Tagset({"A", "A"}), ContractViolation);
  CHECK_THROWS_AS(Tagset(std::vector<std::string>{}), ContractViolation);
  CHECK_THROWS_AS(tags.id("B-ORG"), IndexError);
}

TEST_CASE("examples resolve ids; unknown labels are an error") {
  const RawSplit split = parse("The O\nCAT B-X\n\nzebra O\n");
  Vocab vocab;
  vocab.add("the");
  vocab.add("Cat");
  CHECK(vocab.lookup("CAT") == 2);
  CHECK(vocab.lookup("zebra") == Vocab::kUnk);
  CHECK(vocab.words()[0] == "<unk>");
  CHECK(Vocab(vocab.words()).lookup("cat") == 2);
  const Tagset tags({"O", "B-X"});
  const auto ex = to_examples(split, "en", "train", vocab, tags);
  REQUIRE(ex.size() == 2);
  CHECK(ex[0].id == "en/train/0");
  CHECK(ex[1].id == "en/train/1");
  CHECK(ex[0].tokens == std::vector<int>{1, 2});
  CHECK(ex[0].gold == LabelSequence{0, 1});
  CHECK(ex[1].tokens == std::vector<int>{0});
  CHECK(ex[0].words[1] == "CAT");
  CHECK_THROWS_AS(to_examples(split, "en", "train", vocab, Tagset({"O"})), DataError);
}

#include <cmath>
#include <stdexcept>
#include <cstring>

#include "doctest.h"
#include "oie/heads.hpp"
#include "oie/model.hpp"
#include "oracles.hpp"

using namespace oie;
using oie::testing::random_tensor;

namespace {

// Reference decoder used as the enumeration oracle: walks the sequence and
// tracks runs by comparing consecutive (role, begin) classifications. Written
// without reusing any library decoding code.
std::vector<RoleSpan> scan_oracle(const std::vector<int>& tags, TagHalf half) {
  auto role_of = [half](int tag) -> int {
    if (tag == 0) return -1;
    return half == TagHalf::predicate ? 0 : (tag - 1) / 2;
  };
  auto is_begin = [half](int tag) -> bool {
    if (tag == 0) return false;
    return half == TagHalf::predicate ? tag == 1 : tag % 2 == 1;
  };
  std::vector<RoleSpan> out;
  const int n = static_cast<int>(tags.size());
  int i = 0;
  while (i < n) {
    const int r = role_of(tags[static_cast<std::size_t>(i)]);
    if (r < 0) {
      ++i;
      continue;
    }
    int j = i + 1;
    while (j < n && role_of(tags[static_cast<std::size_t>(j)]) == r &&
           !is_begin(tags[static_cast<std::size_t>(j)])) {
      ++j;
    }
    out.push_back({r, {i, j}});
    i = j;
  }
  return out;
}

ModelConfig tiny_model_config() {
  ModelConfig mc;
  mc.encoder.hidden = 16;
  mc.encoder.num_layers = 2;
  mc.encoder.num_heads = 2;
  mc.encoder.ffn_inner = 24;
  mc.encoder.max_len = 20;
  mc.arg_blocks = 2;
  return mc;
}

Corpus small_corpus() {
  Corpus corpus;
  CorpusSentence s;
  s.id = "s0";
  s.lang = "en";
  s.tokens = {"the", "cat", "chased", "the", "mouse"};
  s.tuples.push_back({{2, 3}, {{0, 2}, {3, 5}}});
  corpus.push_back(s);
  return corpus;
}

}  // namespace

TEST_CASE("decode_bio canonical and repair cases") {
  // [O, B-P, I-P, O]
  auto spans = decode_bio({0, 1, 2, 0}, TagHalf::predicate);
  REQUIRE(spans.size() == 1);
  CHECK(spans[0] == RoleSpan{0, {1, 3}});

  // Stray I-P opens a span.
  spans = decode_bio({2, 0}, TagHalf::predicate);
  REQUIRE(spans.size() == 1);
  CHECK(spans[0] == RoleSpan{0, {0, 1}});

  // Role switch inside a run splits it, and B always starts fresh.
  spans = decode_bio({1, 2, 1}, TagHalf::predicate);
  REQUIRE(spans.size() == 2);
  CHECK(spans[0].span == Span{0, 2});
  CHECK(spans[1].span == Span{2, 3});

  auto arg = decode_bio({2, 4, 4, 0}, TagHalf::argument);
  REQUIRE(arg.size() == 2);
  CHECK(arg[0] == RoleSpan{0, {0, 1}});  // repaired I-A0
  CHECK(arg[1] == RoleSpan{1, {1, 3}});  // repaired I-A1 run

  CHECK_THROWS_AS(decode_bio({7}, TagHalf::predicate), std::invalid_argument);
  CHECK_THROWS_AS(decode_bio({-1}, TagHalf::argument), std::invalid_argument);
}

TEST_CASE("decode_bio equals the scan oracle on all length-6 predicate sequences") {
  std::vector<int> tags(6, 0);
  for (int code = 0; code < 729; ++code) {  // 3^6
    int c = code;
    for (int i = 0; i < 6; ++i) {
      tags[static_cast<std::size_t>(i)] = c % 3;
      c /= 3;
    }
    CHECK(decode_bio(tags, TagHalf::predicate) == scan_oracle(tags, TagHalf::predicate));
  }
}

TEST_CASE("decode_bio equals the scan oracle on random argument sequences") {
  Rng rng(43);
  for (int rep = 0; rep < 500; ++rep) {
    const int n = 1 + static_cast<int>(rng.uniform_int(8));
    std::vector<int> tags(static_cast<std::size_t>(n));
    for (int& t : tags) t = static_cast<int>(rng.uniform_int(9));
    CHECK(decode_bio(tags, TagHalf::argument) == scan_oracle(tags, TagHalf::argument));
  }
}

TEST_CASE("encode_tags canonical case") {
  ExtractionTuple t{{1, 2}, {{0, 1}, {2, 4}}};
  TupleTags tags = encode_tuple_tags(4, t);
  CHECK(tags.predicate == std::vector<int>{0, 1, 0, 0});
  CHECK(tags.argument == std::vector<int>{1, 0, 3, 4});

  CHECK(encode_tags(4, {}).empty());
  CHECK(merge_predicate_tags(4, {}) == std::vector<int>{0, 0, 0, 0});
}

TEST_CASE("encode_tags rejects overlapping arguments") {
  ExtractionTuple t{{0, 1}, {{1, 3}, {2, 4}}};
  CHECK_THROWS_AS(encode_tuple_tags(5, t), std::invalid_argument);
  ExtractionTuple bounds{{0, 9}, {{1, 2}}};
  CHECK_THROWS_AS(encode_tuple_tags(5, bounds), std::invalid_argument);
}

TEST_CASE("decode of encode round-trips random tuples") {
  Rng rng(47);
  for (int rep = 0; rep < 1000; ++rep) {
    const int n = 4 + static_cast<int>(rng.uniform_int(8));
    // Partition [0, n) into non-overlapping spans, assign roles in order.
    std::vector<Span> spans;
    int pos = 0;
    while (pos < n && spans.size() < 5) {
      const int len = 1 + static_cast<int>(rng.uniform_int(2));
      if (pos + len > n) break;
      spans.push_back({pos, pos + len});
      pos += len + static_cast<int>(rng.uniform_int(2));
    }
    if (spans.size() < 2) continue;
    ExtractionTuple t;
    const std::size_t pred_slot = rng.uniform_int(spans.size());
    t.predicate = spans[pred_slot];
    for (std::size_t i = 0; i < spans.size(); ++i) {
      if (i == pred_slot) continue;
      if (t.arguments.size() == 4) break;
      t.arguments.push_back(spans[i]);
    }
    if (t.arguments.empty()) continue;

    const TupleTags tags = encode_tuple_tags(n, t);
    const auto pred = decode_bio(tags.predicate, TagHalf::predicate);
    REQUIRE(pred.size() == 1);
    CHECK(pred[0].span == t.predicate);
    const auto args = decode_bio(tags.argument, TagHalf::argument);
    REQUIRE(args.size() == t.arguments.size());
    for (std::size_t i = 0; i < args.size(); ++i) {
      CHECK(args[i].role == static_cast<int>(i));
      CHECK(args[i].span == t.arguments[i]);
    }
  }
}

TEST_CASE("predicate head shape and uniform-logit symmetry") {
  Rng rng(53);
  PredicateHead head(16, rng);
  Tape t;
  Var states = t.input(random_tensor({7, 16}, rng));
  Var logits = head.forward(t, states);
  CHECK(t.val(logits).dim(0) == 7);
  CHECK(t.val(logits).dim(1) == 3);

  // Zeroed parameters produce equal logits, hence a uniform tag distribution.
  // Fresh tape: parameter values must not change under a live tape.
  head.for_each_param([](Parameter& p) { p.value.fill(0.0); });
  Tape t2;
  Var states2 = t2.input(t.val(states));
  Var flat = t2.softmax(head.forward(t2, states2), 1);
  for (int i = 0; i < 7; ++i) {
    for (int j = 0; j < 3; ++j) {
      CHECK(t2.val(flat).at(i, j) == doctest::Approx(1.0 / 3).epsilon(1e-12));
    }
  }
}

TEST_CASE("argument head: predicate vector is the span mean") {
  Rng rng(59);
  ArgumentHead head(16, 24, 2, 2, rng);
  Tensor states = random_tensor({6, 16}, rng);
  Tape t;
  Var sv = t.input(states);

  // Single-token predicate: the vector is that token's state.
  Var one = head.predicate_vector(t, sv, {3, 4});
  CHECK(tmax_abs_diff(t.val(one), tslice_rows(states, 3, 4)) == 0.0);

  // Mean over [1, 4) computed by a direct oracle.
  Var mean = head.predicate_vector(t, sv, {1, 4});
  Tensor expect({1, 16});
  for (int i = 1; i < 4; ++i) {
    for (int j = 0; j < 16; ++j) expect.at(0, j) += states.at(i, j) / 3.0;
  }
  CHECK(tmax_abs_diff(t.val(mean), expect) < 1e-12);

  CHECK_THROWS_AS(head.predicate_vector(t, sv, {2, 2}), std::invalid_argument);
  CHECK_THROWS_AS(head.predicate_vector(t, sv, {4, 9}), std::invalid_argument);
}

TEST_CASE("argument head reacts to the predicate span") {
  Rng rng(61);
  ArgumentHead head(16, 24, 2, 2, rng);
  Tape t;
  Var states = t.input(random_tensor({6, 16}, rng));
  const Tensor a = t.val(head.forward(t, states, {0, 2}));
  const Tensor b = t.val(head.forward(t, states, {3, 5}));
  CHECK(tmax_abs_diff(a, b) > 1e-8);
  CHECK(a.dim(1) == TagScheme::kArgumentTags);
}

TEST_CASE("extract: all-O predictions produce no tuples") {
  OieModel model = OieModel::build(small_corpus(), tiny_model_config(), 3);
  // Flattened predicate head emits equal logits; argmax lands on O.
  model.predicate_head().for_each_param([](Parameter& p) { p.value.fill(0.0); });
  CHECK(model.extract({"the", "cat", "chased", "the", "mouse"}).empty());
}

TEST_CASE("extract is deterministic and spans stay in bounds") {
  Rng shapes(67);
  for (int rep = 0; rep < 5; ++rep) {
    OieModel model = OieModel::build(small_corpus(), tiny_model_config(),
                                     100 + static_cast<std::uint64_t>(rep));
    // Push weights around so predictions are nontrivial garbage.
    for (Parameter* p : model.parameters()) {
      for (double& v : p->value.data) v += shapes.gaussian(0.0, 0.05);
    }
    const std::vector<std::string> tokens = {"the", "mouse", "chased", "cat"};
    const auto first = model.extract(tokens);
    const auto second = model.extract(tokens);
    CHECK(first == second);
    for (const auto& tuple : first) {
      CHECK(tuple.predicate.start >= 0);
      CHECK(tuple.predicate.end <= 4);
      CHECK(tuple.predicate.start < tuple.predicate.end);
      CHECK(!tuple.arguments.empty());
      for (const auto& a : tuple.arguments) {
        CHECK(a.start >= 0);
        CHECK(a.end <= 4);
        CHECK(a.start < a.end);
      }
    }
  }
}

TEST_CASE("unknown tokens map to the unk id and still extract") {
  OieModel model = OieModel::build(small_corpus(), tiny_model_config(), 3);
  const auto out = model.extract({"unseen", "words", "here"});
  // No crash; result may be empty or not depending on init.
  (void)out;
  CHECK(model.vocab().id_of("unseen") == Vocabulary::kUnk);
}

TEST_CASE("sentence loss composes predicate and argument terms") {
  Corpus corpus = small_corpus();
  OieModel model = OieModel::build(corpus, tiny_model_config(), 9);
  Tape t;
  Var loss = model.sentence_loss(t, corpus[0]);
  CHECK(t.val(loss).numel() == 1);
  CHECK(t.val(loss).at(0) > 0.0);
  t.backward(loss);  // smoke: gradients flow end to end
}

#include "oie/heads.hpp"

#include <cmath>
#include <stdexcept>

namespace oie {

namespace {

Tensor gaussian_tensor(std::vector<int> shape, double stddev, Rng& rng) {
  Tensor t(std::move(shape));
  for (double& v : t.data) v = rng.gaussian(0.0, stddev);
  return t;
}

}  // namespace

PredicateHead::PredicateHead(int hidden, Rng& rng) {
  const double std1 = 1.0 / std::sqrt(static_cast<double>(hidden));
  w1_ = Parameter("heads.predicate.w1", ParamGroup::classifier,
                  gaussian_tensor({hidden, hidden}, std1, rng));
  b1_ = Parameter("heads.predicate.b1", ParamGroup::classifier, Tensor({1, hidden}));
  w2_ = Parameter("heads.predicate.w2", ParamGroup::classifier,
                  gaussian_tensor({hidden, TagScheme::kPredicateTags}, std1, rng));
  b2_ = Parameter("heads.predicate.b2", ParamGroup::classifier,
                  Tensor({1, TagScheme::kPredicateTags}));
}

Var PredicateHead::forward(Tape& t, Var sentence_states) {
  Var h = t.relu(t.add_broadcast_row(t.matmul(sentence_states, t.leaf(w1_)),
                                     t.leaf(b1_)));
  return t.add_broadcast_row(t.matmul(h, t.leaf(w2_)), t.leaf(b2_));
}

void PredicateHead::for_each_param(const std::function<void(Parameter&)>& fn) {
  fn(w1_); fn(b1_); fn(w2_); fn(b2_);
}

ArgumentHead::ArgumentHead(int hidden, int ffn_inner, int num_blocks,
                           int num_heads, Rng& rng)
    : num_heads_(num_heads) {
  for (int i = 0; i < num_blocks; ++i) {
    blocks_.push_back(Encoder::make_layer("heads.argument.block" + std::to_string(i),
                                          ParamGroup::classifier, hidden,
                                          ffn_inner, rng));
  }
  const double std1 = 1.0 / std::sqrt(static_cast<double>(hidden));
  cls_w_ = Parameter("heads.argument.classifier.w", ParamGroup::classifier,
                     gaussian_tensor({hidden, TagScheme::kArgumentTags}, std1, rng));
  cls_b_ = Parameter("heads.argument.classifier.b", ParamGroup::classifier,
                     Tensor({1, TagScheme::kArgumentTags}));
}

Var ArgumentHead::predicate_vector(Tape& t, Var sentence_states,
                                   const Span& predicate) {
  const int n = t.val(sentence_states).dim(0);
  if (predicate.start < 0 || predicate.start >= predicate.end ||
      predicate.end > n) {
    throw std::invalid_argument("argument head: empty or out-of-bounds predicate span");
  }
  return t.mean_rows(t.slice_rows(sentence_states, predicate.start, predicate.end));
}

Var ArgumentHead::forward(Tape& t, Var sentence_states, const Span& predicate) {
  Var fused = t.add_broadcast_row(sentence_states,
                                  predicate_vector(t, sentence_states, predicate));
  Var x = fused;
  for (auto& block : blocks_) {
    x = Encoder::transformer_block(t, x, block, num_heads_);
  }
  return t.add_broadcast_row(t.matmul(x, t.leaf(cls_w_)), t.leaf(cls_b_));
}

void ArgumentHead::for_each_param(const std::function<void(Parameter&)>& fn) {
  for (auto& b : blocks_) {
    fn(b.wq); fn(b.wk); fn(b.wv); fn(b.wo);
    fn(b.ffn_w1); fn(b.ffn_b1); fn(b.ffn_w2); fn(b.ffn_b2);
    fn(b.ln1_gamma); fn(b.ln1_beta); fn(b.ln2_gamma); fn(b.ln2_beta);
  }
  fn(cls_w_); fn(cls_b_);
}

std::vector<int> greedy_tags(const Tensor& logits) {
  if (logits.ndim() != 2) throw std::invalid_argument("greedy_tags: expects rank 2");
  std::vector<int> tags(static_cast<std::size_t>(logits.dim(0)));
  for (int i = 0; i < logits.dim(0); ++i) {
    int best = 0;
    for (int j = 1; j < logits.dim(1); ++j) {
      if (logits.at(i, j) > logits.at(i, best)) best = j;
    }
    tags[static_cast<std::size_t>(i)] = best;
  }
  return tags;
}

}  // namespace oie

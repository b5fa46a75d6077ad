#pragma once

#include <vector>

#include "oie/autodiff.hpp"
#include "oie/encoder.hpp"
#include "oie/extraction.hpp"

namespace oie {

// Per-token predicate tagger: one relu hidden layer over the encoder output,
// then a 3-way tag projection.
class PredicateHead {
 public:
  PredicateHead(int hidden, Rng& rng);

  // sentence_states excludes the marker row: [n x d] -> [n x 3].
  Var forward(Tape& t, Var sentence_states);

  void for_each_param(const std::function<void(Parameter&)>& fn);

 private:
  Parameter w1_, b1_, w2_, b2_;
};

// Per-predicate argument tagger: fuses the mean predicate vector into every
// token state, runs a short stack of attention blocks, then classifies each
// token into the 9 argument tags.
class ArgumentHead {
 public:
  ArgumentHead(int hidden, int ffn_inner, int num_blocks, int num_heads,
               Rng& rng);

  Var forward(Tape& t, Var sentence_states, const Span& predicate);

  // The fused predicate vector, exposed for tests: mean of the predicate's
  // token states.
  Var predicate_vector(Tape& t, Var sentence_states, const Span& predicate);

  int num_blocks() const { return static_cast<int>(blocks_.size()); }

  void for_each_param(const std::function<void(Parameter&)>& fn);

 private:
  int num_heads_;
  std::vector<Encoder::Layer> blocks_;
  Parameter cls_w_, cls_b_;
};

// Row argmax with ties broken toward the lower tag id.
std::vector<int> greedy_tags(const Tensor& logits);

}  // namespace oie

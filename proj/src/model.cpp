#include "oie/model.hpp"

#include <algorithm>
#include <stdexcept>

namespace oie {

namespace {

ModelConfig with_vocab_size(ModelConfig cfg, int vocab_size) {
  cfg.encoder.vocab_size = vocab_size;
  return cfg;
}

}  // namespace

OieModel::OieModel(ModelConfig cfg, Vocabulary vocab, std::uint64_t seed)
    : cfg_(with_vocab_size(cfg, vocab.size())),
      vocab_(std::move(vocab)),
      rng_(seed),
      encoder_(cfg_.encoder, rng_),
      pred_head_(cfg_.encoder.hidden, rng_),
      arg_head_(cfg_.encoder.hidden, cfg_.encoder.ffn_inner, cfg_.arg_blocks,
                cfg_.encoder.num_heads, rng_) {}

OieModel OieModel::build(const Corpus& corpus, ModelConfig cfg,
                         std::uint64_t seed) {
  Vocabulary vocab;
  for (const auto& s : corpus) {
    for (const auto& tok : s.tokens) vocab.add(tok);
  }
  return OieModel(cfg, std::move(vocab), seed);
}

void OieModel::attach_pool(const MoloraConfig& cfg) {
  if (pool_) {
    throw std::invalid_argument("attach_pool: a pool is already attached");
  }
  pool_ = LoraExpertPool::create(cfg_.encoder, cfg, rng_);
}

void OieModel::set_pool(LoraExpertPool pool) {
  if (pool_) {
    throw std::invalid_argument("set_pool: a pool is already attached");
  }
  pool_ = std::move(pool);
}

std::vector<Parameter*> OieModel::parameters() {
  std::vector<Parameter*> out;
  auto push = [&out](Parameter& p) { out.push_back(&p); };
  encoder_.for_each_param(push);
  pred_head_.for_each_param(push);
  arg_head_.for_each_param(push);
  if (pool_) pool_->for_each_param(push);
  return out;
}

std::vector<Parameter*> OieModel::parameters_in_groups(
    const std::set<ParamGroup>& groups) {
  std::vector<Parameter*> out;
  for (Parameter* p : parameters()) {
    if (groups.count(p->group)) out.push_back(p);
  }
  return out;
}

void OieModel::set_trainable_groups(const std::set<ParamGroup>& groups) {
  for (Parameter* p : parameters()) p->trainable = groups.count(p->group) > 0;
}

void OieModel::zero_grads() {
  for (Parameter* p : parameters()) p->zero_grad();
}

HiddenStates OieModel::encode(Tape& t, const std::vector<int>& ids,
                              bool use_pool) {
  return encoder_.encode(t, ids, use_pool && pool_ ? &*pool_ : nullptr);
}

Var OieModel::sentence_loss(Tape& t, const CorpusSentence& sentence,
                            bool use_pool) {
  const std::vector<int> ids = vocab_.encode(sentence.tokens);
  const int n = static_cast<int>(ids.size());
  HiddenStates hs = encode(t, ids, use_pool);
  Var states = t.slice_rows(hs.final_state(), 1, n + 1);

  Var pred_logits = pred_head_.forward(t, states);
  Var loss = t.cross_entropy(pred_logits,
                             merge_predicate_tags(n, sentence.tuples));

  if (!sentence.tuples.empty()) {
    Var arg_sum;
    for (const auto& tuple : sentence.tuples) {
      const TupleTags tags = encode_tuple_tags(n, tuple);
      Var arg_logits = arg_head_.forward(t, states, tuple.predicate);
      Var ce = t.cross_entropy(arg_logits, tags.argument);
      arg_sum = arg_sum.valid() ? t.add(arg_sum, ce) : ce;
    }
    Var arg_mean = t.scale(arg_sum, 1.0 / static_cast<double>(sentence.tuples.size()));
    loss = t.add(loss, arg_mean);
  }
  return loss;
}

std::vector<ExtractionTuple> OieModel::extract(
    const std::vector<std::string>& tokens, bool use_pool) {
  return extract_ids(vocab_.encode(tokens), use_pool);
}

std::vector<ExtractionTuple> OieModel::extract_ids(const std::vector<int>& ids,
                                                   bool use_pool) {
  const int n = static_cast<int>(ids.size());
  Tape t;
  HiddenStates hs = encode(t, ids, use_pool);
  Var states = t.slice_rows(hs.final_state(), 1, n + 1);

  const std::vector<int> pred_tags =
      greedy_tags(t.val(pred_head_.forward(t, states)));
  const std::vector<RoleSpan> predicates = decode_bio(pred_tags, TagHalf::predicate);

  std::vector<ExtractionTuple> tuples;
  for (const RoleSpan& p : predicates) {
    Var arg_logits = arg_head_.forward(t, states, p.span);
    std::vector<RoleSpan> args =
        decode_bio(greedy_tags(t.val(arg_logits)), TagHalf::argument);
    if (args.empty()) continue;
    std::sort(args.begin(), args.end(), [](const RoleSpan& a, const RoleSpan& b) {
      return a.role != b.role ? a.role < b.role : a.span.start < b.span.start;
    });
    ExtractionTuple tuple;
    tuple.predicate = p.span;
    for (const RoleSpan& a : args) tuple.arguments.push_back(a.span);
    tuples.push_back(std::move(tuple));
  }
  std::sort(tuples.begin(), tuples.end(),
            [](const ExtractionTuple& a, const ExtractionTuple& b) {
              return a.predicate.start < b.predicate.start;
            });
  return tuples;
}

}  // namespace oie

#pragma once

#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "oie/corpus.hpp"
#include "oie/encoder.hpp"
#include "oie/heads.hpp"
#include "oie/molora.hpp"
#include "oie/vocab.hpp"

namespace oie {

struct ModelConfig {
  EncoderConfig encoder;
  int arg_blocks = 2;
};

// Encoder + both extraction heads + optional adapter pool, with the flat
// parameter registry the optimizer and checkpoints work from.
class OieModel {
 public:
  OieModel(ModelConfig cfg, Vocabulary vocab, std::uint64_t seed);

  // Builds the vocabulary from the corpus tokens first.
  static OieModel build(const Corpus& corpus, ModelConfig cfg, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  const Vocabulary& vocab() const { return vocab_; }
  Encoder& encoder() { return encoder_; }
  PredicateHead& predicate_head() { return pred_head_; }
  ArgumentHead& argument_head() { return arg_head_; }
  Rng& rng() { return rng_; }

  void attach_pool(const MoloraConfig& cfg);
  void set_pool(LoraExpertPool pool);  // checkpoint restore
  bool has_pool() const { return pool_.has_value(); }
  LoraExpertPool* pool() { return pool_ ? &*pool_ : nullptr; }
  const LoraExpertPool* pool() const { return pool_ ? &*pool_ : nullptr; }
  void detach_pool() { pool_.reset(); }

  std::vector<Parameter*> parameters();
  std::vector<Parameter*> parameters_in_groups(const std::set<ParamGroup>& groups);
  void set_trainable_groups(const std::set<ParamGroup>& groups);
  void zero_grads();

  HiddenStates encode(Tape& t, const std::vector<int>& ids, bool use_pool = true);

  // Joint loss for one sentence: predicate cross-entropy over the union of
  // gold predicates, plus the mean per-tuple argument cross-entropy with
  // gold predicate spans fed to the argument head (teacher forcing).
  Var sentence_loss(Tape& t, const CorpusSentence& sentence, bool use_pool = true);

  std::vector<ExtractionTuple> extract(const std::vector<std::string>& tokens,
                                       bool use_pool = true);
  std::vector<ExtractionTuple> extract_ids(const std::vector<int>& ids,
                                           bool use_pool = true);

 private:
  ModelConfig cfg_;
  Vocabulary vocab_;
  Rng rng_;
  Encoder encoder_;
  PredicateHead pred_head_;
  ArgumentHead arg_head_;
  std::optional<LoraExpertPool> pool_;
};

}  // namespace oie

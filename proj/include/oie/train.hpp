#pragma once

#include <set>
#include <string>
#include <vector>

#include "oie/corpus.hpp"
#include "oie/model.hpp"
#include "oie/optimizer.hpp"

namespace oie {

// Stage schedule. Each stage trains exactly its group set and leaves every
// other parameter bit-identical:
//   stage 1: word embeddings + heads
//   stage 2: position embeddings + encoder body + heads
//   stage 3: adapter experts + gates (backbone fully frozen)
struct StageConfig {
  int stage = 1;
  int epochs = 1;
  int batch_size = 128;
  double lr = 3e-5;
  std::uint64_t seed = 0;
  std::string source_lang = "en";  // corpus selector for stages 1 and 2
  bool shuffle = true;             // per-epoch order, stages 1 and 2 only
  std::vector<std::string> language_order;  // stage 3; empty = corpus order

  static StageConfig defaults(int stage);
  std::set<ParamGroup> trainable_groups() const;
  void validate() const;
};

struct MetricsRecord {
  int step = 0;
  int stage = 0;
  std::string language;
  double loss = 0.0;
};

std::string metrics_record_line(const MetricsRecord& r);

struct StageResult {
  std::vector<double> epoch_losses;
  std::vector<MetricsRecord> records;
};

// Runs one stage over the corpus. Stages 1-2 iterate batches of the source
// language. Stage 3 takes one batch from every language per optimizer step
// and averages the per-language batch losses uniformly (1/K), so the epoch
// loss does not depend on language order.
StageResult run_stage(const StageConfig& cfg, const Corpus& corpus,
                      OieModel& model);

// Mean sentence loss without touching gradients.
double evaluate_loss(OieModel& model, const Corpus& corpus, bool use_pool = true);

}  // namespace oie

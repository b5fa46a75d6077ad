#include "oie/train.hpp"

#include <algorithm>
#include <cstdio>
#include <stdexcept>

namespace oie {

StageConfig StageConfig::defaults(int stage) {
  StageConfig cfg;
  cfg.stage = stage;
  cfg.epochs = 1;
  cfg.lr = 3e-5;
  cfg.batch_size = stage == 3 ? 64 : 128;
  return cfg;
}

std::set<ParamGroup> StageConfig::trainable_groups() const {
  switch (stage) {
    case 1: return {ParamGroup::word, ParamGroup::classifier};
    case 2: return {ParamGroup::position, ParamGroup::body, ParamGroup::classifier};
    case 3: return {ParamGroup::lora, ParamGroup::gate};
    default: break;
  }
  throw std::invalid_argument("stage must be 1, 2 or 3");
}

void StageConfig::validate() const {
  trainable_groups();  // throws on a bad stage id
  if (epochs < 1) throw std::invalid_argument("epochs must be positive");
  if (batch_size < 1) throw std::invalid_argument("batch size must be positive");
  if (lr <= 0.0) throw std::invalid_argument("learning rate must be positive");
}

std::string metrics_record_line(const MetricsRecord& r) {
  char buf[128];
  std::snprintf(buf, sizeof(buf), "step=%d stage=%d lang=%s loss=%.17g", r.step,
                r.stage, r.language.c_str(), r.loss);
  return buf;
}

namespace {

std::vector<std::vector<const CorpusSentence*>> make_batches(
    const Corpus& corpus, const std::vector<int>& order, int batch_size) {
  std::vector<std::vector<const CorpusSentence*>> batches;
  for (std::size_t i = 0; i < order.size(); i += static_cast<std::size_t>(batch_size)) {
    std::vector<const CorpusSentence*> batch;
    for (std::size_t j = i;
         j < std::min(order.size(), i + static_cast<std::size_t>(batch_size)); ++j) {
      batch.push_back(&corpus[static_cast<std::size_t>(order[j])]);
    }
    batches.push_back(std::move(batch));
  }
  return batches;
}

Var batch_loss(Tape& t, OieModel& model,
               const std::vector<const CorpusSentence*>& batch) {
  Var sum;
  for (const CorpusSentence* s : batch) {
    Var loss = model.sentence_loss(t, *s);
    sum = sum.valid() ? t.add(sum, loss) : loss;
  }
  return t.scale(sum, 1.0 / static_cast<double>(batch.size()));
}

StageResult run_monolingual_stage(const StageConfig& cfg, const Corpus& corpus,
                                  OieModel& model) {
  Corpus selected = corpus_for_language(corpus, cfg.source_lang);
  if (selected.empty()) {
    throw std::invalid_argument("stage " + std::to_string(cfg.stage) +
                                ": no '" + cfg.source_lang + "' sentences in corpus");
  }
  AdamW optimizer(model.parameters(), AdamWConfig{.lr = cfg.lr});
  StageResult result;
  int step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<int> order(selected.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    if (cfg.shuffle) {
      Rng shuffle_rng(cfg.seed + static_cast<std::uint64_t>(epoch));
      order = shuffle_rng.permutation(static_cast<int>(selected.size()));
    }
    double epoch_sum = 0.0;
    const auto batches = make_batches(selected, order, cfg.batch_size);
    for (const auto& batch : batches) {
      Tape t;
      Var loss = batch_loss(t, model, batch);
      optimizer.zero_grad();
      t.backward(loss);
      optimizer.step();
      ++step;
      epoch_sum += t.val(loss).at(0);
      result.records.push_back({step, cfg.stage, cfg.source_lang, t.val(loss).at(0)});
    }
    result.epoch_losses.push_back(epoch_sum / static_cast<double>(batches.size()));
  }
  return result;
}

StageResult run_multilingual_stage(const StageConfig& cfg, const Corpus& corpus,
                                   OieModel& model) {
  if (!model.has_pool()) {
    throw std::invalid_argument("stage 3 requires an attached adapter pool");
  }
  std::vector<std::string> langs =
      cfg.language_order.empty() ? corpus_languages(corpus) : cfg.language_order;
  if (langs.empty()) throw std::invalid_argument("stage 3: empty corpus");

  std::vector<Corpus> per_lang;
  std::size_t max_batches = 0;
  std::vector<std::vector<std::vector<const CorpusSentence*>>> lang_batches;
  for (const auto& lang : langs) {
    Corpus part = corpus_for_language(corpus, lang);
    if (part.empty()) {
      throw std::invalid_argument("stage 3: no sentences for language " + lang);
    }
    std::vector<int> order(part.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    per_lang.push_back(std::move(part));
    lang_batches.push_back(make_batches(per_lang.back(), order, cfg.batch_size));
    max_batches = std::max(max_batches, lang_batches.back().size());
  }

  const double inv_k = 1.0 / static_cast<double>(langs.size());
  AdamW optimizer(model.parameters(), AdamWConfig{.lr = cfg.lr});
  StageResult result;
  int step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    double epoch_sum = 0.0;
    for (std::size_t round = 0; round < max_batches; ++round) {
      Tape t;
      Var round_sum;
      ++step;
      for (std::size_t li = 0; li < langs.size(); ++li) {
        const auto& batches = lang_batches[li];
        const auto& batch = batches[round % batches.size()];
        Var lb = batch_loss(t, model, batch);
        result.records.push_back({step, cfg.stage, langs[li], t.val(lb).at(0)});
        round_sum = round_sum.valid() ? t.add(round_sum, lb) : lb;
      }
      Var round_loss = t.scale(round_sum, inv_k);
      optimizer.zero_grad();
      t.backward(round_loss);
      optimizer.step();
      epoch_sum += t.val(round_loss).at(0);
    }
    result.epoch_losses.push_back(epoch_sum / static_cast<double>(max_batches));
  }
  return result;
}

}  // namespace

StageResult run_stage(const StageConfig& cfg, const Corpus& corpus,
                      OieModel& model) {
  cfg.validate();
  if (corpus.empty()) throw std::invalid_argument("run_stage: empty corpus");
  model.set_trainable_groups(cfg.trainable_groups());
  model.zero_grads();
  if (cfg.stage == 3) return run_multilingual_stage(cfg, corpus, model);
  return run_monolingual_stage(cfg, corpus, model);
}

double evaluate_loss(OieModel& model, const Corpus& corpus, bool use_pool) {
  if (corpus.empty()) throw std::invalid_argument("evaluate_loss: empty corpus");
  double sum = 0.0;
  for (const auto& s : corpus) {
    Tape t;
    sum += t.val(model.sentence_loss(t, s, use_pool)).at(0);
  }
  return sum / static_cast<double>(corpus.size());
}

}  // namespace oie

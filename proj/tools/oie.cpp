#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "oie/annotate.hpp"
#include "oie/checkpoint.hpp"
#include "oie/score.hpp"
#include "oie/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace oie;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitInternal = 3;

// Paper-default hyperparameters; a key=value config file and then flags
// override them, and every report echoes the effective values.
struct Settings {
  std::uint64_t seed = 0;
  int hidden = 64;
  int layers = 4;
  int heads = 4;
  int ffn = 128;
  int max_len = 100;
  int arg_blocks = 2;
  int experts = 6;
  int rank = 64;
  int top_k = 4;
  double alpha_scale = 16.0;
  double lr = 3e-5;
  int epochs1 = 1, epochs2 = 1, epochs3 = 1;
  int batch1 = 128, batch2 = 128, batch3 = 64;

  std::map<std::string, std::string> as_map() const {
    std::map<std::string, std::string> m;
    auto put = [&m](const char* k, auto v) { m[k] = std::to_string(v); };
    put("seed", seed);
    put("hidden", hidden);
    put("layers", layers);
    put("heads", heads);
    put("ffn", ffn);
    put("max_len", max_len);
    put("arg_blocks", arg_blocks);
    put("experts", experts);
    put("rank", rank);
    put("top_k", top_k);
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%g", alpha_scale);
    m["alpha_scale"] = buf;
    std::snprintf(buf, sizeof(buf), "%g", lr);
    m["lr"] = buf;
    put("epochs1", epochs1);
    put("epochs2", epochs2);
    put("epochs3", epochs3);
    put("batch1", batch1);
    put("batch2", batch2);
    put("batch3", batch3);
    return m;
  }

  void apply(const std::map<std::string, std::string>& kv) {
    auto geti = [&kv](const char* k, int& out) {
      auto it = kv.find(k);
      if (it != kv.end()) out = std::stoi(it->second);
    };
    auto getd = [&kv](const char* k, double& out) {
      auto it = kv.find(k);
      if (it != kv.end()) out = std::stod(it->second);
    };
    auto it = kv.find("seed");
    if (it != kv.end()) seed = std::stoull(it->second);
    geti("hidden", hidden);
    geti("layers", layers);
    geti("heads", heads);
    geti("ffn", ffn);
    geti("max_len", max_len);
    geti("arg_blocks", arg_blocks);
    geti("experts", experts);
    geti("rank", rank);
    geti("top_k", top_k);
    getd("alpha_scale", alpha_scale);
    getd("lr", lr);
    geti("epochs1", epochs1);
    geti("epochs2", epochs2);
    geti("epochs3", epochs3);
    geti("batch1", batch1);
    geti("batch2", batch2);
    geti("batch3", batch3);
  }

  ModelConfig model_config() const {
    ModelConfig mc;
    mc.encoder.hidden = hidden;
    mc.encoder.num_layers = layers;
    mc.encoder.num_heads = heads;
    mc.encoder.ffn_inner = ffn;
    mc.encoder.max_len = max_len;
    mc.arg_blocks = arg_blocks;
    return mc;
  }

  MoloraConfig molora_config() const {
    MoloraConfig cfg;
    cfg.num_experts = experts;
    cfg.rank = rank;
    cfg.top_k = top_k;
    cfg.alpha_scale = alpha_scale;
    return cfg;
  }
};

std::map<std::string, std::string> load_config_file(const std::string& path) {
  std::map<std::string, std::string> kv;
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  std::string line;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t");
      if (b == std::string::npos) return std::string();
      const auto e = s.find_last_not_of(" \t");
      return s.substr(b, e - b + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (!key.empty()) kv[key] = value;
  }
  return kv;
}

std::string config_header(const char* command, const Settings& s) {
  std::ostringstream os;
  os << "# oie " << command << " report\n# config:";
  for (const auto& [k, v] : s.as_map()) os << " " << k << "=" << v;
  os << "\n";
  return os.str();
}

std::vector<std::string> split_list(const std::string& csv) {
  std::vector<std::string> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

void write_metrics(const StageResult& result, std::ostream& out) {
  for (const auto& r : result.records) out << metrics_record_line(r) << "\n";
}

std::string tuple_display(const CorpusSentence& s, const ExtractionTuple& t) {
  const StringTuple st = to_string_tuple(s, t);
  std::string text = st.arguments.empty() ? "" : st.arguments[0];
  text += " --> " + st.predicate;
  for (std::size_t i = 1; i < st.arguments.size(); ++i) {
    text += " --> " + st.arguments[i];
  }
  return text;
}

// Shared by score/stats/sweep: per-language tuple-match report over a
// prediction corpus aligned to gold by sentence id.
std::map<std::string, ScoreReport> score_by_language(const Corpus& predictions,
                                                     const Corpus& gold) {
  std::map<std::string, const CorpusSentence*> pred_by_id;
  for (const auto& p : predictions) pred_by_id[p.id + "\x1f" + p.lang] = &p;

  std::map<std::string, std::vector<std::vector<StringTuple>>> pred_lists;
  std::map<std::string, std::vector<std::vector<StringTuple>>> gold_lists;
  for (const auto& g : gold) {
    std::vector<StringTuple> gold_tuples;
    for (const auto& t : g.tuples) gold_tuples.push_back(to_string_tuple(g, t));
    std::vector<StringTuple> pred_tuples;
    auto it = pred_by_id.find(g.id + "\x1f" + g.lang);
    if (it != pred_by_id.end()) {
      for (const auto& t : it->second->tuples) {
        pred_tuples.push_back(to_string_tuple(*it->second, t));
      }
    }
    pred_lists[g.lang].push_back(std::move(pred_tuples));
    gold_lists[g.lang].push_back(std::move(gold_tuples));
  }
  std::map<std::string, ScoreReport> out;
  for (const auto& [lang, gl] : gold_lists) {
    out[lang] = tuple_match(pred_lists[lang], gl);
  }
  return out;
}

Corpus extract_over_corpus(OieModel& model, const Corpus& corpus, bool use_pool) {
  Corpus out;
  for (const auto& s : corpus) {
    CorpusSentence p;
    p.id = s.id;
    p.lang = s.lang;
    p.tokens = s.tokens;
    p.tuples = model.extract(s.tokens, use_pool);
    out.push_back(std::move(p));
  }
  return out;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string corpus_path;
  std::string stage3_corpus_path;
  std::string checkpoint_dir = "checkpoints";
  std::string metrics_path;
  std::string stages_csv = "1,2,3";
  bool no_molora = false;
  bool english_only_stage3 = false;
  bool sweep_ranks = false;
  std::string bench_path;
};

int cmd_train(const Settings& s, const TrainArgs& a) {
  const Corpus corpus = load_corpus(a.corpus_path);
  std::vector<int> stages;
  for (const auto& part : split_list(a.stages_csv)) stages.push_back(std::stoi(part));
  if (a.no_molora) {
    for (int st : stages) {
      if (st == 3) {
        throw std::invalid_argument("stage 3 cannot be requested together with --no-molora");
      }
    }
    stages.erase(std::remove(stages.begin(), stages.end(), 3), stages.end());
  }

  // Stage-3 corpus: English source plus the annotated languages, or English
  // only under the dataset ablation.
  Corpus stage3 = corpus;
  if (!a.english_only_stage3 && !a.stage3_corpus_path.empty()) {
    const Corpus extra = load_corpus(a.stage3_corpus_path);
    stage3.insert(stage3.end(), extra.begin(), extra.end());
  }
  const bool needs_stage3 =
      std::find(stages.begin(), stages.end(), 3) != stages.end();
  if (needs_stage3 && !a.english_only_stage3 && a.stage3_corpus_path.empty()) {
    throw std::invalid_argument(
        "stage 3 needs --stage3-corpus (or --english-only-stage3)");
  }

  fs::create_directories(a.checkpoint_dir);
  std::ofstream metrics;
  if (!a.metrics_path.empty()) {
    metrics.open(a.metrics_path);
    if (!metrics) throw std::runtime_error("cannot write metrics: " + a.metrics_path);
  }

  OieModel model = OieModel::build(corpus, s.model_config(), s.seed);
  for (int stage : stages) {
    StageConfig cfg = StageConfig::defaults(stage);
    cfg.seed = s.seed;
    cfg.lr = s.lr;
    cfg.epochs = stage == 1 ? s.epochs1 : stage == 2 ? s.epochs2 : s.epochs3;
    cfg.batch_size = stage == 1 ? s.batch1 : stage == 2 ? s.batch2 : s.batch3;
    if (stage == 3 && !model.has_pool()) model.attach_pool(s.molora_config());
    const Corpus& data = stage == 3 ? stage3 : corpus;
    StageResult res = run_stage(cfg, data, model);
    if (metrics.is_open()) write_metrics(res, metrics);
    const std::string path =
        (fs::path(a.checkpoint_dir) / ("stage" + std::to_string(stage) + ".ckpt")).string();
    save_checkpoint(model, path, stage);
    std::cout << "stage " << stage << ": epochs=" << cfg.epochs
              << " final-loss=" << res.epoch_losses.back() << " -> " << path
              << "\n";
  }
  std::cout << "wrote " << stages.size() << " checkpoints to " << a.checkpoint_dir
            << "\n";
  return kExitOk;
}

int cmd_sweep(const Settings& base, const TrainArgs& a) {
  if (a.stage3_corpus_path.empty()) {
    throw std::invalid_argument("--sweep-ranks needs --stage3-corpus");
  }
  const Corpus corpus = load_corpus(a.corpus_path);
  Corpus stage3 = corpus;
  const Corpus extra = load_corpus(a.stage3_corpus_path);
  stage3.insert(stage3.end(), extra.begin(), extra.end());

  fs::create_directories(a.checkpoint_dir);
  const std::string base_ckpt =
      (fs::path(a.checkpoint_dir) / "sweep_base.ckpt").string();
  {
    OieModel model = OieModel::build(corpus, base.model_config(), base.seed);
    for (int stage : {1, 2}) {
      StageConfig cfg = StageConfig::defaults(stage);
      cfg.seed = base.seed;
      cfg.lr = base.lr;
      cfg.epochs = stage == 1 ? base.epochs1 : base.epochs2;
      cfg.batch_size = stage == 1 ? base.batch1 : base.batch2;
      run_stage(cfg, corpus, model);
    }
    save_checkpoint(model, base_ckpt, 2);
  }

  // Rank grid with the best-k pairing used in the reference sweep.
  const std::vector<std::pair<int, int>> grid = {
      {1, 1}, {2, 3}, {4, 3}, {8, 6}, {16, 6}, {32, 2}, {64, 4}, {128, 2}};

  std::ostringstream report;
  report << config_header("sweep", base);
  report << "rank\tk";
  std::vector<std::string> langs = corpus_languages(stage3);
  for (const auto& lang : langs) report << "\tF1(" << lang << ")";
  report << "\tTotal\n";

  for (const auto& [rank, k] : grid) {
    OieModel model = load_checkpoint(base_ckpt).model;
    MoloraConfig mc = base.molora_config();
    mc.rank = rank;
    mc.top_k = std::min(k, mc.num_experts);
    model.attach_pool(mc);
    StageConfig cfg = StageConfig::defaults(3);
    cfg.lr = base.lr;
    cfg.epochs = base.epochs3;
    cfg.batch_size = base.batch3;
    run_stage(cfg, stage3, model);

    const Corpus predictions = extract_over_corpus(model, stage3, true);
    const auto by_lang = score_by_language(predictions, stage3);
    report << rank << "\t" << mc.top_k;
    double total = 0.0;
    for (const auto& lang : langs) {
      const double f1 = by_lang.count(lang) ? by_lang.at(lang).f1 : 0.0;
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%.3f", f1);
      report << "\t" << buf;
      total += f1;
    }
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3f", total);
    report << "\t" << buf << "\n";
  }

  std::cout << report.str();
  if (!a.metrics_path.empty()) {
    std::ofstream out(a.metrics_path);
    out << report.str();
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------

int cmd_extract(const Settings& s, const std::string& checkpoint,
                const std::string& input, const std::string& input_corpus,
                const std::string& output, bool no_pool) {
  if (!fs::exists(checkpoint)) {
    throw std::runtime_error("checkpoint does not exist: " + checkpoint);
  }
  LoadedCheckpoint loaded = load_checkpoint(checkpoint);

  (void)s;
  std::vector<CorpusSentence> sentences;
  if (!input_corpus.empty()) {
    for (CorpusSentence sent : load_corpus(input_corpus)) {
      sent.tuples.clear();
      sentences.push_back(std::move(sent));
    }
  } else {
    std::ifstream in(input);
    if (!in) throw std::runtime_error("cannot open input file: " + input);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      CorpusSentence sent;
      sent.id = "line-" + std::to_string(lineno++);
      sent.lang = "en";
      std::istringstream is(line);
      std::string tok;
      while (is >> tok) sent.tokens.push_back(tok);
      if (!sent.tokens.empty()) sentences.push_back(std::move(sent));
    }
  }

  std::ofstream out(output, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write output file: " + output);
  for (auto& sent : sentences) {
    sent.tuples = loaded.model.extract(sent.tokens, !no_pool);
    json rec;
    rec["id"] = sent.id;
    rec["lang"] = sent.lang;
    rec["tokens"] = sent.tokens;
    json tuples = json::array();
    for (const auto& t : sent.tuples) {
      json jt;
      jt["pred"] = {t.predicate.start, t.predicate.end};
      json args = json::array();
      for (const auto& arg : t.arguments) args.push_back({arg.start, arg.end});
      jt["args"] = args;
      jt["text"] = tuple_display(sent, t);
      tuples.push_back(jt);
    }
    rec["tuples"] = tuples;
    out << rec.dump() << "\n";
  }
  std::cout << "wrote extractions for " << sentences.size() << " sentences to "
            << output << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------

int cmd_annotate(const Settings& s, const std::string& corpus_path,
                 const std::string& languages_csv, const std::string& cache_dir,
                 const std::string& output, const std::string& rejects,
                 double max_reject_rate, int fan_out, bool live,
                 const std::string& live_host, const std::string& live_model) {
  const Corpus source = load_corpus(corpus_path);
  const std::vector<std::string> languages = split_list(languages_csv);
  if (languages.empty()) throw std::invalid_argument("no target languages given");

  std::unique_ptr<AnnotatorClient> client;
  if (live) {
    client = std::make_unique<HttpAnnotator>(live_host, live_model);
  } else {
    client = std::make_unique<MockAnnotator>(source);
  }

  AnnotateResult result =
      annotate_corpus(source, languages, *client, cache_dir,
                      MockAnnotator::exemplar_for, fan_out);
  save_corpus(result.corpus, output);
  if (!rejects.empty()) save_rejections(result.records, rejects);

  const int total = static_cast<int>(result.records.size());
  const int rejected = total - static_cast<int>(result.corpus.size());
  const double rate = total > 0 ? static_cast<double>(rejected) / total : 0.0;
  std::cout << config_header("annotate", s);
  std::cout << "records=" << total << " valid=" << result.corpus.size()
            << " rejected=" << rejected << " client_calls=" << result.client_calls
            << "\n";
  std::cout << stats_table(compute_stats(result.corpus));
  if (rate > max_reject_rate) {
    std::cerr << "rejection rate " << rate << " exceeds threshold "
              << max_reject_rate << "\n";
    return kExitData;
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------

int cmd_score(const Settings& s, const std::string& predictions_path,
              const std::string& gold_path, const std::string& scheme,
              const std::string& report_path) {
  std::ostringstream report;
  report << config_header("score", s);

  if (scheme == "tuple") {
    const Corpus predictions = load_corpus(predictions_path);
    const Corpus gold = load_corpus(gold_path);
    report << "# pair score: macro over predicate and argument-bag slots\n";
    report << "lang\tP\tR\tF1\tpred\tgold\n";
    const auto by_lang = score_by_language(predictions, gold);
    json record;
    for (const auto& [lang, rep] : by_lang) {
      char buf[128];
      std::snprintf(buf, sizeof(buf), "%s\t%.4f\t%.4f\t%.4f\t%d\t%d\n",
                    lang.c_str(), rep.precision, rep.recall, rep.f1,
                    rep.predicted_total, rep.gold_total);
      report << buf;
      record[lang] = {{"precision", rep.precision},
                      {"recall", rep.recall},
                      {"f1", rep.f1}};
    }
    report << "json " << record.dump() << "\n";
  } else if (scheme == "synset") {
    const Corpus predictions = load_corpus(predictions_path);
    const auto bench = load_benchmark(gold_path);
    std::map<std::string, const CorpusSentence*> pred_by_id;
    for (const auto& p : predictions) pred_by_id[p.id + "\x1f" + p.lang] = &p;

    std::map<std::string, std::vector<std::vector<StringTriple>>> pred_lists;
    std::map<std::string, std::vector<std::vector<FactSynset>>> gold_lists;
    for (const auto& b : bench) {
      std::vector<StringTriple> triples;
      auto it = pred_by_id.find(b.id + "\x1f" + b.lang);
      if (it != pred_by_id.end()) {
        for (const auto& t : it->second->tuples) {
          const StringTuple st = to_string_tuple(*it->second, t);
          if (st.arguments.empty()) continue;
          StringTriple triple;
          triple.subject = st.arguments[0];
          triple.relation = st.predicate;
          for (std::size_t i = 1; i < st.arguments.size(); ++i) {
            if (i > 1) triple.object += " ";
            triple.object += st.arguments[i];
          }
          triples.push_back(std::move(triple));
        }
      }
      pred_lists[b.lang].push_back(std::move(triples));
      gold_lists[b.lang].push_back(b.synsets);
    }
    report << "lang\tP\tR\tF1\tpred\tsynsets\n";
    json record;
    for (const auto& [lang, gl] : gold_lists) {
      const ScoreReport rep = fact_synset_match(pred_lists[lang], gl);
      char buf[128];
      std::snprintf(buf, sizeof(buf), "%s\t%.4f\t%.4f\t%.4f\t%d\t%d\n",
                    lang.c_str(), rep.precision, rep.recall, rep.f1,
                    rep.predicted_total, rep.gold_total);
      report << buf;
      record[lang] = {{"precision", rep.precision},
                      {"recall", rep.recall},
                      {"f1", rep.f1}};
    }
    report << "json " << record.dump() << "\n";
  } else {
    throw std::invalid_argument("unknown scheme: " + scheme +
                                " (expected tuple or synset)");
  }

  std::cout << report.str();
  if (!report_path.empty()) {
    std::ofstream out(report_path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write report: " + report_path);
    out << report.str();
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------

int cmd_stats(const Settings& s, const std::string& corpus_path,
              const std::string& report_path) {
  const Corpus corpus = load_corpus(corpus_path);
  const CorpusStats stats = compute_stats(corpus);
  std::ostringstream report;
  report << config_header("stats", s);
  report << stats_table(stats);
  report << "json " << stats_json(stats) << "\n";
  std::cout << report.str();
  if (!report_path.empty()) {
    std::ofstream out(report_path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write report: " + report_path);
    out << report.str();
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cross-lingual open information extraction toolkit"};
  app.require_subcommand(1);
  // Model/schedule options live on the parent; let subcommands pass them up.
  app.fallthrough(true);

  Settings settings;
  std::string config_path;
  app.add_option("--config", config_path, "key=value config file");
  app.add_option("--seed", settings.seed, "global random seed");
  app.add_option("--hidden", settings.hidden);
  app.add_option("--layers", settings.layers);
  app.add_option("--heads", settings.heads);
  app.add_option("--ffn", settings.ffn);
  app.add_option("--max-len", settings.max_len);
  app.add_option("--arg-blocks", settings.arg_blocks);
  app.add_option("--experts", settings.experts, "adapter experts per site");
  app.add_option("--rank", settings.rank, "adapter rank");
  app.add_option("--top-k", settings.top_k, "experts combined per layer");
  app.add_option("--alpha-scale", settings.alpha_scale);
  app.add_option("--lr", settings.lr);
  app.add_option("--epochs1", settings.epochs1);
  app.add_option("--epochs2", settings.epochs2);
  app.add_option("--epochs3", settings.epochs3);
  app.add_option("--batch1", settings.batch1);
  app.add_option("--batch2", settings.batch2);
  app.add_option("--batch3", settings.batch3);

  TrainArgs train_args;
  auto* train = app.add_subcommand("train", "run the staged training schedule");
  train->add_option("--corpus", train_args.corpus_path, "gold corpus (jsonl)")
      ->required();
  train->add_option("--stage3-corpus", train_args.stage3_corpus_path,
                    "annotated multilingual corpus (jsonl)");
  train->add_option("--checkpoint-dir", train_args.checkpoint_dir);
  train->add_option("--metrics", train_args.metrics_path, "metrics/report file");
  train->add_option("--stages", train_args.stages_csv, "comma list, default 1,2,3");
  train->add_flag("--no-molora", train_args.no_molora,
                  "ablation: skip the adapter stage");
  train->add_flag("--english-only-stage3", train_args.english_only_stage3,
                  "ablation: stage 3 on the source language only");
  train->add_flag("--sweep-ranks", train_args.sweep_ranks,
                  "run the rank/k grid and emit one report row per setting");

  std::string ckpt, input, input_corpus, output = "extractions.jsonl";
  bool no_pool = false;
  auto* extract = app.add_subcommand("extract", "extract tuples from raw text");
  extract->add_option("--checkpoint", ckpt)->required();
  auto* opt_input = extract->add_option("--input", input, "one sentence per line");
  extract->add_option("--input-corpus", input_corpus,
                      "corpus file to re-extract (ids preserved for scoring)")
      ->excludes(opt_input);
  extract->add_option("--output", output);
  extract->add_flag("--no-pool", no_pool, "ignore the adapter pool");

  std::string ann_corpus, ann_langs = "xx,yy", cache_dir = "cache";
  std::string ann_out = "annotated.jsonl", ann_rejects;
  double max_reject_rate = 0.0;
  int fan_out = 1;
  bool live = false;
  std::string live_host = "http://localhost:8000";
  std::string live_model = "gpt-3.5-turbo";
  auto* annotate = app.add_subcommand("annotate", "build the multilingual corpus");
  annotate->add_option("--corpus", ann_corpus)->required();
  annotate->add_option("--languages", ann_langs, "comma list of target languages");
  annotate->add_option("--cache-dir", cache_dir);
  annotate->add_option("--output", ann_out);
  annotate->add_option("--rejects", ann_rejects, "rejection side file");
  annotate->add_option("--max-reject-rate", max_reject_rate);
  annotate->add_option("--fan-out", fan_out, "parallel request workers");
  annotate->add_flag("--live", live, "use the HTTP annotator instead of the mock");
  annotate->add_option("--live-host", live_host);
  annotate->add_option("--live-model", live_model);

  std::string pred_path, gold_path, scheme = "tuple", report_path;
  auto* score = app.add_subcommand("score", "score predictions against gold");
  score->add_option("--predictions", pred_path)->required();
  score->add_option("--gold", gold_path)->required();
  score->add_option("--scheme", scheme, "tuple or synset");
  score->add_option("--report", report_path);

  std::string stats_corpus, stats_report;
  auto* stats = app.add_subcommand("stats", "dataset statistics");
  stats->add_option("--corpus", stats_corpus)->required();
  stats->add_option("--report", stats_report);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (!config_path.empty()) {
      // Flags win over file values: re-apply any explicitly passed options.
      Settings from_file;
      from_file.apply(load_config_file(config_path));
      Settings flags = settings;
      settings = from_file;
      auto keep = [&](const char* name, auto member) {
        if (app.count(name) > 0) settings.*member = flags.*member;
      };
      keep("--seed", &Settings::seed);
      keep("--hidden", &Settings::hidden);
      keep("--layers", &Settings::layers);
      keep("--heads", &Settings::heads);
      keep("--ffn", &Settings::ffn);
      keep("--max-len", &Settings::max_len);
      keep("--arg-blocks", &Settings::arg_blocks);
      keep("--experts", &Settings::experts);
      keep("--rank", &Settings::rank);
      keep("--top-k", &Settings::top_k);
      keep("--alpha-scale", &Settings::alpha_scale);
      keep("--lr", &Settings::lr);
      keep("--epochs1", &Settings::epochs1);
      keep("--epochs2", &Settings::epochs2);
      keep("--epochs3", &Settings::epochs3);
      keep("--batch1", &Settings::batch1);
      keep("--batch2", &Settings::batch2);
      keep("--batch3", &Settings::batch3);
    }

    if (train->parsed()) {
      if (train_args.sweep_ranks) return cmd_sweep(settings, train_args);
      return cmd_train(settings, train_args);
    }
    if (extract->parsed()) {
      if (input.empty() && input_corpus.empty()) {
        throw std::invalid_argument("extract needs --input or --input-corpus");
      }
      return cmd_extract(settings, ckpt, input, input_corpus, output, no_pool);
    }
    if (annotate->parsed()) {
      return cmd_annotate(settings, ann_corpus, ann_langs, cache_dir, ann_out,
                          ann_rejects, max_reject_rate, fan_out, live,
                          live_host, live_model);
    }
    if (score->parsed()) {
      return cmd_score(settings, pred_path, gold_path, scheme, report_path);
    }
    if (stats->parsed()) {
      return cmd_stats(settings, stats_corpus, stats_report);
    }
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::runtime_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
}

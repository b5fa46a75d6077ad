#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "oie/corpus.hpp"
#include "oie/prompts.hpp"

namespace oie {

class AnnotatorClient {
 public:
  virtual ~AnnotatorClient() = default;
  virtual std::string complete(const std::string& prompt) = 0;
};

// Few-shot exemplar filling the [Y1]/[S1]/[R1]/[O1] slots.
struct Exemplar {
  std::string sentence;
  std::string subject;
  std::string relation;
  std::string object;
};

// Offline stand-in for the LLM annotator. "Translates" token t of language L
// as "L:t" (positionally invertible) and answers extraction prompts from the
// gold tuples of the source corpus it was built over. Pure: the response is
// a function of the prompt text alone.
class MockAnnotator : public AnnotatorClient {
 public:
  explicit MockAnnotator(const Corpus& source);

  std::string complete(const std::string& prompt) override;

  static std::string map_token(const std::string& lang, const std::string& token);
  static std::string translate_text(const std::string& lang, const std::string& text);
  static Exemplar exemplar_for(const std::string& lang);

 private:
  std::map<std::string, CorpusSentence> by_text_;
};

// File-per-prompt response cache keyed by the prompt's FNV-1a hash. Only
// misses reach the wrapped client.
class CachingClient : public AnnotatorClient {
 public:
  CachingClient(AnnotatorClient& inner, std::string cache_dir);

  std::string complete(const std::string& prompt) override;
  int inner_calls() const { return inner_calls_.load(); }

 private:
  AnnotatorClient& inner_;
  std::string cache_dir_;
  std::atomic<int> inner_calls_{0};
};

std::uint64_t fnv1a64(const std::string& text);

// Minimal chat-completions adapter for live annotation runs. Never used by
// tests; requires OPENAI_API_KEY. Retries transient failures 3 times with
// exponential backoff.
class HttpAnnotator : public AnnotatorClient {
 public:
  HttpAnnotator(std::string host, std::string model, int retries = 3);
  std::string complete(const std::string& prompt) override;

 private:
  std::string host_;
  std::string model_;
  int retries_;
};

struct TripleStrings {
  std::string subject;
  std::string relation;
  std::string object;
};

enum class RecordStatus { valid, rejected_parse, rejected_segment, rejected_transport };
const char* record_status_name(RecordStatus s);

struct AnnotationRecord {
  std::string id;
  std::string lang;
  std::vector<std::string> source_tokens;
  std::string translation;
  std::vector<std::string> translation_tokens;
  TripleStrings triple;
  ExtractionTuple aligned;  // spans over translation tokens, valid records only
  RecordStatus status = RecordStatus::rejected_parse;
  std::string reason;
  std::string translation_prompt;  // provenance of the two steps
  std::string extraction_prompt;
};

// Tolerant response parser: labeled "Subject: ..., Relation: ..., Object: ..."
// or a bare three-part comma-separated form.
bool parse_triple_response(const std::string& response, TripleStrings& out);

// Leftmost whole-token alignment of subject, then relation, then object,
// skipping already-claimed positions. Returns false if any part is not a
// contiguous token run of the translation.
bool align_triple(const std::vector<std::string>& tokens, const TripleStrings& triple,
                  ExtractionTuple& out);

AnnotationRecord annotate_sentence(const CorpusSentence& src, const std::string& lang,
                                   AnnotatorClient& client, const Exemplar& exemplar);

struct AnnotateResult {
  Corpus corpus;                          // valid records only
  std::vector<AnnotationRecord> records;  // everything, ordered by (id, lang)
  int client_calls = 0;                   // requests that reached the client
};

// One record per (sentence, language), cached under cache_dir, requests
// optionally fanned out over worker threads. Output order is by
// (sentence id, language) regardless of completion order. The exemplar
// provider supplies the few-shot sample in the target language.
using ExemplarProvider = std::function<Exemplar(const std::string& lang)>;

AnnotateResult annotate_corpus(const Corpus& source,
                               const std::vector<std::string>& languages,
                               AnnotatorClient& client, const std::string& cache_dir,
                               const ExemplarProvider& exemplar_for_lang,
                               int fan_out = 1);

void save_rejections(const std::vector<AnnotationRecord>& records,
                     const std::string& path);

struct LanguageStats {
  int sentences = 0;
  int tuples = 0;
  int max_len = 0;
  int min_len = 0;
  double avg_len = 0.0;
  bool has_lengths = false;
};

struct CorpusStats {
  std::map<std::string, LanguageStats> per_language;
};

CorpusStats compute_stats(const Corpus& corpus);

// Five-row table (sentences, tuples, max/min/avg length) with one column per
// language; averages shown to one decimal.
std::string stats_table(const CorpusStats& stats);
std::string stats_json(const CorpusStats& stats);

}  // namespace oie

#pragma once

#include <map>
#include <string>
#include <vector>

#include "oie/corpus.hpp"

namespace oie {

struct StringTriple {
  std::string subject;
  std::string relation;
  std::string object;
  bool operator==(const StringTriple&) const = default;
};

struct StringTuple {
  std::string predicate;
  std::vector<std::string> arguments;
};

StringTuple to_string_tuple(const CorpusSentence& sentence,
                            const ExtractionTuple& tuple);

// "[a] Royal Charter" style optional markers: every bracket group doubles the
// set of concrete surface forms. Whitespace is normalized in the output.
std::vector<std::string> expand_optional_text(const std::string& text);
std::vector<StringTriple> expand_optional(const StringTriple& triple);

std::string normalize_surface(const std::string& text);

struct PairScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// Token-level slot scores, macro-averaged over the predicate slot and the
// bag of all argument tokens.
PairScore tuple_pair_score(const StringTuple& predicted, const StringTuple& gold);

struct SentenceScore {
  int index = 0;
  int predicted = 0;
  int gold = 0;
  int matched = 0;
  double precision_sum = 0.0;  // sum of matched pair precisions
  double recall_sum = 0.0;     // sum of matched pair recalls
};

struct ScoreReport {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  int matched = 0;
  int predicted_total = 0;
  int gold_total = 0;
  std::vector<SentenceScore> per_sentence;
};

// Greedy one-to-one matching by descending pair F1 (ties toward lower
// indices). Precision averages matched pair precisions over all predicted
// tuples, recall averages matched pair recalls over all gold tuples;
// unmatched tuples contribute zero. predicted and gold are aligned per
// sentence.
ScoreReport tuple_match(const std::vector<std::vector<StringTuple>>& predicted,
                        const std::vector<std::vector<StringTuple>>& gold);

// All acceptable surface forms of one fact; members may carry bracket
// markers and are expanded before matching.
using FactSynset = std::vector<StringTriple>;

// Exact membership after lowercasing and whitespace collapse. Precision is
// correct extractions over all extractions; recall is synsets hit over all
// synsets.
ScoreReport fact_synset_match(
    const std::vector<std::vector<StringTriple>>& predicted,
    const std::vector<std::vector<FactSynset>>& gold);

struct BenchmarkSentence {
  std::string id;
  std::string lang;
  std::vector<std::string> tokens;
  std::vector<FactSynset> synsets;
};

// Line-delimited {"id","lang","tokens","synsets":[[["s","r","o"],...],...]}.
std::vector<BenchmarkSentence> load_benchmark(const std::string& path);

}  // namespace oie

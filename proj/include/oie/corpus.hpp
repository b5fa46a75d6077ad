#pragma once

#include <string>
#include <vector>

#include "oie/extraction.hpp"

namespace oie {

struct CorpusSentence {
  std::string id;
  std::string lang;
  std::vector<std::string> tokens;
  std::vector<ExtractionTuple> tuples;
};

using Corpus = std::vector<CorpusSentence>;

std::string sentence_text(const CorpusSentence& s);

// One JSON record per line:
// {"id", "lang", "tokens": [...], "tuples": [{"pred": [s,e], "args": [[s,e],...]}]}
std::string corpus_record_to_json(const CorpusSentence& s);
CorpusSentence corpus_record_from_json(const std::string& line);

Corpus load_corpus(const std::string& path);
void save_corpus(const Corpus& corpus, const std::string& path);

std::vector<std::string> corpus_languages(const Corpus& corpus);
Corpus corpus_for_language(const Corpus& corpus, const std::string& lang);

}  // namespace oie

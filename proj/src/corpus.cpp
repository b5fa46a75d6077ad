#include "oie/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace oie {

using nlohmann::json;

std::string sentence_text(const CorpusSentence& s) {
  std::string out;
  for (std::size_t i = 0; i < s.tokens.size(); ++i) {
    if (i) out += ' ';
    out += s.tokens[i];
  }
  return out;
}

std::string corpus_record_to_json(const CorpusSentence& s) {
  json rec;
  rec["id"] = s.id;
  rec["lang"] = s.lang;
  rec["tokens"] = s.tokens;
  json tuples = json::array();
  for (const auto& t : s.tuples) {
    json jt;
    jt["pred"] = {t.predicate.start, t.predicate.end};
    json args = json::array();
    for (const auto& a : t.arguments) args.push_back({a.start, a.end});
    jt["args"] = args;
    tuples.push_back(jt);
  }
  rec["tuples"] = tuples;
  return rec.dump();
}

CorpusSentence corpus_record_from_json(const std::string& line) {
  json rec;
  try {
    rec = json::parse(line);
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("corpus record is not valid JSON: ") +
                             e.what());
  }
  CorpusSentence s;
  s.id = rec.at("id").get<std::string>();
  s.lang = rec.at("lang").get<std::string>();
  s.tokens = rec.at("tokens").get<std::vector<std::string>>();
  for (const auto& jt : rec.at("tuples")) {
    ExtractionTuple t;
    const auto pred = jt.at("pred");
    t.predicate = {pred.at(0).get<int>(), pred.at(1).get<int>()};
    for (const auto& ja : jt.at("args")) {
      t.arguments.push_back({ja.at(0).get<int>(), ja.at(1).get<int>()});
    }
    validate_tuple(t, static_cast<int>(s.tokens.size()));
    s.tuples.push_back(std::move(t));
  }
  return s;
}

Corpus load_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open corpus file: " + path);
  Corpus corpus;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      corpus.push_back(corpus_record_from_json(line));
    } catch (const std::exception& e) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": " +
                               e.what());
    }
  }
  return corpus;
}

void save_corpus(const Corpus& corpus, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write corpus file: " + path);
  for (const auto& s : corpus) out << corpus_record_to_json(s) << "\n";
}

std::vector<std::string> corpus_languages(const Corpus& corpus) {
  std::vector<std::string> langs;
  for (const auto& s : corpus) {
    if (std::find(langs.begin(), langs.end(), s.lang) == langs.end()) {
      langs.push_back(s.lang);
    }
  }
  return langs;
}

Corpus corpus_for_language(const Corpus& corpus, const std::string& lang) {
  Corpus out;
  for (const auto& s : corpus) {
    if (s.lang == lang) out.push_back(s);
  }
  return out;
}

}  // namespace oie

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "doctest.h"
#include "oie/annotate.hpp"
#include "oie/corpus.hpp"

using namespace oie;
namespace fs = std::filesystem;

namespace {

Corpus load_tiny() { return load_corpus(OIE_SOURCE_DIR "/data/tiny_corpus.jsonl"); }

std::string fresh_dir(const char* name) {
  const std::string path = std::string(OIE_BINARY_DIR "/") + name;
  fs::remove_all(path);
  return path;
}

// Brute-force oracle: all candidate spans per part, then the leftmost
// non-overlapping assignment in subject -> relation -> object order.
bool oracle_align(const std::vector<std::string>& tokens,
                  const TripleStrings& triple, Span out[3]) {
  auto joined = [&](int a, int b) {
    std::string s;
    for (int i = a; i < b; ++i) {
      if (i > a) s += ' ';
      s += tokens[static_cast<std::size_t>(i)];
    }
    return s;
  };
  const std::string* parts[3] = {&triple.subject, &triple.relation, &triple.object};
  std::vector<bool> used(tokens.size(), false);
  for (int p = 0; p < 3; ++p) {
    bool found = false;
    for (int a = 0; a < static_cast<int>(tokens.size()) && !found; ++a) {
      for (int b = a + 1; b <= static_cast<int>(tokens.size()) && !found; ++b) {
        if (joined(a, b) != *parts[p]) continue;
        bool overlap = false;
        for (int i = a; i < b; ++i) overlap |= used[static_cast<std::size_t>(i)];
        if (overlap) continue;
        out[p] = {a, b};
        for (int i = a; i < b; ++i) used[static_cast<std::size_t>(i)] = true;
        found = true;
      }
    }
    if (!found) return false;
  }
  return true;
}

class ScriptedClient : public AnnotatorClient {
 public:
  explicit ScriptedClient(std::string translation, std::string extraction)
      : translation_(std::move(translation)), extraction_(std::move(extraction)) {}
  std::string complete(const std::string& prompt) override {
    return prompt.find("translator") != std::string::npos ? translation_
                                                          : extraction_;
  }

 private:
  std::string translation_, extraction_;
};

class FailingClient : public AnnotatorClient {
 public:
  std::string complete(const std::string&) override {
    throw std::runtime_error("socket closed");
  }
};

}  // namespace

TEST_CASE("prompt templates render and reject unfilled slots") {
  PromptTemplate p1 = PromptTemplate::translation_default();
  const std::string rendered =
      p1.render({{"L", "xx"}, {"X", "the cat sat"}});
  CHECK(rendered.find("into the xx: the cat sat") != std::string::npos);
  CHECK_THROWS_AS(p1.render({{"L", "xx"}}), std::invalid_argument);

  PromptTemplate p2 = PromptTemplate::extraction_default();
  CHECK(p2.text.find("continuous segment") != std::string::npos);
  CHECK_THROWS_AS(p2.render({{"Y", "a"}}), std::invalid_argument);
}

TEST_CASE("triple response parser accepts both documented forms") {
  TripleStrings t;
  CHECK(parse_triple_response("Subject: the cat, Relation: sat, Object: the mat", t));
  CHECK(t.subject == "the cat");
  CHECK(t.relation == "sat");
  CHECK(t.object == "the mat");

  CHECK(parse_triple_response("the cat, sat, the mat", t));
  CHECK(t.subject == "the cat");

  CHECK_FALSE(parse_triple_response("no triple here", t));
  CHECK_FALSE(parse_triple_response("a, b", t));
  CHECK_FALSE(parse_triple_response("Subject: x, Object: y", t));
}

TEST_CASE("mock annotation of a corpus sentence is valid with gold-mapped spans") {
  Corpus tiny = load_tiny();
  MockAnnotator mock(tiny);
  const CorpusSentence& src = tiny[0];
  AnnotationRecord rec =
      annotate_sentence(src, "xx", mock, MockAnnotator::exemplar_for("xx"));
  REQUIRE(rec.status == RecordStatus::valid);
  CHECK(rec.translation_tokens.size() == src.tokens.size());
  // Token mapping is positional, so aligned spans equal the gold spans.
  CHECK(rec.aligned.predicate == src.tuples[0].predicate);
  REQUIRE(rec.aligned.arguments.size() == 2);
  CHECK(rec.aligned.arguments[0] == src.tuples[0].arguments[0]);
  CHECK(rec.aligned.arguments[1] == src.tuples[0].arguments[1]);
  CHECK(rec.translation_tokens[0] == "xx:" + src.tokens[0]);
}

TEST_CASE("non-contiguous object is rejected as a segment violation") {
  Corpus tiny = load_tiny();
  ScriptedClient client("xx:a xx:b xx:c",
                        "Subject: xx:a, Relation: xx:b, Object: xx:missing");
  AnnotationRecord rec = annotate_sentence(tiny[0], "xx", client,
                                           MockAnnotator::exemplar_for("xx"));
  CHECK(rec.status == RecordStatus::rejected_segment);

  ScriptedClient garbled("xx:a xx:b", "no structured answer");
  rec = annotate_sentence(tiny[0], "xx", garbled, MockAnnotator::exemplar_for("xx"));
  CHECK(rec.status == RecordStatus::rejected_parse);

  FailingClient down;
  rec = annotate_sentence(tiny[0], "xx", down, MockAnnotator::exemplar_for("xx"));
  CHECK(rec.status == RecordStatus::rejected_transport);
}

TEST_CASE("alignment reproduces the substring-search oracle on 50 sentences") {
  Corpus tiny = load_tiny();
  MockAnnotator mock(tiny);
  int checked = 0;
  for (std::size_t i = 0; i < tiny.size() && checked < 50; ++i, ++checked) {
    AnnotationRecord rec = annotate_sentence(tiny[i], "yy", mock,
                                             MockAnnotator::exemplar_for("yy"));
    REQUIRE(rec.status == RecordStatus::valid);
    Span expect[3];
    REQUIRE(oracle_align(rec.translation_tokens, rec.triple, expect));
    CHECK(rec.aligned.arguments[0] == expect[0]);
    CHECK(rec.aligned.predicate == expect[1]);
    CHECK(rec.aligned.arguments[1] == expect[2]);
  }
  CHECK(checked == 50);
}

TEST_CASE("alignment picks leftmost non-overlapping spans on repeated tokens") {
  const std::vector<std::string> tokens = {"a", "b", "a", "b", "c"};
  TripleStrings t{"a b", "a b", "c"};
  ExtractionTuple tuple;
  REQUIRE(align_triple(tokens, t, tuple));
  CHECK(tuple.arguments[0] == Span{0, 2});  // subject takes the leftmost
  CHECK(tuple.predicate == Span{2, 4});     // relation the next free match
  CHECK(tuple.arguments[1] == Span{4, 5});

  TripleStrings impossible{"a b", "a b", "a"};
  CHECK_FALSE(align_triple(tokens, impossible, tuple));
}

TEST_CASE("annotate_corpus: counting, caching and determinism") {
  Corpus tiny = load_tiny();
  Corpus two(tiny.begin(), tiny.begin() + 2);
  MockAnnotator mock(tiny);
  const std::string cache = fresh_dir("annotate_cache_counting");

  AnnotateResult first = annotate_corpus(two, {"xx", "yy", "zz"}, mock, cache,
                                         MockAnnotator::exemplar_for);
  CHECK(first.records.size() == 6);  // 2 sentences x 3 languages
  CHECK(first.client_calls == 12);   // two prompts per record
  CHECK(first.corpus.size() == 6);

  // Warm cache: zero client requests, byte-identical output.
  AnnotateResult second = annotate_corpus(two, {"xx", "yy", "zz"}, mock, cache,
                                          MockAnnotator::exemplar_for);
  CHECK(second.client_calls == 0);
  REQUIRE(second.corpus.size() == first.corpus.size());
  for (std::size_t i = 0; i < first.corpus.size(); ++i) {
    CHECK(corpus_record_to_json(first.corpus[i]) ==
          corpus_record_to_json(second.corpus[i]));
  }

  // A different cache directory and a worker pool give the same bytes.
  const std::string cache2 = fresh_dir("annotate_cache_fanout");
  AnnotateResult fanned = annotate_corpus(two, {"xx", "yy", "zz"}, mock, cache2,
                                          MockAnnotator::exemplar_for, 4);
  REQUIRE(fanned.corpus.size() == first.corpus.size());
  for (std::size_t i = 0; i < first.corpus.size(); ++i) {
    CHECK(corpus_record_to_json(first.corpus[i]) ==
          corpus_record_to_json(fanned.corpus[i]));
  }
}

TEST_CASE("every valid record passes the contiguity rule") {
  Corpus tiny = load_tiny();
  MockAnnotator mock(tiny);
  const std::string cache = fresh_dir("annotate_cache_contig");
  AnnotateResult res = annotate_corpus(tiny, {"xx"}, mock, cache,
                                       MockAnnotator::exemplar_for);
  int valid = 0;
  for (const auto& rec : res.records) {
    if (rec.status != RecordStatus::valid) continue;
    ++valid;
    Span expect[3];
    CHECK(oracle_align(rec.translation_tokens, rec.triple, expect));
  }
  CHECK(valid == static_cast<int>(res.corpus.size()));
  CHECK(valid == 64);
}

TEST_CASE("rejection side file carries reasons and no tuples") {
  Corpus tiny = load_tiny();
  Corpus one(tiny.begin(), tiny.begin() + 1);
  ScriptedClient garbled("xx:a", "nothing usable");
  const std::string cache = fresh_dir("annotate_cache_rej");
  AnnotateResult res = annotate_corpus(one, {"xx"}, garbled, cache,
                                       MockAnnotator::exemplar_for);
  CHECK(res.corpus.empty());
  REQUIRE(res.records.size() == 1);
  CHECK(res.records[0].status == RecordStatus::rejected_parse);

  const std::string path = std::string(OIE_BINARY_DIR "/rejects.jsonl");
  save_rejections(res.records, path);
  std::ifstream in(path);
  std::string line;
  REQUIRE(std::getline(in, line));
  CHECK(line.find("rejected(parse)") != std::string::npos);
  CHECK(line.find("\"tuples\":[]") != std::string::npos);
}

TEST_CASE("compute_stats: hand-counted toy case") {
  Corpus corpus;
  auto mk = [](const char* id, int len, int tuples) {
    CorpusSentence s;
    s.id = id;
    s.lang = "xx";
    for (int i = 0; i < len; ++i) s.tokens.push_back("t" + std::to_string(i));
    for (int k = 0; k < tuples; ++k) {
      s.tuples.push_back({{0, 1}, {{1, 2}}});
    }
    return s;
  };
  corpus.push_back(mk("a", 4, 1));
  corpus.push_back(mk("b", 5, 2));
  corpus.push_back(mk("c", 9, 2));

  CorpusStats stats = compute_stats(corpus);
  REQUIRE(stats.per_language.count("xx") == 1);
  const LanguageStats& ls = stats.per_language.at("xx");
  CHECK(ls.sentences == 3);
  CHECK(ls.tuples == 5);
  CHECK(ls.min_len == 4);
  CHECK(ls.max_len == 9);
  CHECK(ls.avg_len == doctest::Approx(6.0));

  const std::string table = stats_table(stats);
  CHECK(table.find("#Sent.") != std::string::npos);
  CHECK(table.find("Avg_len") != std::string::npos);
  CHECK(table.find("6.0") != std::string::npos);
}

TEST_CASE("compute_stats: empty corpus and five-language schema") {
  CorpusStats empty = compute_stats({});
  CHECK(empty.per_language.empty());
  CHECK(stats_table(empty).find("#Sent.") != std::string::npos);

  Corpus corpus;
  for (const char* lang : {"ar", "de", "es", "pt", "zh"}) {
    CorpusSentence s;
    s.id = std::string("x-") + lang;
    s.lang = lang;
    s.tokens = {"a", "b", "c"};
    s.tuples.push_back({{0, 1}, {{1, 2}}});
    corpus.push_back(s);
  }
  CorpusStats stats = compute_stats(corpus);
  CHECK(stats.per_language.size() == 5);
  const std::string json_text = stats_json(stats);
  for (const char* lang : {"ar", "de", "es", "pt", "zh"}) {
    CHECK(json_text.find(std::string("\"") + lang + "\"") != std::string::npos);
  }

  // Conservation: per-language sentence counts sum to the record count.
  int total = 0;
  for (const auto& [lang, ls] : stats.per_language) total += ls.sentences;
  CHECK(total == static_cast<int>(corpus.size()));
}

TEST_CASE("fnv1a64 is stable") {
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(fnv1a64("prompt") != fnv1a64("prompt "));
}

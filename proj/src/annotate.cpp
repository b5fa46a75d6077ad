#include "oie/annotate.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "httplib.h"
#include "json.hpp"

namespace oie {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::vector<std::string> split_ws(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream is(text);
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

std::string join_ws(const std::vector<std::string>& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

std::string trim_part(std::string s) {
  const char* drop = " \t\r\n";
  const auto b = s.find_first_not_of(drop);
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(drop);
  s = s.substr(b, e - b + 1);
  while (!s.empty() && (s.back() == ',' || s.back() == '.' || s.back() == ';')) {
    s.pop_back();
    const auto e2 = s.find_last_not_of(drop);
    if (e2 == std::string::npos) return "";
    s = s.substr(0, e2 + 1);
  }
  return s;
}

std::string between(const std::string& text, const std::string& open,
                    const std::string& close) {
  const auto a = text.find(open);
  if (a == std::string::npos) return "";
  const auto start = a + open.size();
  const auto b = close.empty() ? std::string::npos : text.find(close, start);
  return b == std::string::npos ? text.substr(start) : text.substr(start, b - start);
}

}  // namespace

std::uint64_t fnv1a64(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

const char* record_status_name(RecordStatus s) {
  switch (s) {
    case RecordStatus::valid: return "valid";
    case RecordStatus::rejected_parse: return "rejected(parse)";
    case RecordStatus::rejected_segment: return "rejected(segment)";
    case RecordStatus::rejected_transport: return "rejected(transport)";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Mock client

MockAnnotator::MockAnnotator(const Corpus& source) {
  for (const auto& s : source) by_text_[sentence_text(s)] = s;
}

std::string MockAnnotator::map_token(const std::string& lang,
                                     const std::string& token) {
  return lang + ":" + token;
}

std::string MockAnnotator::translate_text(const std::string& lang,
                                          const std::string& text) {
  std::vector<std::string> out;
  for (const auto& tok : split_ws(text)) out.push_back(map_token(lang, tok));
  return join_ws(out);
}

Exemplar MockAnnotator::exemplar_for(const std::string& lang) {
  Exemplar ex;
  ex.sentence = translate_text(lang, "anna likes the garden");
  ex.subject = map_token(lang, "anna");
  ex.relation = map_token(lang, "likes");
  ex.object = translate_text(lang, "the garden");
  return ex;
}

std::string MockAnnotator::complete(const std::string& prompt) {
  if (prompt.find("You are a translator") != std::string::npos) {
    const std::string tail = between(prompt, "into the ", "");
    const auto colon = tail.find(": ");
    if (colon == std::string::npos) return "";
    const std::string lang = tail.substr(0, colon);
    const std::string source = tail.substr(colon + 2);
    return translate_text(lang, source);
  }

  if (prompt.find("extracting a triple") != std::string::npos) {
    const std::string y =
        trim_part(between(prompt, "from the translated sentence: ", ". Note that"));
    std::vector<std::string> source_tokens;
    std::string lang;
    for (const auto& tok : split_ws(y)) {
      const auto colon = tok.find(':');
      if (colon == std::string::npos) return "";
      lang = tok.substr(0, colon);
      source_tokens.push_back(tok.substr(colon + 1));
    }
    auto it = by_text_.find(join_ws(source_tokens));
    if (it == by_text_.end() || it->second.tuples.empty()) {
      return "Subject: ?, Relation: ?, Object: ?";
    }
    const CorpusSentence& gold = it->second;
    const ExtractionTuple& t = gold.tuples.front();
    auto span_text = [&](const Span& s) {
      std::vector<std::string> parts;
      for (int i = s.start; i < s.end; ++i) {
        parts.push_back(map_token(lang, gold.tokens[static_cast<std::size_t>(i)]));
      }
      return join_ws(parts);
    };
    const Span object = t.arguments.size() > 1 ? t.arguments[1] : t.arguments[0];
    return "Subject: " + span_text(t.arguments[0]) +
           ", Relation: " + span_text(t.predicate) +
           ", Object: " + span_text(object);
  }
  return "";
}

// ---------------------------------------------------------------------------
// Cache

CachingClient::CachingClient(AnnotatorClient& inner, std::string cache_dir)
    : inner_(inner), cache_dir_(std::move(cache_dir)) {
  std::error_code ec;
  fs::create_directories(cache_dir_, ec);
  if (ec || !fs::is_directory(cache_dir_)) {
    throw std::runtime_error("cannot create cache directory: " + cache_dir_);
  }
}

std::string CachingClient::complete(const std::string& prompt) {
  char name[32];
  std::snprintf(name, sizeof(name), "%016llx.txt",
                static_cast<unsigned long long>(fnv1a64(prompt)));
  const fs::path path = fs::path(cache_dir_) / name;

  {
    std::ifstream in(path, std::ios::binary);
    if (in) {
      return std::string((std::istreambuf_iterator<char>(in)),
                         std::istreambuf_iterator<char>());
    }
  }
  const std::string response = inner_.complete(prompt);
  ++inner_calls_;

  // Atomic per-record write: temp file then rename.
  const fs::path tmp = path.string() + ".tmp" +
                       std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id()));
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("cache is not writable: " + cache_dir_);
    out << response;
  }
  fs::rename(tmp, path);
  return response;
}

// ---------------------------------------------------------------------------
// Live adapter

HttpAnnotator::HttpAnnotator(std::string host, std::string model, int retries)
    : host_(std::move(host)), model_(std::move(model)), retries_(retries) {}

std::string HttpAnnotator::complete(const std::string& prompt) {
  const char* key = std::getenv("OPENAI_API_KEY");
  json body;
  body["model"] = model_;
  body["messages"] = json::array({{{"role", "user"}, {"content", prompt}}});
  body["temperature"] = 0.0;

  int delay_ms = 1000;
  std::string last_error = "no attempts made";
  for (int attempt = 0; attempt <= retries_; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(std::chrono::milliseconds(delay_ms));
      delay_ms *= 2;
    }
    httplib::Client cli(host_);
    cli.set_read_timeout(60, 0);
    httplib::Headers headers;
    if (key) headers.emplace("Authorization", std::string("Bearer ") + key);
    auto res = cli.Post("/v1/chat/completions", headers, body.dump(),
                        "application/json");
    if (!res) {
      last_error = "connection failed";
      continue;
    }
    if (res->status != 200) {
      last_error = "http status " + std::to_string(res->status);
      continue;
    }
    try {
      json reply = json::parse(res->body);
      return reply.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception& e) {
      last_error = std::string("malformed reply: ") + e.what();
    }
  }
  throw std::runtime_error("annotator request failed after retries: " + last_error);
}

// ---------------------------------------------------------------------------
// Parsing and alignment

bool parse_triple_response(const std::string& response, TripleStrings& out) {
  const auto ps = response.find("Subject:");
  if (ps != std::string::npos) {
    const auto pr = response.find("Relation:", ps);
    const auto po = pr == std::string::npos ? std::string::npos
                                            : response.find("Object:", pr);
    if (pr == std::string::npos || po == std::string::npos) return false;
    out.subject = trim_part(response.substr(ps + 8, pr - (ps + 8)));
    out.relation = trim_part(response.substr(pr + 9, po - (pr + 9)));
    out.object = trim_part(response.substr(po + 7));
    return !out.subject.empty() && !out.relation.empty() && !out.object.empty();
  }

  // Bare comma-separated form with exactly three parts.
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    const auto comma = response.find(',', start);
    if (comma == std::string::npos) {
      parts.push_back(response.substr(start));
      break;
    }
    parts.push_back(response.substr(start, comma - start));
    start = comma + 1;
  }
  if (parts.size() != 3) return false;
  out.subject = trim_part(parts[0]);
  out.relation = trim_part(parts[1]);
  out.object = trim_part(parts[2]);
  return !out.subject.empty() && !out.relation.empty() && !out.object.empty();
}

namespace {

int find_span(const std::vector<std::string>& tokens,
              const std::vector<std::string>& part,
              const std::vector<bool>& claimed) {
  if (part.empty() || part.size() > tokens.size()) return -1;
  for (std::size_t start = 0; start + part.size() <= tokens.size(); ++start) {
    bool ok = true;
    for (std::size_t j = 0; j < part.size(); ++j) {
      if (claimed[start + j] || tokens[start + j] != part[j]) {
        ok = false;
        break;
      }
    }
    if (ok) return static_cast<int>(start);
  }
  return -1;
}

}  // namespace

bool align_triple(const std::vector<std::string>& tokens,
                  const TripleStrings& triple, ExtractionTuple& out) {
  std::vector<bool> claimed(tokens.size(), false);
  Span spans[3];
  const std::string* parts[3] = {&triple.subject, &triple.relation, &triple.object};
  for (int i = 0; i < 3; ++i) {
    const auto part_tokens = split_ws(*parts[i]);
    const int start = find_span(tokens, part_tokens, claimed);
    if (start < 0) return false;
    spans[i] = {start, start + static_cast<int>(part_tokens.size())};
    for (int j = spans[i].start; j < spans[i].end; ++j) {
      claimed[static_cast<std::size_t>(j)] = true;
    }
  }
  out.predicate = spans[1];
  out.arguments = {spans[0], spans[2]};
  return true;
}

// ---------------------------------------------------------------------------
// Pipeline

AnnotationRecord annotate_sentence(const CorpusSentence& src,
                                   const std::string& lang,
                                   AnnotatorClient& client,
                                   const Exemplar& exemplar) {
  AnnotationRecord rec;
  rec.id = src.id;
  rec.lang = lang;
  rec.source_tokens = src.tokens;

  rec.translation_prompt = PromptTemplate::translation_default().render(
      {{"L", lang}, {"X", sentence_text(src)}});
  try {
    rec.translation = client.complete(rec.translation_prompt);
  } catch (const std::exception& e) {
    rec.status = RecordStatus::rejected_transport;
    rec.reason = e.what();
    return rec;
  }
  rec.translation_tokens = split_ws(rec.translation);

  rec.extraction_prompt = PromptTemplate::extraction_default().render(
      {{"Y1", exemplar.sentence},
       {"S1", exemplar.subject},
       {"R1", exemplar.relation},
       {"O1", exemplar.object},
       {"Y", rec.translation}});
  std::string response;
  try {
    response = client.complete(rec.extraction_prompt);
  } catch (const std::exception& e) {
    rec.status = RecordStatus::rejected_transport;
    rec.reason = e.what();
    return rec;
  }

  if (!parse_triple_response(response, rec.triple)) {
    rec.status = RecordStatus::rejected_parse;
    rec.reason = "unparseable response: " + response;
    return rec;
  }
  if (!align_triple(rec.translation_tokens, rec.triple, rec.aligned)) {
    rec.status = RecordStatus::rejected_segment;
    rec.reason = "triple part is not a contiguous segment of the translation";
    return rec;
  }
  rec.status = RecordStatus::valid;
  return rec;
}

AnnotateResult annotate_corpus(const Corpus& source,
                               const std::vector<std::string>& languages,
                               AnnotatorClient& client,
                               const std::string& cache_dir,
                               const ExemplarProvider& exemplar_for_lang,
                               int fan_out) {
  CachingClient cached(client, cache_dir);

  struct Item {
    const CorpusSentence* src;
    const std::string* lang;
  };
  std::vector<Item> items;
  for (const auto& s : source) {
    for (const auto& lang : languages) items.push_back({&s, &lang});
  }

  std::vector<Exemplar> exemplars;
  exemplars.reserve(languages.size());
  std::map<std::string, const Exemplar*> exemplar_by_lang;
  for (const auto& lang : languages) {
    exemplars.push_back(exemplar_for_lang(lang));
    exemplar_by_lang[lang] = &exemplars.back();
  }

  std::vector<AnnotationRecord> records(items.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= items.size()) break;
      records[i] = annotate_sentence(*items[i].src, *items[i].lang, cached,
                                     *exemplar_by_lang.at(*items[i].lang));
    }
  };

  const int workers = std::max(1, std::min<int>(fan_out, static_cast<int>(items.size())));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  std::stable_sort(records.begin(), records.end(),
                   [](const AnnotationRecord& a, const AnnotationRecord& b) {
                     return a.id != b.id ? a.id < b.id : a.lang < b.lang;
                   });

  AnnotateResult result;
  for (auto& rec : records) {
    if (rec.status == RecordStatus::valid) {
      CorpusSentence s;
      s.id = rec.id;
      s.lang = rec.lang;
      s.tokens = rec.translation_tokens;
      s.tuples = {rec.aligned};
      result.corpus.push_back(std::move(s));
    }
  }
  result.records = std::move(records);
  result.client_calls = cached.inner_calls();
  return result;
}

void save_rejections(const std::vector<AnnotationRecord>& records,
                     const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write rejection file: " + path);
  for (const auto& rec : records) {
    if (rec.status == RecordStatus::valid) continue;
    json j;
    j["id"] = rec.id;
    j["lang"] = rec.lang;
    j["tokens"] = rec.translation_tokens;
    j["tuples"] = json::array();
    j["reason"] = std::string(record_status_name(rec.status)) + ": " + rec.reason;
    out << j.dump() << "\n";
  }
}

// ---------------------------------------------------------------------------
// Statistics

CorpusStats compute_stats(const Corpus& corpus) {
  CorpusStats stats;
  std::map<std::string, std::vector<int>> lengths;
  for (const auto& s : corpus) {
    LanguageStats& ls = stats.per_language[s.lang];
    ls.sentences += 1;
    ls.tuples += static_cast<int>(s.tuples.size());
    lengths[s.lang].push_back(static_cast<int>(s.tokens.size()));
  }
  for (auto& [lang, ls] : stats.per_language) {
    const auto& v = lengths[lang];
    if (v.empty()) continue;
    ls.has_lengths = true;
    ls.min_len = *std::min_element(v.begin(), v.end());
    ls.max_len = *std::max_element(v.begin(), v.end());
    double sum = 0.0;
    for (int x : v) sum += x;
    ls.avg_len = sum / static_cast<double>(v.size());
  }
  return stats;
}

std::string stats_table(const CorpusStats& stats) {
  std::ostringstream os;
  os << "Statistics";
  for (const auto& [lang, ls] : stats.per_language) os << "\t" << lang;
  os << "\n#Sent.";
  for (const auto& [lang, ls] : stats.per_language) os << "\t" << ls.sentences;
  os << "\n#Tuples";
  for (const auto& [lang, ls] : stats.per_language) os << "\t" << ls.tuples;
  os << "\nMax_len";
  for (const auto& [lang, ls] : stats.per_language) {
    os << "\t" << (ls.has_lengths ? std::to_string(ls.max_len) : "-");
  }
  os << "\nMin_len";
  for (const auto& [lang, ls] : stats.per_language) {
    os << "\t" << (ls.has_lengths ? std::to_string(ls.min_len) : "-");
  }
  os << "\nAvg_len";
  for (const auto& [lang, ls] : stats.per_language) {
    if (!ls.has_lengths) {
      os << "\t-";
    } else {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%.1f", ls.avg_len);
      os << "\t" << buf;
    }
  }
  os << "\n";
  return os.str();
}

std::string stats_json(const CorpusStats& stats) {
  json out;
  for (const auto& [lang, ls] : stats.per_language) {
    json j;
    j["sentences"] = ls.sentences;
    j["tuples"] = ls.tuples;
    if (ls.has_lengths) {
      j["max_len"] = ls.max_len;
      j["min_len"] = ls.min_len;
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%.1f", ls.avg_len);
      j["avg_len"] = std::stod(buf);
    }
    out[lang] = j;
  }
  return out.dump();
}

}  // namespace oie

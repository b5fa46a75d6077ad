#include "oie/score.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace oie {

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

}  // namespace

StringTuple to_string_tuple(const CorpusSentence& sentence,
                            const ExtractionTuple& tuple) {
  auto span_text = [&](const Span& s) {
    std::vector<std::string> parts;
    for (int i = s.start; i < s.end; ++i) {
      parts.push_back(sentence.tokens.at(static_cast<std::size_t>(i)));
    }
    return join_ws(parts);
  };
  StringTuple out;
  out.predicate = span_text(tuple.predicate);
  for (const Span& a : tuple.arguments) out.arguments.push_back(span_text(a));
  return out;
}

std::vector<std::string> expand_optional_text(const std::string& text) {
  // Segments: literal runs and optional bracket groups, in order.
  struct Segment {
    std::string text;
    bool optional;
  };
  std::vector<Segment> segments;
  std::size_t i = 0;
  while (i < text.size()) {
    if (text[i] == ']') throw std::invalid_argument("unbalanced ']' in: " + text);
    if (text[i] == '[') {
      const auto close = text.find(']', i);
      if (close == std::string::npos) {
        throw std::invalid_argument("unbalanced '[' in: " + text);
      }
      const std::string inner = text.substr(i + 1, close - i - 1);
      if (inner.find('[') != std::string::npos) {
        throw std::invalid_argument("nested brackets in: " + text);
      }
      segments.push_back({inner, true});
      i = close + 1;
    } else {
      const auto next = text.find_first_of("[]", i);
      const auto end = next == std::string::npos ? text.size() : next;
      segments.push_back({text.substr(i, end - i), false});
      i = end;
    }
  }

  std::vector<std::string> forms = {""};
  for (const Segment& seg : segments) {
    if (!seg.optional) {
      for (auto& f : forms) f += " " + seg.text;
      continue;
    }
    std::vector<std::string> grown;
    grown.reserve(forms.size() * 2);
    for (const auto& f : forms) {
      grown.push_back(f + " " + seg.text);  // include first, then exclude
      grown.push_back(f);
    }
    forms = std::move(grown);
  }
  for (auto& f : forms) f = join_ws(split_ws(f));
  // Drop duplicates while preserving order (adjacent brackets with the same
  // token can collide).
  std::vector<std::string> unique;
  for (auto& f : forms) {
    if (std::find(unique.begin(), unique.end(), f) == unique.end()) {
      unique.push_back(f);
    }
  }
  return unique;
}

std::vector<StringTriple> expand_optional(const StringTriple& triple) {
  const auto subjects = expand_optional_text(triple.subject);
  const auto relations = expand_optional_text(triple.relation);
  const auto objects = expand_optional_text(triple.object);
  std::vector<StringTriple> out;
  out.reserve(subjects.size() * relations.size() * objects.size());
  for (const auto& s : subjects) {
    for (const auto& r : relations) {
      for (const auto& o : objects) out.push_back({s, r, o});
    }
  }
  return out;
}

std::string normalize_surface(const std::string& text) {
  std::string lowered;
  lowered.reserve(text.size());
  for (char c : text) {
    lowered += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  return join_ws(split_ws(lowered));
}

namespace {

struct SlotScore {
  double precision;
  double recall;
  double f1;
};

SlotScore token_overlap_score(const std::vector<std::string>& pred,
                              const std::vector<std::string>& gold) {
  if (pred.empty() && gold.empty()) return {1.0, 1.0, 1.0};
  if (pred.empty() || gold.empty()) return {0.0, 0.0, 0.0};
  std::map<std::string, int> counts;
  for (const auto& t : gold) counts[t] += 1;
  int overlap = 0;
  for (const auto& t : pred) {
    auto it = counts.find(t);
    if (it != counts.end() && it->second > 0) {
      --it->second;
      ++overlap;
    }
  }
  const double p = static_cast<double>(overlap) / static_cast<double>(pred.size());
  const double r = static_cast<double>(overlap) / static_cast<double>(gold.size());
  const double f1 = p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
  return {p, r, f1};
}

std::vector<std::string> argument_bag(const StringTuple& t) {
  std::vector<std::string> bag;
  for (const auto& a : t.arguments) {
    for (const auto& tok : split_ws(a)) bag.push_back(tok);
  }
  return bag;
}

}  // namespace

PairScore tuple_pair_score(const StringTuple& predicted, const StringTuple& gold) {
  const SlotScore pred_slot =
      token_overlap_score(split_ws(predicted.predicate), split_ws(gold.predicate));
  const SlotScore arg_slot =
      token_overlap_score(argument_bag(predicted), argument_bag(gold));
  PairScore out;
  out.precision = 0.5 * (pred_slot.precision + arg_slot.precision);
  out.recall = 0.5 * (pred_slot.recall + arg_slot.recall);
  out.f1 = 0.5 * (pred_slot.f1 + arg_slot.f1);
  return out;
}

ScoreReport tuple_match(const std::vector<std::vector<StringTuple>>& predicted,
                        const std::vector<std::vector<StringTuple>>& gold) {
  if (predicted.size() != gold.size()) {
    throw std::invalid_argument("tuple_match: sentence lists are not aligned");
  }
  ScoreReport report;
  double precision_sum = 0.0;
  double recall_sum = 0.0;
  for (std::size_t s = 0; s < predicted.size(); ++s) {
    const auto& ps = predicted[s];
    const auto& gs = gold[s];
    SentenceScore sent;
    sent.index = static_cast<int>(s);
    sent.predicted = static_cast<int>(ps.size());
    sent.gold = static_cast<int>(gs.size());

    // All pair scores, then greedy descending-F1 one-to-one assignment.
    std::vector<std::vector<PairScore>> pair(ps.size(),
                                             std::vector<PairScore>(gs.size()));
    for (std::size_t i = 0; i < ps.size(); ++i) {
      for (std::size_t j = 0; j < gs.size(); ++j) {
        pair[i][j] = tuple_pair_score(ps[i], gs[j]);
      }
    }
    std::vector<bool> used_p(ps.size(), false), used_g(gs.size(), false);
    const std::size_t matches = std::min(ps.size(), gs.size());
    for (std::size_t m = 0; m < matches; ++m) {
      double best = -1.0;
      std::size_t bi = 0, bj = 0;
      for (std::size_t i = 0; i < ps.size(); ++i) {
        if (used_p[i]) continue;
        for (std::size_t j = 0; j < gs.size(); ++j) {
          if (used_g[j]) continue;
          if (pair[i][j].f1 > best) {
            best = pair[i][j].f1;
            bi = i;
            bj = j;
          }
        }
      }
      if (best < 0.0) break;
      used_p[bi] = true;
      used_g[bj] = true;
      sent.matched += 1;
      sent.precision_sum += pair[bi][bj].precision;
      sent.recall_sum += pair[bi][bj].recall;
    }
    report.matched += sent.matched;
    report.predicted_total += sent.predicted;
    report.gold_total += sent.gold;
    precision_sum += sent.precision_sum;
    recall_sum += sent.recall_sum;
    report.per_sentence.push_back(sent);
  }
  report.precision = report.predicted_total > 0
                         ? precision_sum / report.predicted_total
                         : 0.0;
  report.recall = report.gold_total > 0 ? recall_sum / report.gold_total : 0.0;
  report.f1 = report.precision + report.recall > 0.0
                  ? 2.0 * report.precision * report.recall /
                        (report.precision + report.recall)
                  : 0.0;
  return report;
}

ScoreReport fact_synset_match(
    const std::vector<std::vector<StringTriple>>& predicted,
    const std::vector<std::vector<FactSynset>>& gold) {
  if (predicted.size() != gold.size()) {
    throw std::invalid_argument("fact_synset_match: sentence lists are not aligned");
  }
  ScoreReport report;
  int correct = 0;
  int synsets_hit = 0;
  for (std::size_t s = 0; s < predicted.size(); ++s) {
    // Expanded, normalized membership sets per synset.
    std::vector<std::vector<StringTriple>> members;
    for (const FactSynset& syn : gold[s]) {
      std::vector<StringTriple> forms;
      for (const StringTriple& member : syn) {
        for (StringTriple form : expand_optional(member)) {
          form.subject = normalize_surface(form.subject);
          form.relation = normalize_surface(form.relation);
          form.object = normalize_surface(form.object);
          forms.push_back(std::move(form));
        }
      }
      members.push_back(std::move(forms));
    }

    SentenceScore sent;
    sent.index = static_cast<int>(s);
    sent.predicted = static_cast<int>(predicted[s].size());
    sent.gold = static_cast<int>(gold[s].size());
    std::vector<bool> hit(members.size(), false);
    for (const StringTriple& p : predicted[s]) {
      StringTriple norm{normalize_surface(p.subject), normalize_surface(p.relation),
                        normalize_surface(p.object)};
      bool is_correct = false;
      for (std::size_t k = 0; k < members.size(); ++k) {
        if (std::find(members[k].begin(), members[k].end(), norm) !=
            members[k].end()) {
          is_correct = true;
          hit[k] = true;
        }
      }
      if (is_correct) {
        ++correct;
        sent.matched += 1;
      }
    }
    for (bool h : hit) synsets_hit += h ? 1 : 0;
    report.predicted_total += sent.predicted;
    report.gold_total += sent.gold;
    report.per_sentence.push_back(sent);
  }
  report.matched = correct;
  report.precision =
      report.predicted_total > 0
          ? static_cast<double>(correct) / report.predicted_total
          : 0.0;
  report.recall = report.gold_total > 0
                      ? static_cast<double>(synsets_hit) / report.gold_total
                      : 0.0;
  report.f1 = report.precision + report.recall > 0.0
                  ? 2.0 * report.precision * report.recall /
                        (report.precision + report.recall)
                  : 0.0;
  return report;
}

std::vector<BenchmarkSentence> load_benchmark(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open benchmark file: " + path);
  std::vector<BenchmarkSentence> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      json rec = json::parse(line);
      BenchmarkSentence b;
      b.id = rec.at("id").get<std::string>();
      b.lang = rec.at("lang").get<std::string>();
      b.tokens = rec.at("tokens").get<std::vector<std::string>>();
      for (const auto& jsyn : rec.at("synsets")) {
        FactSynset syn;
        for (const auto& jt : jsyn) {
          syn.push_back({jt.at(0).get<std::string>(), jt.at(1).get<std::string>(),
                         jt.at(2).get<std::string>()});
        }
        b.synsets.push_back(std::move(syn));
      }
      out.push_back(std::move(b));
    } catch (const json::exception& e) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": malformed benchmark record: " + e.what());
    }
  }
  return out;
}

}  // namespace oie

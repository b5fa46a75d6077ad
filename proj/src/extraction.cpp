#include "oie/extraction.hpp"

#include <stdexcept>

namespace oie {

void validate_tuple(const ExtractionTuple& t, int sentence_len) {
  auto check_span = [sentence_len](const Span& s, const char* what) {
    if (s.start < 0 || s.start >= s.end || s.end > sentence_len) {
      throw std::invalid_argument(std::string(what) + " span [" +
                                  std::to_string(s.start) + "," +
                                  std::to_string(s.end) + ") out of bounds");
    }
  };
  check_span(t.predicate, "predicate");
  if (t.arguments.empty()) {
    throw std::invalid_argument("tuple must carry at least one argument");
  }
  if (static_cast<int>(t.arguments.size()) > TagScheme::kMaxArguments) {
    throw std::invalid_argument("tuple has more arguments than supported roles");
  }
  for (const Span& a : t.arguments) check_span(a, "argument");
}

const std::vector<std::string>& TagScheme::predicate_names() {
  static const std::vector<std::string> names = {"O", "B-P", "I-P"};
  return names;
}

const std::vector<std::string>& TagScheme::argument_names() {
  static const std::vector<std::string> names = {
      "O",    "B-A0", "I-A0", "B-A1", "I-A1",
      "B-A2", "I-A2", "B-A3", "I-A3"};
  return names;
}

namespace {

struct TagInfo {
  bool outside = true;
  bool begin = false;
  int role = -1;
};

TagInfo classify(int tag, TagHalf half) {
  const int count = half == TagHalf::predicate ? TagScheme::kPredicateTags
                                               : TagScheme::kArgumentTags;
  if (tag < 0 || tag >= count) {
    throw std::invalid_argument("decode_bio: unknown tag id " + std::to_string(tag));
  }
  TagInfo info;
  if (tag == 0) return info;
  info.outside = false;
  if (half == TagHalf::predicate) {
    info.begin = tag == 1;
    info.role = 0;
  } else {
    info.begin = (tag % 2) == 1;
    info.role = (tag - 1) / 2;
  }
  return info;
}

}  // namespace

std::vector<RoleSpan> decode_bio(const std::vector<int>& tags, TagHalf half) {
  std::vector<RoleSpan> spans;
  int open_role = -1;
  int open_start = -1;
  auto close = [&](int end) {
    if (open_role >= 0) {
      spans.push_back({open_role, {open_start, end}});
      open_role = -1;
    }
  };
  for (int i = 0; i < static_cast<int>(tags.size()); ++i) {
    const TagInfo info = classify(tags[static_cast<std::size_t>(i)], half);
    if (info.outside) {
      close(i);
      continue;
    }
    if (info.begin || info.role != open_role) {
      // B-X always starts a run; a stray I-X of a different role is
      // repaired into a begin.
      close(i);
      open_role = info.role;
      open_start = i;
    }
  }
  close(static_cast<int>(tags.size()));
  return spans;
}

TupleTags encode_tuple_tags(int sentence_len, const ExtractionTuple& tuple) {
  validate_tuple(tuple, sentence_len);
  for (std::size_t i = 0; i < tuple.arguments.size(); ++i) {
    for (std::size_t j = i + 1; j < tuple.arguments.size(); ++j) {
      if (tuple.arguments[i].overlaps(tuple.arguments[j])) {
        throw std::invalid_argument("encode_tags: overlapping argument spans");
      }
    }
  }
  TupleTags out;
  out.predicate.assign(static_cast<std::size_t>(sentence_len), 0);
  out.argument.assign(static_cast<std::size_t>(sentence_len), 0);
  out.predicate[static_cast<std::size_t>(tuple.predicate.start)] = 1;
  for (int i = tuple.predicate.start + 1; i < tuple.predicate.end; ++i) {
    out.predicate[static_cast<std::size_t>(i)] = 2;
  }
  for (std::size_t role = 0; role < tuple.arguments.size(); ++role) {
    const Span& a = tuple.arguments[role];
    out.argument[static_cast<std::size_t>(a.start)] =
        TagScheme::argument_begin(static_cast<int>(role));
    for (int i = a.start + 1; i < a.end; ++i) {
      out.argument[static_cast<std::size_t>(i)] =
          TagScheme::argument_inside(static_cast<int>(role));
    }
  }
  return out;
}

std::vector<TupleTags> encode_tags(int sentence_len,
                                   const std::vector<ExtractionTuple>& tuples) {
  std::vector<TupleTags> out;
  out.reserve(tuples.size());
  for (const auto& t : tuples) out.push_back(encode_tuple_tags(sentence_len, t));
  return out;
}

std::vector<int> merge_predicate_tags(int sentence_len,
                                      const std::vector<ExtractionTuple>& tuples) {
  std::vector<int> merged(static_cast<std::size_t>(sentence_len), 0);
  for (const auto& t : tuples) {
    const TupleTags tags = encode_tuple_tags(sentence_len, t);
    for (int i = 0; i < sentence_len; ++i) {
      const int tag = tags.predicate[static_cast<std::size_t>(i)];
      if (tag == 0) continue;
      int& slot = merged[static_cast<std::size_t>(i)];
      if (slot != 0 && slot != tag) {
        throw std::invalid_argument(
            "merge_predicate_tags: conflicting predicate spans at token " +
            std::to_string(i));
      }
      slot = tag;
    }
  }
  return merged;
}

}  // namespace oie

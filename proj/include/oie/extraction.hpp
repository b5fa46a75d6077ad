#pragma once

#include <string>
#include <vector>

namespace oie {

// Half-open token range [start, end).
struct Span {
  int start = 0;
  int end = 0;

  int length() const { return end - start; }
  bool operator==(const Span&) const = default;
  bool overlaps(const Span& other) const {
    return start < other.end && other.start < end;
  }
};

// One predicate with its ordered arguments; argument 0 is the subject.
struct ExtractionTuple {
  Span predicate;
  std::vector<Span> arguments;

  bool operator==(const ExtractionTuple&) const = default;
};

void validate_tuple(const ExtractionTuple& t, int sentence_len);

// BIO tag inventories. Predicate half: O, B-P, I-P. Argument half: O plus
// B/I pairs for roles A0..A3. Ids are fixed and serialized with checkpoints.
struct TagScheme {
  static constexpr int kPredicateTags = 3;
  static constexpr int kArgumentTags = 9;
  static constexpr int kMaxArguments = 4;

  static const std::vector<std::string>& predicate_names();
  static const std::vector<std::string>& argument_names();

  static int argument_begin(int role) { return 1 + 2 * role; }
  static int argument_inside(int role) { return 2 + 2 * role; }
};

enum class TagHalf { predicate, argument };

// Role paired with its span: role 0 = predicate for the predicate half,
// role r = argument A<r> for the argument half.
struct RoleSpan {
  int role = 0;
  Span span;
  bool operator==(const RoleSpan&) const = default;
};

// Maximal B-X (I-X)* runs become spans; a stray I-X with no live run of the
// same role opens a new span (repair rule).
std::vector<RoleSpan> decode_bio(const std::vector<int>& tags, TagHalf half);

struct TupleTags {
  std::vector<int> predicate;  // length n, predicate half
  std::vector<int> argument;   // length n, argument half
};

// Inverse of decode_bio. Arguments within one tuple must not overlap.
TupleTags encode_tuple_tags(int sentence_len, const ExtractionTuple& tuple);
std::vector<TupleTags> encode_tags(int sentence_len,
                                   const std::vector<ExtractionTuple>& tuples);

// Union of the predicate halves of several tuples, for training the
// predicate tagger on all gold predicates at once. Tuples sharing an
// identical predicate span coexist; conflicting overlaps are an error.
std::vector<int> merge_predicate_tags(int sentence_len,
                                      const std::vector<ExtractionTuple>& tuples);

}  // namespace oie

#pragma once

#include <string>
#include <unordered_map>
#include <vector>

namespace oie {

// Whitespace-token vocabulary. Three reserved rows: 0 padding, 1 unknown,
// 2 sentence-start marker. Corpus tokens follow in first-occurrence order.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kMarker = 2;

  Vocabulary();

  int add(const std::string& token);
  // Unknown tokens map to kUnk.
  int id_of(const std::string& token) const;
  const std::string& token_of(int id) const;
  int size() const { return static_cast<int>(tokens_.size()); }

  std::vector<int> encode(const std::vector<std::string>& tokens) const;

  const std::vector<std::string>& tokens() const { return tokens_; }

  // Rebuild from a serialized token list (reserved entries included).
  static Vocabulary from_tokens(const std::vector<std::string>& tokens);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

}  // namespace oie

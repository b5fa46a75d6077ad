#include "oie/vocab.hpp"

#include <stdexcept>

namespace oie {

Vocabulary::Vocabulary() {
  add("<pad>");
  add("<unk>");
  add("<s>");
}

int Vocabulary::add(const std::string& token) {
  auto it = index_.find(token);
  if (it != index_.end()) return it->second;
  const int id = size();
  tokens_.push_back(token);
  index_.emplace(token, id);
  return id;
}

int Vocabulary::id_of(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token_of(int id) const {
  if (id < 0 || id >= size()) {
    throw std::out_of_range("Vocabulary::token_of: id out of range");
  }
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocabulary::encode(const std::vector<std::string>& tokens) const {
  std::vector<int> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(id_of(t));
  return ids;
}

Vocabulary Vocabulary::from_tokens(const std::vector<std::string>& tokens) {
  if (tokens.size() < 3 || tokens[0] != "<pad>" || tokens[1] != "<unk>" ||
      tokens[2] != "<s>") {
    throw std::invalid_argument("Vocabulary::from_tokens: reserved rows missing");
  }
  Vocabulary v;
  for (std::size_t i = 3; i < tokens.size(); ++i) v.add(tokens[i]);
  if (v.size() != static_cast<int>(tokens.size())) {
    throw std::invalid_argument("Vocabulary::from_tokens: duplicate tokens");
  }
  return v;
}

}  // namespace oie

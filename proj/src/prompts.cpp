#include "oie/prompts.hpp"

#include <stdexcept>

namespace oie {

std::string PromptTemplate::render(
    const std::map<std::string, std::string>& slots) const {
  std::string out;
  out.reserve(text.size());
  std::size_t i = 0;
  while (i < text.size()) {
    if (text[i] != '[') {
      out += text[i++];
      continue;
    }
    const std::size_t close = text.find(']', i);
    if (close == std::string::npos) {
      out += text.substr(i);
      break;
    }
    const std::string name = text.substr(i + 1, close - i - 1);
    auto it = slots.find(name);
    if (it == slots.end()) {
      throw std::invalid_argument("prompt slot [" + name + "] is unfilled");
    }
    out += it->second;
    i = close + 1;
  }
  return out;
}

PromptTemplate PromptTemplate::translation_default() {
  return {"You are a translator. Please translate the following English text "
          "into the [L]: [X]"};
}

PromptTemplate PromptTemplate::extraction_default() {
  return {"You are an Information Extraction expert. The following are the "
          "extraction results of [Y1], which are represented by Subject, "
          "Relation, and Object: [S1], [R1], [O1] Please refer to the "
          "extraction results above, extracting a triple that corresponds "
          "Subject, Relation, and Object from the translated sentence: [Y]. "
          "Note that the subject, relation, and object must originate from "
          "the continuous segment of the sentence. The output format must be "
          "the same as the sample above."};
}

}  // namespace oie

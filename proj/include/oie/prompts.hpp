#pragma once

#include <map>
#include <string>

namespace oie {

// Prompt text with [X]-style slots. Rendering replaces every slot occurrence
// and rejects templates whose slots are left unfilled.
struct PromptTemplate {
  std::string text;

  std::string render(const std::map<std::string, std::string>& slots) const;

  // The two-step defaults: p1 translates the source sentence, p2 extracts a
  // subject/relation/object triple from the translation with one exemplar.
  static PromptTemplate translation_default();
  static PromptTemplate extraction_default();
};

}  // namespace oie

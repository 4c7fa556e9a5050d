#ifndef MTOP_PLACEHOLDER_H_
#define MTOP_PLACEHOLDER_H_

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mtop/dataset.h"
#include "mtop/error.h"
#include "mtop/mrl.h"

namespace mtop {

enum class PlaceholderErrc {
  kSpanNotFound,
  kOverlappingSpans,
  kMissingSubstitution,
  kEmptySubstitution,
};

const char* to_string(PlaceholderErrc kind);

using PlaceholderError = KindedError<PlaceholderErrc>;

// A question/MRL pair whose leaf spans are replaced by placeholders x0..xk-1.
struct PlaceholderTemplate {
  std::vector<std::string> question_tokens;
  std::vector<std::optional<int>> token_tags;  // one per question token
  MrlTree skeleton;  // every leaf holds a single "x<id>" token
  int k = 0;

  // Original token span [begin, end) of each placeholder id.
  std::vector<std::pair<size_t, size_t>> spans;

  bool operator==(const PlaceholderTemplate&) const = default;
};

std::string placeholder_symbol(int id);

// Locates each leaf span leftmost after the end of the previous match.
PlaceholderTemplate make_template(const Example& example);

using Substitution = std::map<int, std::vector<std::string>>;

MrlTree restore_template(const PlaceholderTemplate& tmpl,
                         const Substitution& substitution);

// The substitution that restores the template's own source spans.
Substitution source_substitution(const PlaceholderTemplate& tmpl);

// "Any festivals|x0 this|x1 weekend|x1"
std::string format_tagged_question(const PlaceholderTemplate& tmpl);

}  // namespace mtop

#endif  // MTOP_PLACEHOLDER_H_

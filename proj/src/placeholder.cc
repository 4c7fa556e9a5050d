#include "mtop/placeholder.h"

#include <algorithm>

namespace mtop {
namespace {

// Leftmost occurrence of needle in haystack starting at from.
std::optional<size_t> find_span(const std::vector<std::string>& haystack,
                                const std::vector<std::string>& needle,
                                size_t from) {
  if (needle.empty() || from > haystack.size()) return std::nullopt;
  auto it = std::search(haystack.begin() + static_cast<std::ptrdiff_t>(from),
                        haystack.end(), needle.begin(), needle.end());
  if (it == haystack.end()) return std::nullopt;
  return static_cast<size_t>(it - haystack.begin());
}

}  // namespace

const char* to_string(PlaceholderErrc kind) {
  switch (kind) {
    case PlaceholderErrc::kSpanNotFound: return "SpanNotFound";
    case PlaceholderErrc::kOverlappingSpans: return "OverlappingSpans";
    case PlaceholderErrc::kMissingSubstitution: return "MissingSubstitution";
    case PlaceholderErrc::kEmptySubstitution: return "EmptySubstitution";
  }
  return "Unknown";
}

std::string placeholder_symbol(int id) { return "x" + std::to_string(id); }

PlaceholderTemplate make_template(const Example& example) {
  PlaceholderTemplate tmpl;
  tmpl.question_tokens = example.question_tokens;
  tmpl.token_tags.assign(example.question_tokens.size(), std::nullopt);
  tmpl.skeleton = example.mrl;

  size_t cursor = 0;
  int next_id = 0;
  for (MrlNode* leaf : leaf_nodes(tmpl.skeleton)) {
    std::optional<size_t> start = find_span(tmpl.question_tokens, leaf->text, cursor);
    if (!start) {
      // Distinguish text that exists only inside an already claimed span.
      std::optional<size_t> anywhere = find_span(tmpl.question_tokens, leaf->text, 0);
      if (anywhere) {
        throw PlaceholderError(PlaceholderErrc::kOverlappingSpans,
                               example.id + ": leaf '" + join_tokens(leaf->text) +
                                   "' overlaps an earlier span");
      }
      throw PlaceholderError(PlaceholderErrc::kSpanNotFound,
                             example.id + ": leaf '" + join_tokens(leaf->text) +
                                 "' not found in the question");
    }
    size_t end = *start + leaf->text.size();
    for (size_t i = *start; i < end; ++i) tmpl.token_tags[i] = next_id;
    tmpl.spans.emplace_back(*start, end);
    leaf->text = {placeholder_symbol(next_id)};
    cursor = end;
    ++next_id;
  }
  tmpl.k = next_id;
  return tmpl;
}

MrlTree restore_template(const PlaceholderTemplate& tmpl,
                         const Substitution& substitution) {
  MrlTree tree = tmpl.skeleton;
  int id = 0;
  for (MrlNode* leaf : leaf_nodes(tree)) {
    auto it = substitution.find(id);
    if (it == substitution.end()) {
      throw PlaceholderError(PlaceholderErrc::kMissingSubstitution,
                             "no substitution for " + placeholder_symbol(id));
    }
    if (it->second.empty()) {
      throw PlaceholderError(PlaceholderErrc::kEmptySubstitution,
                             "empty substitution for " + placeholder_symbol(id));
    }
    leaf->text = it->second;
    ++id;
  }
  return tree;
}

Substitution source_substitution(const PlaceholderTemplate& tmpl) {
  Substitution out;
  for (int id = 0; id < tmpl.k; ++id) {
    auto [begin, end] = tmpl.spans[static_cast<size_t>(id)];
    out[id] = std::vector<std::string>(
        tmpl.question_tokens.begin() + static_cast<std::ptrdiff_t>(begin),
        tmpl.question_tokens.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

std::string format_tagged_question(const PlaceholderTemplate& tmpl) {
  std::string out;
  for (size_t i = 0; i < tmpl.question_tokens.size(); ++i) {
    if (i > 0) out.push_back(' ');
    out += tmpl.question_tokens[i];
    if (tmpl.token_tags[i]) out += "|" + placeholder_symbol(*tmpl.token_tags[i]);
  }
  return out;
}

}  // namespace mtop

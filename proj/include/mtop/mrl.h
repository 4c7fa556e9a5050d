#ifndef MTOP_MRL_H_
#define MTOP_MRL_H_

// Bracketed intent/slot meaning representation (TOP style).
//
//   [IN:GET_EVENT [SL:CATEGORY_EVENT festivals ] [SL:DATE_TIME this weekend ] ]
//
// Tokens starting with "[IN:" or "[SL:" open a node, "]" closes the innermost
// open node and every other token is leaf text of the innermost node.

#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mtop/error.h"

namespace mtop {

enum class MrlErrc {
  kUnbalancedBrackets,
  kRootNotIntent,
  kBadLabel,
  kTextUnderIntent,
  kMixedSlotContent,
};

const char* to_string(MrlErrc kind);

using MrlError = KindedError<MrlErrc>;

enum class LabelKind { kIntent, kSlot };

struct MrlLabel {
  LabelKind kind = LabelKind::kIntent;
  std::string name;  // includes the prefix, e.g. "IN:GET_EVENT"

  // Parses "IN:FOO" / "SL:FOO"; throws kBadLabel on anything else.
  static MrlLabel parse(std::string_view name);

  bool is_intent() const { return kind == LabelKind::kIntent; }
  bool operator==(const MrlLabel&) const = default;
};

// A node holds nested children or leaf text, never both.
struct MrlNode {
  MrlLabel label;
  std::vector<MrlNode> children;
  std::vector<std::string> text;

  bool operator==(const MrlNode&) const = default;
};

struct MrlTree {
  MrlNode root;

  bool operator==(const MrlTree&) const = default;
};

struct ParseOptions {
  // When false, text directly under an intent is dropped instead of rejected.
  bool strict = true;
};

MrlTree parse_mrl(std::string_view text, ParseOptions options = {});

std::string serialize_mrl(const MrlTree& tree);

// Canonical token sequence of an MRL string: whitespace split, with runs of
// closing brackets ("]]") split into single "]" tokens.
std::vector<std::string> mrl_tokens(std::string_view text);

bool is_open_token(std::string_view token);
bool is_structural_token(std::string_view token);

// Original TOP annotation -> adapted tree with intent-level text removed.
// Returns nullopt when the root intent is IN:UNSUPPORTED.
std::optional<MrlTree> adapt_top_annotation(std::string_view annotation);

// Nodes carrying leaf text, in pre-order (left-to-right) order.
std::vector<const MrlNode*> leaf_nodes(const MrlTree& tree);
std::vector<MrlNode*> leaf_nodes(MrlTree& tree);

// True when both trees have identical labels and nesting; leaf text may differ
// but a node has text in one tree iff it has text in the other.
bool same_shape(const MrlTree& a, const MrlTree& b);

// Throws MrlError when a node violates the adapted-form invariants.
void validate_tree(const MrlTree& tree);

}  // namespace mtop

#endif  // MTOP_MRL_H_

#include "mtop/mrl.h"

#include <algorithm>
#include <cctype>

namespace mtop {
namespace {

bool valid_label_body(std::string_view body) {
  if (body.empty()) return false;
  return std::all_of(body.begin(), body.end(), [](char c) {
    return (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_';
  });
}

void append_node(const MrlNode& node, std::string* out) {
  out->push_back('[');
  out->append(node.label.name);
  out->push_back(' ');
  for (const MrlNode& child : node.children) {
    append_node(child, out);
    out->push_back(' ');
  }
  for (const std::string& token : node.text) {
    out->append(token);
    out->push_back(' ');
  }
  out->push_back(']');
}

template <typename Node, typename Out>
void collect_leaves(Node& node, Out* out) {
  if (!node.text.empty()) out->push_back(&node);
  for (auto& child : node.children) collect_leaves(child, out);
}

bool same_shape_node(const MrlNode& a, const MrlNode& b) {
  if (a.label != b.label || a.children.size() != b.children.size() ||
      a.text.empty() != b.text.empty()) {
    return false;
  }
  for (size_t i = 0; i < a.children.size(); ++i) {
    if (!same_shape_node(a.children[i], b.children[i])) return false;
  }
  return true;
}

void validate_node(const MrlNode& node) {
  if (node.label.is_intent() && !node.text.empty()) {
    throw MrlError(MrlErrc::kTextUnderIntent,
                   "text under intent " + node.label.name);
  }
  if (!node.children.empty() && !node.text.empty()) {
    throw MrlError(MrlErrc::kMixedSlotContent,
                   "slot " + node.label.name + " holds both text and a nested node");
  }
  for (const MrlNode& child : node.children) validate_node(child);
}

}  // namespace

const char* to_string(MrlErrc kind) {
  switch (kind) {
    case MrlErrc::kUnbalancedBrackets: return "UnbalancedBrackets";
    case MrlErrc::kRootNotIntent: return "RootNotIntent";
    case MrlErrc::kBadLabel: return "BadLabel";
    case MrlErrc::kTextUnderIntent: return "TextUnderIntent";
    case MrlErrc::kMixedSlotContent: return "MixedSlotContent";
  }
  return "Unknown";
}

MrlLabel MrlLabel::parse(std::string_view name) {
  if (name.size() > 3 && name[2] == ':') {
    std::string_view prefix = name.substr(0, 2);
    std::string_view body = name.substr(3);
    if (valid_label_body(body)) {
      if (prefix == "IN") return {LabelKind::kIntent, std::string(name)};
      if (prefix == "SL") return {LabelKind::kSlot, std::string(name)};
    }
  }
  throw MrlError(MrlErrc::kBadLabel, "bad label '" + std::string(name) + "'");
}

bool is_open_token(std::string_view token) {
  return token.size() > 1 && token.front() == '[';
}

bool is_structural_token(std::string_view token) {
  return token == "]" || token.starts_with("[IN:") || token.starts_with("[SL:");
}

std::vector<std::string> mrl_tokens(std::string_view text) {
  std::vector<std::string> tokens;
  size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    size_t start = i;
    while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    if (start == i) break;
    std::string_view token = text.substr(start, i - start);
    if (token.find_first_not_of(']') == std::string_view::npos) {
      for (size_t k = 0; k < token.size(); ++k) tokens.emplace_back("]");
    } else {
      tokens.emplace_back(token);
    }
  }
  return tokens;
}

MrlTree parse_mrl(std::string_view text, ParseOptions options) {
  std::vector<std::string> tokens = mrl_tokens(text);
  if (tokens.empty()) {
    throw MrlError(MrlErrc::kUnbalancedBrackets, "empty MRL");
  }
  std::vector<MrlNode> stack;
  std::optional<MrlNode> root;
  for (size_t pos = 0; pos < tokens.size(); ++pos) {
    std::string& token = tokens[pos];
    if (root) {
      throw MrlError(MrlErrc::kUnbalancedBrackets,
                     "token '" + token + "' after the root node closed");
    }
    if (is_open_token(token)) {
      MrlNode node;
      node.label = MrlLabel::parse(std::string_view(token).substr(1));
      if (stack.empty() && !node.label.is_intent()) {
        throw MrlError(MrlErrc::kRootNotIntent,
                       "root label " + node.label.name + " is not an intent");
      }
      if (!stack.empty() && !stack.back().label.is_intent() &&
          !stack.back().text.empty()) {
        throw MrlError(MrlErrc::kMixedSlotContent,
                       "slot " + stack.back().label.name +
                           " holds both text and a nested node");
      }
      stack.push_back(std::move(node));
    } else if (token == "]") {
      if (stack.empty()) {
        throw MrlError(MrlErrc::kUnbalancedBrackets, "unmatched ']'");
      }
      MrlNode node = std::move(stack.back());
      stack.pop_back();
      if (stack.empty()) {
        root = std::move(node);
      } else {
        stack.back().children.push_back(std::move(node));
      }
    } else {
      if (stack.empty()) {
        throw MrlError(MrlErrc::kRootNotIntent,
                       "text '" + token + "' outside of the root intent");
      }
      MrlNode& top = stack.back();
      if (top.label.is_intent()) {
        if (options.strict) {
          throw MrlError(MrlErrc::kTextUnderIntent,
                         "text '" + token + "' under intent " + top.label.name);
        }
        continue;
      }
      if (!top.children.empty()) {
        throw MrlError(MrlErrc::kMixedSlotContent,
                       "slot " + top.label.name +
                           " holds both text and a nested node");
      }
      top.text.push_back(std::move(token));
    }
  }
  if (!root) {
    throw MrlError(MrlErrc::kUnbalancedBrackets,
                   std::to_string(stack.size()) + " unclosed bracket(s)");
  }
  return MrlTree{std::move(*root)};
}

std::string serialize_mrl(const MrlTree& tree) {
  std::string out;
  append_node(tree.root, &out);
  return out;
}

std::optional<MrlTree> adapt_top_annotation(std::string_view annotation) {
  MrlTree tree = parse_mrl(annotation, ParseOptions{.strict = false});
  if (tree.root.label.name == "IN:UNSUPPORTED") return std::nullopt;
  return tree;
}

std::vector<const MrlNode*> leaf_nodes(const MrlTree& tree) {
  std::vector<const MrlNode*> out;
  collect_leaves(tree.root, &out);
  return out;
}

std::vector<MrlNode*> leaf_nodes(MrlTree& tree) {
  std::vector<MrlNode*> out;
  collect_leaves(tree.root, &out);
  return out;
}

bool same_shape(const MrlTree& a, const MrlTree& b) {
  return same_shape_node(a.root, b.root);
}

void validate_tree(const MrlTree& tree) {
  if (!tree.root.label.is_intent()) {
    throw MrlError(MrlErrc::kRootNotIntent, "root is not an intent");
  }
  validate_node(tree.root);
}

}  // namespace mtop

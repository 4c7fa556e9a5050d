#include "mtop/mrl.h"

#include <gtest/gtest.h>

#include <random>

#include "fixtures.h"

namespace mtop {
namespace {

using testing::kTable1Mrl;
using testing::kTable1Top;

TEST(MrlParse, Table1Example) {
  MrlTree tree = parse_mrl(kTable1Mrl);
  EXPECT_EQ(tree.root.label.name, "IN:GET_EVENT");
  EXPECT_TRUE(tree.root.label.is_intent());
  ASSERT_EQ(tree.root.children.size(), 2u);
  EXPECT_EQ(tree.root.children[0].label.name, "SL:CATEGORY_EVENT");
  EXPECT_EQ(tree.root.children[0].text, std::vector<std::string>{"festivals"});
  EXPECT_EQ(tree.root.children[1].label.name, "SL:DATE_TIME");
  EXPECT_EQ(tree.root.children[1].text, (std::vector<std::string>{"this", "weekend"}));
}

TEST(MrlParse, MinimalTree) {
  MrlTree tree = parse_mrl("[IN:X ]");
  EXPECT_EQ(tree.root.label.name, "IN:X");
  EXPECT_TRUE(tree.root.children.empty());
  EXPECT_TRUE(tree.root.text.empty());
}

TEST(MrlParse, UnbalancedBrackets) {
  try {
    parse_mrl("[IN:X [SL:A a");
    FAIL() << "expected an error";
  } catch (const MrlError& e) {
    EXPECT_EQ(e.kind(), MrlErrc::kUnbalancedBrackets);
  }
  EXPECT_THROW(parse_mrl("[IN:X ] ]"), MrlError);
  EXPECT_THROW(parse_mrl(""), MrlError);
}

TEST(MrlParse, RootMustBeIntent) {
  try {
    parse_mrl("[SL:A a ]");
    FAIL();
  } catch (const MrlError& e) {
    EXPECT_EQ(e.kind(), MrlErrc::kRootNotIntent);
  }
}

TEST(MrlParse, BadLabel) {
  try {
    parse_mrl("[IN:X [XX:A a ] ]");
    FAIL();
  } catch (const MrlError& e) {
    EXPECT_EQ(e.kind(), MrlErrc::kBadLabel);
  }
}

TEST(MrlParse, TextUnderIntentStrictAndLenient) {
  try {
    parse_mrl(kTable1Top);
    FAIL();
  } catch (const MrlError& e) {
    EXPECT_EQ(e.kind(), MrlErrc::kTextUnderIntent);
  }
  MrlTree lenient = parse_mrl(kTable1Top, ParseOptions{.strict = false});
  EXPECT_EQ(serialize_mrl(lenient), kTable1Mrl);
}

TEST(MrlParse, MixedSlotContent) {
  try {
    parse_mrl("[IN:X [SL:A a [IN:Y ] ] ]");
    FAIL();
  } catch (const MrlError& e) {
    EXPECT_EQ(e.kind(), MrlErrc::kMixedSlotContent);
  }
}

TEST(MrlParse, CompactClosers) {
  EXPECT_EQ(serialize_mrl(parse_mrl("[IN:X [SL:A a ]]")), "[IN:X [SL:A a ] ]");
}

TEST(MrlSerialize, Table1) { EXPECT_EQ(serialize_mrl(parse_mrl(kTable1Mrl)), kTable1Mrl); }

TEST(MrlSerialize, Minimal) {
  MrlTree tree{MrlNode{MrlLabel::parse("IN:X"), {}, {}}};
  EXPECT_EQ(serialize_mrl(tree), "[IN:X ]");
}

TEST(MrlSerialize, RandomRoundTrip) {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 100; ++i) {
    MrlTree tree = testing::random_tree(rng);
    std::string text = serialize_mrl(tree);
    EXPECT_EQ(parse_mrl(text), tree) << text;
    EXPECT_EQ(serialize_mrl(parse_mrl(text)), text);
  }
}

TEST(MrlAdapt, Table1DropsIntentText) {
  auto adapted = adapt_top_annotation(kTable1Top);
  ASSERT_TRUE(adapted.has_value());
  EXPECT_EQ(serialize_mrl(*adapted), kTable1Mrl);
}

TEST(MrlAdapt, UnsupportedIsDropped) {
  EXPECT_FALSE(adapt_top_annotation("[IN:UNSUPPORTED whatever ]").has_value());
}

TEST(MrlAdapt, AlreadyAdaptedUnchanged) {
  auto adapted = adapt_top_annotation(kTable1Mrl);
  ASSERT_TRUE(adapted.has_value());
  EXPECT_EQ(*adapted, parse_mrl(kTable1Mrl));
}

TEST(MrlAdapt, NestedIntentText) {
  auto adapted = adapt_top_annotation(
      "[IN:GET_DIRECTIONS how do i get [SL:DESTINATION [IN:GET_EVENT the [SL:NAME_EVENT "
      "jazz fest ] ] ] ]");
  ASSERT_TRUE(adapted.has_value());
  EXPECT_EQ(serialize_mrl(*adapted),
            "[IN:GET_DIRECTIONS [SL:DESTINATION [IN:GET_EVENT [SL:NAME_EVENT jazz fest ] ] ] ]");
}

TEST(MrlTokens, SplitsCloserRuns) {
  EXPECT_EQ(mrl_tokens("[IN:X [SL:A a ]]"),
            (std::vector<std::string>{"[IN:X", "[SL:A", "a", "]", "]"}));
  EXPECT_TRUE(is_open_token("[SL:A"));
  EXPECT_TRUE(is_structural_token("]"));
  EXPECT_FALSE(is_structural_token("a"));
}

TEST(MrlTree, LeafNodesAndShape) {
  MrlTree a = parse_mrl(kTable1Mrl);
  MrlTree b = parse_mrl(testing::kTable3Mrl);
  auto leaves = leaf_nodes(a);
  ASSERT_EQ(leaves.size(), 2u);
  EXPECT_EQ(leaves[1]->label.name, "SL:DATE_TIME");
  EXPECT_TRUE(same_shape(a, b));
  EXPECT_FALSE(same_shape(a, parse_mrl("[IN:GET_EVENT [SL:DATE_TIME x ] ]")));
}

}  // namespace
}  // namespace mtop

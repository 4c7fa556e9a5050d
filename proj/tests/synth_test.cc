#include "mtop/synth.h"

#include <gtest/gtest.h>

#include <set>

namespace mtop {
namespace {

TEST(Grammar, InventoryAndValidity) {
  EXPECT_EQ(synth::grammar_intents().size(), 2u);
  EXPECT_EQ(synth::grammar_slots().size(), 5u);
  EXPECT_EQ(synth::grammar_vocabulary().size(), 50u);
  synth::GrammarOptions o;
  o.count = 500;
  Corpus corpus = synth::grammar_corpus(o);
  ASSERT_EQ(corpus.examples.size(), 500u);
  std::set<std::string> vocab;
  for (const auto& w : synth::grammar_vocabulary()) vocab.insert(w);
  std::set<std::string> ids;
  for (const Example& e : corpus.examples) {
    EXPECT_NO_THROW(validate_example(e));
    EXPECT_TRUE(ids.insert(e.id).second);
    for (const auto& t : e.question_tokens) EXPECT_TRUE(vocab.count(t)) << t;
  }
}

TEST(Grammar, Deterministic) {
  synth::GrammarOptions o;
  o.seed = 9;
  EXPECT_EQ(synth::grammar_corpus(o), synth::grammar_corpus(o));
}

TEST(Grammar, OpenVocabularyPartitionsDisjoint) {
  synth::GrammarOptions a;
  a.count = 300;
  a.open_vocabulary = true;
  synth::GrammarOptions b = a;
  b.partition = 1;
  b.seed = 4;
  auto leaf_words = [](const Corpus& c) {
    std::set<std::string> out;
    for (const Example& e : c.examples) {
      for (const MrlNode* n : leaf_nodes(e.mrl)) out.insert(n->text.begin(), n->text.end());
    }
    return out;
  };
  auto wa = leaf_words(synth::grammar_corpus(a));
  auto wb = leaf_words(synth::grammar_corpus(b));
  for (const auto& w : wa) EXPECT_FALSE(wb.count(w)) << w;
  for (const Example& e : synth::grammar_corpus(a).examples) {
    EXPECT_EQ(e.provenance, Provenance::kSynthetic);
  }
}

TEST(Cognate, SuffixRule) {
  EXPECT_EQ(synth::cognate_word("festival"), "festivalo");
  EXPECT_EQ(synth::cognate_word("pizza"), "pizze");
  EXPECT_EQ(synth::cognate_word("rome"), "romi");
  EXPECT_EQ(synth::cognate_word("taxi"), "taxa");
  EXPECT_EQ(synth::cognate_word("disco"), "disca");
  EXPECT_TRUE(synth::is_function_word("the"));
}

TEST(Cognate, ExamplesStayValid) {
  synth::GrammarOptions o;
  o.count = 100;
  Corpus a = synth::grammar_corpus(o);
  Corpus b = synth::cognate_corpus(a, "xb");
  ASSERT_EQ(b.examples.size(), a.examples.size());
  for (size_t i = 0; i < a.examples.size(); ++i) {
    EXPECT_EQ(b.examples[i].lang, "xb");
    EXPECT_EQ(b.examples[i].id, a.examples[i].id + "-xb");
    EXPECT_TRUE(same_shape(a.examples[i].mrl, b.examples[i].mrl));
    EXPECT_NO_THROW(validate_example(b.examples[i]));
  }
}

TEST(Parallel, DiagonalGold) {
  auto p = synth::monotone_parallel_corpus(20, 10, 1);
  ASSERT_EQ(p.pairs.size(), 20u);
  for (size_t s = 0; s < p.pairs.size(); ++s) {
    ASSERT_EQ(p.pairs[s].source.size(), p.pairs[s].target.size());
    EXPECT_EQ(p.gold[s].pairs.size(), p.pairs[s].source.size());
    for (size_t i = 0; i < p.pairs[s].source.size(); ++i) {
      EXPECT_EQ(p.lexicon.at(p.pairs[s].source[i]), p.pairs[s].target[i]);
    }
  }
  std::set<std::string> images;
  for (const auto& [k, v] : p.lexicon) images.insert(v);
  EXPECT_EQ(images.size(), p.lexicon.size());
}

TEST(PseudoWords, DistinctAndSeeded) {
  auto w = synth::pseudo_words(100, 3);
  EXPECT_EQ(std::set<std::string>(w.begin(), w.end()).size(), 100u);
  EXPECT_EQ(w, synth::pseudo_words(100, 3));
}

}  // namespace
}  // namespace mtop

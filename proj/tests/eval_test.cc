#include "mtop/eval.h"

#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <random>

#include "fixtures.h"
#include "mtop/synth.h"

namespace mtop {
namespace {

constexpr const char* kTable6Gold =
    "[IN:GET_EVENT [SL:CATEGORY_EVENT i fuochi d'artificio ] [SL:DATE_TIME questa sera ] ]";
constexpr const char* kTable6Pred =
    "[IN:GET_EVENT [SL:CATEGORY_EVENT fuochi artificio ] [SL:DATE_TIME questa sera ] ]";

std::vector<std::string> split(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

TEST(ExactMatch, Identity) {
  PredictionMap golds = {{"a", testing::kTable1Mrl}, {"b", kTable6Gold}};
  EvalReport r = exact_match(golds, golds);
  EXPECT_DOUBLE_EQ(r.exact_match_accuracy, 1.0);
  EXPECT_EQ(r.n, 2u);
  EXPECT_TRUE(r.mismatches.empty());
}

TEST(ExactMatch, Table6IsMismatch) {
  EvalReport r = exact_match({{"x", kTable6Pred}}, {{"x", kTable6Gold}});
  EXPECT_DOUBLE_EQ(r.exact_match_accuracy, 0.0);
  ASSERT_EQ(r.mismatches.size(), 1u);
  EXPECT_EQ(r.mismatches[0].id, "x");
}

TEST(ExactMatch, HalfCorrectAndPerIntent) {
  EvalReport r = exact_match({{"a", testing::kTable1Mrl}, {"b", "[IN:GET_EVENT ]"}},
                             {{"a", testing::kTable1Mrl}, {"b", "[IN:GET_WEATHER ]"}});
  EXPECT_DOUBLE_EQ(r.exact_match_accuracy, 0.5);
  EXPECT_EQ(r.per_intent.at("IN:GET_EVENT").correct, 1u);
  EXPECT_EQ(r.per_intent.at("IN:GET_WEATHER").total, 1u);
}

TEST(ExactMatch, CanonicalTokens) {
  EvalReport r = exact_match({{"a", "[IN:X  [SL:A a ]]"}}, {{"a", "[IN:X [SL:A a ] ]"}});
  EXPECT_DOUBLE_EQ(r.exact_match_accuracy, 1.0);
}

TEST(ExactMatch, IdMismatch) {
  try {
    exact_match({{"a", "[IN:X ]"}}, {{"b", "[IN:X ]"}});
    FAIL();
  } catch (const EvalError& e) {
    EXPECT_EQ(e.kind(), EvalErrc::kIdMismatch);
  }
}

TEST(FilteredMatch, Table6MatchesUnderItalianFilter) {
  FilterList it = FilterList::defaults_for("it");
  EXPECT_TRUE(it.contains("i"));
  EXPECT_TRUE(it.contains("d'"));
  EvalReport r = filtered_match({{"x", kTable6Pred}}, {{"x", kTable6Gold}}, it);
  ASSERT_TRUE(r.filtered_accuracy.has_value());
  EXPECT_DOUBLE_EQ(*r.filtered_accuracy, 1.0);
  EXPECT_DOUBLE_EQ(r.exact_match_accuracy, 0.0);
  EXPECT_EQ(filtered_tokens(kTable6Gold, it), filtered_tokens(kTable6Pred, it));
}

TEST(FilteredMatch, StructureUntouched) {
  FilterList f("xx", {"[IN:GET_EVENT", "]", "festivals"});
  auto tokens = filtered_tokens(testing::kTable1Mrl, f);
  EXPECT_EQ(tokens.front(), "[IN:GET_EVENT");
  EXPECT_EQ(std::count(tokens.begin(), tokens.end(), "]"), 3);
  EXPECT_EQ(std::count(tokens.begin(), tokens.end(), "festivals"), 0);
}

TEST(FilteredMatch, JapaneseDefaults) {
  FilterList ja = FilterList::defaults_for("ja");
  EXPECT_TRUE(ja.contains("の"));
  EXPECT_EQ(ja.tokens().size(), 12u);
  EXPECT_EQ(FilterList::defaults_for("it").tokens().size(), 18u);
  EXPECT_TRUE(FilterList::defaults_for("en").empty());
}

PredictionMap random_predictions(std::mt19937_64& rng, const PredictionMap& golds) {
  static const std::vector<std::string> noise = {"i", "il", "d'", "la", "gli", "fuochi", "sera"};
  PredictionMap out;
  for (const auto& [id, gold] : golds) {
    auto tokens = mrl_tokens(gold);
    std::vector<std::string> pred;
    for (const auto& t : tokens) {
      bool leaf = !is_structural_token(t);
      if (leaf && rng() % 4 == 0) continue;
      pred.push_back(t);
      if (leaf && rng() % 4 == 0) pred.push_back(noise[rng() % noise.size()]);
    }
    out[id] = join_tokens(pred);
  }
  return out;
}

TEST(FilteredMatch, EmptyFilterEqualsExactAndFilteringIsMonotone) {
  std::mt19937_64 rng(21);
  PredictionMap golds;
  for (int i = 0; i < 30; ++i) {
    golds["g" + std::to_string(i)] =
        i % 2 ? kTable6Gold
              : "[IN:GET_EVENT [SL:CATEGORY_EVENT il concerto ] [SL:LOCATION la piazza ] ]";
  }
  FilterList it = FilterList::defaults_for("it");
  FilterList custom("it", {"fuochi", "sera"});
  for (int trial = 0; trial < 50; ++trial) {
    PredictionMap preds = random_predictions(rng, golds);
    EvalReport exact = exact_match(preds, golds);
    EvalReport empty = filtered_match(preds, golds, FilterList{});
    EXPECT_DOUBLE_EQ(*empty.filtered_accuracy, exact.exact_match_accuracy);
    EXPECT_GE(*filtered_match(preds, golds, it).filtered_accuracy, exact.exact_match_accuracy);
    EXPECT_GE(*filtered_match(preds, golds, custom).filtered_accuracy,
              exact.exact_match_accuracy);
  }
}

TEST(FilterList, FileRoundTrip) {
  auto dir = testing::temp_dir("filter");
  std::ofstream(dir / "f.txt") << "# articles\nIl\n\nla\nl’\n";
  FilterList f = FilterList::load(dir / "f.txt", "it");
  EXPECT_TRUE(f.contains("il"));
  EXPECT_TRUE(f.contains("l'"));
  EXPECT_EQ(f.tokens().size(), 3u);
  f.save(dir / "g.txt");
  EXPECT_EQ(FilterList::load(dir / "g.txt", "it").tokens(), f.tokens());
}

TEST(Bleu, IdentityIs100) {
  std::vector<std::vector<std::string>> corpus = {split("the cat sat on the mat"),
                                                  split("a b c d e")};
  EXPECT_NEAR(corpus_bleu(corpus, corpus), 100.0, 1e-9);
  std::vector<std::vector<std::string>> empty = {{}};
  EXPECT_NEAR(corpus_bleu(empty, empty), 100.0, 1e-9);
}

TEST(Bleu, ClippedHandCase) {
  // candidate "the the the", reference "the cat":
  //   p1 = 1/3 (clipped), p2 = 0/2, p3 = 0/1, p4 = 0/0.
  //   Smoothed: p2 = 1/3, p3 = 1/2, p4 = 1/1; c = 3 > r = 2, so BP = 1.
  double expected = 100.0 * std::pow((1.0 / 3.0) * (1.0 / 3.0) * (1.0 / 2.0) * 1.0, 0.25);
  EXPECT_NEAR(corpus_bleu({split("the the the")}, {split("the cat")}), expected, 1e-6);
}

TEST(Bleu, BrevityPenalty) {
  // c = 2 < r = 4: BP = exp(1 - 4/2); all n-gram precisions exact.
  double bp = std::exp(1.0 - 2.0);
  // p1 = 2/2, p2 = 1/1, p3 = 0/0 and p4 = 0/0 smoothed to 1/1.
  EXPECT_NEAR(corpus_bleu({split("a b")}, {split("a b c d")}), 100.0 * bp, 1e-9);
}

TEST(Bleu, EmptyCandidateFinite) {
  double v = corpus_bleu({{}, split("a b c")}, {split("x y"), split("a b c")});
  EXPECT_TRUE(std::isfinite(v));
  EXPECT_GE(v, 0.0);
  EXPECT_LE(v, 100.0);
  EXPECT_THROW(corpus_bleu({{}}, {}), EvalError);
}

TEST(Report, JsonRoundTripAndTable) {
  EvalReport r = filtered_match({{"x", kTable6Pred}, {"y", testing::kTable1Mrl}},
                                {{"x", kTable6Gold}, {"y", testing::kTable1Mrl}},
                                FilterList::defaults_for("it"));
  r.mode = "zero-shot";
  std::string json = r.to_json();
  EvalReport back = EvalReport::from_json(json);
  EXPECT_EQ(back.to_json(), json);
  EXPECT_NE(r.to_table().find("zero-shot"), std::string::npos);
  EXPECT_THROW(EvalReport::from_json("{"), EvalError);
}

TEST(Harness, ModesAndSelfConsistency) {
  synth::GrammarOptions o;
  o.count = 120;
  o.seed = 1;
  Corpus train = synth::grammar_corpus(o);
  o.count = 30;
  o.seed = 2;
  o.split = Split::kDev;
  o.id_prefix = "dev";
  Corpus dev = synth::grammar_corpus(o);
  WordFrequencies wf;
  for (const auto& e : train.examples) add_words(e.question_tokens, &wf);
  ParserConfig c;
  c.model_dim = 16;
  c.heads = 2;
  c.ffn_dim = 32;
  c.enc_layers = 1;
  c.dec_layers = 1;
  c.max_epochs = 3;
  c.beam_size = 2;
  c.learning_rate = 3e-3;
  ParserModel model = ParserModel::create(c, learn_bpe(wf, 30), train);
  TrainingHistory h = train_parser(model, train, dev);

  EvalReport standard = run_harness(model, dev, HarnessMode::kStandard);
  EXPECT_DOUBLE_EQ(standard.exact_match_accuracy, *h.dev_exact_match);
  EXPECT_EQ(standard.mode, "standard");
  EXPECT_FALSE(standard.unseen_test_language);

  Corpus foreign = synth::cognate_corpus(dev, "xb");
  EvalReport zs = run_harness(model, foreign, HarnessMode::kZeroShot);
  EXPECT_EQ(zs.mode, "zero-shot");
  EXPECT_TRUE(zs.unseen_test_language);
  EXPECT_EQ(zs.test_langs, std::vector<std::string>{"xb"});
  EXPECT_EQ(zs.training_langs, std::vector<std::string>{"en"});

  IdentityBackend identity;
  HarnessOptions opts;
  opts.backend = &identity;
  opts.gold_corpus = &dev;
  Corpus relabeled = dev;
  for (auto& e : relabeled.examples) e.lang = "xx";
  EvalReport tt = run_harness(model, relabeled, HarnessMode::kTranslateTest, opts);
  EXPECT_EQ(tt.mode, "translate-test");
  EXPECT_DOUBLE_EQ(tt.exact_match_accuracy, standard.exact_match_accuracy);

  auto dir = testing::temp_dir("harness");
  model.save(dir / "m.ckpt");
  EXPECT_DOUBLE_EQ(run_harness(dir / "m.ckpt", dev, HarnessMode::kStandard).exact_match_accuracy,
                   standard.exact_match_accuracy);
  try {
    run_harness(dir / "missing.ckpt", dev, HarnessMode::kStandard);
    FAIL();
  } catch (const ParserError& e) {
    EXPECT_EQ(e.kind(), ParserErrc::kCheckpointError);
  }
  EXPECT_EQ(harness_mode_from_string("translate-test"), HarnessMode::kTranslateTest);
  EXPECT_THROW(harness_mode_from_string("nope"), EvalError);
}

}  // namespace
}  // namespace mtop

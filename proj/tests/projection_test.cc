#include "mtop/projection.h"

#include <gtest/gtest.h>

#include "fixtures.h"
#include "mtop/synth.h"

namespace mtop {
namespace {

Alignment figure1_alignment() { return Alignment{{{0, 0}, {1, 2}, {2, 3}, {3, 4}, {3, 5}}}; }

TEST(ProjectExample, Table3) {
  PlaceholderTemplate t = make_template(testing::table1_example());
  ProjectionOutcome out = project_example(t, testing::italian_translation(), figure1_alignment());
  ASSERT_TRUE(out.ok()) << out.detail;
  EXPECT_EQ(serialize_mrl(out.example->mrl), testing::kTable3Mrl);
  EXPECT_EQ(out.example->question_tokens, testing::italian_translation());
  EXPECT_EQ(out.example->provenance, Provenance::kMachineTranslated);
}

TEST(ProjectExample, EmptyAlignment) {
  PlaceholderTemplate t = make_template(testing::table1_example());
  ProjectionOutcome out = project_example(t, testing::italian_translation(), Alignment{});
  ASSERT_FALSE(out.ok());
  EXPECT_EQ(*out.failure, ProjectionFailure::kUnalignedPlaceholder);
}

TEST(ProjectExample, CrossingHullsOverlap) {
  // x0 = festivals links targets {1, 3}; x1 = this weekend links {2}.
  PlaceholderTemplate t = make_template(testing::table1_example());
  Alignment crossing{{{1, 1}, {1, 3}, {2, 2}}};
  ProjectionOutcome out = project_example(t, testing::italian_translation(), crossing);
  ASSERT_FALSE(out.ok());
  EXPECT_EQ(*out.failure, ProjectionFailure::kOverlappingProjection);
}

TEST(ProjectExample, HullIncludesUnalignedInterior) {
  PlaceholderTemplate t = make_template(testing::table1_example());
  Alignment gappy{{{1, 2}, {2, 3}, {3, 5}}};
  ProjectionOutcome out = project_example(t, testing::italian_translation(), gappy);
  ASSERT_TRUE(out.ok());
  EXPECT_EQ(serialize_mrl(out.example->mrl), testing::kTable3Mrl);
}

TEST(Bootstrap, IdentityBackend) {
  synth::GrammarOptions options;
  options.count = 100;
  Corpus source = synth::grammar_corpus(options);
  IdentityBackend backend;
  BootstrapOptions boot;
  boot.target_lang = "xx";
  BootstrapResult result = bootstrap_corpus(source, backend, boot);
  EXPECT_DOUBLE_EQ(result.report.yield_fraction(), 1.0);
  ASSERT_EQ(result.corpus.examples.size(), source.examples.size());
  for (size_t i = 0; i < source.examples.size(); ++i) {
    EXPECT_EQ(result.corpus.examples[i].mrl, source.examples[i].mrl);
    EXPECT_EQ(result.corpus.examples[i].lang, "xx");
    EXPECT_EQ(result.corpus.examples[i].id, source.examples[i].id + "-xx");
  }
}

TEST(Bootstrap, DictBackendSyntheticCorpus) {
  synth::GrammarOptions options;
  options.count = 200;
  options.seed = 11;
  Corpus source = synth::grammar_corpus(options);
  DictBackend backend(synth::cognate_lexicon(source));
  BootstrapOptions boot;
  boot.target_lang = "xb";
  BootstrapResult result = bootstrap_corpus(source, backend, boot);
  EXPECT_GE(result.report.yield_fraction(), 0.95);
  EXPECT_EQ(result.report.attempted, 200u);
  size_t failures = 0;
  for (const auto& [reason, count] : result.report.failures) failures += count;
  EXPECT_EQ(result.report.succeeded + failures, result.report.attempted);
  std::map<std::string, const Example*> by_id;
  for (const Example& e : source.examples) by_id[e.id + "-xb"] = &e;
  for (const Example& e : result.corpus.examples) {
    MrlTree reparsed = parse_mrl(serialize_mrl(e.mrl));
    EXPECT_NO_THROW(validate_tree(reparsed));
    ASSERT_TRUE(by_id.count(e.id));
    EXPECT_TRUE(same_shape(e.mrl, by_id[e.id]->mrl));
    EXPECT_NO_THROW(validate_example(e));
  }
}

TEST(Bootstrap, ReportJsonCounts) {
  ProjectionReport report;
  ProjectionOutcome fail;
  fail.failure = ProjectionFailure::kSpanNotFound;
  report.add(fail);
  EXPECT_EQ(report.attempted, 1u);
  EXPECT_EQ(report.succeeded, 0u);
  EXPECT_DOUBLE_EQ(report.yield_fraction(), 0.0);
  EXPECT_NE(report.to_json().find("SpanNotFound"), std::string::npos) << report.to_json();
}

}  // namespace
}  // namespace mtop

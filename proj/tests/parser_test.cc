#include "mtop/parser.h"

#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>

#include "fixtures.h"
#include "mtop/synth.h"

namespace mtop {
namespace {

ParserConfig tiny_config(uint64_t seed = 0) {
  ParserConfig c;
  c.model_dim = 16;
  c.heads = 2;
  c.ffn_dim = 32;
  c.enc_layers = 1;
  c.dec_layers = 1;
  c.dropout = 0.0;
  c.beam_size = 1;
  c.max_decode_len = 24;
  c.learning_rate = 3e-3;
  c.batch_size = 8;
  c.seed = seed;
  return c;
}

Corpus grammar(size_t count, uint64_t seed, Split split = Split::kTrain) {
  synth::GrammarOptions o;
  o.count = count;
  o.seed = seed;
  o.split = split;
  o.id_prefix = split == Split::kTrain ? "tr" : "dv";
  return synth::grammar_corpus(o);
}

BpeModel bpe_for(const Corpus& corpus, int merges = 40) {
  WordFrequencies wf;
  for (const Example& e : corpus.examples) add_words(e.question_tokens, &wf);
  return learn_bpe(wf, merges);
}

// Whole-word BPE over the Table 1 question.
BpeModel word_level_bpe() {
  return learn_bpe({{"Any", 2}, {"festivals", 2}, {"this", 2}, {"weekend", 2}}, 100);
}

TEST(Config, ValidationAndKeyValues) {
  ParserConfig c;
  EXPECT_NO_THROW(c.validate());
  c.heads = 3;
  EXPECT_THROW(c.validate(), ParserError);
  ParserConfig d = ParserConfig::from_key_values({{"model_dim", "64"}, {"copy_enabled", "false"}});
  EXPECT_EQ(d.model_dim, 64);
  EXPECT_FALSE(d.copy_enabled);
  EXPECT_EQ(d.beam_size, 4);
  EXPECT_THROW(ParserConfig::from_key_values({{"bogus", "1"}}), ParserError);
  ParserConfig e = ParserConfig::from_key_values(d.to_key_values());
  EXPECT_EQ(e.to_key_values(), d.to_key_values());
}

TEST(OracleActions, Table1WordLevel) {
  ActionSequence seq = oracle_actions(testing::table1_example(), word_level_bpe());
  EXPECT_EQ(seq.source, (std::vector<std::string>{"Any</w>", "festivals</w>", "this</w>",
                                                  "weekend</w>"}));
  std::vector<Action> expected = {
      Action::gen("[IN:GET_EVENT"), Action::gen("[SL:CATEGORY_EVENT"), Action::copy(1),
      Action::gen("]"),             Action::gen("[SL:DATE_TIME"),      Action::copy(2),
      Action::copy(3),              Action::gen("]"),                  Action::gen("]"),
      Action::gen(std::string(kEos))};
  EXPECT_EQ(seq.actions, expected);
  EXPECT_EQ(seq.detokenize(), testing::kTable1Mrl);
}

TEST(OracleActions, NoLeavesAllGen) {
  Example e;
  e.question_tokens = {"hello"};
  e.mrl = parse_mrl("[IN:GREET ]");
  ActionSequence seq = oracle_actions(e, word_level_bpe());
  for (const Action& a : seq.actions) EXPECT_EQ(a.kind, Action::Kind::kGen);
  EXPECT_EQ(seq.actions.size(), 3u);
  EXPECT_TRUE(seq.actions.back().is_eos());
}

TEST(OracleActions, CopyTargetNotFound) {
  Example e = testing::table1_example();
  e.mrl = parse_mrl("[IN:GET_EVENT [SL:DATE_TIME tomorrow ] ]");
  try {
    oracle_actions(e, word_level_bpe());
    FAIL();
  } catch (const ParserError& err) {
    EXPECT_EQ(err.kind(), ParserErrc::kCopyTargetNotFound);
  }
}

TEST(OracleActions, RoundTripOnSyntheticCorpus) {
  Corpus corpus = grammar(300, 4);
  BpeModel bpe = bpe_for(corpus, 25);
  for (const Example& e : corpus.examples) {
    EXPECT_EQ(oracle_actions(e, bpe, true).detokenize(), serialize_mrl(e.mrl));
    EXPECT_EQ(oracle_actions(e, bpe, false).detokenize(), serialize_mrl(e.mrl));
  }
}

TEST(OracleActions, CopyDisabledGeneratesWords) {
  ActionSequence seq = oracle_actions(testing::table1_example(), word_level_bpe(), false);
  EXPECT_EQ(seq.actions[2], Action::gen("festivals</w>"));
  for (const Action& a : seq.actions) EXPECT_EQ(a.kind, Action::Kind::kGen);
}

TEST(ActionDistribution, ValidProbabilityVectors) {
  std::mt19937_64 rng(3);
  Corpus corpus = grammar(50, 1);
  BpeModel bpe = bpe_for(corpus);
  for (int trial = 0; trial < 20; ++trial) {
    ParserConfig c = tiny_config(static_cast<uint64_t>(trial));
    c.copy_enabled = trial % 3 != 0;
    ParserModel model = ParserModel::create(c, bpe, corpus);
    const Example& e = corpus.examples[rng() % corpus.examples.size()];
    ActionSequence seq = oracle_actions(e, bpe, c.copy_enabled);
    size_t cut = rng() % seq.actions.size();
    std::vector<Action> prefix(seq.actions.begin(), seq.actions.begin() + static_cast<long>(cut));
    auto dist = action_distribution(model, seq.source, prefix);
    ASSERT_EQ(dist.size(), static_cast<size_t>(model.target_vocab().size()) + seq.source.size());
    double sum = 0.0;
    for (double p : dist) {
      EXPECT_GE(p, 0.0);
      sum += p;
    }
    EXPECT_NEAR(sum, 1.0, 1e-6);
    if (!c.copy_enabled) {
      for (size_t i = static_cast<size_t>(model.target_vocab().size()); i < dist.size(); ++i) {
        EXPECT_EQ(dist[i], 0.0);
      }
    }
  }
}

TEST(ActionDistribution, ForcedEosArgmax) {
  Corpus corpus = grammar(20, 1);
  BpeModel bpe = bpe_for(corpus);
  ParserModel model = ParserModel::create(tiny_config(), bpe, corpus);
  model.params().at("copy.wq").value.setZero();
  model.params().at("copy.wk").value.setZero();
  model.params().at("out.b").value(0, 0) = 1e3;
  const Example& e = corpus.examples[0];
  auto source = encode_source(bpe, e.question_tokens);
  auto dist = action_distribution(model, source, {});
  size_t argmax = static_cast<size_t>(std::max_element(dist.begin(), dist.end()) - dist.begin());
  EXPECT_EQ(argmax, 0u);
  EXPECT_TRUE(action_from_id(model, 0).is_eos());
  EXPECT_TRUE(decode_greedy(model, e.question_tokens).sequence.actions.front().is_eos());
}

TEST(Gradients, MatchCentralDifferences) {
  Corpus corpus = grammar(10, 2);
  BpeModel bpe = bpe_for(corpus, 20);
  ParserConfig c = tiny_config(5);
  c.enc_layers = 2;
  ParserModel model = ParserModel::create(c, bpe, corpus);
  // Perturb gains and biases away from their 1/0 initialization so every
  // parameter receives a generic gradient.
  std::mt19937_64 rng(9);
  std::normal_distribution<double> noise(0.0, 0.1);
  for (nn::Parameter* p : model.params().all()) {
    for (Eigen::Index i = 0; i < p->value.size(); ++i) p->value.data()[i] += noise(rng);
  }
  ActionSequence seq = oracle_actions(corpus.examples[0], bpe);
  model.params().zero_grad();
  sequence_loss(model, seq, true);

  const double h = 1e-5;
  double worst = 0.0;
  std::string worst_name;
  for (nn::Parameter* p : model.params().all()) {
    for (int k = 0; k < 4; ++k) {
      Eigen::Index i = static_cast<Eigen::Index>(rng() % static_cast<uint64_t>(p->value.size()));
      const double saved = p->value.data()[i];
      p->value.data()[i] = saved + h;
      double up = sequence_loss(model, seq, false);
      p->value.data()[i] = saved - h;
      double down = sequence_loss(model, seq, false);
      p->value.data()[i] = saved;
      double numeric = (up - down) / (2.0 * h);
      double analytic = p->grad.data()[i];
      double scale = std::max({std::fabs(numeric), std::fabs(analytic), 1e-4});
      double rel = std::fabs(numeric - analytic) / scale;
      if (rel > worst) {
        worst = rel;
        worst_name = p->name;
      }
    }
  }
  EXPECT_LT(worst, 1e-4) << worst_name;
}

TEST(Decode, BeamOneEqualsGreedy) {
  Corpus corpus = grammar(40, 6);
  BpeModel bpe = bpe_for(corpus);
  for (uint64_t seed = 0; seed < 4; ++seed) {
    ParserModel model = ParserModel::create(tiny_config(seed), bpe, corpus);
    for (size_t i = 0; i < 5; ++i) {
      const auto& q = corpus.examples[i].question_tokens;
      DecodeResult beam = decode_beam(model, q, 1);
      DecodeResult greedy = decode_greedy(model, q);
      EXPECT_EQ(beam.sequence, greedy.sequence);
      EXPECT_EQ(beam.mrl, greedy.mrl);
      EXPECT_EQ(beam.max_length_exceeded, greedy.max_length_exceeded);
    }
  }
}

TEST(Decode, ExhaustiveSearchEquivalence) {
  BpeModel bpe = learn_bpe({{"ab", 2}}, 5);
  ParserConfig c = tiny_config(1);
  c.max_decode_len = 4;
  // |V| = 4 (eos, unk, [IN:A, ]) plus a 2-symbol source: 6 actions.
  Vocab target({std::string(kEos), std::string(kUnk), "[IN:A", "]"});
  std::vector<std::string> question = {"ab", "ab"};
  for (uint64_t seed = 0; seed < 5; ++seed) {
    c.seed = seed;
    ParserModel model(c, bpe, source_vocab_for(bpe), target);
    auto source = encode_source(bpe, question);
    ASSERT_EQ(source.size(), 2u);
    const int actions = target.size() + 2;
    // Brute force over every prefix of at most max_decode_len actions.
    double best_score = -1e300;
    std::vector<Action> best;
    std::function<void(std::vector<Action>&, double)> search = [&](std::vector<Action>& prefix,
                                                                    double logp) {
      auto dist = action_distribution(model, source, prefix);
      for (int a = 0; a < actions; ++a) {
        Action act = action_from_id(model, a);
        double lp = logp + std::log(dist[static_cast<size_t>(a)]);
        prefix.push_back(act);
        if (act.is_eos()) {
          double score = lp / static_cast<double>(prefix.size());
          if (score > best_score) {
            best_score = score;
            best = prefix;
          }
        } else if (static_cast<int>(prefix.size()) < c.max_decode_len) {
          search(prefix, lp);
        }
        prefix.pop_back();
      }
    };
    std::vector<Action> prefix;
    search(prefix, 0.0);
    const int space = 6 + 36 + 216 + 1296;
    DecodeResult r = decode_beam(model, question, space);
    EXPECT_EQ(r.sequence.actions, best) << "seed " << seed;
    EXPECT_NEAR(r.score, best_score, 1e-9);
    EXPECT_FALSE(r.max_length_exceeded);
  }
}

TEST(Decode, MaxLengthExceededFlag) {
  Corpus corpus = grammar(20, 1);
  BpeModel bpe = bpe_for(corpus);
  ParserConfig c = tiny_config();
  c.max_decode_len = 3;
  ParserModel model = ParserModel::create(c, bpe, corpus);
  model.params().at("out.b").value(0, 0) = -1e3;
  DecodeResult r = decode_beam(model, corpus.examples[0].question_tokens, 2);
  EXPECT_TRUE(r.max_length_exceeded);
  EXPECT_EQ(r.sequence.actions.size(), 3u);
  EXPECT_THROW(decode_beam(model, {}, 2), ParserError);
}

TEST(Schedule, Rates) {
  UnfreezeSchedule none{3, 0.0, false};
  EXPECT_EQ(none.eligible_groups(), 0);
  for (int e = 0; e < 5; ++e) EXPECT_EQ(none.mask(e), std::vector<bool>(3, false));

  UnfreezeSchedule tenth{3, 0.1, false};
  EXPECT_EQ(tenth.eligible_groups(), 1);
  EXPECT_EQ(tenth.mask(0), (std::vector<bool>{false, false, true}));

  UnfreezeSchedule gradual{3, 1.0, true};
  EXPECT_EQ(gradual.mask(0), (std::vector<bool>{false, false, false}));
  EXPECT_EQ(gradual.mask(1), (std::vector<bool>{false, false, true}));
  EXPECT_EQ(gradual.mask(2), (std::vector<bool>{false, true, true}));
  EXPECT_EQ(gradual.mask(3), (std::vector<bool>{true, true, true}));
  EXPECT_EQ(gradual.mask(9), (std::vector<bool>{true, true, true}));

  UnfreezeSchedule partial{3, 0.5, true};
  EXPECT_EQ(partial.eligible_groups(), 2);
  EXPECT_EQ(partial.unfrozen_groups(5), 2);

  Corpus corpus = grammar(10, 1);
  ParserConfig c = tiny_config();
  c.enc_layers = 2;
  ParserModel model = ParserModel::create(c, bpe_for(corpus), corpus);
  UnfreezeSchedule s = set_unfreeze_schedule(model, 0.1, false);
  EXPECT_EQ(s.groups, 3);
  EXPECT_EQ(s.eligible_groups(), 1);
}

std::vector<nn::Matrix> encoder_values(const ParserModel& model) {
  std::vector<nn::Matrix> out;
  for (const nn::Parameter* p : model.params().all()) {
    if (p->group >= 0) out.push_back(p->value);
  }
  return out;
}

TEST(Training, FrozenEncoderBitIdentical) {
  Corpus train = grammar(40, 1);
  Corpus dev = grammar(10, 2, Split::kDev);
  BpeModel bpe = bpe_for(train);
  ParserConfig c = tiny_config();
  c.max_epochs = 3;
  c.eval_dev_exact_match = false;
  ParserModel model = ParserModel::create(c, bpe, train);
  auto before = encoder_values(model);
  auto decoder_before = model.params().at("out.w").value;
  TrainingHistory h = train_parser(model, train, dev, set_unfreeze_schedule(model, 0.0, false));
  auto after = encoder_values(model);
  ASSERT_EQ(before.size(), after.size());
  for (size_t i = 0; i < before.size(); ++i) {
    EXPECT_EQ(std::memcmp(before[i].data(), after[i].data(),
                          sizeof(double) * static_cast<size_t>(before[i].size())),
              0);
  }
  EXPECT_FALSE(decoder_before.isApprox(model.params().at("out.w").value));
  EXPECT_GT(h.epochs.back().steps, 0);
}

TEST(Training, GradualScheduleInHistory) {
  Corpus train = grammar(16, 1);
  Corpus dev = grammar(8, 2, Split::kDev);
  ParserConfig c = tiny_config();
  c.enc_layers = 2;
  c.max_epochs = 5;
  c.patience = 10;
  c.eval_dev_exact_match = false;
  ParserModel model = ParserModel::create(c, bpe_for(train), train);
  TrainingHistory h = train_parser(model, train, dev, set_unfreeze_schedule(model, 1.0, true));
  ASSERT_EQ(h.epochs.size(), 5u);
  for (size_t e = 0; e < h.epochs.size(); ++e) {
    EXPECT_EQ(h.epochs[e].unfrozen_groups, std::min<int>(static_cast<int>(e), 3));
    int open = 0;
    for (bool b : h.epochs[e].trainable_groups) open += b;
    EXPECT_EQ(open, h.epochs[e].unfrozen_groups);
  }
  EXPECT_NE(h.to_jsonl().find("\"unfrozen_groups\""), std::string::npos);
}

TEST(Training, OverfitsSmallBatch) {
  Corpus train = grammar(8, 3);
  BpeModel bpe = bpe_for(train, 20);
  ParserConfig c = tiny_config(2);
  c.batch_size = 8;
  c.learning_rate = 1e-2;
  c.max_epochs = 300;
  c.patience = 300;
  c.eval_dev_exact_match = false;
  ParserModel model = ParserModel::create(c, bpe, train);
  TrainingHistory h = train_parser(model, train, train);
  EXPECT_EQ(h.epochs.back().steps, 300);
  EXPECT_LT(h.best_dev_loss, 0.05);
}

TEST(Training, DeterministicHistory) {
  Corpus train = grammar(30, 1);
  Corpus dev = grammar(10, 2, Split::kDev);
  BpeModel bpe = bpe_for(train);
  ParserConfig c = tiny_config(4);
  c.dropout = 0.1;
  c.max_epochs = 2;
  std::string runs[2];
  std::string ckpts[2];
  for (int r = 0; r < 2; ++r) {
    ParserModel model = ParserModel::create(c, bpe, train);
    runs[r] = train_parser(model, train, dev).to_jsonl();
    std::ostringstream out;
    model.save(out);
    ckpts[r] = out.str();
  }
  EXPECT_EQ(runs[0], runs[1]);
  EXPECT_EQ(ckpts[0], ckpts[1]);
}

TEST(Training, AllExamplesSkipped) {
  Corpus train = grammar(5, 1);
  BpeModel bpe = bpe_for(train);
  ParserModel model = ParserModel::create(tiny_config(), bpe, train);
  Corpus bad;
  Example e = train.examples[0];
  e.mrl = parse_mrl("[IN:GET_EVENT [SL:DATE_TIME zzzz ] ]");
  bad.examples.push_back(e);
  try {
    train_parser(model, bad, train);
    FAIL();
  } catch (const ParserError& err) {
    EXPECT_EQ(err.kind(), ParserErrc::kAllExamplesSkipped);
  }
}

TEST(Checkpoint, RoundTrip) {
  Corpus train = grammar(20, 1);
  BpeModel bpe = bpe_for(train);
  ParserModel model = ParserModel::create(tiny_config(3), bpe, train);
  std::stringstream buf;
  model.save(buf);
  ParserModel back = ParserModel::load(buf);
  EXPECT_EQ(back.target_vocab(), model.target_vocab());
  EXPECT_EQ(back.bpe(), model.bpe());
  EXPECT_EQ(back.training_langs(), std::vector<std::string>{"en"});
  const auto& q = train.examples[0].question_tokens;
  EXPECT_EQ(decode_beam(back, q, 2).sequence, decode_beam(model, q, 2).sequence);
  std::istringstream garbage("not a checkpoint");
  try {
    ParserModel::load(garbage);
    FAIL();
  } catch (const ParserError& err) {
    EXPECT_EQ(err.kind(), ParserErrc::kCheckpointError);
  }
}

TEST(Mlm, MaskFraction) {
  Corpus corpus = grammar(20, 1);
  BpeModel bpe = bpe_for(corpus);
  Vocab vocab = source_vocab_for(bpe);
  std::vector<std::vector<int>> batch(4, std::vector<int>(25, 5));
  std::mt19937_64 rng(1);
  MaskedBatch masked = mask_batch(batch, vocab, 0.15, rng);
  EXPECT_EQ(masked.targets.size(), 15u);
  std::set<std::pair<int, int>> positions;
  for (const auto& [s, p, original] : masked.targets) {
    positions.insert({s, p});
    EXPECT_EQ(original, 5);
  }
  EXPECT_EQ(positions.size(), 15u);
  // Over many draws roughly 80% of targets become the mask symbol.
  size_t masks = 0, total = 0;
  for (int r = 0; r < 200; ++r) {
    MaskedBatch m = mask_batch(batch, vocab, 0.15, rng);
    for (const auto& [s, p, original] : m.targets) {
      masks += m.inputs[static_cast<size_t>(s)][static_cast<size_t>(p)] == vocab.id(kMask);
      ++total;
    }
  }
  EXPECT_NEAR(static_cast<double>(masks) / static_cast<double>(total), 0.8, 0.05);
}

TEST(Mlm, LossDecreasesAndEncoderLoads) {
  Corpus corpus = grammar(400, 7);
  std::vector<std::vector<std::string>> text;
  for (const Example& e : corpus.examples) text.push_back(e.question_tokens);
  BpeModel bpe = bpe_for(corpus);
  ParserConfig c = tiny_config();
  MlmConfig mc;
  mc.epochs = 4;
  mc.learning_rate = 3e-3;
  PretrainedEncoder enc = mlm_pretrain(text, bpe, c.dims(), mc);
  ASSERT_EQ(enc.epoch_losses.size(), 4u);
  EXPECT_LT(enc.epoch_losses.back(), enc.epoch_losses.front());

  auto dir = testing::temp_dir("mlm");
  save_encoder(enc, dir / "enc.bin");
  PretrainedEncoder back = load_encoder(dir / "enc.bin");
  EXPECT_EQ(back.source_vocab, enc.source_vocab);

  Corpus dev = grammar(20, 8, Split::kDev);
  ParserModel scratch = ParserModel::create(c, bpe, corpus);
  ParserModel pretrained = ParserModel::create(c, bpe, corpus);
  pretrained.load_encoder(back);
  EXPECT_TRUE(pretrained.params().at("enc.embed").value.isApprox(
      enc.params.at("enc.embed").value));
  EXPECT_NE(corpus_loss(scratch, dev), corpus_loss(pretrained, dev));

  ParserConfig other = c;
  other.model_dim = 32;
  ParserModel mismatched = ParserModel::create(other, bpe, corpus);
  EXPECT_THROW(mismatched.load_encoder(enc), ParserError);
}

}  // namespace
}  // namespace mtop

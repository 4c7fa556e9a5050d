#ifndef MTOP_PARSER_H_
#define MTOP_PARSER_H_

// Transformer encoder-decoder semantic parser with a pointer (copy) action
// over source subword positions.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "mtop/bpe.h"
#include "mtop/dataset.h"
#include "mtop/error.h"
#include "mtop/nn/tape.h"
#include "mtop/nn/transformer.h"

namespace mtop {

enum class ParserErrc {
  kBadConfig,
  kCopyTargetNotFound,
  kAllExamplesSkipped,
  kDivergedLoss,
  kCheckpointError,
  kEmptyInput,
};

const char* to_string(ParserErrc kind);

using ParserError = KindedError<ParserErrc>;

struct ParserConfig {
  int enc_layers = 2;
  int dec_layers = 2;
  int model_dim = 128;
  int heads = 4;
  int ffn_dim = 256;
  double dropout = 0.1;
  int max_decode_len = 64;
  int beam_size = 4;
  double learning_rate = 3e-4;
  int batch_size = 32;
  int patience = 5;
  uint64_t seed = 0;
  int max_epochs = 100;
  double grad_clip = 1.0;
  bool copy_enabled = true;
  // Decode the dev set after training and record its exact match.
  bool eval_dev_exact_match = true;

  void validate() const;
  nn::TransformerDims dims() const;
  std::map<std::string, std::string> to_key_values() const;
  // Unknown keys throw kBadConfig.
  static ParserConfig from_key_values(const std::map<std::string, std::string>& kv,
                                      ParserConfig base);
  static ParserConfig from_key_values(const std::map<std::string, std::string>& kv);
};

inline constexpr std::string_view kEos = "<eos>";
inline constexpr std::string_view kUnk = "<unk>";
inline constexpr std::string_view kPad = "<pad>";
inline constexpr std::string_view kMask = "<mask>";
inline constexpr std::string_view kBos = "<bos>";
inline constexpr std::string_view kCopyMarker = "<copy>";

struct Action {
  enum class Kind { kGen, kCopy };
  Kind kind = Kind::kGen;
  std::string symbol;  // GEN only
  int position = -1;   // COPY only

  static Action gen(std::string symbol) { return {Kind::kGen, std::move(symbol), -1}; }
  static Action copy(int position) { return {Kind::kCopy, {}, position}; }
  bool is_eos() const { return kind == Kind::kGen && symbol == kEos; }
  std::string to_string() const;
  bool operator==(const Action&) const = default;
};

struct ActionSequence {
  std::vector<Action> actions;
  // Encoded source the COPY positions refer to.
  std::vector<std::string> source;

  // Output symbols with COPY resolved, EOS dropped.
  std::vector<std::string> symbols() const;
  // MRL string: subwords re-joined into words, tokens space-separated.
  std::string detokenize() const;
  bool operator==(const ActionSequence&) const = default;
};

std::vector<std::string> encode_source(const BpeModel& bpe,
                                       const std::vector<std::string>& question_tokens);

// Linearized MRL with leaf subwords as COPY actions (leftmost occurrence
// after the previous copy, else leftmost anywhere). With copy disabled,
// leaf words are generated whole ("word</w>") from the output vocabulary.
ActionSequence oracle_actions(const Example& example, const BpeModel& bpe,
                              bool copy_enabled = true);

class Vocab {
 public:
  Vocab() = default;
  explicit Vocab(std::vector<std::string> symbols);

  int id(std::string_view symbol) const;  // -1 when absent
  int id_or(std::string_view symbol, int fallback) const;
  const std::string& symbol(int id) const { return symbols_[static_cast<size_t>(id)]; }
  int size() const { return static_cast<int>(symbols_.size()); }
  const std::vector<std::string>& symbols() const { return symbols_; }
  bool operator==(const Vocab& other) const { return symbols_ == other.symbols_; }

 private:
  std::vector<std::string> symbols_;
  std::map<std::string, int, std::less<>> index_;
};

// <pad>, <unk>, <mask>, then the BPE vocabulary.
Vocab source_vocab_for(const BpeModel& bpe);

// Encoder weights produced by masked-language-model pretraining.
struct PretrainedEncoder {
  nn::TransformerDims dims;
  BpeModel bpe;
  Vocab source_vocab;
  nn::ParameterSet params;
  std::vector<double> epoch_losses;
};

class ParserModel {
 public:
  // Builds vocabularies from the oracle actions of the training corpus and
  // initializes parameters from config.seed.
  static ParserModel create(const ParserConfig& config, const BpeModel& bpe,
                            const Corpus& train);
  ParserModel(const ParserConfig& config, const BpeModel& bpe, Vocab source_vocab,
              Vocab target_vocab);

  ParserModel(ParserModel&&) = default;
  ParserModel& operator=(ParserModel&&) = default;

  const ParserConfig& config() const { return config_; }
  ParserConfig& mutable_config() { return config_; }
  const BpeModel& bpe() const { return bpe_; }
  const Vocab& source_vocab() const { return source_vocab_; }
  // GEN vocabulary; id 0 is EOS.
  const Vocab& target_vocab() const { return target_vocab_; }
  nn::ParameterSet& params() { return params_; }
  const nn::ParameterSet& params() const { return params_; }

  int freeze_groups() const { return config_.enc_layers + 1; }
  // true = trainable; index 0 is the embedding group, l + 1 encoder layer l.
  const std::vector<bool>& freeze_mask() const { return trainable_groups_; }
  void set_freeze_mask(std::vector<bool> trainable);

  const std::vector<std::string>& training_langs() const { return training_langs_; }
  void set_training_langs(std::vector<std::string> langs) { training_langs_ = std::move(langs); }

  // Copies encoder weights; dimensions and BPE must match.
  void load_encoder(const PretrainedEncoder& encoder);

  void save(const std::filesystem::path& path) const;
  void save(std::ostream& out) const;
  static ParserModel load(const std::filesystem::path& path);
  static ParserModel load(std::istream& in);

 private:
  ParserConfig config_;
  BpeModel bpe_;
  Vocab source_vocab_;
  Vocab target_vocab_;
  nn::ParameterSet params_;
  std::vector<bool> trainable_groups_;
  std::vector<std::string> training_langs_;
};

// Action id of a: GEN symbols index the target vocabulary, COPY(i) is
// |V| + i.
int action_id(const ParserModel& model, const Action& action);
Action action_from_id(const ParserModel& model, int id);

// Distribution over |V| + source.size() next actions. Without copy the
// COPY entries are zero.
std::vector<double> action_distribution(const ParserModel& model,
                                        const std::vector<std::string>& source,
                                        const std::vector<Action>& prefix);

// Sum of teacher-forced negative log-likelihoods of the actions. When
// backward is set the gradients are accumulated into the parameters. rng
// enables dropout.
double sequence_loss(ParserModel& model, const ActionSequence& sequence, bool backward,
                     std::mt19937_64* rng = nullptr);

struct UnfreezeSchedule {
  int groups = 0;
  double rate = 1.0;
  bool gradual = false;

  int eligible_groups() const;
  int unfrozen_groups(int epoch) const;
  // Trainable flag per group for the given epoch (top-down unfreezing).
  std::vector<bool> mask(int epoch) const;
};

UnfreezeSchedule set_unfreeze_schedule(const ParserModel& model, double rate, bool gradual);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double dev_loss = 0.0;
  int unfrozen_groups = 0;
  std::vector<bool> trainable_groups;
  int64_t steps = 0;
};

struct TrainingHistory {
  std::vector<EpochRecord> epochs;
  int best_epoch = -1;
  double best_dev_loss = 0.0;
  size_t skipped_train = 0;
  size_t skipped_dev = 0;
  bool early_stopped = false;
  std::optional<double> dev_exact_match;

  std::string to_jsonl() const;
};

// Trains in place. The schedule defaults to everything trainable.
TrainingHistory train_parser(ParserModel& model, const Corpus& train, const Corpus& dev,
                             std::optional<UnfreezeSchedule> schedule = std::nullopt);

// Mean per-action loss over the examples whose oracle is derivable.
double corpus_loss(const ParserModel& model, const Corpus& corpus, size_t* skipped = nullptr);

struct MlmConfig {
  int epochs = 5;
  double mask_fraction = 0.15;
  double learning_rate = 1e-3;
  int batch_size = 32;
  double dropout = 0.1;
  double grad_clip = 1.0;
  uint64_t seed = 0;
};

struct MaskedBatch {
  std::vector<std::vector<int>> inputs;
  // (sentence, position, original id) of every masked slot.
  std::vector<std::tuple<int, int, int>> targets;
};

// Selects round(fraction * tokens) positions across the batch; each becomes
// <mask> (80%), a random regular symbol (10%) or stays unchanged (10%).
MaskedBatch mask_batch(const std::vector<std::vector<int>>& batch, const Vocab& vocab,
                       double fraction, std::mt19937_64& rng);

PretrainedEncoder mlm_pretrain(const std::vector<std::vector<std::string>>& sentences,
                               const BpeModel& bpe, const nn::TransformerDims& dims,
                               const MlmConfig& config);

void save_encoder(const PretrainedEncoder& encoder, const std::filesystem::path& path);
PretrainedEncoder load_encoder(const std::filesystem::path& path);

struct DecodeResult {
  ActionSequence sequence;
  std::string mrl;
  double log_prob = 0.0;
  // log_prob / number of actions
  double score = 0.0;
  bool max_length_exceeded = false;
};

DecodeResult decode_beam(const ParserModel& model,
                         const std::vector<std::string>& question_tokens, int beam_size);
DecodeResult decode_greedy(const ParserModel& model,
                           const std::vector<std::string>& question_tokens);

}  // namespace mtop

#endif  // MTOP_PARSER_H_

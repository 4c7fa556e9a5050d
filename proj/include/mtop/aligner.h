#ifndef MTOP_ALIGNER_H_
#define MTOP_ALIGNER_H_

// Word aligner: IBM Model 2 reparameterized with a diagonal prior
// (fast_align), trained by EM. Each target word links to one source word or
// to NULL.
//
//   p(a_i = 0) = p0
//   p(a_i = j) = (1 - p0) * exp(lambda * h(i, j, m, n)) / Z,  h = -|i/m - j/n|
//
// with target positions i = 1..m and source positions j = 1..n.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "mtop/error.h"

namespace mtop {

enum class AlignerErrc { kEmptyCorpus, kEmptySentence, kBadConfig, kBadModelFile };

const char* to_string(AlignerErrc kind);

using AlignerError = KindedError<AlignerErrc>;

struct AlignerConfig {
  int iterations = 5;
  double lambda = 4.0;
  double p_null = 0.08;
  double smoothing_alpha = 0.01;
  uint64_t seed = 0;
  int threads = 1;  // E-step workers; results do not depend on this

  void validate() const;
  std::map<std::string, std::string> to_key_values() const;
  // Unknown keys are rejected; missing keys keep their defaults.
  static AlignerConfig from_key_values(const std::map<std::string, std::string>& kv);

  bool operator==(const AlignerConfig&) const = default;
};

// Unseen (e, f) pairs score this probability at decode time.
inline constexpr double kTranslationFloor = 1e-9;

using Tokens = std::vector<std::string>;

struct SentencePair {
  Tokens source;
  Tokens target;
};

// (source index j, target index i), both 0-based. NULL links are omitted.
struct Alignment {
  std::vector<std::pair<int, int>> pairs;

  bool operator==(const Alignment&) const = default;
};

// Alignment prior over j = 0..n for target position i (1-based) of m.
std::vector<double> alignment_prior(int i, int m, int n, const AlignerConfig& config);

// Diagonal feature h(i, j, m, n) = -|i/m - j/n|.
double diagonal_feature(int i, int j, int m, int n);

class AlignmentModel {
 public:
  AlignmentModel() = default;

  // t(f|e). Pairs never seen in training return kTranslationFloor.
  double prob(std::string_view e, std::string_view f) const;
  // t(f|NULL): uniform over the training target vocabulary.
  double null_prob() const;

  const AlignerConfig& config() const { return config_; }
  size_t source_vocab_size() const { return source_words_.size(); }
  size_t target_vocab_size() const { return target_words_.size(); }

  // Sum over the whole target vocabulary of t(f|e), for every e with entries.
  std::vector<double> row_sums() const;

  // Sorted "e f prob" lines.
  void dump_ttable(std::ostream& out) const;
  void save(std::ostream& out) const;
  void save(const std::filesystem::path& path) const;
  static AlignmentModel load(std::istream& in);
  static AlignmentModel load(const std::filesystem::path& path);

  // Training internals, exposed for the EM driver.
  struct Row {
    std::unordered_map<int, double> entries;
    double fallback = 0.0;  // t(f|e) for f in the vocabulary but not in entries
  };
  int source_id(std::string_view word) const;
  int target_id(std::string_view word) const;
  double prob_ids(int e, int f) const;

 private:
  friend class AlignerTrainer;

  AlignerConfig config_;
  std::vector<std::string> source_words_;
  std::vector<std::string> target_words_;
  std::unordered_map<std::string, int> source_index_;
  std::unordered_map<std::string, int> target_index_;
  std::vector<Row> rows_;
};

// Expected counts c(e, f) from one E-step, keyed by words.
using ExpectedCounts = std::map<std::pair<std::string, std::string>, double>;

struct AlignerTrace {
  // loglik[r] is the corpus log-likelihood of the model after iteration r+1.
  std::vector<double> loglik;
  // Expected counts accumulated in the E-step of the final iteration.
  ExpectedCounts last_counts;
};

AlignmentModel train_aligner(const std::vector<SentencePair>& corpus,
                             const AlignerConfig& config,
                             AlignerTrace* trace = nullptr);

// One E-step under the given model.
ExpectedCounts expected_counts(const AlignmentModel& model,
                               const std::vector<SentencePair>& corpus);

Alignment viterbi_align(const AlignmentModel& model, const Tokens& source,
                        const Tokens& target);

double corpus_loglik(const AlignmentModel& model,
                     const std::vector<SentencePair>& corpus);

// Parallel text, one "source ||| target" pair per line.
std::vector<SentencePair> read_parallel(std::istream& in, std::string_view source_name = "<stream>");
std::vector<SentencePair> read_parallel(const std::filesystem::path& path);
void write_parallel(const std::vector<SentencePair>& pairs, std::ostream& out);

// "j-i j-i ..." (Pharaoh format).
std::string to_pharaoh(const Alignment& alignment);
Alignment parse_pharaoh(std::string_view line);

struct AlignmentScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

AlignmentScore score_alignments(const std::vector<Alignment>& predicted,
                                const std::vector<Alignment>& gold);

}  // namespace mtop

#endif  // MTOP_ALIGNER_H_

#ifndef MTOP_EVAL_H_
#define MTOP_EVAL_H_

// Exact-match and filtered-match accuracy, corpus BLEU, and the evaluation
// harness (standard, zero-shot and translate-test modes).

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "mtop/dataset.h"
#include "mtop/error.h"
#include "mtop/parser.h"
#include "mtop/translate.h"

namespace mtop {

enum class EvalErrc {
  kIdMismatch,
  kLengthMismatch,
  kBadFilterList,
  kBadMode,
  kMalformedReport,
};

const char* to_string(EvalErrc kind);

using EvalError = KindedError<EvalErrc>;

// Tokens removed from leaf text before comparison. Tokens are stored
// lowercased.
class FilterList {
 public:
  FilterList() = default;
  FilterList(std::string lang, const std::vector<std::string>& tokens);

  // Shipped defaults: Italian articles and Japanese particles; empty for
  // other languages.
  static FilterList defaults_for(std::string_view lang);
  // One token per line; blank lines and lines starting with '#' are ignored.
  static FilterList load(const std::filesystem::path& path, std::string lang);
  void save(const std::filesystem::path& path) const;

  const std::string& lang() const { return lang_; }
  const std::set<std::string>& tokens() const { return tokens_; }
  bool empty() const { return tokens_.empty(); }
  bool contains(std::string_view token) const;

 private:
  std::string lang_;
  std::set<std::string> tokens_;
};

// Canonical MRL tokens with filter tokens dropped from leaf text. Leaf
// tokens are split at elided articles first ("d'artificio" -> "d'",
// "artificio") unless the filter is empty.
std::vector<std::string> filtered_tokens(std::string_view mrl, const FilterList& filter);

struct Mismatch {
  std::string id;
  std::string gold;
  std::string prediction;
};

struct Tally {
  size_t correct = 0;
  size_t total = 0;
  double accuracy() const { return total == 0 ? 0.0 : static_cast<double>(correct) / total; }
};

struct EvalReport {
  std::string mode = "direct";
  size_t n = 0;
  double exact_match_accuracy = 0.0;
  std::optional<double> filtered_accuracy;
  std::map<std::string, Tally> per_intent;
  std::map<std::string, Tally> per_lang;
  std::vector<Mismatch> mismatches;
  std::vector<std::string> test_langs;
  std::vector<std::string> training_langs;
  // True when no test language occurs among the training languages.
  bool unseen_test_language = false;

  std::string to_json() const;
  std::string to_table() const;
  static EvalReport from_json(std::string_view text);
};

using PredictionMap = std::map<std::string, std::string>;

// Both maps must have the same id set (IdMismatch otherwise).
EvalReport exact_match(const PredictionMap& predictions, const PredictionMap& golds);
EvalReport filtered_match(const PredictionMap& predictions, const PredictionMap& golds,
                          const FilterList& filter);

// Corpus-level BLEU in [0, 100] over pre-tokenized sentences.
double corpus_bleu(const std::vector<std::vector<std::string>>& candidates,
                   const std::vector<std::vector<std::string>>& references, int max_n = 4);

enum class HarnessMode { kStandard, kZeroShot, kTranslateTest };

const char* to_string(HarnessMode mode);
HarnessMode harness_mode_from_string(std::string_view name);

struct HarnessOptions {
  int beam_size = 0;  // 0 uses the model's configured beam size
  std::optional<FilterList> filter;
  // translate-test only.
  TranslationBackend* backend = nullptr;
  TranslationCache* cache = nullptr;
  std::string target_lang;            // defaults to the first training language
  const Corpus* gold_corpus = nullptr;  // training-language golds, by id or meta source_id
};

EvalReport run_harness(const ParserModel& model, const Corpus& test, HarnessMode mode,
                       const HarnessOptions& options = {});
EvalReport run_harness(const std::filesystem::path& checkpoint, const Corpus& test,
                       HarnessMode mode, const HarnessOptions& options = {});

}  // namespace mtop

#endif  // MTOP_EVAL_H_

#ifndef MTOP_DATASET_H_
#define MTOP_DATASET_H_

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "mtop/error.h"
#include "mtop/mrl.h"

namespace mtop {

enum class DatasetErrc {
  kIo,
  kMalformedRow,
  kMalformedRecord,
  kSchemaVersionMismatch,
  kDuplicateId,
  kInvalidExample,
};

const char* to_string(DatasetErrc kind);

using DatasetError = KindedError<DatasetErrc>;

enum class Provenance { kHuman, kMachineTranslated, kSynthetic };
enum class Split { kTrain, kDev, kTest };

const char* to_string(Provenance p);
const char* to_string(Split s);
Provenance provenance_from_string(std::string_view s);
Split split_from_string(std::string_view s);

struct Example {
  std::string id;
  std::string lang;
  std::vector<std::string> question_tokens;
  MrlTree mrl;
  Provenance provenance = Provenance::kHuman;
  std::map<std::string, std::string> meta;

  bool operator==(const Example&) const = default;
};

struct Corpus {
  Split split = Split::kTrain;
  std::vector<Example> examples;

  std::map<std::string, size_t> counts_by_lang() const;
  std::vector<std::string> langs() const;
  bool operator==(const Corpus&) const = default;
};

inline constexpr int kCorpusSchemaVersion = 1;

struct IngestReport {
  size_t read = 0;
  size_t kept = 0;
  size_t dropped_unsupported = 0;
  size_t malformed = 0;

  std::string to_json() const;
  bool operator==(const IngestReport&) const = default;
};

struct IngestOptions {
  // Count and skip malformed rows instead of failing on the first one.
  bool skip_malformed = false;
};

// Reads TOP TSV (raw utterance, tokenized utterance, annotation). Rows whose
// root intent is IN:UNSUPPORTED are dropped and counted.
Corpus ingest_top_tsv(std::istream& in, Split split, IngestReport* report,
                      IngestOptions options = {},
                      std::string_view source_name = "<stream>");
Corpus ingest_top_tsv(const std::filesystem::path& path, Split split,
                      IngestReport* report, IngestOptions options = {});

void write_corpus(const Corpus& corpus, std::ostream& out);
void write_corpus(const Corpus& corpus, const std::filesystem::path& path);
Corpus read_corpus(std::istream& in, std::string_view source_name = "<stream>");
Corpus read_corpus(const std::filesystem::path& path);

// Whitespace tokenization plus detaching of trailing punctuation and, for
// Romance languages, apostrophe-elided prefixes ("d'artificio" -> "d'",
// "artificio"). Unspaced Japanese is segmented by script runs: katakana and
// Latin/digit runs stay together, every other CJK character is its own token.
std::vector<std::string> tokenize_question(std::string_view text,
                                           std::string_view lang);

// Splits an elided article prefix off a single token, if present.
std::vector<std::string> split_elision(std::string_view token);

std::string join_tokens(const std::vector<std::string>& tokens);

// Throws kInvalidExample unless every leaf span of the MRL occurs as a
// contiguous run of the question tokens.
void validate_example(const Example& example);

}  // namespace mtop

#endif  // MTOP_DATASET_H_

#ifndef MTOP_BPE_H_
#define MTOP_BPE_H_

// Byte-pair encoding over Unicode characters. Words start as character
// sequences with the end-of-word marker attached to the final character
// ("low" -> l o w</w>); learned merges are replayed in order when encoding.
// MRL structural tokens ("[IN:*", "[SL:*", "]") are reserved whole symbols.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mtop/error.h"

namespace mtop {

enum class BpeErrc { kEmptyCorpus, kBadModelFile };

using BpeError = KindedError<BpeErrc>;

inline constexpr std::string_view kEndOfWord = "</w>";

using MergePair = std::pair<std::string, std::string>;

class BpeModel {
 public:
  BpeModel() = default;
  BpeModel(std::vector<MergePair> merges, std::set<std::string> alphabet);

  const std::vector<MergePair>& merges() const { return merges_; }
  // Base characters seen in training (with and without the marker).
  const std::set<std::string>& alphabet() const { return alphabet_; }
  // Every symbol the model can produce for in-alphabet input, sorted.
  std::vector<std::string> vocabulary() const;

  std::vector<std::string> encode_word(std::string_view word) const;

  // Model with only the first n merges.
  BpeModel prefix(size_t n) const;

  void save(std::ostream& out) const;
  void save(const std::filesystem::path& path) const;
  static BpeModel load(std::istream& in);
  static BpeModel load(const std::filesystem::path& path);

  bool operator==(const BpeModel& other) const {
    return merges_ == other.merges_ && alphabet_ == other.alphabet_;
  }

 private:
  std::vector<MergePair> merges_;
  std::set<std::string> alphabet_;
  std::map<MergePair, size_t> ranks_;
};

using WordFrequencies = std::map<std::string, int64_t>;

// Greedy merge learning: the most frequent adjacent pair wins, ties go to the
// lexicographically smallest pair. Stops after num_merges or once no pair
// occurs at least twice.
BpeModel learn_bpe(const WordFrequencies& words, int num_merges);

std::vector<std::string> encode(const BpeModel& model,
                                const std::vector<std::string>& tokens);
std::vector<std::string> decode(const std::vector<std::string>& symbols);

bool is_reserved_symbol(std::string_view symbol);
bool ends_word(std::string_view symbol);

// Adds whitespace-separated words (reserved symbols skipped) to a table.
void add_words(const std::vector<std::string>& tokens, WordFrequencies* table);

}  // namespace mtop

#endif  // MTOP_BPE_H_

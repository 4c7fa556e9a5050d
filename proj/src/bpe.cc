#include "mtop/bpe.h"

#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "mtop/mrl.h"
#include "mtop/utf8.h"

namespace mtop {
namespace {

std::vector<std::string> initial_symbols(std::string_view word) {
  std::vector<std::string> symbols = utf8::split_chars(word);
  if (!symbols.empty()) symbols.back() += kEndOfWord;
  return symbols;
}

// Merges every left-to-right occurrence of (a, b). Returns true if any.
bool apply_merge(const MergePair& pair, std::vector<std::string>* symbols) {
  bool changed = false;
  std::vector<std::string> out;
  out.reserve(symbols->size());
  for (size_t i = 0; i < symbols->size(); ++i) {
    if (i + 1 < symbols->size() && (*symbols)[i] == pair.first &&
        (*symbols)[i + 1] == pair.second) {
      out.push_back(pair.first + pair.second);
      ++i;
      changed = true;
    } else {
      out.push_back(std::move((*symbols)[i]));
    }
  }
  *symbols = std::move(out);
  return changed;
}

class PairQueue {
 public:
  void update(const MergePair& pair, int64_t delta) {
    int64_t& count = counts_[pair];
    if (count > 0) order_.erase({-count, pair});
    count += delta;
    if (count > 0) order_.insert({-count, pair});
  }

  bool empty() const { return order_.empty(); }
  int64_t top_count() const { return -order_.begin()->first; }
  const MergePair& top_pair() const { return order_.begin()->second; }

 private:
  std::map<MergePair, int64_t> counts_;
  std::set<std::pair<int64_t, MergePair>> order_;
};

}  // namespace

bool is_reserved_symbol(std::string_view symbol) { return is_structural_token(symbol); }

bool ends_word(std::string_view symbol) { return symbol.ends_with(kEndOfWord); }

BpeModel::BpeModel(std::vector<MergePair> merges, std::set<std::string> alphabet)
    : merges_(std::move(merges)), alphabet_(std::move(alphabet)) {
  for (size_t r = 0; r < merges_.size(); ++r) ranks_.emplace(merges_[r], r);
}

std::vector<std::string> BpeModel::vocabulary() const {
  std::set<std::string> vocab = alphabet_;
  for (const auto& [a, b] : merges_) vocab.insert(a + b);
  return {vocab.begin(), vocab.end()};
}

std::vector<std::string> BpeModel::encode_word(std::string_view word) const {
  if (is_reserved_symbol(word)) return {std::string(word)};
  std::vector<std::string> symbols = initial_symbols(word);
  while (symbols.size() > 1) {
    size_t best_rank = merges_.size();
    const MergePair* best = nullptr;
    for (size_t i = 0; i + 1 < symbols.size(); ++i) {
      auto it = ranks_.find({symbols[i], symbols[i + 1]});
      if (it != ranks_.end() && it->second < best_rank) {
        best_rank = it->second;
        best = &it->first;
      }
    }
    if (best == nullptr) break;
    apply_merge(*best, &symbols);
  }
  return symbols;
}

BpeModel BpeModel::prefix(size_t n) const {
  n = std::min(n, merges_.size());
  return BpeModel(std::vector<MergePair>(merges_.begin(), merges_.begin() + n), alphabet_);
}

void BpeModel::save(std::ostream& out) const {
  out << "#bpe " << kEndOfWord << '\n';
  out << "#alphabet";
  for (const std::string& c : alphabet_) out << ' ' << c;
  out << '\n';
  for (const auto& [a, b] : merges_) out << a << ' ' << b << '\n';
}

void BpeModel::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw BpeError(BpeErrc::kBadModelFile, "cannot write " + path.string());
  save(out);
}

BpeModel BpeModel::load(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "#bpe " + std::string(kEndOfWord)) {
    throw BpeError(BpeErrc::kBadModelFile, "missing '#bpe </w>' header");
  }
  std::set<std::string> alphabet;
  std::vector<MergePair> merges;
  size_t number = 1;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty()) continue;
    std::istringstream fields(line);
    if (line.starts_with("#alphabet")) {
      std::string tag, c;
      fields >> tag;
      while (fields >> c) alphabet.insert(c);
      continue;
    }
    MergePair pair;
    std::string extra;
    if (!(fields >> pair.first >> pair.second) || (fields >> extra)) {
      throw BpeError(BpeErrc::kBadModelFile,
                     "line " + std::to_string(number) + ": expected a merge pair");
    }
    merges.push_back(std::move(pair));
  }
  return BpeModel(std::move(merges), std::move(alphabet));
}

BpeModel BpeModel::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw BpeError(BpeErrc::kBadModelFile, "cannot open " + path.string());
  return load(in);
}

BpeModel learn_bpe(const WordFrequencies& words, int num_merges) {
  if (words.empty()) throw BpeError(BpeErrc::kEmptyCorpus, "empty BPE training corpus");
  std::vector<std::vector<std::string>> segmented;
  std::vector<int64_t> freqs;
  std::set<std::string> alphabet;
  for (const auto& [word, freq] : words) {
    if (word.empty() || freq <= 0 || is_reserved_symbol(word)) continue;
    segmented.push_back(initial_symbols(word));
    freqs.push_back(freq);
    for (const std::string& s : segmented.back()) alphabet.insert(s);
  }
  if (segmented.empty()) throw BpeError(BpeErrc::kEmptyCorpus, "empty BPE training corpus");

  PairQueue queue;
  std::map<MergePair, std::set<size_t>> where;
  auto add_word = [&](size_t w, int64_t sign) {
    const auto& symbols = segmented[w];
    for (size_t i = 0; i + 1 < symbols.size(); ++i) {
      MergePair pair{symbols[i], symbols[i + 1]};
      queue.update(pair, sign * freqs[w]);
      if (sign > 0) where[pair].insert(w);
    }
  };
  for (size_t w = 0; w < segmented.size(); ++w) add_word(w, +1);

  std::vector<MergePair> merges;
  for (int m = 0; m < num_merges; ++m) {
    if (queue.empty() || queue.top_count() < 2) break;
    MergePair best = queue.top_pair();
    merges.push_back(best);
    std::set<size_t> affected = where[best];
    for (size_t w : affected) {
      add_word(w, -1);
      apply_merge(best, &segmented[w]);
      add_word(w, +1);
    }
    where.erase(best);
  }
  return BpeModel(std::move(merges), std::move(alphabet));
}

std::vector<std::string> encode(const BpeModel& model, const std::vector<std::string>& tokens) {
  std::vector<std::string> out;
  for (const std::string& token : tokens) {
    for (std::string& symbol : model.encode_word(token)) out.push_back(std::move(symbol));
  }
  return out;
}

std::vector<std::string> decode(const std::vector<std::string>& symbols) {
  std::vector<std::string> tokens;
  std::string current;
  for (const std::string& symbol : symbols) {
    if (is_reserved_symbol(symbol)) {
      if (!current.empty()) tokens.push_back(std::move(current));
      current.clear();
      tokens.push_back(symbol);
      continue;
    }
    if (ends_word(symbol)) {
      current.append(symbol, 0, symbol.size() - kEndOfWord.size());
      tokens.push_back(std::move(current));
      current.clear();
    } else {
      current += symbol;
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

void add_words(const std::vector<std::string>& tokens, WordFrequencies* table) {
  for (const std::string& token : tokens) {
    if (!token.empty() && !is_reserved_symbol(token)) ++(*table)[token];
  }
}

}  // namespace mtop

#include "mtop/aligner.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

namespace mtop {
namespace {

struct InternedPair {
  std::vector<int> source;
  std::vector<int> target;
};

void check_pair(const SentencePair& pair, size_t index) {
  if (pair.source.empty() || pair.target.empty()) {
    throw AlignerError(AlignerErrc::kEmptySentence,
                       "sentence pair " + std::to_string(index) + " has an empty side");
  }
}

std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

// Per-sentence posteriors over j = 0..n for every target word, row-major
// (m rows of n + 1). Returns the sentence log-likelihood.
double sentence_posteriors(const AlignmentModel& model, const InternedPair& pair,
                           std::vector<double>* posterior) {
  const int n = static_cast<int>(pair.source.size());
  const int m = static_cast<int>(pair.target.size());
  posterior->assign(static_cast<size_t>(m) * (n + 1), 0.0);
  double loglik = 0.0;
  for (int i = 1; i <= m; ++i) {
    std::vector<double> prior = alignment_prior(i, m, n, model.config());
    double* row = posterior->data() + static_cast<size_t>(i - 1) * (n + 1);
    const int f = pair.target[static_cast<size_t>(i - 1)];
    row[0] = prior[0] * model.null_prob();
    double total = row[0];
    for (int j = 1; j <= n; ++j) {
      row[j] = prior[static_cast<size_t>(j)] *
               model.prob_ids(pair.source[static_cast<size_t>(j - 1)], f);
      total += row[j];
    }
    loglik += std::log(total);
    for (int j = 0; j <= n; ++j) row[j] /= total;
  }
  return loglik;
}

// Computes posteriors for every pair, possibly on several threads. Results
// are indexed by sentence so the later reduction order is fixed.
void all_posteriors(const AlignmentModel& model, const std::vector<InternedPair>& pairs,
                    int threads, std::vector<std::vector<double>>* posteriors,
                    std::vector<double>* logliks) {
  posteriors->resize(pairs.size());
  logliks->resize(pairs.size());
  auto work = [&](size_t begin, size_t end) {
    for (size_t s = begin; s < end; ++s) {
      (*logliks)[s] = sentence_posteriors(model, pairs[s], &(*posteriors)[s]);
    }
  };
  size_t workers = static_cast<size_t>(std::max(1, threads));
  workers = std::min(workers, std::max<size_t>(1, pairs.size()));
  if (workers == 1) {
    work(0, pairs.size());
    return;
  }
  std::vector<std::jthread> pool;
  size_t chunk = (pairs.size() + workers - 1) / workers;
  for (size_t w = 0; w < workers; ++w) {
    size_t begin = w * chunk;
    size_t end = std::min(pairs.size(), begin + chunk);
    if (begin >= end) break;
    pool.emplace_back(work, begin, end);
  }
}

using CountTable = std::vector<std::unordered_map<int, double>>;

// Sequential reduction in sentence order.
double accumulate_counts(const std::vector<InternedPair>& pairs,
                         const std::vector<std::vector<double>>& posteriors,
                         const std::vector<double>& logliks, CountTable* counts) {
  double loglik = 0.0;
  for (size_t s = 0; s < pairs.size(); ++s) {
    const InternedPair& pair = pairs[s];
    const size_t n = pair.source.size();
    for (size_t i = 0; i < pair.target.size(); ++i) {
      const double* row = posteriors[s].data() + i * (n + 1);
      for (size_t j = 1; j <= n; ++j) {
        int e = pair.source[j - 1];
        if (e < 0 || pair.target[i] < 0) continue;
        (*counts)[static_cast<size_t>(e)][pair.target[i]] += row[j];
      }
    }
    loglik += logliks[s];
  }
  return loglik;
}

}  // namespace

const char* to_string(AlignerErrc kind) {
  switch (kind) {
    case AlignerErrc::kEmptyCorpus: return "EmptyCorpus";
    case AlignerErrc::kEmptySentence: return "EmptySentence";
    case AlignerErrc::kBadConfig: return "BadConfig";
    case AlignerErrc::kBadModelFile: return "BadModelFile";
  }
  return "Unknown";
}

void AlignerConfig::validate() const {
  if (iterations < 1) throw AlignerError(AlignerErrc::kBadConfig, "iterations must be >= 1");
  if (!(lambda > 0.0)) throw AlignerError(AlignerErrc::kBadConfig, "lambda must be > 0");
  if (!(p_null >= 0.0 && p_null < 1.0)) {
    throw AlignerError(AlignerErrc::kBadConfig, "p_null must be in [0, 1)");
  }
  if (!(smoothing_alpha >= 0.0)) {
    throw AlignerError(AlignerErrc::kBadConfig, "smoothing_alpha must be >= 0");
  }
  if (threads < 1) throw AlignerError(AlignerErrc::kBadConfig, "threads must be >= 1");
}

std::map<std::string, std::string> AlignerConfig::to_key_values() const {
  return {{"iterations", std::to_string(iterations)},
          {"lambda", format_double(lambda)},
          {"p_null", format_double(p_null)},
          {"smoothing_alpha", format_double(smoothing_alpha)},
          {"seed", std::to_string(seed)}};
}

AlignerConfig AlignerConfig::from_key_values(
    const std::map<std::string, std::string>& kv) {
  AlignerConfig config;
  for (const auto& [key, value] : kv) {
    try {
      if (key == "iterations") {
        config.iterations = std::stoi(value);
      } else if (key == "lambda") {
        config.lambda = std::stod(value);
      } else if (key == "p_null") {
        config.p_null = std::stod(value);
      } else if (key == "smoothing_alpha") {
        config.smoothing_alpha = std::stod(value);
      } else if (key == "seed") {
        config.seed = std::stoull(value);
      } else if (key == "threads") {
        config.threads = std::stoi(value);
      } else {
        throw AlignerError(AlignerErrc::kBadConfig, "unknown aligner key '" + key + "'");
      }
    } catch (const std::logic_error&) {
      throw AlignerError(AlignerErrc::kBadConfig,
                         "bad value '" + value + "' for aligner key '" + key + "'");
    }
  }
  config.validate();
  return config;
}

double diagonal_feature(int i, int j, int m, int n) {
  return -std::abs(static_cast<double>(i) / m - static_cast<double>(j) / n);
}

std::vector<double> alignment_prior(int i, int m, int n, const AlignerConfig& config) {
  std::vector<double> prior(static_cast<size_t>(n) + 1);
  prior[0] = config.p_null;
  double z = 0.0;
  for (int j = 1; j <= n; ++j) {
    prior[static_cast<size_t>(j)] = std::exp(config.lambda * diagonal_feature(i, j, m, n));
    z += prior[static_cast<size_t>(j)];
  }
  for (int j = 1; j <= n; ++j) {
    prior[static_cast<size_t>(j)] *= (1.0 - config.p_null) / z;
  }
  return prior;
}

int AlignmentModel::source_id(std::string_view word) const {
  auto it = source_index_.find(std::string(word));
  return it == source_index_.end() ? -1 : it->second;
}

int AlignmentModel::target_id(std::string_view word) const {
  auto it = target_index_.find(std::string(word));
  return it == target_index_.end() ? -1 : it->second;
}

double AlignmentModel::prob_ids(int e, int f) const {
  if (e < 0 || f < 0) return kTranslationFloor;
  const Row& row = rows_[static_cast<size_t>(e)];
  auto it = row.entries.find(f);
  if (it != row.entries.end()) return it->second;
  return row.fallback > 0.0 ? row.fallback : kTranslationFloor;
}

double AlignmentModel::prob(std::string_view e, std::string_view f) const {
  return prob_ids(source_id(e), target_id(f));
}

double AlignmentModel::null_prob() const {
  return target_words_.empty() ? kTranslationFloor
                               : 1.0 / static_cast<double>(target_words_.size());
}

std::vector<double> AlignmentModel::row_sums() const {
  std::vector<double> sums;
  const double vocab = static_cast<double>(target_words_.size());
  for (const Row& row : rows_) {
    if (row.entries.empty()) continue;
    double sum = 0.0;
    for (const auto& [f, p] : row.entries) sum += p;
    sum += (vocab - static_cast<double>(row.entries.size())) * row.fallback;
    sums.push_back(sum);
  }
  return sums;
}

void AlignmentModel::dump_ttable(std::ostream& out) const {
  std::vector<std::tuple<std::string, std::string, double>> lines;
  for (size_t e = 0; e < rows_.size(); ++e) {
    for (const auto& [f, p] : rows_[e].entries) {
      lines.emplace_back(source_words_[e], target_words_[static_cast<size_t>(f)], p);
    }
  }
  std::sort(lines.begin(), lines.end());
  for (const auto& [e, f, p] : lines) {
    out << e << ' ' << f << ' ' << format_double(p) << '\n';
  }
}

void AlignmentModel::save(std::ostream& out) const {
  out << "#mtop-aligner 1\n";
  for (const auto& [key, value] : config_.to_key_values()) {
    out << "#config " << key << '=' << value << '\n';
  }
  std::vector<std::pair<std::string, double>> fallbacks;
  for (size_t e = 0; e < rows_.size(); ++e) {
    fallbacks.emplace_back(source_words_[e], rows_[e].fallback);
  }
  std::sort(fallbacks.begin(), fallbacks.end());
  for (const auto& [e, value] : fallbacks) {
    out << "#fallback " << e << ' ' << format_double(value) << '\n';
  }
  dump_ttable(out);
}

void AlignmentModel::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw AlignerError(AlignerErrc::kBadModelFile, "cannot write " + path.string());
  save(out);
}

AlignmentModel AlignmentModel::load(std::istream& in) {
  AlignmentModel model;
  std::map<std::string, std::string> kv;
  std::map<std::string, double> fallbacks;
  std::string line;
  bool header = false;
  auto source = [&](const std::string& w) {
    auto [it, inserted] = model.source_index_.emplace(w, model.source_words_.size());
    if (inserted) {
      model.source_words_.push_back(w);
      model.rows_.emplace_back();
    }
    return it->second;
  };
  auto target = [&](const std::string& w) {
    auto [it, inserted] = model.target_index_.emplace(w, model.target_words_.size());
    if (inserted) model.target_words_.push_back(w);
    return it->second;
  };
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string tag;
    fields >> tag;
    if (tag == "#mtop-aligner") {
      header = true;
    } else if (tag == "#config") {
      std::string rest;
      fields >> rest;
      size_t eq = rest.find('=');
      if (eq == std::string::npos) {
        throw AlignerError(AlignerErrc::kBadModelFile, "bad config line: " + line);
      }
      kv[rest.substr(0, eq)] = rest.substr(eq + 1);
    } else if (tag == "#fallback") {
      std::string e;
      double value = 0.0;
      if (!(fields >> e >> value)) {
        throw AlignerError(AlignerErrc::kBadModelFile, "bad fallback line: " + line);
      }
      fallbacks[e] = value;
    } else {
      std::string f;
      double p = 0.0;
      if (!(fields >> f >> p)) {
        throw AlignerError(AlignerErrc::kBadModelFile, "bad ttable line: " + line);
      }
      int e_id = source(tag);
      int f_id = target(f);
      model.rows_[static_cast<size_t>(e_id)].entries[f_id] = p;
    }
  }
  if (!header) throw AlignerError(AlignerErrc::kBadModelFile, "missing aligner header");
  model.config_ = AlignerConfig::from_key_values(kv);
  for (const auto& [e, value] : fallbacks) {
    model.rows_[static_cast<size_t>(source(e))].fallback = value;
  }
  return model;
}

AlignmentModel AlignmentModel::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw AlignerError(AlignerErrc::kBadModelFile, "cannot open " + path.string());
  return load(in);
}

class AlignerTrainer {
 public:
  AlignerTrainer(const std::vector<SentencePair>& corpus, const AlignerConfig& config) {
    config.validate();
    if (corpus.empty()) throw AlignerError(AlignerErrc::kEmptyCorpus, "empty aligner corpus");
    model_.config_ = config;
    pairs_.reserve(corpus.size());
    for (size_t s = 0; s < corpus.size(); ++s) {
      check_pair(corpus[s], s);
      InternedPair pair;
      for (const std::string& w : corpus[s].source) pair.source.push_back(intern_source(w));
      for (const std::string& w : corpus[s].target) pair.target.push_back(intern_target(w));
      pairs_.push_back(std::move(pair));
    }
    // Uniform over co-occurring target words per source word.
    for (const InternedPair& pair : pairs_) {
      for (int e : pair.source) {
        auto& entries = model_.rows_[static_cast<size_t>(e)].entries;
        for (int f : pair.target) entries.emplace(f, 0.0);
      }
    }
    for (AlignmentModel::Row& row : model_.rows_) {
      const double uniform = 1.0 / static_cast<double>(row.entries.size());
      for (auto& [f, p] : row.entries) p = uniform;
      row.fallback = 0.0;
    }
  }

  // E-step then M-step; returns the log-likelihood of the pre-update model.
  double iterate(CountTable* counts_out) {
    CountTable counts(model_.rows_.size());
    std::vector<std::vector<double>> posteriors;
    std::vector<double> logliks;
    all_posteriors(model_, pairs_, model_.config_.threads, &posteriors, &logliks);
    double loglik = accumulate_counts(pairs_, posteriors, logliks, &counts);
    maximize(counts);
    if (counts_out != nullptr) *counts_out = std::move(counts);
    return loglik;
  }

  double loglik() const {
    std::vector<std::vector<double>> posteriors;
    std::vector<double> logliks;
    all_posteriors(model_, pairs_, model_.config_.threads, &posteriors, &logliks);
    double total = 0.0;
    for (double ll : logliks) total += ll;
    return total;
  }

  ExpectedCounts to_words(const CountTable& counts) const {
    ExpectedCounts out;
    for (size_t e = 0; e < counts.size(); ++e) {
      for (const auto& [f, c] : counts[e]) {
        out[{model_.source_words_[e], model_.target_words_[static_cast<size_t>(f)]}] = c;
      }
    }
    return out;
  }

  AlignmentModel take() { return std::move(model_); }

 private:
  int intern_source(const std::string& w) {
    auto [it, inserted] = model_.source_index_.emplace(w, model_.source_words_.size());
    if (inserted) {
      model_.source_words_.push_back(w);
      model_.rows_.emplace_back();
    }
    return it->second;
  }

  int intern_target(const std::string& w) {
    auto [it, inserted] = model_.target_index_.emplace(w, model_.target_words_.size());
    if (inserted) model_.target_words_.push_back(w);
    return it->second;
  }

  // t(f|e) = (c(e,f) + alpha) / (c(e) + alpha * |V_f|)
  void maximize(const CountTable& counts) {
    const double alpha = model_.config_.smoothing_alpha;
    const double vocab = static_cast<double>(model_.target_words_.size());
    for (size_t e = 0; e < model_.rows_.size(); ++e) {
      AlignmentModel::Row& row = model_.rows_[e];
      double total = 0.0;
      for (const auto& [f, c] : counts[e]) total += c;
      const double denom = total + alpha * vocab;
      if (!(denom > 0.0)) continue;
      for (auto& [f, p] : row.entries) {
        auto it = counts[e].find(f);
        double c = it == counts[e].end() ? 0.0 : it->second;
        p = (c + alpha) / denom;
      }
      row.fallback = alpha / denom;
    }
  }

  AlignmentModel model_;
  std::vector<InternedPair> pairs_;
};

AlignmentModel train_aligner(const std::vector<SentencePair>& corpus,
                             const AlignerConfig& config, AlignerTrace* trace) {
  AlignerTrainer trainer(corpus, config);
  std::vector<double> before;
  CountTable counts;
  for (int it = 0; it < config.iterations; ++it) {
    before.push_back(trainer.iterate(&counts));
  }
  if (trace != nullptr) {
    trace->loglik.assign(before.begin() + 1, before.end());
    trace->loglik.push_back(trainer.loglik());
    trace->last_counts = trainer.to_words(counts);
  }
  return trainer.take();
}

ExpectedCounts expected_counts(const AlignmentModel& model,
                               const std::vector<SentencePair>& corpus) {
  if (corpus.empty()) throw AlignerError(AlignerErrc::kEmptyCorpus, "empty aligner corpus");
  ExpectedCounts out;
  std::vector<double> posterior;
  for (size_t s = 0; s < corpus.size(); ++s) {
    check_pair(corpus[s], s);
    InternedPair pair;
    for (const auto& w : corpus[s].source) pair.source.push_back(model.source_id(w));
    for (const auto& w : corpus[s].target) pair.target.push_back(model.target_id(w));
    sentence_posteriors(model, pair, &posterior);
    const size_t n = pair.source.size();
    for (size_t i = 0; i < pair.target.size(); ++i) {
      for (size_t j = 1; j <= n; ++j) {
        out[{corpus[s].source[j - 1], corpus[s].target[i]}] += posterior[i * (n + 1) + j];
      }
    }
  }
  return out;
}

Alignment viterbi_align(const AlignmentModel& model, const Tokens& source,
                        const Tokens& target) {
  if (source.empty() || target.empty()) {
    throw AlignerError(AlignerErrc::kEmptySentence, "cannot align an empty sentence");
  }
  const int n = static_cast<int>(source.size());
  const int m = static_cast<int>(target.size());
  std::vector<int> source_ids;
  for (const auto& w : source) source_ids.push_back(model.source_id(w));
  Alignment alignment;
  for (int i = 1; i <= m; ++i) {
    std::vector<double> prior = alignment_prior(i, m, n, model.config());
    const int f = model.target_id(target[static_cast<size_t>(i - 1)]);
    double best = prior[0] * model.null_prob();
    int best_j = 0;
    for (int j = 1; j <= n; ++j) {
      double score = prior[static_cast<size_t>(j)] *
                     model.prob_ids(source_ids[static_cast<size_t>(j - 1)], f);
      if (score > best) {
        best = score;
        best_j = j;
      }
    }
    if (best_j > 0) alignment.pairs.emplace_back(best_j - 1, i - 1);
  }
  std::sort(alignment.pairs.begin(), alignment.pairs.end());
  return alignment;
}

double corpus_loglik(const AlignmentModel& model,
                     const std::vector<SentencePair>& corpus) {
  if (corpus.empty()) throw AlignerError(AlignerErrc::kEmptyCorpus, "empty aligner corpus");
  double total = 0.0;
  std::vector<double> posterior;
  for (size_t s = 0; s < corpus.size(); ++s) {
    check_pair(corpus[s], s);
    InternedPair pair;
    for (const auto& w : corpus[s].source) pair.source.push_back(model.source_id(w));
    for (const auto& w : corpus[s].target) pair.target.push_back(model.target_id(w));
    total += sentence_posteriors(model, pair, &posterior);
  }
  return total;
}

std::vector<SentencePair> read_parallel(std::istream& in, std::string_view source_name) {
  std::vector<SentencePair> pairs;
  std::string line;
  size_t number = 0;
  auto split = [](std::string_view text) {
    Tokens tokens;
    std::istringstream stream{std::string(text)};
    for (std::string t; stream >> t;) tokens.push_back(t);
    return tokens;
  };
  while (std::getline(in, line)) {
    ++number;
    size_t bar = line.find("|||");
    if (bar == std::string::npos) {
      throw AlignerError(AlignerErrc::kEmptySentence,
                         std::string(source_name) + ":" + std::to_string(number) +
                             ": expected 'source ||| target'");
    }
    SentencePair pair{split(std::string_view(line).substr(0, bar)),
                      split(std::string_view(line).substr(bar + 3))};
    if (pair.source.empty() || pair.target.empty()) {
      throw AlignerError(AlignerErrc::kEmptySentence,
                         std::string(source_name) + ":" + std::to_string(number) +
                             ": empty side in parallel pair");
    }
    pairs.push_back(std::move(pair));
  }
  return pairs;
}

std::vector<SentencePair> read_parallel(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw AlignerError(AlignerErrc::kEmptyCorpus, "cannot read " + path.string());
  return read_parallel(in, path.string());
}

void write_parallel(const std::vector<SentencePair>& pairs, std::ostream& out) {
  for (const SentencePair& p : pairs) {
    for (size_t k = 0; k < p.source.size(); ++k) out << (k ? " " : "") << p.source[k];
    out << " |||";
    for (const std::string& t : p.target) out << ' ' << t;
    out << '\n';
  }
}

std::string to_pharaoh(const Alignment& alignment) {
  std::string out;
  for (const auto& [j, i] : alignment.pairs) {
    if (!out.empty()) out.push_back(' ');
    out += std::to_string(j) + "-" + std::to_string(i);
  }
  return out;
}

Alignment parse_pharaoh(std::string_view line) {
  Alignment alignment;
  std::istringstream in{std::string(line)};
  std::string item;
  while (in >> item) {
    size_t dash = item.find('-');
    if (dash == std::string::npos) {
      throw AlignerError(AlignerErrc::kBadModelFile, "bad alignment item '" + item + "'");
    }
    try {
      alignment.pairs.emplace_back(std::stoi(item.substr(0, dash)),
                                   std::stoi(item.substr(dash + 1)));
    } catch (const std::logic_error&) {
      throw AlignerError(AlignerErrc::kBadModelFile, "bad alignment item '" + item + "'");
    }
  }
  std::sort(alignment.pairs.begin(), alignment.pairs.end());
  return alignment;
}

AlignmentScore score_alignments(const std::vector<Alignment>& predicted,
                                const std::vector<Alignment>& gold) {
  size_t hits = 0, n_pred = 0, n_gold = 0;
  for (size_t s = 0; s < std::min(predicted.size(), gold.size()); ++s) {
    std::set<std::pair<int, int>> g(gold[s].pairs.begin(), gold[s].pairs.end());
    for (const auto& p : predicted[s].pairs) hits += g.count(p);
    n_pred += predicted[s].pairs.size();
    n_gold += g.size();
  }
  AlignmentScore score;
  score.precision = n_pred ? static_cast<double>(hits) / n_pred : 0.0;
  score.recall = n_gold ? static_cast<double>(hits) / n_gold : 0.0;
  double sum = score.precision + score.recall;
  score.f1 = sum > 0.0 ? 2.0 * score.precision * score.recall / sum : 0.0;
  return score;
}

}  // namespace mtop

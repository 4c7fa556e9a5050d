#ifndef MTOP_TESTS_ALIGNER_ORACLE_H_
#define MTOP_TESTS_ALIGNER_ORACLE_H_

// Reference EM for the diagonal-prior IBM Model 2 by enumerating every
// alignment vector. Independent of the library's factorized E-step.

#include <cmath>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace mtop::testing {

struct OraclePair {
  std::vector<std::string> e;
  std::vector<std::string> f;
};

struct BruteForceEm {
  double lambda = 4.0;
  double p0 = 0.08;
  double alpha = 0.0;
  std::vector<OraclePair> corpus;
  std::set<std::string> target_vocab;
  std::map<std::pair<std::string, std::string>, double> t;
  std::map<std::pair<std::string, std::string>, double> counts;

  explicit BruteForceEm(std::vector<OraclePair> pairs) : corpus(std::move(pairs)) {
    std::map<std::string, std::set<std::string>> cooc;
    for (const auto& p : corpus) {
      for (const auto& f : p.f) target_vocab.insert(f);
      for (const auto& e : p.e) cooc[e].insert(p.f.begin(), p.f.end());
    }
    for (const auto& [e, fs] : cooc) {
      for (const auto& f : fs) t[{e, f}] = 1.0 / static_cast<double>(fs.size());
    }
  }

  double prior(int i, int j, int m, int n) const {
    if (j == 0) return p0;
    double z = 0.0;
    for (int k = 1; k <= n; ++k) {
      z += std::exp(-lambda * std::fabs(static_cast<double>(i) / m - static_cast<double>(k) / n));
    }
    double h = -std::fabs(static_cast<double>(i) / m - static_cast<double>(j) / n);
    return (1.0 - p0) * std::exp(lambda * h) / z;
  }

  double tprob(const std::string& e, const std::string& f) const {
    auto it = t.find({e, f});
    return it == t.end() ? 0.0 : it->second;
  }

  // Joint probability of the target and one alignment vector (0 = NULL).
  double joint(const OraclePair& p, const std::vector<int>& a) const {
    const int m = static_cast<int>(p.f.size());
    const int n = static_cast<int>(p.e.size());
    double prob = 1.0;
    for (int i = 0; i < m; ++i) {
      double tf = a[i] == 0 ? 1.0 / static_cast<double>(target_vocab.size())
                            : tprob(p.e[a[i] - 1], p.f[i]);
      prob *= prior(i + 1, a[i], m, n) * tf;
    }
    return prob;
  }

  template <typename Fn>
  void for_each_alignment(const OraclePair& p, Fn fn) const {
    const int m = static_cast<int>(p.f.size());
    const int n = static_cast<int>(p.e.size());
    std::vector<int> a(m, 0);
    while (true) {
      fn(a);
      int i = 0;
      while (i < m && a[i] == n) a[i++] = 0;
      if (i == m) break;
      ++a[i];
    }
  }

  double loglik() const {
    double ll = 0.0;
    for (const auto& p : corpus) {
      double total = 0.0;
      for_each_alignment(p, [&](const std::vector<int>& a) { total += joint(p, a); });
      ll += std::log(total);
    }
    return ll;
  }

  void iterate() {
    counts.clear();
    for (const auto& p : corpus) {
      std::vector<std::pair<std::vector<int>, double>> all;
      double total = 0.0;
      for_each_alignment(p, [&](const std::vector<int>& a) {
        double j = joint(p, a);
        all.emplace_back(a, j);
        total += j;
      });
      for (const auto& [a, j] : all) {
        for (size_t i = 0; i < a.size(); ++i) {
          if (a[i] > 0) counts[{p.e[a[i] - 1], p.f[i]}] += j / total;
        }
      }
    }
    std::map<std::string, double> totals;
    for (const auto& [key, c] : counts) totals[key.first] += c;
    const double v = static_cast<double>(target_vocab.size());
    for (auto& [key, prob] : t) {
      auto it = counts.find(key);
      double c = it == counts.end() ? 0.0 : it->second;
      prob = (c + alpha) / (totals[key.first] + alpha * v);
    }
  }

  // Exhaustive argmax over alignment vectors under an arbitrary t(f|e) and
  // t(f|NULL); ties go to the lexicographically smallest vector.
  template <typename TFn>
  std::vector<int> viterbi(const OraclePair& p, TFn t_of, double t_null) const {
    std::vector<int> best;
    double best_score = -1.0;
    const int m = static_cast<int>(p.f.size());
    const int n = static_cast<int>(p.e.size());
    std::vector<int> a(m, 0);
    while (true) {
      double score = 1.0;
      for (int i = 0; i < m; ++i) {
        double tf = a[i] == 0 ? t_null : t_of(p.e[a[i] - 1], p.f[i]);
        score *= prior(i + 1, a[i], m, n) * tf;
      }
      if (score > best_score) {
        best_score = score;
        best = a;
      }
      int i = m - 1;
      while (i >= 0 && a[i] == n) a[i--] = 0;
      if (i < 0) break;
      ++a[i];
    }
    return best;
  }
};

}  // namespace mtop::testing

#endif  // MTOP_TESTS_ALIGNER_ORACLE_H_

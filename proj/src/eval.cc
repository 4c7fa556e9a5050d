#include "mtop/eval.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "mtop/mrl.h"
#include "mtop/utf8.h"

namespace mtop {
namespace {

using Json = nlohmann::ordered_json;

const std::vector<std::string>& italian_defaults() {
  static const std::vector<std::string> tokens = {
      "il", "lo", "la", "i", "gli", "le", "un", "uno", "una", "l'", "un'", "d'",
      "dell'", "della", "del", "dei", "degli", "delle"};
  return tokens;
}

const std::vector<std::string>& japanese_defaults() {
  static const std::vector<std::string> tokens = {"は", "が", "を", "に", "の", "で",
                                                  "と", "へ", "も", "や", "から", "まで"};
  return tokens;
}

std::string normalize(std::string_view token) {
  std::string out = utf8::to_lower_ascii(token);
  // Typographic apostrophes compare equal to ASCII ones.
  for (size_t pos; (pos = out.find("’")) != std::string::npos;) out.replace(pos, 3, "'");
  return out;
}

std::string root_intent(std::string_view mrl) {
  std::vector<std::string> tokens = mrl_tokens(mrl);
  if (tokens.empty() || !is_open_token(tokens.front())) return "<invalid>";
  return tokens.front().substr(1);
}

void check_ids(const PredictionMap& predictions, const PredictionMap& golds) {
  if (predictions.size() == golds.size() &&
      std::equal(predictions.begin(), predictions.end(), golds.begin(),
                 [](const auto& a, const auto& b) { return a.first == b.first; })) {
    return;
  }
  for (const auto& [id, _] : golds) {
    if (!predictions.contains(id)) throw EvalError(EvalErrc::kIdMismatch, "no prediction for " + id);
  }
  for (const auto& [id, _] : predictions) {
    if (!golds.contains(id)) throw EvalError(EvalErrc::kIdMismatch, "no gold for " + id);
  }
}

Json tally_json(const std::map<std::string, Tally>& tallies) {
  Json out = Json::object();
  for (const auto& [key, t] : tallies) {
    out[key] = {{"correct", t.correct}, {"total", t.total}, {"accuracy", t.accuracy()}};
  }
  return out;
}

std::string percent(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f%%", 100.0 * v);
  return buf;
}

}  // namespace

const char* to_string(EvalErrc kind) {
  switch (kind) {
    case EvalErrc::kIdMismatch: return "IdMismatch";
    case EvalErrc::kLengthMismatch: return "LengthMismatch";
    case EvalErrc::kBadFilterList: return "BadFilterList";
    case EvalErrc::kBadMode: return "BadMode";
    case EvalErrc::kMalformedReport: return "MalformedReport";
  }
  return "Unknown";
}

FilterList::FilterList(std::string lang, const std::vector<std::string>& tokens)
    : lang_(std::move(lang)) {
  for (const std::string& t : tokens) {
    if (!t.empty()) tokens_.insert(normalize(t));
  }
}

FilterList FilterList::defaults_for(std::string_view lang) {
  if (lang == "it") return FilterList("it", italian_defaults());
  if (lang == "ja") return FilterList("ja", japanese_defaults());
  return FilterList(std::string(lang), {});
}

FilterList FilterList::load(const std::filesystem::path& path, std::string lang) {
  std::ifstream in(path);
  if (!in) throw EvalError(EvalErrc::kBadFilterList, "cannot read " + path.string());
  std::vector<std::string> tokens;
  std::string line;
  size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    if (line.find_first_of(" \t") != std::string::npos) {
      throw EvalError(EvalErrc::kBadFilterList, path.string() + ":" + std::to_string(number) +
                                                    ": expected one token per line");
    }
    tokens.push_back(line);
  }
  return FilterList(std::move(lang), tokens);
}

void FilterList::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw EvalError(EvalErrc::kBadFilterList, "cannot write " + path.string());
  for (const std::string& t : tokens_) out << t << '\n';
}

bool FilterList::contains(std::string_view token) const {
  return tokens_.contains(normalize(token));
}

std::vector<std::string> filtered_tokens(std::string_view mrl, const FilterList& filter) {
  std::vector<std::string> tokens = mrl_tokens(mrl);
  if (filter.empty()) return tokens;
  std::vector<std::string> out;
  out.reserve(tokens.size());
  for (std::string& token : tokens) {
    if (is_structural_token(token)) {
      out.push_back(std::move(token));
      continue;
    }
    for (std::string& piece : split_elision(token)) {
      if (!filter.contains(piece)) out.push_back(std::move(piece));
    }
  }
  return out;
}

namespace {

EvalReport compare(const PredictionMap& predictions, const PredictionMap& golds,
                   const FilterList* filter) {
  check_ids(predictions, golds);
  EvalReport report;
  report.n = golds.size();
  static const FilterList kNoFilter;
  size_t exact = 0;
  size_t filtered = 0;
  for (const auto& [id, gold] : golds) {
    const std::string& prediction = predictions.at(id);
    std::vector<std::string> gold_tokens = mrl_tokens(gold);
    bool ok = mrl_tokens(prediction) == gold_tokens;
    bool filtered_ok =
        filter != nullptr
            ? filtered_tokens(prediction, *filter) == filtered_tokens(gold, *filter)
            : ok;
    exact += ok;
    filtered += filtered_ok;
    Tally& tally = report.per_intent[root_intent(gold)];
    ++tally.total;
    tally.correct += ok;
    if (!ok) report.mismatches.push_back({id, gold, prediction});
  }
  if (report.n > 0) {
    report.exact_match_accuracy = static_cast<double>(exact) / static_cast<double>(report.n);
    if (filter != nullptr) {
      report.filtered_accuracy = static_cast<double>(filtered) / static_cast<double>(report.n);
    }
  } else if (filter != nullptr) {
    report.filtered_accuracy = 0.0;
  }
  return report;
}

}  // namespace

EvalReport exact_match(const PredictionMap& predictions, const PredictionMap& golds) {
  return compare(predictions, golds, nullptr);
}

EvalReport filtered_match(const PredictionMap& predictions, const PredictionMap& golds,
                          const FilterList& filter) {
  return compare(predictions, golds, &filter);
}

double corpus_bleu(const std::vector<std::vector<std::string>>& candidates,
                   const std::vector<std::vector<std::string>>& references, int max_n) {
  if (candidates.size() != references.size()) {
    throw EvalError(EvalErrc::kLengthMismatch,
                    "candidates and references differ in length (" +
                        std::to_string(candidates.size()) + " vs " +
                        std::to_string(references.size()) + ")");
  }
  if (max_n < 1) throw EvalError(EvalErrc::kLengthMismatch, "max_n must be positive");
  std::vector<double> matches(static_cast<size_t>(max_n), 0.0);
  std::vector<double> totals(static_cast<size_t>(max_n), 0.0);
  double cand_len = 0.0;
  double ref_len = 0.0;
  for (size_t s = 0; s < candidates.size(); ++s) {
    const auto& cand = candidates[s];
    const auto& ref = references[s];
    cand_len += static_cast<double>(cand.size());
    ref_len += static_cast<double>(ref.size());
    for (int n = 1; n <= max_n; ++n) {
      std::map<std::vector<std::string>, int> ref_counts;
      for (size_t i = 0; i + static_cast<size_t>(n) <= ref.size(); ++i) {
        ++ref_counts[{ref.begin() + static_cast<std::ptrdiff_t>(i),
                      ref.begin() + static_cast<std::ptrdiff_t>(i) + n}];
      }
      std::map<std::vector<std::string>, int> cand_counts;
      for (size_t i = 0; i + static_cast<size_t>(n) <= cand.size(); ++i) {
        ++cand_counts[{cand.begin() + static_cast<std::ptrdiff_t>(i),
                       cand.begin() + static_cast<std::ptrdiff_t>(i) + n}];
        totals[static_cast<size_t>(n - 1)] += 1.0;
      }
      for (const auto& [gram, count] : cand_counts) {
        auto it = ref_counts.find(gram);
        if (it != ref_counts.end()) {
          matches[static_cast<size_t>(n - 1)] += std::min(count, it->second);
        }
      }
    }
  }
  if (cand_len == 0.0 && ref_len == 0.0) return 100.0;
  std::vector<double> precision(static_cast<size_t>(max_n), 0.0);
  bool any_zero = false;
  for (size_t k = 0; k < precision.size(); ++k) {
    precision[k] = totals[k] > 0.0 ? matches[k] / totals[k] : 0.0;
    any_zero = any_zero || precision[k] == 0.0;
  }
  if (any_zero) {
    for (size_t k = 1; k < precision.size(); ++k) {
      precision[k] = (matches[k] + 1.0) / (totals[k] + 1.0);
    }
  }
  if (precision[0] == 0.0) return 0.0;
  double log_mean = 0.0;
  for (double p : precision) log_mean += std::log(p);
  log_mean /= static_cast<double>(max_n);
  double bp = cand_len >= ref_len ? 1.0 : std::exp(1.0 - ref_len / cand_len);
  return 100.0 * bp * std::exp(log_mean);
}

std::string EvalReport::to_json() const {
  Json j;
  j["mode"] = mode;
  j["n"] = n;
  j["exact_match_accuracy"] = exact_match_accuracy;
  j["filtered_accuracy"] = filtered_accuracy ? Json(*filtered_accuracy) : Json(nullptr);
  j["test_langs"] = test_langs;
  j["training_langs"] = training_langs;
  j["unseen_test_language"] = unseen_test_language;
  j["per_lang"] = tally_json(per_lang);
  j["per_intent"] = tally_json(per_intent);
  Json list = Json::array();
  for (const Mismatch& m : mismatches) {
    list.push_back({{"id", m.id}, {"gold", m.gold}, {"prediction", m.prediction}});
  }
  j["mismatches"] = std::move(list);
  return j.dump(2) + "\n";
}

EvalReport EvalReport::from_json(std::string_view text) {
  EvalReport r;
  try {
    Json j = Json::parse(text);
    r.mode = j.at("mode").get<std::string>();
    r.n = j.at("n").get<size_t>();
    r.exact_match_accuracy = j.at("exact_match_accuracy").get<double>();
    if (!j.at("filtered_accuracy").is_null()) {
      r.filtered_accuracy = j.at("filtered_accuracy").get<double>();
    }
    r.test_langs = j.at("test_langs").get<std::vector<std::string>>();
    r.training_langs = j.at("training_langs").get<std::vector<std::string>>();
    r.unseen_test_language = j.at("unseen_test_language").get<bool>();
    for (const char* key : {"per_lang", "per_intent"}) {
      auto& target = std::string_view(key) == "per_lang" ? r.per_lang : r.per_intent;
      for (const auto& [name, t] : j.at(key).items()) {
        target[name] = {t.at("correct").get<size_t>(), t.at("total").get<size_t>()};
      }
    }
    for (const Json& m : j.at("mismatches")) {
      r.mismatches.push_back({m.at("id").get<std::string>(), m.at("gold").get<std::string>(),
                              m.at("prediction").get<std::string>()});
    }
  } catch (const Json::exception& e) {
    throw EvalError(EvalErrc::kMalformedReport, std::string("malformed report: ") + e.what());
  }
  return r;
}

std::string EvalReport::to_table() const {
  std::ostringstream out;
  out << "mode: " << mode << "\n";
  out << "examples: " << n << "\n";
  out << "exact match: " << percent(exact_match_accuracy) << "\n";
  if (filtered_accuracy) out << "filtered match: " << percent(*filtered_accuracy) << "\n";
  if (unseen_test_language) out << "zero-shot: test language not seen in training\n";
  auto section = [&](const char* title, const std::map<std::string, Tally>& tallies) {
    if (tallies.empty()) return;
    out << title << "\n";
    for (const auto& [key, t] : tallies) {
      char line[256];
      std::snprintf(line, sizeof(line), "  %-32s %6zu / %-6zu %s\n", key.c_str(), t.correct,
                    t.total, percent(t.accuracy()).c_str());
      out << line;
    }
  };
  section("per language:", per_lang);
  section("per intent:", per_intent);
  return out.str();
}

const char* to_string(HarnessMode mode) {
  switch (mode) {
    case HarnessMode::kStandard: return "standard";
    case HarnessMode::kZeroShot: return "zero-shot";
    case HarnessMode::kTranslateTest: return "translate-test";
  }
  return "unknown";
}

HarnessMode harness_mode_from_string(std::string_view name) {
  if (name == "standard") return HarnessMode::kStandard;
  if (name == "zero-shot" || name == "zero_shot") return HarnessMode::kZeroShot;
  if (name == "translate-test" || name == "translate_test") return HarnessMode::kTranslateTest;
  throw EvalError(EvalErrc::kBadMode, "unknown evaluation mode '" + std::string(name) + "'");
}

EvalReport run_harness(const ParserModel& model, const Corpus& test, HarnessMode mode,
                       const HarnessOptions& options) {
  const int beam = options.beam_size > 0 ? options.beam_size : model.config().beam_size;
  const std::vector<std::string>& trained = model.training_langs();
  std::string pivot = options.target_lang;
  if (pivot.empty()) pivot = trained.empty() ? "en" : trained.front();

  std::vector<std::vector<std::string>> questions;
  questions.reserve(test.examples.size());
  for (const Example& e : test.examples) questions.push_back(e.question_tokens);

  PredictionMap golds;
  std::map<std::string, std::string> lang_of;
  if (mode == HarnessMode::kTranslateTest) {
    if (options.backend == nullptr) {
      throw EvalError(EvalErrc::kBadMode, "translate-test needs a translation backend");
    }
    std::map<std::string, std::vector<size_t>> by_lang;
    for (size_t i = 0; i < test.examples.size(); ++i) by_lang[test.examples[i].lang].push_back(i);
    for (const auto& [lang, indices] : by_lang) {
      TranslationRequest request{{}, lang, pivot};
      for (size_t i : indices) request.sentences.push_back(join_tokens(questions[i]));
      std::vector<std::string> translated =
          lang == pivot ? request.sentences
                        : translate_batch(*options.backend, request, options.cache);
      for (size_t k = 0; k < indices.size(); ++k) {
        questions[indices[k]] = tokenize_question(translated[k], pivot);
      }
    }
  }

  std::map<std::string, const Example*> reference;
  if (options.gold_corpus != nullptr) {
    for (const Example& e : options.gold_corpus->examples) reference[e.id] = &e;
  }

  PredictionMap predictions;
  for (size_t i = 0; i < test.examples.size(); ++i) {
    const Example& e = test.examples[i];
    const Example* gold = &e;
    if (options.gold_corpus != nullptr) {
      auto source = e.meta.find("source_id");
      auto it = reference.find(source != e.meta.end() ? source->second : e.id);
      if (it == reference.end()) it = reference.find(e.id);
      if (it == reference.end()) {
        throw EvalError(EvalErrc::kIdMismatch, "no gold example for " + e.id);
      }
      gold = it->second;
    }
    golds[e.id] = serialize_mrl(gold->mrl);
    lang_of[e.id] = e.lang;
    predictions[e.id] =
        questions[i].empty() ? std::string() : decode_beam(model, questions[i], beam).mrl;
  }

  EvalReport report = options.filter ? filtered_match(predictions, golds, *options.filter)
                                     : exact_match(predictions, golds);
  report.mode = to_string(mode);
  report.training_langs = trained;
  for (const auto& [id, gold] : golds) {
    Tally& t = report.per_lang[lang_of[id]];
    ++t.total;
    t.correct += mrl_tokens(predictions[id]) == mrl_tokens(gold);
  }
  for (const auto& [lang, _] : report.per_lang) report.test_langs.push_back(lang);
  report.unseen_test_language =
      !report.test_langs.empty() &&
      std::none_of(report.test_langs.begin(), report.test_langs.end(), [&](const std::string& l) {
        return std::find(trained.begin(), trained.end(), l) != trained.end();
      });
  return report;
}

EvalReport run_harness(const std::filesystem::path& checkpoint, const Corpus& test,
                       HarnessMode mode, const HarnessOptions& options) {
  ParserModel model = ParserModel::load(checkpoint);
  return run_harness(model, test, mode, options);
}

}  // namespace mtop

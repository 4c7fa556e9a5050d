#include "mtop/projection.h"

#include <algorithm>

#include "json.hpp"
#include "mtop/utf8.h"

namespace mtop {
namespace {

Tokens lowercase(const Tokens& tokens) {
  Tokens out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(utf8::to_lower_ascii(t));
  return out;
}

ProjectionOutcome failed(ProjectionFailure reason, std::string detail) {
  ProjectionOutcome outcome;
  outcome.failure = reason;
  outcome.detail = std::move(detail);
  return outcome;
}

}  // namespace

const char* to_string(ProjectionFailure failure) {
  switch (failure) {
    case ProjectionFailure::kSpanNotFound: return "SpanNotFound";
    case ProjectionFailure::kTranslationFailed: return "TranslationFailed";
    case ProjectionFailure::kUnalignedPlaceholder: return "UnalignedPlaceholder";
    case ProjectionFailure::kOverlappingProjection: return "OverlappingProjection";
    case ProjectionFailure::kRestoreError: return "RestoreError";
  }
  return "Unknown";
}

double ProjectionReport::yield_fraction() const {
  return attempted == 0 ? 0.0 : static_cast<double>(succeeded) / attempted;
}

void ProjectionReport::add(const ProjectionOutcome& outcome) {
  ++attempted;
  if (outcome.ok()) {
    ++succeeded;
  } else if (outcome.failure) {
    ++failures[*outcome.failure];
  }
}

std::string ProjectionReport::to_json() const {
  nlohmann::ordered_json j;
  j["attempted"] = attempted;
  j["succeeded"] = succeeded;
  nlohmann::ordered_json by_reason = nlohmann::ordered_json::object();
  for (auto reason : {ProjectionFailure::kSpanNotFound, ProjectionFailure::kTranslationFailed,
                      ProjectionFailure::kUnalignedPlaceholder,
                      ProjectionFailure::kOverlappingProjection,
                      ProjectionFailure::kRestoreError}) {
    auto it = failures.find(reason);
    by_reason[to_string(reason)] = it == failures.end() ? 0 : it->second;
  }
  j["failures"] = std::move(by_reason);
  j["yield_fraction"] = yield_fraction();
  return j.dump();
}

ProjectionOutcome project_example(const PlaceholderTemplate& tmpl,
                                  const Tokens& translation,
                                  const Alignment& alignment) {
  const int k = tmpl.k;
  std::vector<int> lo(static_cast<size_t>(k), -1), hi(static_cast<size_t>(k), -1);
  for (const auto& [j, i] : alignment.pairs) {
    if (j < 0 || i < 0 || static_cast<size_t>(j) >= tmpl.question_tokens.size() ||
        static_cast<size_t>(i) >= translation.size()) {
      continue;
    }
    const auto& tag = tmpl.token_tags[static_cast<size_t>(j)];
    if (!tag) continue;
    size_t id = static_cast<size_t>(*tag);
    lo[id] = lo[id] < 0 ? i : std::min(lo[id], i);
    hi[id] = std::max(hi[id], i);
  }
  for (int id = 0; id < k; ++id) {
    if (lo[static_cast<size_t>(id)] < 0) {
      return failed(ProjectionFailure::kUnalignedPlaceholder,
                    placeholder_symbol(id) + " has no aligned target token");
    }
  }
  for (int a = 0; a < k; ++a) {
    for (int b = a + 1; b < k; ++b) {
      size_t x = static_cast<size_t>(a), y = static_cast<size_t>(b);
      if (lo[x] <= hi[y] && lo[y] <= hi[x]) {
        return failed(ProjectionFailure::kOverlappingProjection,
                      placeholder_symbol(a) + " and " + placeholder_symbol(b) +
                          " project onto intersecting spans");
      }
    }
  }
  Substitution substitution;
  for (int id = 0; id < k; ++id) {
    size_t x = static_cast<size_t>(id);
    substitution[id] = Tokens(translation.begin() + lo[x], translation.begin() + hi[x] + 1);
  }
  ProjectionOutcome outcome;
  try {
    Example ex;
    ex.question_tokens = translation;
    ex.mrl = restore_template(tmpl, substitution);
    ex.provenance = Provenance::kMachineTranslated;
    outcome.example = std::move(ex);
  } catch (const Error& e) {
    return failed(ProjectionFailure::kRestoreError, e.what());
  }
  return outcome;
}

BootstrapResult bootstrap_corpus(const Corpus& source, TranslationBackend& backend,
                                 const BootstrapOptions& options) {
  const size_t n = source.examples.size();
  std::vector<std::optional<PlaceholderTemplate>> templates(n);
  std::vector<ProjectionOutcome> outcomes(n);

  // Step 1: placeholder templates.
  std::vector<size_t> pending;
  for (size_t s = 0; s < n; ++s) {
    try {
      templates[s] = make_template(source.examples[s]);
      pending.push_back(s);
    } catch (const PlaceholderError& e) {
      outcomes[s] = failed(ProjectionFailure::kSpanNotFound, e.what());
    }
  }

  // Step 2a: translation.
  std::vector<std::optional<std::string>> translations(n);
  if (!pending.empty()) {
    TranslationRequest request;
    request.source_lang = options.source_lang;
    request.target_lang = options.target_lang;
    for (size_t s : pending) request.sentences.push_back(join_tokens(source.examples[s].question_tokens));
    try {
      std::vector<std::string> out = translate_batch(backend, request, options.cache);
      for (size_t p = 0; p < pending.size(); ++p) translations[pending[p]] = out[p];
    } catch (const TranslateError& e) {
      if (e.kind() != TranslateErrc::kCacheMiss) throw;
      // Isolate the missing sentences.
      for (size_t p = 0; p < pending.size(); ++p) {
        TranslationRequest single{{request.sentences[p]}, request.source_lang, request.target_lang};
        try {
          translations[pending[p]] = translate_batch(backend, single, options.cache).front();
        } catch (const TranslateError& miss) {
          if (miss.kind() != TranslateErrc::kCacheMiss) throw;
          outcomes[pending[p]] = failed(ProjectionFailure::kTranslationFailed, miss.what());
        }
      }
    }
  }

  std::vector<size_t> alignable;
  std::vector<Tokens> target_tokens(n);
  std::vector<SentencePair> parallel;
  for (size_t s : pending) {
    if (!translations[s]) continue;
    target_tokens[s] = tokenize_question(*translations[s], options.target_lang);
    if (target_tokens[s].empty()) {
      outcomes[s] = failed(ProjectionFailure::kTranslationFailed, "empty translation");
      continue;
    }
    alignable.push_back(s);
    SentencePair pair{source.examples[s].question_tokens, target_tokens[s]};
    if (options.lowercase_for_alignment) {
      pair.source = lowercase(pair.source);
      pair.target = lowercase(pair.target);
    }
    parallel.push_back(std::move(pair));
  }

  // Step 2b + 3: alignment trained on this run's pairs, then projection.
  if (!parallel.empty()) {
    AlignmentModel model = train_aligner(parallel, options.aligner);
    for (size_t p = 0; p < alignable.size(); ++p) {
      size_t s = alignable[p];
      Alignment alignment = viterbi_align(model, parallel[p].source, parallel[p].target);
      outcomes[s] = project_example(*templates[s], target_tokens[s], alignment);
    }
  }

  BootstrapResult result;
  result.corpus.split = source.split;
  for (size_t s = 0; s < n; ++s) {
    ProjectionOutcome& outcome = outcomes[s];
    result.report.add(outcome);
    if (!outcome.ok()) continue;
    Example ex = std::move(*outcome.example);
    const Example& src = source.examples[s];
    ex.id = src.id + "-" + options.target_lang;
    ex.lang = options.target_lang;
    ex.meta = src.meta;
    ex.meta["source_id"] = src.id;
    ex.meta["source_lang"] = src.lang;
    result.corpus.examples.push_back(std::move(ex));
  }
  return result;
}

}  // namespace mtop

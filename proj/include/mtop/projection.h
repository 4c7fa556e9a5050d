#ifndef MTOP_PROJECTION_H_
#define MTOP_PROJECTION_H_

// Bootstraps a target-language corpus from a source-language one:
// placeholder templates, machine translation, word alignment, and
// substitution of the aligned target spans back into the MRL skeleton.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mtop/aligner.h"
#include "mtop/dataset.h"
#include "mtop/placeholder.h"
#include "mtop/translate.h"

namespace mtop {

enum class ProjectionFailure {
  kSpanNotFound,
  kTranslationFailed,
  kUnalignedPlaceholder,
  kOverlappingProjection,
  kRestoreError,
};

const char* to_string(ProjectionFailure failure);

struct ProjectionOutcome {
  std::optional<Example> example;
  std::optional<ProjectionFailure> failure;
  std::string detail;

  bool ok() const { return example.has_value(); }
};

struct ProjectionReport {
  size_t attempted = 0;
  size_t succeeded = 0;
  std::map<ProjectionFailure, size_t> failures;

  double yield_fraction() const;
  void add(const ProjectionOutcome& outcome);
  std::string to_json() const;
};

// Each placeholder takes the convex hull of the target positions aligned to
// its tagged source tokens. Fails when a placeholder has no aligned target
// token or two hulls intersect. The returned example carries the translation
// as its question; id and lang are left to the caller.
ProjectionOutcome project_example(const PlaceholderTemplate& tmpl,
                                  const Tokens& translation,
                                  const Alignment& alignment);

struct BootstrapOptions {
  std::string source_lang = "en";
  std::string target_lang;
  AlignerConfig aligner;
  TranslationCache* cache = nullptr;
  // Align lowercased tokens; projected text keeps the original casing.
  bool lowercase_for_alignment = true;
};

struct BootstrapResult {
  Corpus corpus;
  ProjectionReport report;
};

BootstrapResult bootstrap_corpus(const Corpus& source, TranslationBackend& backend,
                                 const BootstrapOptions& options);

}  // namespace mtop

#endif  // MTOP_PROJECTION_H_

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "mtop/aligner.h"
#include "mtop/bpe.h"
#include "mtop/dataset.h"
#include "mtop/eval.h"
#include "mtop/mrl.h"
#include "mtop/parser.h"
#include "mtop/placeholder.h"
#include "mtop/projection.h"
#include "mtop/synth.h"
#include "mtop/translate.h"

namespace py = pybind11;

namespace mtop {
namespace {

Corpus to_corpus(const std::vector<Example>& examples, Split split = Split::kTrain) {
  Corpus c;
  c.split = split;
  c.examples = examples;
  return c;
}

Example make_example(std::string id, std::string lang, std::vector<std::string> tokens,
                     const std::string& mrl) {
  Example e;
  e.id = std::move(id);
  e.lang = std::move(lang);
  e.question_tokens = std::move(tokens);
  e.mrl = parse_mrl(mrl);
  return e;
}

}  // namespace
}  // namespace mtop

PYBIND11_MODULE(_core, m) {
  using namespace mtop;
  m.doc() = "mtop core bindings";

  py::register_exception<Error>(m, "MtopError", PyExc_ValueError);

  // MRL
  m.def("normalize_mrl", [](const std::string& s) { return serialize_mrl(parse_mrl(s)); },
        py::arg("mrl"), "Parse and re-serialize an MRL string in canonical form.");
  m.def("mrl_tokens", &mrl_tokens, py::arg("mrl"));
  m.def(
      "adapt_top_annotation",
      [](const std::string& s) -> std::optional<std::string> {
        auto tree = adapt_top_annotation(s);
        if (!tree) return std::nullopt;
        return serialize_mrl(*tree);
      },
      py::arg("annotation"));
  m.def("tokenize_question", &tokenize_question, py::arg("text"), py::arg("lang"));

  py::class_<Example>(m, "Example")
      .def(py::init(&make_example), py::arg("id"), py::arg("lang"), py::arg("question_tokens"),
           py::arg("mrl"))
      .def_readwrite("id", &Example::id)
      .def_readwrite("lang", &Example::lang)
      .def_readwrite("question_tokens", &Example::question_tokens)
      .def_property(
          "mrl", [](const Example& e) { return serialize_mrl(e.mrl); },
          [](Example& e, const std::string& s) { e.mrl = parse_mrl(s); })
      .def_readwrite("meta", &Example::meta)
      .def("__repr__", [](const Example& e) {
        return "Example(" + e.id + ", " + e.lang + ", '" + join_tokens(e.question_tokens) +
               "', '" + serialize_mrl(e.mrl) + "')";
      });

  m.def(
      "synthetic_corpus",
      [](size_t count, uint64_t seed, bool open_vocabulary, int partition,
         const std::string& cognate_lang) {
        synth::GrammarOptions o;
        o.count = count;
        o.seed = seed;
        o.open_vocabulary = open_vocabulary;
        o.partition = partition;
        Corpus c = synth::grammar_corpus(o);
        if (!cognate_lang.empty()) c = synth::cognate_corpus(c, cognate_lang);
        return c.examples;
      },
      py::arg("count") = 200, py::arg("seed") = 0, py::arg("open_vocabulary") = false,
      py::arg("partition") = 0, py::arg("cognate_lang") = "",
      "Examples from the built-in intent/slot grammar.");

  // Placeholders and projection
  py::class_<PlaceholderTemplate>(m, "PlaceholderTemplate")
      .def_readonly("question_tokens", &PlaceholderTemplate::question_tokens)
      .def_readonly("token_tags", &PlaceholderTemplate::token_tags)
      .def_readonly("k", &PlaceholderTemplate::k)
      .def_property_readonly("skeleton",
                             [](const PlaceholderTemplate& t) { return serialize_mrl(t.skeleton); })
      .def("tagged", &format_tagged_question);
  m.def("make_template", &make_template, py::arg("example"));
  m.def(
      "restore_template",
      [](const PlaceholderTemplate& t, const Substitution& s) {
        return serialize_mrl(restore_template(t, s));
      },
      py::arg("template"), py::arg("substitution"));

  py::class_<Alignment>(m, "Alignment")
      .def(py::init([](std::vector<std::pair<int, int>> pairs) { return Alignment{pairs}; }),
           py::arg("pairs"))
      .def_readonly("pairs", &Alignment::pairs)
      .def("pharaoh", &to_pharaoh)
      .def("__eq__", [](const Alignment& a, const Alignment& b) { return a == b; });

  py::class_<ProjectionOutcome>(m, "ProjectionOutcome")
      .def_property_readonly("ok", &ProjectionOutcome::ok)
      .def_readonly("example", &ProjectionOutcome::example)
      .def_property_readonly("failure",
                             [](const ProjectionOutcome& o) -> std::optional<std::string> {
                               if (!o.failure) return std::nullopt;
                               return std::string(to_string(*o.failure));
                             })
      .def_readonly("detail", &ProjectionOutcome::detail);
  m.def("project_example", &project_example, py::arg("template"), py::arg("translation"),
        py::arg("alignment"));

  // Aligner
  py::class_<AlignerConfig>(m, "AlignerConfig")
      .def(py::init<>())
      .def_readwrite("iterations", &AlignerConfig::iterations)
      .def_readwrite("lambda_", &AlignerConfig::lambda)
      .def_readwrite("p_null", &AlignerConfig::p_null)
      .def_readwrite("smoothing_alpha", &AlignerConfig::smoothing_alpha)
      .def_readwrite("seed", &AlignerConfig::seed);
  py::class_<AlignmentModel>(m, "AlignmentModel")
      .def("prob", &AlignmentModel::prob, py::arg("e"), py::arg("f"))
      .def("null_prob", &AlignmentModel::null_prob);
  m.def(
      "train_aligner",
      [](const std::vector<std::pair<Tokens, Tokens>>& pairs, const AlignerConfig& config) {
        std::vector<SentencePair> corpus;
        for (const auto& [s, t] : pairs) corpus.push_back({s, t});
        AlignerTrace trace;
        AlignmentModel model = train_aligner(corpus, config, &trace);
        return py::make_tuple(std::move(model), trace.loglik);
      },
      py::arg("pairs"), py::arg("config") = AlignerConfig{},
      "Returns (model, per-iteration log-likelihood).");
  m.def("viterbi_align", &viterbi_align, py::arg("model"), py::arg("source"), py::arg("target"));

  // Translation + bootstrap
  m.def(
      "translate_dict",
      [](const std::map<std::string, std::string>& lexicon, const std::vector<std::string>& s,
         const std::string& src, const std::string& tgt) {
        DictBackend backend(lexicon);
        TranslationRequest request;
        request.sentences = s;
        request.source_lang = src;
        request.target_lang = tgt;
        return translate_batch(backend, request);
      },
      py::arg("lexicon"), py::arg("sentences"), py::arg("source_lang") = "en",
      py::arg("target_lang") = "xx");
  m.def(
      "bootstrap_corpus",
      [](const std::vector<Example>& source, const std::map<std::string, std::string>& lexicon,
         const std::string& target_lang) {
        std::unique_ptr<TranslationBackend> backend;
        if (lexicon.empty()) {
          backend = std::make_unique<IdentityBackend>();
        } else {
          backend = std::make_unique<DictBackend>(lexicon);
        }
        BootstrapOptions options;
        options.target_lang = target_lang;
        BootstrapResult r = bootstrap_corpus(to_corpus(source), *backend, options);
        return py::make_tuple(r.corpus.examples, r.report.yield_fraction());
      },
      py::arg("examples"), py::arg("lexicon"), py::arg("target_lang"),
      "Bootstraps with a dictionary backend (identity when empty); returns (examples, yield).");

  // BPE
  py::class_<BpeModel>(m, "BpeModel")
      .def("merges", &BpeModel::merges)
      .def("vocabulary", &BpeModel::vocabulary)
      .def("encode", [](const BpeModel& b, const std::vector<std::string>& t) { return encode(b, t); })
      .def_static("decode", [](const std::vector<std::string>& s) { return mtop::decode(s); });
  m.def("learn_bpe", &learn_bpe, py::arg("word_frequencies"), py::arg("num_merges"));

  // Parser
  py::class_<ParserConfig>(m, "ParserConfig")
      .def(py::init<>())
      .def(py::init([](const std::map<std::string, std::string>& kv) {
             return ParserConfig::from_key_values(kv);
           }),
           py::arg("values"))
      .def("to_dict", &ParserConfig::to_key_values);
  py::class_<ParserModel>(m, "ParserModel")
      .def_static(
          "create",
          [](const ParserConfig& c, const BpeModel& bpe, const std::vector<Example>& train) {
            return ParserModel::create(c, bpe, to_corpus(train));
          },
          py::arg("config"), py::arg("bpe"), py::arg("train"))
      .def_static("load", py::overload_cast<const std::filesystem::path&>(&ParserModel::load))
      .def("save", py::overload_cast<const std::filesystem::path&>(&ParserModel::save, py::const_))
      .def_property_readonly("config", &ParserModel::config);
  m.def(
      "train_parser",
      [](ParserModel& model, const std::vector<Example>& train, const std::vector<Example>& dev) {
        py::gil_scoped_release release;
        TrainingHistory h = train_parser(model, to_corpus(train), to_corpus(dev, Split::kDev));
        return h.to_jsonl();
      },
      py::arg("model"), py::arg("train"), py::arg("dev"),
      "Trains in place; returns the history as JSON lines.");
  m.def(
      "decode_beam",
      [](const ParserModel& model, const std::vector<std::string>& q, int beam) {
        return decode_beam(model, q, beam).mrl;
      },
      py::arg("model"), py::arg("question_tokens"), py::arg("beam_size") = 4);

  // Evaluation
  py::class_<FilterList>(m, "FilterList")
      .def(py::init<std::string, const std::vector<std::string>&>(), py::arg("lang"),
           py::arg("tokens"))
      .def_static("defaults_for", &FilterList::defaults_for)
      .def("contains", &FilterList::contains);
  py::class_<EvalReport>(m, "EvalReport")
      .def_readonly("n", &EvalReport::n)
      .def_readonly("exact_match_accuracy", &EvalReport::exact_match_accuracy)
      .def_readonly("filtered_accuracy", &EvalReport::filtered_accuracy)
      .def("to_json", &EvalReport::to_json)
      .def("to_table", &EvalReport::to_table);
  m.def("exact_match", &exact_match, py::arg("predictions"), py::arg("golds"));
  m.def("filtered_match", &filtered_match, py::arg("predictions"), py::arg("golds"),
        py::arg("filter"));
  m.def("corpus_bleu", &corpus_bleu, py::arg("candidates"), py::arg("references"),
        py::arg("max_n") = 4);
}

#include "cli.h"

#include <openssl/evp.h>

#include <algorithm>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "mtop/aligner.h"
#include "mtop/bpe.h"
#include "mtop/dataset.h"
#include "mtop/eval.h"
#include "mtop/mrl.h"
#include "mtop/parser.h"
#include "mtop/placeholder.h"
#include "mtop/projection.h"
#include "mtop/translate.h"

namespace mtop::cli {
namespace {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string trim(std::string s) {
  const char* ws = " \t\r\n";
  s.erase(0, s.find_first_not_of(ws));
  s.erase(s.find_last_not_of(ws) + 1);
  return s;
}

// Keys under "prefix." with the prefix removed.
std::map<std::string, std::string> section(const std::map<std::string, std::string>& config,
                                           const std::string& prefix) {
  std::map<std::string, std::string> out;
  for (const auto& [key, value] : config) {
    if (key.rfind(prefix + ".", 0) == 0) out[key.substr(prefix.size() + 1)] = value;
  }
  return out;
}

struct Run {
  std::string command;
  std::vector<std::string> args;
  std::vector<std::string> config_files;
  std::vector<std::string> overrides;
  std::optional<uint64_t> seed;
  int threads = 1;
  std::map<std::string, std::string> config;
  std::vector<fs::path> inputs;
  std::vector<fs::path> outputs;

  void load_config() {
    for (const std::string& file : config_files) {
      for (auto& [k, v] : read_config_file(file)) config[k] = v;
      inputs.emplace_back(file);
    }
    for (const std::string& item : overrides) {
      size_t eq = item.find('=');
      if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + item + "'");
      config[trim(item.substr(0, eq))] = trim(item.substr(eq + 1));
    }
    if (seed) {
      for (const char* s : {"parser", "aligner", "mlm"}) config[std::string(s) + ".seed"] = std::to_string(*seed);
    }
  }

  void input(const std::string& path) {
    if (!fs::exists(path)) throw Error("input not found: " + path);
    inputs.emplace_back(path);
  }

  void output(const std::string& path) {
    for (const fs::path& in : inputs) {
      std::error_code ec;
      if (fs::exists(path) && fs::equivalent(in, path, ec)) {
        throw UsageError("output " + path + " would overwrite input " + in.string());
      }
    }
    fs::path parent = fs::path(path).parent_path();
    if (!parent.empty()) fs::create_directories(parent);
    outputs.emplace_back(path);
  }

  void write_manifests() const {
    Json m;
    m["tool"] = "mtop";
    m["command"] = command;
    m["args"] = args;
    m["config"] = config;
    m["seed"] = seed ? Json(*seed) : Json(nullptr);
    Json ins = Json::array();
    for (const fs::path& p : inputs) ins.push_back({{"path", p.string()}, {"sha256", sha256_file(p)}});
    m["inputs"] = std::move(ins);
    Json outs = Json::array();
    for (const fs::path& p : outputs) {
      if (fs::exists(p)) outs.push_back({{"path", p.string()}, {"sha256", sha256_file(p)}});
    }
    m["outputs"] = std::move(outs);
    std::string text = m.dump(2) + "\n";
    for (const fs::path& p : outputs) {
      std::ofstream out(p.string() + ".manifest.json", std::ios::binary);
      out << text;
    }
  }
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

AlignerConfig aligner_config(const Run& run) {
  AlignerConfig config = AlignerConfig::from_key_values(section(run.config, "aligner"));
  config.threads = run.threads;
  return config;
}

ParserConfig parser_config(const Run& run) {
  return ParserConfig::from_key_values(section(run.config, "parser"));
}

MlmConfig mlm_config(const Run& run) {
  MlmConfig c;
  for (const auto& [key, value] : section(run.config, "mlm")) {
    try {
      if (key == "epochs") c.epochs = std::stoi(value);
      else if (key == "mask_fraction") c.mask_fraction = std::stod(value);
      else if (key == "learning_rate") c.learning_rate = std::stod(value);
      else if (key == "batch_size") c.batch_size = std::stoi(value);
      else if (key == "dropout") c.dropout = std::stod(value);
      else if (key == "grad_clip") c.grad_clip = std::stod(value);
      else if (key == "seed") c.seed = std::stoull(value);
      else throw UsageError("unknown option mlm." + key);
    } catch (const std::logic_error&) {
      throw UsageError("bad value for mlm." + key + ": '" + value + "'");
    }
  }
  return c;
}

struct BackendFlags {
  std::string name;
  std::string lexicon;
  std::string table;
  std::string cache;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--backend", name, "identity, dict, file or http")
        ->check(CLI::IsMember({"identity", "dict", "file", "http"}));
    cmd->add_option("--lexicon", lexicon, "word lexicon TSV for the dict backend");
    cmd->add_option("--table", table, "translation TSV for the file backend");
    cmd->add_option("--cache", cache, "translation cache TSV (appended)");
  }

  std::unique_ptr<TranslationBackend> make(Run& run) const {
    if (name.empty()) throw UsageError("--backend is required");
    std::string resource;
    if (name == "dict") {
      if (lexicon.empty()) throw UsageError("--backend dict needs --lexicon");
      resource = lexicon;
    } else if (name == "file") {
      if (table.empty()) throw UsageError("--backend file needs --table");
      resource = table;
    }
    if (!resource.empty()) run.input(resource);
    return make_backend(name, resource);
  }

  std::unique_ptr<TranslationCache> make_cache() const {
    if (cache.empty()) return nullptr;
    return std::make_unique<TranslationCache>(cache);
  }
};

std::vector<std::vector<std::string>> read_sentences(Run& run, const std::vector<std::string>& corpora,
                                                     const std::vector<std::string>& texts) {
  std::vector<std::vector<std::string>> sentences;
  for (const std::string& path : corpora) {
    run.input(path);
    for (const Example& e : read_corpus(fs::path(path)).examples) sentences.push_back(e.question_tokens);
  }
  for (const std::string& path : texts) {
    run.input(path);
    std::ifstream in(path);
    for (std::string line; std::getline(in, line);) {
      std::istringstream words(line);
      std::vector<std::string> tokens;
      for (std::string w; words >> w;) tokens.push_back(w);
      if (!tokens.empty()) sentences.push_back(std::move(tokens));
    }
  }
  if (sentences.empty()) throw UsageError("no input sentences (use --in or --text)");
  return sentences;
}

int classify(const std::exception& e) {
  if (dynamic_cast<const UsageError*>(&e) != nullptr) return kUsage;
  if (const auto* a = dynamic_cast<const AlignerError*>(&e)) {
    if (a->kind() == AlignerErrc::kBadConfig) return kUsage;
  }
  if (const auto* p = dynamic_cast<const ParserError*>(&e)) {
    if (p->kind() == ParserErrc::kBadConfig) return kUsage;
  }
  if (const auto* t = dynamic_cast<const TranslateError*>(&e)) {
    switch (t->kind()) {
      case TranslateErrc::kBackendUnavailable:
      case TranslateErrc::kCacheMiss:
      case TranslateErrc::kQuotaExceeded:
        return kBackendError;
      default:
        return kDataError;
    }
  }
  return kDataError;
}

}  // namespace

std::map<std::string, std::string> read_config_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read config file " + path.string());
  std::map<std::string, std::string> config;
  size_t number = 0;
  for (std::string line; std::getline(in, line);) {
    ++number;
    line = trim(line.substr(0, line.find('#')));
    if (line.empty()) continue;
    size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw UsageError(path.string() + ":" + std::to_string(number) + ": expected key=value");
    }
    config[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return config;
}

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot hash " + path.string());
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  char buf[1 << 16];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    EVP_DigestUpdate(ctx, buf, static_cast<size_t>(in.gcount()));
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, digest, &len);
  EVP_MD_CTX_free(ctx);
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) {
    hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  }
  return hex.str();
}

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"mtop: multilingual semantic parsing toolkit", "mtop"};
  app.require_subcommand(1);
  Run run;
  run.args = args;
  std::function<void()> action;

  uint64_t seed_value = 0;
  std::vector<CLI::Option*> seed_options;
  auto common = [&](CLI::App* cmd) {
    cmd->add_option("--config", run.config_files, "key=value config file (repeatable)");
    cmd->add_option("--set", run.overrides, "key=value override (repeatable)");
    seed_options.push_back(
        cmd->add_option("--seed", seed_value, "seed for every stochastic component"));
    cmd->add_option("--threads", run.threads, "worker cap")->check(CLI::PositiveNumber);
  };

  // ingest-top
  std::string in_path, out_path, report_path, split_name = "train";
  bool skip_malformed = false;
  auto* ingest = app.add_subcommand("ingest-top", "convert TOP TSV into a corpus");
  common(ingest);
  ingest->add_option("--in", in_path)->required();
  ingest->add_option("--out", out_path)->required();
  ingest->add_option("--split", split_name)->check(CLI::IsMember({"train", "dev", "test"}));
  ingest->add_option("--report", report_path);
  ingest->add_flag("--skip-malformed", skip_malformed);
  ingest->callback([&] {
    action = [&] {
      run.input(in_path);
      run.output(out_path);
      std::string report_out = report_path.empty() ? out_path + ".report.json" : report_path;
      run.output(report_out);
      IngestReport report;
      Corpus corpus = ingest_top_tsv(fs::path(in_path), split_from_string(split_name), &report,
                                     IngestOptions{skip_malformed});
      write_corpus(corpus, fs::path(out_path));
      write_text(report_out, report.to_json());
      out << report.to_json();
    };
  });

  // bootstrap
  std::string src_lang = "en", tgt_lang;
  BackendFlags backend_flags;
  auto* boot = app.add_subcommand("bootstrap", "translate, align and project a corpus");
  common(boot);
  boot->add_option("--src", src_lang);
  boot->add_option("--tgt", tgt_lang)->required();
  boot->add_option("--in", in_path)->required();
  boot->add_option("--out", out_path)->required();
  boot->add_option("--report", report_path);
  backend_flags.add_to(boot);
  boot->callback([&] {
    action = [&] {
      run.input(in_path);
      auto backend = backend_flags.make(run);
      auto cache = backend_flags.make_cache();
      run.output(out_path);
      std::string report_out = report_path.empty() ? out_path + ".report.json" : report_path;
      run.output(report_out);
      BootstrapOptions options;
      options.source_lang = src_lang;
      options.target_lang = tgt_lang;
      options.aligner = aligner_config(run);
      options.cache = cache.get();
      BootstrapResult result = bootstrap_corpus(read_corpus(fs::path(in_path)), *backend, options);
      write_corpus(result.corpus, fs::path(out_path));
      write_text(report_out, result.report.to_json());
      out << result.report.to_json();
    };
  });

  // align-train
  std::string ttable_path, trace_path;
  auto* align_train = app.add_subcommand("align-train", "train the word aligner");
  common(align_train);
  align_train->add_option("--in", in_path, "parallel text 'source ||| target'")->required();
  align_train->add_option("--out", out_path)->required();
  align_train->add_option("--ttable", ttable_path, "also dump the translation table");
  align_train->add_option("--trace", trace_path, "per-iteration log-likelihood");
  align_train->callback([&] {
    action = [&] {
      run.input(in_path);
      run.output(out_path);
      if (!ttable_path.empty()) run.output(ttable_path);
      if (!trace_path.empty()) run.output(trace_path);
      AlignerTrace trace;
      AlignmentModel model = train_aligner(read_parallel(fs::path(in_path)), aligner_config(run), &trace);
      model.save(fs::path(out_path));
      if (!ttable_path.empty()) {
        std::ofstream t(ttable_path, std::ios::binary);
        model.dump_ttable(t);
      }
      if (!trace_path.empty()) {
        std::ostringstream lines;
        for (size_t r = 0; r < trace.loglik.size(); ++r) {
          lines << Json{{"iteration", r + 1}, {"loglik", trace.loglik[r]}}.dump() << "\n";
        }
        write_text(trace_path, lines.str());
      }
      out << "trained on " << read_parallel(fs::path(in_path)).size() << " pairs\n";
    };
  });

  // align
  std::string model_path;
  auto* align = app.add_subcommand("align", "Viterbi-align parallel text");
  common(align);
  align->add_option("--model", model_path)->required();
  align->add_option("--in", in_path)->required();
  align->add_option("--out", out_path)->required();
  align->callback([&] {
    action = [&] {
      run.input(model_path);
      run.input(in_path);
      run.output(out_path);
      AlignmentModel model = AlignmentModel::load(fs::path(model_path));
      std::ostringstream lines;
      for (const SentencePair& p : read_parallel(fs::path(in_path))) {
        lines << to_pharaoh(viterbi_align(model, p.source, p.target)) << "\n";
      }
      write_text(out_path, lines.str());
    };
  });

  // bpe-learn
  std::vector<std::string> corpora, texts;
  int merges = -1;
  auto* bpe_learn = app.add_subcommand("bpe-learn", "learn BPE merges from questions");
  common(bpe_learn);
  bpe_learn->add_option("--in", corpora, "corpus JSONL (repeatable)");
  bpe_learn->add_option("--text", texts, "whitespace-tokenized text (repeatable)");
  bpe_learn->add_option("--merges", merges, "number of merges (default bpe.merges or 1000)");
  bpe_learn->add_option("--out", out_path)->required();
  bpe_learn->callback([&] {
    action = [&] {
      auto sentences = read_sentences(run, corpora, texts);
      run.output(out_path);
      int n = merges;
      if (n < 0) {
        auto it = run.config.find("bpe.merges");
        n = it == run.config.end() ? 1000 : std::stoi(it->second);
      }
      WordFrequencies words;
      for (const auto& s : sentences) add_words(s, &words);
      BpeModel model = learn_bpe(words, n);
      model.save(fs::path(out_path));
      out << "learned " << model.merges().size() << " merges\n";
    };
  });

  // pretrain-mlm
  std::string bpe_path;
  auto* pretrain = app.add_subcommand("pretrain-mlm", "masked-LM pretraining of the encoder");
  common(pretrain);
  pretrain->add_option("--in", corpora, "corpus JSONL (repeatable)");
  pretrain->add_option("--text", texts, "whitespace-tokenized text (repeatable)");
  pretrain->add_option("--bpe", bpe_path)->required();
  pretrain->add_option("--out", out_path)->required();
  pretrain->callback([&] {
    action = [&] {
      auto sentences = read_sentences(run, corpora, texts);
      run.input(bpe_path);
      run.output(out_path);
      PretrainedEncoder encoder = mlm_pretrain(sentences, BpeModel::load(fs::path(bpe_path)),
                                               parser_config(run).dims(), mlm_config(run));
      save_encoder(encoder, out_path);
      for (size_t e = 0; e < encoder.epoch_losses.size(); ++e) {
        out << Json{{"epoch", e}, {"loss", encoder.epoch_losses[e]}}.dump() << "\n";
      }
    };
  });

  // train
  std::string train_path, dev_path, encoder_path, history_path;
  double unfreeze_rate = 1.0;
  bool gradual = false;
  auto* train = app.add_subcommand("train", "train the semantic parser");
  common(train);
  train->add_option("--train", train_path)->required();
  train->add_option("--dev", dev_path)->required();
  train->add_option("--bpe", bpe_path)->required();
  train->add_option("--out", out_path)->required();
  train->add_option("--encoder", encoder_path, "pretrained encoder to start from");
  train->add_option("--unfreeze-rate", unfreeze_rate)->check(CLI::Range(0.0, 1.0));
  train->add_flag("--gradual", gradual, "unfreeze one encoder group per epoch");
  train->add_option("--history", history_path);
  train->callback([&] {
    action = [&] {
      run.input(train_path);
      run.input(dev_path);
      run.input(bpe_path);
      if (!encoder_path.empty()) run.input(encoder_path);
      run.output(out_path);
      std::string history_out = history_path.empty() ? out_path + ".history.jsonl" : history_path;
      run.output(history_out);
      Corpus train_corpus = read_corpus(fs::path(train_path));
      ParserModel model =
          ParserModel::create(parser_config(run), BpeModel::load(fs::path(bpe_path)), train_corpus);
      if (!encoder_path.empty()) model.load_encoder(load_encoder(encoder_path));
      TrainingHistory history =
          train_parser(model, train_corpus, read_corpus(fs::path(dev_path)),
                       set_unfreeze_schedule(model, unfreeze_rate, gradual));
      model.save(fs::path(out_path));
      write_text(history_out, history.to_jsonl());
      out << history.to_jsonl();
    };
  });

  // predict
  int beam = 0;
  auto* predict = app.add_subcommand("predict", "decode MRLs for a corpus");
  common(predict);
  predict->add_option("--model", model_path)->required();
  predict->add_option("--in", in_path)->required();
  predict->add_option("--out", out_path)->required();
  predict->add_option("--beam", beam, "beam size (default from the checkpoint)");
  predict->callback([&] {
    action = [&] {
      run.input(model_path);
      run.input(in_path);
      run.output(out_path);
      ParserModel model = ParserModel::load(fs::path(model_path));
      int k = beam > 0 ? beam : model.config().beam_size;
      std::ostringstream lines;
      for (const Example& e : read_corpus(fs::path(in_path)).examples) {
        DecodeResult r = decode_beam(model, e.question_tokens, k);
        lines << Json{{"id", e.id},
                      {"mrl", r.mrl},
                      {"score", r.score},
                      {"max_length_exceeded", r.max_length_exceeded}}
                     .dump()
              << "\n";
      }
      write_text(out_path, lines.str());
    };
  });

  // evaluate
  std::string mode_name = "standard", test_path, filter_path, filter_lang, gold_path, predictions_path,
              pivot;
  BackendFlags eval_backend;
  auto* evaluate = app.add_subcommand("evaluate", "score a model or predictions on a test corpus");
  common(evaluate);
  evaluate->add_option("--mode", mode_name)
      ->check(CLI::IsMember({"standard", "zero-shot", "translate-test"}));
  evaluate->add_option("--model", model_path);
  evaluate->add_option("--predictions", predictions_path, "predictions JSONL instead of a model");
  evaluate->add_option("--test", test_path)->required();
  evaluate->add_option("--out", out_path, "report JSON");
  evaluate->add_option("--filter", filter_path, "filter list, one token per line");
  evaluate->add_option("--filter-lang", filter_lang, "use the shipped filter list for a language");
  evaluate->add_option("--gold", gold_path, "training-language gold corpus (translate-test)");
  evaluate->add_option("--pivot", pivot, "language to translate into (translate-test)");
  evaluate->add_option("--beam", beam);
  eval_backend.add_to(evaluate);
  evaluate->callback([&] {
    action = [&] {
      run.input(test_path);
      Corpus test = read_corpus(fs::path(test_path));
      std::optional<FilterList> filter;
      std::string lang = test.langs().empty() ? "" : test.langs().front();
      if (!filter_path.empty()) {
        run.input(filter_path);
        filter = FilterList::load(filter_path, filter_lang.empty() ? lang : filter_lang);
      } else if (!filter_lang.empty()) {
        filter = FilterList::defaults_for(filter_lang);
      }
      EvalReport report;
      HarnessMode mode = harness_mode_from_string(mode_name);
      if (!predictions_path.empty()) {
        if (mode == HarnessMode::kTranslateTest) {
          throw UsageError("--predictions cannot be combined with --mode translate-test");
        }
        run.input(predictions_path);
        PredictionMap predictions, golds;
        std::ifstream in(predictions_path);
        for (std::string line; std::getline(in, line);) {
          if (trim(line).empty()) continue;
          Json j = Json::parse(line);
          predictions[j.at("id").get<std::string>()] = j.at("mrl").get<std::string>();
        }
        for (const Example& e : test.examples) golds[e.id] = serialize_mrl(e.mrl);
        report = filter ? filtered_match(predictions, golds, *filter) : exact_match(predictions, golds);
        report.mode = to_string(mode);
        report.test_langs = test.langs();
      } else {
        if (model_path.empty()) throw UsageError("evaluate needs --model or --predictions");
        run.input(model_path);
        HarnessOptions options;
        options.beam_size = beam;
        options.filter = filter;
        options.target_lang = pivot;
        std::unique_ptr<TranslationBackend> backend;
        std::unique_ptr<TranslationCache> cache;
        std::optional<Corpus> gold;
        if (mode == HarnessMode::kTranslateTest) {
          backend = eval_backend.make(run);
          cache = eval_backend.make_cache();
          options.backend = backend.get();
          options.cache = cache.get();
          if (!gold_path.empty()) {
            run.input(gold_path);
            gold = read_corpus(fs::path(gold_path));
            options.gold_corpus = &*gold;
          }
        }
        report = run_harness(fs::path(model_path), test, mode, options);
      }
      if (!out_path.empty()) {
        run.output(out_path);
        write_text(out_path, report.to_json());
      }
      out << report.to_table();
    };
  });

  // report
  std::vector<std::string> reports;
  auto* report_cmd = app.add_subcommand("report", "render report JSON files as tables");
  common(report_cmd);
  report_cmd->add_option("--in", reports)->required();
  report_cmd->add_option("--out", out_path, "write the tables to a file");
  report_cmd->callback([&] {
    action = [&] {
      std::string text;
      for (const std::string& path : reports) {
        run.input(path);
        text += "== " + path + "\n" + EvalReport::from_json(read_text(path)).to_table();
      }
      if (!out_path.empty()) {
        run.output(out_path);
        write_text(out_path, text);
      }
      out << text;
    };
  });

  // template
  auto* tmpl = app.add_subcommand("template", "show placeholder templates of a corpus");
  common(tmpl);
  tmpl->add_option("--in", in_path)->required();
  tmpl->add_option("--out", out_path);
  tmpl->callback([&] {
    action = [&] {
      run.input(in_path);
      std::ostringstream lines;
      for (const Example& e : read_corpus(fs::path(in_path)).examples) {
        PlaceholderTemplate t = make_template(e);
        lines << e.id << '\t' << format_tagged_question(t) << '\t' << serialize_mrl(t.skeleton)
              << "\n";
      }
      if (!out_path.empty()) {
        run.output(out_path);
        write_text(out_path, lines.str());
      } else {
        out << lines.str();
      }
    };
  });

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n";
    err << (app.get_subcommands().empty() ? app.help() : app.get_subcommands().front()->help());
    return kUsage;
  }

  run.command = app.get_subcommands().front()->get_name();
  for (CLI::Option* opt : seed_options) {
    if (opt->count() > 0) run.seed = seed_value;
  }
  try {
    run.load_config();
    action();
    run.write_manifests();
  } catch (const std::exception& e) {
    int code = classify(e);
    err << "error: " << e.what() << "\n";
    if (code == kUsage) err << "\n" << app.get_subcommands().front()->help();
    return code;
  }
  return kOk;
}

}  // namespace mtop::cli

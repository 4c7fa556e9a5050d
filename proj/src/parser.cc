#include "mtop/parser.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "mtop/mrl.h"

namespace mtop {
namespace {

using nn::Matrix;
using nn::Tape;
using nn::Var;
using Json = nlohmann::ordered_json;

constexpr int kEosId = 0;
constexpr int kUnkTargetId = 1;
constexpr int kUnkSourceId = 1;
constexpr int kMaskSourceId = 2;
constexpr int kFirstRegularSourceId = 3;

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

double parse_double(const std::string& key, const std::string& text) {
  double v = 0.0;
  auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || end != text.data() + text.size()) {
    throw ParserError(ParserErrc::kBadConfig, "bad number for " + key + ": '" + text + "'");
  }
  return v;
}

int64_t parse_int(const std::string& key, const std::string& text) {
  int64_t v = 0;
  auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || end != text.data() + text.size()) {
    throw ParserError(ParserErrc::kBadConfig, "bad integer for " + key + ": '" + text + "'");
  }
  return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "1" || text == "true") return true;
  if (text == "0" || text == "false") return false;
  throw ParserError(ParserErrc::kBadConfig, "bad flag for " + key + ": '" + text + "'");
}

// Leaf subwords are marked with a leading \x01 byte.
void linearize(const MrlNode& node, const BpeModel& bpe, std::vector<std::string>* out) {
  out->push_back("[" + node.label.name);
  for (const MrlNode& child : node.children) linearize(child, bpe, out);
  for (const std::string& token : node.text) {
    for (std::string& sub : bpe.encode_word(token)) out->push_back("\x01" + std::move(sub));
  }
  out->push_back("]");
}

void linearize_words(const MrlNode& node, std::vector<std::string>* out) {
  out->push_back("[" + node.label.name);
  for (const MrlNode& child : node.children) linearize_words(child, out);
  for (const std::string& token : node.text) out->push_back(token + std::string(kEndOfWord));
  out->push_back("]");
}

std::vector<int> source_ids(const ParserModel& model, const std::vector<std::string>& source) {
  std::vector<int> ids;
  ids.reserve(source.size());
  for (const std::string& s : source) ids.push_back(model.source_vocab().id_or(s, kUnkSourceId));
  return ids;
}

nn::ParameterSet& mutable_params(const ParserModel& model) {
  // Inference tapes never write gradients.
  return const_cast<ParserModel&>(model).params();
}

nn::ForwardContext make_context(Tape* tape, const ParserModel& model, double dropout,
                                std::mt19937_64* rng) {
  nn::ForwardContext ctx{tape, &mutable_params(model), model.config().dims()};
  ctx.dropout = rng != nullptr ? dropout : 0.0;
  ctx.rng = rng;
  return ctx;
}

// Rows of combined action scores for decoder inputs BOS + prefix.
Var action_logits(const nn::ForwardContext& ctx, const ParserModel& model, Var memory,
                  int source_len, const std::vector<Action>& prefix) {
  Tape& t = *ctx.tape;
  nn::ParameterSet& params = *ctx.params;
  const int d = model.config().model_dim;
  const int vocab = model.target_vocab().size();
  const int bos_id = vocab;
  const int copy_id = vocab + 1;
  const int length = static_cast<int>(prefix.size()) + 1;

  std::vector<int> ids;
  ids.reserve(static_cast<size_t>(length));
  ids.push_back(bos_id);
  Matrix selector = Matrix::Zero(length, source_len);
  bool any_copy = false;
  for (size_t k = 0; k < prefix.size(); ++k) {
    const Action& a = prefix[k];
    if (a.kind == Action::Kind::kCopy) {
      ids.push_back(copy_id);
      selector(static_cast<Eigen::Index>(k + 1), a.position) = 1.0;
      any_copy = true;
    } else {
      ids.push_back(model.target_vocab().id_or(a.symbol, kUnkTargetId));
    }
  }
  Var inputs = t.scale(t.gather_rows(t.param(params.at("dec.embed")), ids),
                       std::sqrt(static_cast<double>(d)));
  if (any_copy) inputs = t.add(inputs, t.matmul(t.input(std::move(selector)), memory));
  Var hidden = nn::decoder_forward(ctx, inputs, memory);
  Var logits = t.add_row(t.matmul(hidden, t.param(params.at("out.w"))),
                         t.param(params.at("out.b")));
  if (!model.config().copy_enabled) return logits;
  Var q = t.matmul(hidden, t.param(params.at("copy.wq")));
  Var k = t.matmul(memory, t.param(params.at("copy.wk")));
  Var scores = t.scale(t.matmul_nt(q, k), 1.0 / std::sqrt(static_cast<double>(d)));
  return t.concat_cols({logits, scores});
}

std::vector<std::vector<int>> gold_sets(const ParserModel& model, const ActionSequence& seq) {
  const int vocab = model.target_vocab().size();
  std::vector<std::vector<int>> gold;
  gold.reserve(seq.actions.size());
  for (const Action& a : seq.actions) {
    if (a.kind == Action::Kind::kGen) {
      gold.push_back({model.target_vocab().id_or(a.symbol, kUnkTargetId)});
      continue;
    }
    std::vector<int> matches;
    const std::string& symbol = seq.source[static_cast<size_t>(a.position)];
    for (size_t j = 0; j < seq.source.size(); ++j) {
      if (seq.source[j] == symbol) matches.push_back(vocab + static_cast<int>(j));
    }
    gold.push_back(std::move(matches));
  }
  return gold;
}

double scaled_sequence_loss(ParserModel& model, const ActionSequence& seq, double grad_scale,
                            std::mt19937_64* rng) {
  if (seq.source.empty()) throw ParserError(ParserErrc::kEmptyInput, "empty source");
  Tape tape(grad_scale != 0.0);
  nn::ForwardContext ctx = make_context(&tape, model, model.config().dropout, rng);
  Var memory = nn::encoder_forward(ctx, source_ids(model, seq.source));
  std::vector<Action> inputs(seq.actions.begin(), seq.actions.end() - 1);
  Var logits = action_logits(ctx, model, memory, static_cast<int>(seq.source.size()), inputs);
  Var loss = tape.marginal_nll(logits, gold_sets(model, seq));
  double value = tape.value(loss)(0, 0);
  if (grad_scale != 0.0) tape.backward(tape.scale(loss, grad_scale));
  return value;
}

Matrix encode_memory(const ParserModel& model, const std::vector<std::string>& source) {
  Tape tape(false);
  nn::ForwardContext ctx = make_context(&tape, model, 0.0, nullptr);
  return tape.value(nn::encoder_forward(ctx, source_ids(model, source)));
}

std::vector<double> next_log_probs(const ParserModel& model, const Matrix& memory,
                                   const std::vector<Action>& prefix) {
  Tape tape(false);
  nn::ForwardContext ctx = make_context(&tape, model, 0.0, nullptr);
  Var mem = tape.input(memory);
  Var logits =
      action_logits(ctx, model, mem, static_cast<int>(memory.rows()), prefix);
  const Matrix& all = tape.value(logits);
  std::vector<double> lp = nn::log_softmax(all.row(all.rows() - 1));
  if (!model.config().copy_enabled) {
    lp.resize(lp.size() + static_cast<size_t>(memory.rows()),
              -std::numeric_limits<double>::infinity());
  }
  return lp;
}

DecodeResult finish(std::vector<Action> actions, const std::vector<std::string>& source,
                    double log_prob, bool exceeded) {
  DecodeResult result;
  result.sequence.actions = std::move(actions);
  result.sequence.source = source;
  result.mrl = result.sequence.detokenize();
  result.log_prob = log_prob;
  result.score = result.sequence.actions.empty()
                     ? log_prob
                     : log_prob / static_cast<double>(result.sequence.actions.size());
  result.max_length_exceeded = exceeded;
  return result;
}

void write_params(std::ostream& out, const nn::ParameterSet& params) {
  for (const nn::Parameter* p : params.all()) {
    out.write(reinterpret_cast<const char*>(p->value.data()),
              static_cast<std::streamsize>(p->value.size() * sizeof(double)));
  }
}

Json param_shapes(const nn::ParameterSet& params) {
  Json shapes = Json::array();
  for (const nn::Parameter* p : params.all()) {
    shapes.push_back({{"name", p->name},
                      {"rows", p->value.rows()},
                      {"cols", p->value.cols()},
                      {"group", p->group}});
  }
  return shapes;
}

void read_params(std::istream& in, const Json& shapes, nn::ParameterSet& params) {
  if (shapes.size() != params.size()) {
    throw ParserError(ParserErrc::kCheckpointError, "parameter count mismatch");
  }
  for (const Json& s : shapes) {
    nn::Parameter* p = params.find(s.at("name").get<std::string>());
    if (p == nullptr || p->value.rows() != s.at("rows").get<int64_t>() ||
        p->value.cols() != s.at("cols").get<int64_t>()) {
      throw ParserError(ParserErrc::kCheckpointError,
                        "parameter shape mismatch for " + s.at("name").get<std::string>());
    }
    in.read(reinterpret_cast<char*>(p->value.data()),
            static_cast<std::streamsize>(p->value.size() * sizeof(double)));
    if (!in) throw ParserError(ParserErrc::kCheckpointError, "truncated parameter data");
    if (!p->value.allFinite()) {
      throw ParserError(ParserErrc::kCheckpointError, "non-finite parameter " + p->name);
    }
  }
}

std::string bpe_to_string(const BpeModel& bpe) {
  std::ostringstream out;
  bpe.save(out);
  return out.str();
}

BpeModel bpe_from_string(const std::string& text) {
  std::istringstream in(text);
  return BpeModel::load(in);
}

Json read_header(std::istream& in, std::string_view magic) {
  std::string line;
  if (!std::getline(in, line) || line != magic) {
    throw ParserError(ParserErrc::kCheckpointError,
                      "not a checkpoint (expected '" + std::string(magic) + "')");
  }
  if (!std::getline(in, line)) throw ParserError(ParserErrc::kCheckpointError, "missing header");
  try {
    return Json::parse(line);
  } catch (const Json::exception& e) {
    throw ParserError(ParserErrc::kCheckpointError, std::string("bad header: ") + e.what());
  }
}

Json dims_to_json(const nn::TransformerDims& d) {
  return {{"model_dim", d.model_dim}, {"heads", d.heads},         {"ffn_dim", d.ffn_dim},
          {"enc_layers", d.enc_layers}, {"dec_layers", d.dec_layers}};
}

nn::TransformerDims dims_from_json(const Json& j) {
  nn::TransformerDims d;
  d.model_dim = j.at("model_dim").get<int>();
  d.heads = j.at("heads").get<int>();
  d.ffn_dim = j.at("ffn_dim").get<int>();
  d.enc_layers = j.at("enc_layers").get<int>();
  d.dec_layers = j.at("dec_layers").get<int>();
  return d;
}

bool is_trainable(const nn::Parameter& p, const std::vector<bool>& mask) {
  return p.group < 0 || mask[static_cast<size_t>(p.group)];
}

}  // namespace

const char* to_string(ParserErrc kind) {
  switch (kind) {
    case ParserErrc::kBadConfig: return "BadConfig";
    case ParserErrc::kCopyTargetNotFound: return "CopyTargetNotFound";
    case ParserErrc::kAllExamplesSkipped: return "AllExamplesSkipped";
    case ParserErrc::kDivergedLoss: return "DivergedLoss";
    case ParserErrc::kCheckpointError: return "CheckpointError";
    case ParserErrc::kEmptyInput: return "EmptyInput";
  }
  return "Unknown";
}

// ---- config

void ParserConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ParserError(ParserErrc::kBadConfig, what);
  };
  require(enc_layers > 0 && dec_layers > 0, "layer counts must be positive");
  require(model_dim > 0 && heads > 0 && ffn_dim > 0, "dimensions must be positive");
  require(model_dim % heads == 0, "model_dim must be divisible by heads");
  require(dropout >= 0.0 && dropout < 1.0, "dropout must be in [0, 1)");
  require(max_decode_len > 0 && beam_size > 0, "decoding limits must be positive");
  require(learning_rate > 0.0 && batch_size > 0, "learning rate and batch size must be positive");
  require(patience > 0 && max_epochs > 0, "patience and max_epochs must be positive");
  require(grad_clip >= 0.0, "grad_clip must be non-negative");
}

nn::TransformerDims ParserConfig::dims() const {
  return {model_dim, heads, ffn_dim, enc_layers, dec_layers};
}

std::map<std::string, std::string> ParserConfig::to_key_values() const {
  return {{"enc_layers", std::to_string(enc_layers)},
          {"dec_layers", std::to_string(dec_layers)},
          {"model_dim", std::to_string(model_dim)},
          {"heads", std::to_string(heads)},
          {"ffn_dim", std::to_string(ffn_dim)},
          {"dropout", format_double(dropout)},
          {"max_decode_len", std::to_string(max_decode_len)},
          {"beam_size", std::to_string(beam_size)},
          {"learning_rate", format_double(learning_rate)},
          {"batch_size", std::to_string(batch_size)},
          {"patience", std::to_string(patience)},
          {"seed", std::to_string(seed)},
          {"max_epochs", std::to_string(max_epochs)},
          {"grad_clip", format_double(grad_clip)},
          {"copy_enabled", copy_enabled ? "true" : "false"},
          {"eval_dev_exact_match", eval_dev_exact_match ? "true" : "false"}};
}

ParserConfig ParserConfig::from_key_values(const std::map<std::string, std::string>& kv,
                                           ParserConfig c) {
  for (const auto& [key, value] : kv) {
    auto as_int = [&] { return static_cast<int>(parse_int(key, value)); };
    if (key == "enc_layers") c.enc_layers = as_int();
    else if (key == "dec_layers") c.dec_layers = as_int();
    else if (key == "model_dim") c.model_dim = as_int();
    else if (key == "heads") c.heads = as_int();
    else if (key == "ffn_dim") c.ffn_dim = as_int();
    else if (key == "dropout") c.dropout = parse_double(key, value);
    else if (key == "max_decode_len") c.max_decode_len = as_int();
    else if (key == "beam_size") c.beam_size = as_int();
    else if (key == "learning_rate") c.learning_rate = parse_double(key, value);
    else if (key == "batch_size") c.batch_size = as_int();
    else if (key == "patience") c.patience = as_int();
    else if (key == "seed") c.seed = static_cast<uint64_t>(parse_int(key, value));
    else if (key == "max_epochs") c.max_epochs = as_int();
    else if (key == "grad_clip") c.grad_clip = parse_double(key, value);
    else if (key == "copy_enabled") c.copy_enabled = parse_bool(key, value);
    else if (key == "eval_dev_exact_match") c.eval_dev_exact_match = parse_bool(key, value);
    else throw ParserError(ParserErrc::kBadConfig, "unknown parser option '" + key + "'");
  }
  c.validate();
  return c;
}

ParserConfig ParserConfig::from_key_values(const std::map<std::string, std::string>& kv) {
  return from_key_values(kv, ParserConfig{});
}

// ---- actions

std::string Action::to_string() const {
  if (kind == Kind::kCopy) return "COPY(" + std::to_string(position) + ")";
  return "GEN(" + symbol + ")";
}

std::vector<std::string> ActionSequence::symbols() const {
  std::vector<std::string> out;
  out.reserve(actions.size());
  for (const Action& a : actions) {
    if (a.is_eos()) continue;
    if (a.kind == Action::Kind::kCopy) {
      out.push_back(source.at(static_cast<size_t>(a.position)));
    } else {
      out.push_back(a.symbol);
    }
  }
  return out;
}

std::string ActionSequence::detokenize() const { return join_tokens(decode(symbols())); }

std::vector<std::string> encode_source(const BpeModel& bpe,
                                       const std::vector<std::string>& question_tokens) {
  return encode(bpe, question_tokens);
}

ActionSequence oracle_actions(const Example& example, const BpeModel& bpe, bool copy_enabled) {
  ActionSequence seq;
  seq.source = encode_source(bpe, example.question_tokens);
  std::vector<std::string> linear;
  if (!copy_enabled) {
    linearize_words(example.mrl.root, &linear);
    for (std::string& symbol : linear) seq.actions.push_back(Action::gen(std::move(symbol)));
    seq.actions.push_back(Action::gen(std::string(kEos)));
    return seq;
  }
  linearize(example.mrl.root, bpe, &linear);
  size_t cursor = 0;
  for (std::string& symbol : linear) {
    if (symbol.empty() || symbol[0] != '\x01') {
      seq.actions.push_back(Action::gen(std::move(symbol)));
      continue;
    }
    std::string sub = symbol.substr(1);
    auto it = std::find(seq.source.begin() + static_cast<std::ptrdiff_t>(cursor),
                        seq.source.end(), sub);
    if (it == seq.source.end()) it = std::find(seq.source.begin(), seq.source.end(), sub);
    if (it == seq.source.end()) {
      throw ParserError(ParserErrc::kCopyTargetNotFound,
                        example.id + ": leaf subword '" + sub + "' not in encoded question");
    }
    int position = static_cast<int>(it - seq.source.begin());
    seq.actions.push_back(Action::copy(position));
    cursor = static_cast<size_t>(position) + 1;
  }
  seq.actions.push_back(Action::gen(std::string(kEos)));
  return seq;
}

// ---- vocabularies

Vocab::Vocab(std::vector<std::string> symbols) : symbols_(std::move(symbols)) {
  for (size_t i = 0; i < symbols_.size(); ++i) {
    if (!index_.emplace(symbols_[i], static_cast<int>(i)).second) {
      throw ParserError(ParserErrc::kBadConfig, "duplicate vocabulary symbol " + symbols_[i]);
    }
  }
}

int Vocab::id(std::string_view symbol) const { return id_or(symbol, -1); }

int Vocab::id_or(std::string_view symbol, int fallback) const {
  auto it = index_.find(symbol);
  return it == index_.end() ? fallback : it->second;
}

Vocab source_vocab_for(const BpeModel& bpe) {
  std::vector<std::string> symbols = {std::string(kPad), std::string(kUnk), std::string(kMask)};
  for (std::string& s : bpe.vocabulary()) symbols.push_back(std::move(s));
  return Vocab(std::move(symbols));
}

// ---- model

ParserModel::ParserModel(const ParserConfig& config, const BpeModel& bpe, Vocab source_vocab,
                         Vocab target_vocab)
    : config_(config),
      bpe_(bpe),
      source_vocab_(std::move(source_vocab)),
      target_vocab_(std::move(target_vocab)) {
  config_.validate();
  if (target_vocab_.size() < 2 || target_vocab_.symbol(kEosId) != kEos) {
    throw ParserError(ParserErrc::kBadConfig, "target vocabulary must start with <eos>, <unk>");
  }
  const nn::TransformerDims dims = config_.dims();
  const int d = config_.model_dim;
  const int vocab = target_vocab_.size();
  nn::add_encoder_params(params_, dims, source_vocab_.size());
  nn::add_decoder_params(params_, dims, vocab + 2);
  params_.add("out.w", d, vocab, -1);
  params_.add("out.b", 1, vocab, -1);
  params_.add("copy.wq", d, d, -1);
  params_.add("copy.wk", d, d, -1);
  std::mt19937_64 rng(config_.seed);
  nn::init_params(params_, rng);
  trainable_groups_.assign(static_cast<size_t>(freeze_groups()), true);
}

ParserModel ParserModel::create(const ParserConfig& config, const BpeModel& bpe,
                                const Corpus& train) {
  std::set<std::string> gen;
  for (const Example& e : train.examples) {
    try {
      for (const Action& a : oracle_actions(e, bpe, config.copy_enabled).actions) {
        if (a.kind == Action::Kind::kGen && !a.is_eos()) gen.insert(a.symbol);
      }
    } catch (const ParserError&) {
    }
  }
  std::vector<std::string> symbols = {std::string(kEos), std::string(kUnk)};
  for (const std::string& s : gen) {
    if (s != kUnk) symbols.push_back(s);
  }
  ParserModel model(config, bpe, source_vocab_for(bpe), Vocab(std::move(symbols)));
  model.set_training_langs(train.langs());
  return model;
}

void ParserModel::set_freeze_mask(std::vector<bool> trainable) {
  if (trainable.size() != static_cast<size_t>(freeze_groups())) {
    throw ParserError(ParserErrc::kBadConfig, "freeze mask must have enc_layers + 1 entries");
  }
  trainable_groups_ = std::move(trainable);
}

void ParserModel::load_encoder(const PretrainedEncoder& encoder) {
  const nn::TransformerDims mine = config_.dims();
  if (encoder.dims.model_dim != mine.model_dim || encoder.dims.heads != mine.heads ||
      encoder.dims.ffn_dim != mine.ffn_dim || encoder.dims.enc_layers != mine.enc_layers) {
    throw ParserError(ParserErrc::kBadConfig, "pretrained encoder dimensions differ");
  }
  if (!(encoder.bpe == bpe_) || !(encoder.source_vocab == source_vocab_)) {
    throw ParserError(ParserErrc::kBadConfig, "pretrained encoder uses a different BPE model");
  }
  for (const nn::Parameter* p : encoder.params.all()) {
    nn::Parameter* mine_p = params_.find(p->name);
    if (mine_p == nullptr || mine_p->value.rows() != p->value.rows() ||
        mine_p->value.cols() != p->value.cols()) {
      throw ParserError(ParserErrc::kBadConfig, "pretrained parameter mismatch: " + p->name);
    }
    mine_p->value = p->value;
  }
}

void ParserModel::save(std::ostream& out) const {
  Json header;
  header["format"] = "mtop-parser";
  header["config"] = config_.to_key_values();
  header["bpe"] = bpe_to_string(bpe_);
  header["target_vocab"] = target_vocab_.symbols();
  header["training_langs"] = training_langs_;
  header["params"] = param_shapes(params_);
  out << "#mtop-parser 1\n" << header.dump() << '\n';
  write_params(out, params_);
}

void ParserModel::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParserError(ParserErrc::kCheckpointError, "cannot write " + path.string());
  save(out);
  if (!out) throw ParserError(ParserErrc::kCheckpointError, "write failed: " + path.string());
}

ParserModel ParserModel::load(std::istream& in) {
  Json header = read_header(in, "#mtop-parser 1");
  try {
    ParserConfig config = ParserConfig::from_key_values(
        header.at("config").get<std::map<std::string, std::string>>());
    BpeModel bpe = bpe_from_string(header.at("bpe").get<std::string>());
    ParserModel model(config, bpe, source_vocab_for(bpe),
                      Vocab(header.at("target_vocab").get<std::vector<std::string>>()));
    model.set_training_langs(header.at("training_langs").get<std::vector<std::string>>());
    read_params(in, header.at("params"), model.params_);
    return model;
  } catch (const Json::exception& e) {
    throw ParserError(ParserErrc::kCheckpointError, std::string("bad header: ") + e.what());
  } catch (const BpeError& e) {
    throw ParserError(ParserErrc::kCheckpointError, std::string("bad BPE model: ") + e.what());
  } catch (const ParserError& e) {
    if (e.kind() == ParserErrc::kCheckpointError) throw;
    throw ParserError(ParserErrc::kCheckpointError, e.what());
  }
}

ParserModel ParserModel::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParserError(ParserErrc::kCheckpointError, "cannot read " + path.string());
  try {
    return load(in);
  } catch (const ParserError& e) {
    throw ParserError(ParserErrc::kCheckpointError, path.string() + ": " + e.what());
  }
}

// ---- scoring

int action_id(const ParserModel& model, const Action& action) {
  if (action.kind == Action::Kind::kCopy) return model.target_vocab().size() + action.position;
  return model.target_vocab().id_or(action.symbol, kUnkTargetId);
}

Action action_from_id(const ParserModel& model, int id) {
  const int vocab = model.target_vocab().size();
  if (id >= vocab) return Action::copy(id - vocab);
  return Action::gen(model.target_vocab().symbol(id));
}

std::vector<double> action_distribution(const ParserModel& model,
                                        const std::vector<std::string>& source,
                                        const std::vector<Action>& prefix) {
  if (source.empty()) throw ParserError(ParserErrc::kEmptyInput, "empty source");
  std::vector<double> lp = next_log_probs(model, encode_memory(model, source), prefix);
  for (double& v : lp) v = std::exp(v);
  return lp;
}

double sequence_loss(ParserModel& model, const ActionSequence& sequence, bool backward,
                     std::mt19937_64* rng) {
  return scaled_sequence_loss(model, sequence, backward ? 1.0 : 0.0, rng);
}

// ---- unfreezing

int UnfreezeSchedule::eligible_groups() const {
  double r = std::clamp(rate, 0.0, 1.0);
  int n = static_cast<int>(std::ceil(r * groups - 1e-9));
  return std::clamp(n, 0, groups);
}

int UnfreezeSchedule::unfrozen_groups(int epoch) const {
  int eligible = eligible_groups();
  return gradual ? std::min(std::max(epoch, 0), eligible) : eligible;
}

std::vector<bool> UnfreezeSchedule::mask(int epoch) const {
  std::vector<bool> trainable(static_cast<size_t>(groups), false);
  int open = unfrozen_groups(epoch);
  for (int k = 0; k < open; ++k) trainable[static_cast<size_t>(groups - 1 - k)] = true;
  return trainable;
}

UnfreezeSchedule set_unfreeze_schedule(const ParserModel& model, double rate, bool gradual) {
  if (!(rate >= 0.0 && rate <= 1.0)) {
    throw ParserError(ParserErrc::kBadConfig, "unfreeze rate must be in [0, 1]");
  }
  return {model.freeze_groups(), rate, gradual};
}

// ---- training

std::string TrainingHistory::to_jsonl() const {
  std::string out;
  for (const EpochRecord& r : epochs) {
    Json j;
    j["epoch"] = r.epoch;
    j["train_loss"] = r.train_loss;
    j["dev_loss"] = r.dev_loss;
    j["unfrozen_groups"] = r.unfrozen_groups;
    j["trainable_groups"] = r.trainable_groups;
    j["steps"] = r.steps;
    out += j.dump() + "\n";
  }
  Json s;
  s["summary"] = true;
  s["best_epoch"] = best_epoch;
  s["best_dev_loss"] = best_dev_loss;
  s["skipped_train"] = skipped_train;
  s["skipped_dev"] = skipped_dev;
  s["early_stopped"] = early_stopped;
  s["dev_exact_match"] = dev_exact_match ? Json(*dev_exact_match) : Json(nullptr);
  out += s.dump() + "\n";
  return out;
}

namespace {

std::vector<ActionSequence> derive_oracles(const ParserModel& model, const Corpus& corpus,
                                           size_t* skipped) {
  std::vector<ActionSequence> out;
  out.reserve(corpus.examples.size());
  size_t skips = 0;
  for (const Example& e : corpus.examples) {
    try {
      ActionSequence seq = oracle_actions(e, model.bpe(), model.config().copy_enabled);
      if (seq.source.empty()) {
        ++skips;
        continue;
      }
      out.push_back(std::move(seq));
    } catch (const ParserError&) {
      ++skips;
    }
  }
  if (skipped != nullptr) *skipped = skips;
  return out;
}

double mean_loss(const ParserModel& model, const std::vector<ActionSequence>& seqs) {
  double total = 0.0;
  size_t tokens = 0;
  for (const ActionSequence& s : seqs) {
    total += scaled_sequence_loss(const_cast<ParserModel&>(model), s, 0.0, nullptr);
    tokens += s.actions.size();
  }
  return tokens == 0 ? 0.0 : total / static_cast<double>(tokens);
}

}  // namespace

double corpus_loss(const ParserModel& model, const Corpus& corpus, size_t* skipped) {
  return mean_loss(model, derive_oracles(model, corpus, skipped));
}

TrainingHistory train_parser(ParserModel& model, const Corpus& train, const Corpus& dev,
                             std::optional<UnfreezeSchedule> schedule) {
  const ParserConfig& config = model.config();
  UnfreezeSchedule plan = schedule.value_or(UnfreezeSchedule{model.freeze_groups(), 1.0, false});
  if (plan.groups != model.freeze_groups()) {
    throw ParserError(ParserErrc::kBadConfig, "schedule does not match the encoder depth");
  }
  TrainingHistory history;
  std::vector<ActionSequence> train_seqs = derive_oracles(model, train, &history.skipped_train);
  std::vector<ActionSequence> dev_seqs = derive_oracles(model, dev, &history.skipped_dev);
  if (train_seqs.empty()) {
    throw ParserError(ParserErrc::kAllExamplesSkipped, "no training example has a derivable oracle");
  }
  if (dev_seqs.empty()) {
    throw ParserError(ParserErrc::kAllExamplesSkipped, "no dev example has a derivable oracle");
  }

  std::mt19937_64 rng(config.seed * 0x9E3779B97F4A7C15ULL + 1);
  nn::AdamOptions adam;
  adam.learning_rate = config.learning_rate;
  std::vector<size_t> order(train_seqs.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<Matrix> best_values;
  int since_best = 0;
  int64_t steps = 0;
  const size_t batch = static_cast<size_t>(config.batch_size);

  for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
    std::vector<bool> mask = plan.mask(epoch);
    model.set_freeze_mask(mask);
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    size_t epoch_tokens = 0;
    for (size_t start = 0; start < order.size(); start += batch) {
      size_t end = std::min(order.size(), start + batch);
      size_t tokens = 0;
      for (size_t k = start; k < end; ++k) tokens += train_seqs[order[k]].actions.size();
      model.params().zero_grad();
      for (size_t k = start; k < end; ++k) {
        double loss = scaled_sequence_loss(model, train_seqs[order[k]],
                                           1.0 / static_cast<double>(tokens), &rng);
        if (!std::isfinite(loss)) {
          throw ParserError(ParserErrc::kDivergedLoss,
                            "non-finite training loss in epoch " + std::to_string(epoch));
        }
        epoch_loss += loss;
      }
      epoch_tokens += tokens;
      if (config.grad_clip > 0.0) nn::clip_grad_norm(model.params(), config.grad_clip);
      nn::adam_step(model.params(), adam,
                    [&](const nn::Parameter& p) { return is_trainable(p, mask); });
      ++steps;
    }

    EpochRecord record;
    record.epoch = epoch;
    record.train_loss = epoch_loss / static_cast<double>(epoch_tokens);
    record.dev_loss = mean_loss(model, dev_seqs);
    record.unfrozen_groups = plan.unfrozen_groups(epoch);
    record.trainable_groups = mask;
    record.steps = steps;
    if (!std::isfinite(record.dev_loss)) {
      throw ParserError(ParserErrc::kDivergedLoss,
                        "non-finite dev loss in epoch " + std::to_string(epoch));
    }
    history.epochs.push_back(record);

    if (history.best_epoch < 0 || record.dev_loss < history.best_dev_loss) {
      history.best_epoch = epoch;
      history.best_dev_loss = record.dev_loss;
      best_values.clear();
      for (const nn::Parameter* p : model.params().all()) best_values.push_back(p->value);
      since_best = 0;
    } else if (++since_best >= config.patience) {
      history.early_stopped = true;
      break;
    }
  }

  std::vector<nn::Parameter*> all = model.params().all();
  for (size_t i = 0; i < all.size(); ++i) all[i]->value = best_values[i];

  if (config.eval_dev_exact_match && !dev.examples.empty()) {
    size_t correct = 0;
    for (const Example& e : dev.examples) {
      if (e.question_tokens.empty()) continue;
      DecodeResult r = decode_beam(model, e.question_tokens, config.beam_size);
      if (mrl_tokens(r.mrl) == mrl_tokens(serialize_mrl(e.mrl))) ++correct;
    }
    history.dev_exact_match =
        static_cast<double>(correct) / static_cast<double>(dev.examples.size());
  }
  return history;
}

// ---- masked-language-model pretraining

MaskedBatch mask_batch(const std::vector<std::vector<int>>& batch, const Vocab& vocab,
                       double fraction, std::mt19937_64& rng) {
  MaskedBatch out;
  out.inputs = batch;
  std::vector<std::pair<int, int>> slots;
  for (size_t s = 0; s < batch.size(); ++s) {
    for (size_t p = 0; p < batch[s].size(); ++p) {
      slots.emplace_back(static_cast<int>(s), static_cast<int>(p));
    }
  }
  if (slots.empty()) return out;
  size_t count = static_cast<size_t>(std::llround(fraction * static_cast<double>(slots.size())));
  count = std::clamp<size_t>(count, 1, slots.size());
  std::shuffle(slots.begin(), slots.end(), rng);
  slots.resize(count);
  std::sort(slots.begin(), slots.end());
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int regular = vocab.size() - kFirstRegularSourceId;
  for (const auto& [s, p] : slots) {
    int& id = out.inputs[static_cast<size_t>(s)][static_cast<size_t>(p)];
    out.targets.emplace_back(s, p, id);
    double r = unit(rng);
    if (r < 0.8) {
      id = kMaskSourceId;
    } else if (r < 0.9 && regular > 0) {
      std::uniform_int_distribution<int> pick(0, regular - 1);
      id = kFirstRegularSourceId + pick(rng);
    }
  }
  return out;
}

PretrainedEncoder mlm_pretrain(const std::vector<std::vector<std::string>>& sentences,
                               const BpeModel& bpe, const nn::TransformerDims& dims,
                               const MlmConfig& config) {
  PretrainedEncoder result;
  result.dims = dims;
  result.bpe = bpe;
  result.source_vocab = source_vocab_for(bpe);
  const Vocab& vocab = result.source_vocab;

  std::vector<std::vector<int>> corpus;
  for (const auto& sentence : sentences) {
    std::vector<int> ids;
    for (const std::string& s : encode(bpe, sentence)) ids.push_back(vocab.id_or(s, kUnkSourceId));
    if (!ids.empty()) corpus.push_back(std::move(ids));
  }
  if (corpus.empty()) throw ParserError(ParserErrc::kEmptyInput, "empty pretraining corpus");

  nn::ParameterSet params;
  nn::add_encoder_params(params, dims, vocab.size());
  params.add("mlm.w", dims.model_dim, vocab.size(), -1);
  params.add("mlm.b", 1, vocab.size(), -1);
  std::mt19937_64 rng(config.seed);
  nn::init_params(params, rng);

  nn::AdamOptions adam;
  adam.learning_rate = config.learning_rate;
  std::vector<size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), 0);
  const size_t batch = static_cast<size_t>(std::max(1, config.batch_size));

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    size_t epoch_targets = 0;
    for (size_t start = 0; start < order.size(); start += batch) {
      size_t end = std::min(order.size(), start + batch);
      std::vector<std::vector<int>> rows;
      for (size_t k = start; k < end; ++k) rows.push_back(corpus[order[k]]);
      MaskedBatch masked = mask_batch(rows, vocab, config.mask_fraction, rng);
      std::vector<std::vector<int>> positions(rows.size());
      std::vector<std::vector<std::vector<int>>> golds(rows.size());
      for (const auto& [s, p, original] : masked.targets) {
        positions[static_cast<size_t>(s)].push_back(p);
        golds[static_cast<size_t>(s)].push_back({original});
      }
      const double scale = 1.0 / static_cast<double>(masked.targets.size());
      params.zero_grad();
      for (size_t s = 0; s < rows.size(); ++s) {
        if (positions[s].empty()) continue;
        Tape tape;
        nn::ForwardContext ctx{&tape, &params, dims, config.dropout, &rng};
        Var enc = nn::encoder_forward(ctx, masked.inputs[s]);
        Var picked = tape.gather_rows(enc, positions[s]);
        Var logits = tape.add_row(tape.matmul(picked, tape.param(params.at("mlm.w"))),
                                  tape.param(params.at("mlm.b")));
        Var loss = tape.marginal_nll(logits, golds[s]);
        double value = tape.value(loss)(0, 0);
        if (!std::isfinite(value)) {
          throw ParserError(ParserErrc::kDivergedLoss,
                            "non-finite pretraining loss in epoch " + std::to_string(epoch));
        }
        epoch_loss += value;
        tape.backward(tape.scale(loss, scale));
      }
      epoch_targets += masked.targets.size();
      if (config.grad_clip > 0.0) nn::clip_grad_norm(params, config.grad_clip);
      nn::adam_step(params, adam, [](const nn::Parameter&) { return true; });
    }
    result.epoch_losses.push_back(epoch_loss / static_cast<double>(epoch_targets));
  }

  for (const nn::Parameter* p : params.all()) {
    if (!p->name.starts_with("enc.")) continue;
    result.params.add(p->name, static_cast<int>(p->value.rows()),
                      static_cast<int>(p->value.cols()), p->group)
        .value = p->value;
  }
  return result;
}

void save_encoder(const PretrainedEncoder& encoder, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParserError(ParserErrc::kCheckpointError, "cannot write " + path.string());
  Json header;
  header["format"] = "mtop-encoder";
  header["dims"] = dims_to_json(encoder.dims);
  header["bpe"] = bpe_to_string(encoder.bpe);
  header["epoch_losses"] = encoder.epoch_losses;
  header["params"] = param_shapes(encoder.params);
  out << "#mtop-encoder 1\n" << header.dump() << '\n';
  write_params(out, encoder.params);
  if (!out) throw ParserError(ParserErrc::kCheckpointError, "write failed: " + path.string());
}

PretrainedEncoder load_encoder(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParserError(ParserErrc::kCheckpointError, "cannot read " + path.string());
  Json header = read_header(in, "#mtop-encoder 1");
  PretrainedEncoder encoder;
  try {
    encoder.dims = dims_from_json(header.at("dims"));
    encoder.bpe = bpe_from_string(header.at("bpe").get<std::string>());
    encoder.source_vocab = source_vocab_for(encoder.bpe);
    encoder.epoch_losses = header.at("epoch_losses").get<std::vector<double>>();
    for (const Json& s : header.at("params")) {
      encoder.params.add(s.at("name").get<std::string>(), s.at("rows").get<int>(),
                         s.at("cols").get<int>(), s.at("group").get<int>());
    }
  } catch (const Json::exception& e) {
    throw ParserError(ParserErrc::kCheckpointError, path.string() + ": bad header: " + e.what());
  }
  read_params(in, header.at("params"), encoder.params);
  return encoder;
}

// ---- decoding

DecodeResult decode_greedy(const ParserModel& model,
                           const std::vector<std::string>& question_tokens) {
  std::vector<std::string> source = encode_source(model.bpe(), question_tokens);
  if (source.empty()) throw ParserError(ParserErrc::kEmptyInput, "empty question");
  Matrix memory = encode_memory(model, source);
  std::vector<Action> actions;
  double log_prob = 0.0;
  for (int step = 0; step < model.config().max_decode_len; ++step) {
    std::vector<double> lp = next_log_probs(model, memory, actions);
    int best = static_cast<int>(std::max_element(lp.begin(), lp.end()) - lp.begin());
    log_prob += lp[static_cast<size_t>(best)];
    actions.push_back(action_from_id(model, best));
    if (actions.back().is_eos()) return finish(std::move(actions), source, log_prob, false);
  }
  return finish(std::move(actions), source, log_prob, true);
}

DecodeResult decode_beam(const ParserModel& model,
                         const std::vector<std::string>& question_tokens, int beam_size) {
  if (beam_size < 1) throw ParserError(ParserErrc::kBadConfig, "beam_size must be positive");
  std::vector<std::string> source = encode_source(model.bpe(), question_tokens);
  if (source.empty()) throw ParserError(ParserErrc::kEmptyInput, "empty question");
  Matrix memory = encode_memory(model, source);

  struct Hypothesis {
    std::vector<Action> actions;
    double log_prob = 0.0;
  };
  struct Candidate {
    size_t parent;
    int action;
    double log_prob;
  };
  auto score = [](const Hypothesis& h) {
    return h.log_prob / static_cast<double>(std::max<size_t>(1, h.actions.size()));
  };

  const size_t k = static_cast<size_t>(beam_size);
  std::vector<Hypothesis> live(1);
  std::vector<Hypothesis> finished;
  for (int step = 0; step < model.config().max_decode_len && !live.empty(); ++step) {
    std::vector<Candidate> candidates;
    for (size_t h = 0; h < live.size(); ++h) {
      std::vector<double> lp = next_log_probs(model, memory, live[h].actions);
      for (size_t a = 0; a < lp.size(); ++a) {
        if (std::isinf(lp[a])) continue;
        candidates.push_back({h, static_cast<int>(a), live[h].log_prob + lp[a]});
      }
    }
    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const Candidate& a, const Candidate& b) { return a.log_prob > b.log_prob; });
    if (candidates.size() > k) candidates.resize(k);
    std::vector<Hypothesis> next;
    for (const Candidate& c : candidates) {
      Hypothesis h{live[c.parent].actions, c.log_prob};
      h.actions.push_back(action_from_id(model, c.action));
      if (h.actions.back().is_eos()) {
        finished.push_back(std::move(h));
      } else {
        next.push_back(std::move(h));
      }
    }
    live = std::move(next);
    if (finished.size() >= k) break;
  }

  const std::vector<Hypothesis>& pool = finished.empty() ? live : finished;
  if (pool.empty()) return finish({}, source, 0.0, true);
  size_t best = 0;
  for (size_t i = 1; i < pool.size(); ++i) {
    if (score(pool[i]) > score(pool[best])) best = i;
  }
  return finish(pool[best].actions, source, pool[best].log_prob, finished.empty());
}

}  // namespace mtop

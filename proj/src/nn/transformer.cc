#include "mtop/nn/transformer.h"

#include <cmath>

namespace mtop::nn {
namespace {

std::string layer_name(const char* stack, int layer, const char* part) {
  return std::string(stack) + "." + std::to_string(layer) + "." + part;
}

void add_attention(ParameterSet& params, const std::string& prefix, int d, int group) {
  for (const char* m : {"wq", "wk", "wv", "wo"}) params.add(prefix + "." + m, d, d, group);
  for (const char* b : {"bq", "bk", "bv", "bo"}) params.add(prefix + "." + b, 1, d, group);
}

void add_norm(ParameterSet& params, const std::string& prefix, int d, int group) {
  params.add(prefix + ".gain", 1, d, group);
  params.add(prefix + ".bias", 1, d, group);
}

void add_ffn(ParameterSet& params, const std::string& prefix, int d, int ffn, int group) {
  params.add(prefix + ".w1", d, ffn, group);
  params.add(prefix + ".b1", 1, ffn, group);
  params.add(prefix + ".w2", ffn, d, group);
  params.add(prefix + ".b2", 1, d, group);
}

Var linear(const ForwardContext& ctx, Var x, const std::string& w, const std::string& b) {
  Tape& t = *ctx.tape;
  return t.add_row(t.matmul(x, t.param(ctx.params->at(w))), t.param(ctx.params->at(b)));
}

Var norm(const ForwardContext& ctx, Var x, const std::string& prefix) {
  Tape& t = *ctx.tape;
  return t.layer_norm(x, t.param(ctx.params->at(prefix + ".gain")),
                      t.param(ctx.params->at(prefix + ".bias")));
}

Var drop(const ForwardContext& ctx, Var x) {
  if (ctx.rng == nullptr || ctx.dropout <= 0.0) return x;
  return ctx.tape->dropout(x, ctx.dropout, *ctx.rng);
}

Var attention(const ForwardContext& ctx, const std::string& prefix, Var query, Var kv,
              bool causal) {
  Tape& t = *ctx.tape;
  const int d = ctx.dims.model_dim;
  const int heads = ctx.dims.heads;
  const int dh = d / heads;
  Var q = linear(ctx, query, prefix + ".wq", prefix + ".bq");
  Var k = linear(ctx, kv, prefix + ".wk", prefix + ".bk");
  Var v = linear(ctx, kv, prefix + ".wv", prefix + ".bv");
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Var> outputs;
  outputs.reserve(static_cast<size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    Var qh = heads == 1 ? q : t.slice_cols(q, h * dh, dh);
    Var kh = heads == 1 ? k : t.slice_cols(k, h * dh, dh);
    Var vh = heads == 1 ? v : t.slice_cols(v, h * dh, dh);
    Var weights = t.softmax_rows(t.scale(t.matmul_nt(qh, kh), scale), causal);
    outputs.push_back(t.matmul(weights, vh));
  }
  Var joined = heads == 1 ? outputs.front() : t.concat_cols(outputs);
  return linear(ctx, joined, prefix + ".wo", prefix + ".bo");
}

Var feed_forward(const ForwardContext& ctx, const std::string& prefix, Var x) {
  Var hidden = ctx.tape->relu(linear(ctx, x, prefix + ".w1", prefix + ".b1"));
  return linear(ctx, hidden, prefix + ".w2", prefix + ".b2");
}

}  // namespace

void add_encoder_params(ParameterSet& params, const TransformerDims& dims, int source_vocab) {
  const int d = dims.model_dim;
  params.add("enc.embed", source_vocab, d, 0);
  for (int l = 0; l < dims.enc_layers; ++l) {
    const int group = l + 1;
    add_norm(params, layer_name("enc", l, "norm1"), d, group);
    add_attention(params, layer_name("enc", l, "self"), d, group);
    add_norm(params, layer_name("enc", l, "norm2"), d, group);
    add_ffn(params, layer_name("enc", l, "ffn"), d, dims.ffn_dim, group);
  }
  add_norm(params, "enc.final_norm", d, dims.enc_layers);
}

void add_decoder_params(ParameterSet& params, const TransformerDims& dims, int input_vocab) {
  const int d = dims.model_dim;
  params.add("dec.embed", input_vocab, d, -1);
  for (int l = 0; l < dims.dec_layers; ++l) {
    add_norm(params, layer_name("dec", l, "norm1"), d, -1);
    add_attention(params, layer_name("dec", l, "self"), d, -1);
    add_norm(params, layer_name("dec", l, "norm2"), d, -1);
    add_attention(params, layer_name("dec", l, "cross"), d, -1);
    add_norm(params, layer_name("dec", l, "norm3"), d, -1);
    add_ffn(params, layer_name("dec", l, "ffn"), d, dims.ffn_dim, -1);
  }
  add_norm(params, "dec.final_norm", d, -1);
}

void init_params(ParameterSet& params, std::mt19937_64& rng) {
  for (Parameter* p : params.all()) {
    const std::string& n = p->name;
    if (n.ends_with(".gain")) {
      p->value.setOnes();
    } else if (p->value.rows() == 1) {
      p->value.setZero();
    } else {
      const double fan = static_cast<double>(p->value.rows() + p->value.cols());
      const double limit = n.ends_with(".embed") ? std::sqrt(3.0 / p->value.cols())
                                                 : std::sqrt(6.0 / fan);
      std::uniform_real_distribution<double> uniform(-limit, limit);
      for (Eigen::Index i = 0; i < p->value.size(); ++i) p->value.data()[i] = uniform(rng);
    }
  }
}

Matrix sinusoidal_positions(int length, int dim) {
  Matrix pe(length, dim);
  for (int pos = 0; pos < length; ++pos) {
    for (int i = 0; i < dim; i += 2) {
      double angle = pos / std::pow(10000.0, static_cast<double>(i) / dim);
      pe(pos, i) = std::sin(angle);
      if (i + 1 < dim) pe(pos, i + 1) = std::cos(angle);
    }
  }
  return pe;
}

Var encoder_forward(const ForwardContext& ctx, const std::vector<int>& ids) {
  Tape& t = *ctx.tape;
  const int d = ctx.dims.model_dim;
  Var x = t.scale(t.gather_rows(t.param(ctx.params->at("enc.embed")), ids),
                  std::sqrt(static_cast<double>(d)));
  x = t.add(x, t.input(sinusoidal_positions(static_cast<int>(ids.size()), d)));
  x = drop(ctx, x);
  for (int l = 0; l < ctx.dims.enc_layers; ++l) {
    Var h = norm(ctx, x, layer_name("enc", l, "norm1"));
    x = t.add(x, drop(ctx, attention(ctx, layer_name("enc", l, "self"), h, h, false)));
    h = norm(ctx, x, layer_name("enc", l, "norm2"));
    x = t.add(x, drop(ctx, feed_forward(ctx, layer_name("enc", l, "ffn"), h)));
  }
  return norm(ctx, x, "enc.final_norm");
}

Var decoder_forward(const ForwardContext& ctx, Var inputs, Var memory) {
  Tape& t = *ctx.tape;
  const int d = ctx.dims.model_dim;
  const int length = static_cast<int>(t.value(inputs).rows());
  Var x = t.add(inputs, t.input(sinusoidal_positions(length, d)));
  x = drop(ctx, x);
  for (int l = 0; l < ctx.dims.dec_layers; ++l) {
    Var h = norm(ctx, x, layer_name("dec", l, "norm1"));
    x = t.add(x, drop(ctx, attention(ctx, layer_name("dec", l, "self"), h, h, true)));
    h = norm(ctx, x, layer_name("dec", l, "norm2"));
    x = t.add(x, drop(ctx, attention(ctx, layer_name("dec", l, "cross"), h, memory, false)));
    h = norm(ctx, x, layer_name("dec", l, "norm3"));
    x = t.add(x, drop(ctx, feed_forward(ctx, layer_name("dec", l, "ffn"), h)));
  }
  return norm(ctx, x, "dec.final_norm");
}

}  // namespace mtop::nn

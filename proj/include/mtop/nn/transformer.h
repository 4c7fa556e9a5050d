#ifndef MTOP_NN_TRANSFORMER_H_
#define MTOP_NN_TRANSFORMER_H_

// Pre-norm Transformer encoder and decoder stacks built on the Tape.

#include <random>
#include <string>
#include <vector>

#include "mtop/nn/tape.h"

namespace mtop::nn {

struct TransformerDims {
  int model_dim = 128;
  int heads = 4;
  int ffn_dim = 256;
  int enc_layers = 2;
  int dec_layers = 2;
};

// Freeze groups: 0 is the source embedding, l + 1 is encoder layer l. The
// final encoder norm belongs to the top layer's group.
void add_encoder_params(ParameterSet& params, const TransformerDims& dims, int source_vocab);
void add_decoder_params(ParameterSet& params, const TransformerDims& dims, int input_vocab);

// Uniform Glorot initialization for weights, ones/zeros for norms and biases.
void init_params(ParameterSet& params, std::mt19937_64& rng);

Matrix sinusoidal_positions(int length, int dim);

// When rng is null, dropout is disabled.
struct ForwardContext {
  Tape* tape;
  ParameterSet* params;
  TransformerDims dims;
  double dropout = 0.0;
  std::mt19937_64* rng = nullptr;
};

Var encoder_forward(const ForwardContext& ctx, const std::vector<int>& ids);

// inputs is the T x d decoder input (embeddings, before positions).
Var decoder_forward(const ForwardContext& ctx, Var inputs, Var memory);

}  // namespace mtop::nn

#endif  // MTOP_NN_TRANSFORMER_H_

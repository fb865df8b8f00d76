#pragma once

// Differentiable primitives. Every forward op has a matching backward that
// maps the output gradient to gradients of each input.

#include <cstddef>

#include "gafnet/tensor.hpp"

namespace gafnet::ops {

// [m x k] * [k x n] -> [m x n]
Tensor matmul(const Tensor& a, const Tensor& b);
struct MatmulGrads {
  Tensor da, db;
};
MatmulGrads matmul_backward(const Tensor& a, const Tensor& b, const Tensor& dout);

Tensor transpose(const Tensor& x);

// x: [cin x T], kernels: [cout x cin x k] with k odd, bias: [cout].
// Stride 1, zero "same" padding of (k - 1) / 2. Cross-correlation.
Tensor conv1d(const Tensor& x, const Tensor& kernels, const Tensor& bias);
struct ConvGrads {
  Tensor dx, dkernels, dbias;
};
ConvGrads conv1d_backward(const Tensor& x, const Tensor& kernels, const Tensor& dout);

// x: [cin x H x W], kernels: [cout x cin x k x k], bias: [cout].
// stride 1 uses "same" padding (k odd); stride > 1 uses "valid".
Tensor conv2d(const Tensor& x, const Tensor& kernels, const Tensor& bias, std::size_t stride);
ConvGrads conv2d_backward(const Tensor& x, const Tensor& kernels, const Tensor& dout, std::size_t stride);
std::size_t conv2d_output_side(std::size_t side, std::size_t kernel, std::size_t stride);

Tensor relu(const Tensor& x);
Tensor relu_backward(const Tensor& x, const Tensor& dout);

Tensor softmax(const Tensor& x, std::size_t axis);
// Takes the softmax output y.
Tensor softmax_backward(const Tensor& y, const Tensor& dout, std::size_t axis);

inline constexpr double kLayerNormEps = 1e-5;

// Normalizes over the last axis, then applies per-feature gain and bias.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias);
struct LayerNormGrads {
  Tensor dx, dgain, dbias;
};
LayerNormGrads layer_norm_backward(const Tensor& x, const Tensor& gain, const Tensor& dout);

// [c x ...] -> [c], mean over all trailing axes.
Tensor global_avg_pool(const Tensor& x);
Tensor global_avg_pool_backward(const Shape& input_shape, const Tensor& dout);

Tensor concat(const Tensor& a, const Tensor& b, std::size_t axis);
struct ConcatGrads {
  Tensor da, db;
};
ConcatGrads concat_backward(const Shape& a_shape, const Shape& b_shape, const Tensor& dout, std::size_t axis);

// x: [din] or [n x din], weight: [din x dout], bias: [dout].
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);
struct LinearGrads {
  Tensor dx, dweight, dbias;
};
LinearGrads linear_backward(const Tensor& x, const Tensor& weight, const Tensor& dout);

// One LSTM cell. Gate blocks in the 4h axis are ordered input, forget,
// candidate, output.
struct LstmWeights {
  Tensor input_weight;      // [din x 4h]
  Tensor recurrent_weight;  // [h x 4h]
  Tensor bias;              // [4h]

  std::size_t hidden() const { return recurrent_weight.dim(0); }
};

struct LstmTrace {
  Tensor input_gate, forget_gate, candidate, output_gate;  // [T x h], processing order
  Tensor cell, cell_tanh, hidden;                          // [T x h], processing order
};

struct BiLstmTrace {
  LstmTrace forward, backward;
};

// x: [T x din] -> [T x 2h]; row t is [forward h_t, backward h_t].
Tensor bilstm_forward(const Tensor& x, const LstmWeights& fwd, const LstmWeights& bwd,
                      BiLstmTrace* trace = nullptr);

struct LstmGrads {
  Tensor dinput_weight, drecurrent_weight, dbias;
};
struct BiLstmGrads {
  Tensor dx;
  LstmGrads forward, backward;
};
BiLstmGrads bilstm_backward(const Tensor& x, const LstmWeights& fwd, const LstmWeights& bwd,
                            const BiLstmTrace& trace, const Tensor& dout);

// Single-head scaled dot-product attention over channel-group tokens:
// softmax((tq Wq)(tkv Wk)^T / sqrt(d)) (tkv Wv).
struct AttentionWeights {
  Tensor query;  // [cq x d]
  Tensor key;    // [ckv x d]
  Tensor value;  // [ckv x d]

  std::size_t dim() const { return query.dim(1); }
};

struct AttentionTrace {
  Tensor q, k, v;   // projected tokens
  Tensor weights;   // [gq x gkv], row-stochastic
};

Tensor cross_attention(const Tensor& tokens_q, const Tensor& tokens_kv, const AttentionWeights& w,
                       AttentionTrace* trace = nullptr);
inline Tensor intra_attention(const Tensor& tokens, const AttentionWeights& w, AttentionTrace* trace = nullptr) {
  return cross_attention(tokens, tokens, w, trace);
}

struct AttentionGrads {
  Tensor dtokens_q, dtokens_kv;
  Tensor dquery, dkey, dvalue;
};
AttentionGrads cross_attention_backward(const Tensor& tokens_q, const Tensor& tokens_kv,
                                        const AttentionWeights& w, const AttentionTrace& trace,
                                        const Tensor& dout);

}  // namespace gafnet::ops

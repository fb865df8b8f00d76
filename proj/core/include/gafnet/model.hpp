#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "gafnet/gaf.hpp"
#include "gafnet/ops.hpp"
#include "gafnet/tensor.hpp"

namespace gafnet::model {

struct Conv1dLayer {
  std::size_t channels = 0;
  std::size_t kernel = 0;
  bool operator==(const Conv1dLayer&) const = default;
};

struct Conv2dLayer {
  std::size_t channels = 0;
  std::size_t kernel = 0;
  std::size_t stride = 1;
  bool operator==(const Conv2dLayer&) const = default;
};

enum class Variant : std::uint8_t {
  kFull = 0,
  kNoDualAttention = 1,
  kNoCrossChannel = 2,
  kTimeOnly = 3,
  kGafOnly = 4,
};

inline constexpr std::array<Variant, 5> kAllVariants{Variant::kFull, Variant::kNoDualAttention,
                                                     Variant::kNoCrossChannel, Variant::kTimeOnly,
                                                     Variant::kGafOnly};

std::string_view to_string(Variant v);
// Accepts full, no_dual_attention (no_dual), no_cross_channel (no_cross),
// time_only, gaf_only. Throws Error(kUnknownVariant).
Variant parse_variant(std::string_view name);

struct ModelConfig {
  std::size_t input_length = 96;
  std::vector<Conv1dLayer> cnn1d_layers{{32, 7}, {64, 5}};
  std::size_t lstm_hidden = 64;
  std::vector<Conv2dLayer> cnn2d_layers{{16, 3, 2}, {32, 3, 2}, {64, 3, 2}};
  std::size_t groups = 8;
  std::size_t attn_dim = 16;
  std::size_t mlp_hidden = 128;
  std::size_t num_classes = 2;
  Variant variant = Variant::kFull;

  std::size_t temporal_dim() const { return 2 * lstm_hidden; }
  std::size_t spatial_dim() const { return cnn2d_layers.empty() ? 1 : cnn2d_layers.back().channels; }
  std::size_t fusion_dim() const;
  bool uses_temporal() const { return variant != Variant::kGafOnly; }
  bool uses_spatial() const { return variant != Variant::kTimeOnly; }
  bool uses_attention() const {
    return variant == Variant::kFull || variant == Variant::kNoCrossChannel;
  }

  // Throws Error(kInvalidArgument / kIndivisible) on inconsistent fields.
  void validate() const;

  bool operator==(const ModelConfig&) const = default;
};

// The same configuration rewired for an ablation variant.
ModelConfig ablation_variant(ModelConfig cfg, Variant variant);

struct AttentionParams {
  ParamTensor query, key, value;  // token channels -> attn_dim
  ParamTensor output;             // attn_dim -> query token channels

  ops::AttentionWeights weights() const { return {query.value, key.value, value.value}; }
};

struct ModelParams {
  std::vector<ParamTensor> conv1d_kernels, conv1d_bias;
  ParamTensor lstm_fwd_input, lstm_fwd_recurrent, lstm_fwd_bias;
  ParamTensor lstm_bwd_input, lstm_bwd_recurrent, lstm_bwd_bias;
  std::vector<ParamTensor> conv2d_kernels, conv2d_bias;
  AttentionParams intra_temporal, intra_spatial;
  AttentionParams cross_temporal;  // temporal queries over spatial keys/values
  AttentionParams cross_spatial;   // spatial queries over temporal keys/values
  ParamTensor norm_temporal_gain, norm_temporal_bias;
  ParamTensor norm_spatial_gain, norm_spatial_bias;
  ParamTensor mlp_weight, mlp_bias;
  ParamTensor classifier_weight, classifier_bias;

  // Fixed order used by serialization and the optimizer: conv1d (kernel,
  // bias) per layer; forward LSTM (input, recurrent, bias); backward LSTM;
  // conv2d (kernel, bias) per layer; attention blocks intra_t, intra_s,
  // cross_t, cross_s each (query, key, value, output); layer norms (t gain,
  // t bias, s gain, s bias); mlp (weight, bias); classifier (weight, bias).
  std::vector<ParamTensor*> tensors();
  std::vector<const ParamTensor*> tensors() const;

  void zero_grad();
  std::size_t parameter_count() const;

  ops::LstmWeights lstm_forward() const {
    return {lstm_fwd_input.value, lstm_fwd_recurrent.value, lstm_fwd_bias.value};
  }
  ops::LstmWeights lstm_backward() const {
    return {lstm_bwd_input.value, lstm_bwd_recurrent.value, lstm_bwd_bias.value};
  }
};

// Shapes from cfg, values uniform(-sqrt(1/fan_in), +sqrt(1/fan_in)) drawn in
// tensors() order; LSTM forget-gate biases start at 1, layer norms at
// unit gain and zero bias.
ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed);

// All-zero parameters of the right shapes (layer-norm gains included).
ModelParams zero_params(const ModelConfig& cfg);

// ---- temporal branch ----

struct TemporalTrace {
  Tensor input;                      // [1 x w]
  std::vector<Tensor> conv_pre;      // pre-activation per layer
  std::vector<Tensor> conv_post;     // post-ReLU per layer
  Tensor sequence;                   // [w x c], BiLSTM input
  ops::BiLstmTrace lstm;
  Tensor lstm_out;                   // [w x 2h]
  Tensor pooled_in;                  // [2h x w]
};

Tensor temporal_branch(std::span<const double> series, const ModelParams& params, const ModelConfig& cfg,
                       TemporalTrace* trace = nullptr);
// Accumulates parameter gradients; returns d(series).
std::vector<double> temporal_branch_backward(const TemporalTrace& trace, const Tensor& dfeature,
                                             ModelParams& params, const ModelConfig& cfg);

// ---- spatial branch ----

struct SpatialTrace {
  Tensor input;                   // [1 x w x w]
  std::vector<Tensor> conv_pre;
  std::vector<Tensor> conv_post;
};

Tensor spatial_branch(const gaf::GafImage& img, const ModelParams& params, const ModelConfig& cfg,
                      SpatialTrace* trace = nullptr);
Tensor spatial_branch(const Tensor& image, const ModelParams& params, const ModelConfig& cfg,
                      SpatialTrace* trace = nullptr);
// Accumulates parameter gradients; returns d(image) as [1 x w x w].
Tensor spatial_branch_backward(const SpatialTrace& trace, const Tensor& dfeature, ModelParams& params,
                               const ModelConfig& cfg);

// ---- dual-layer attention ----

// [d] -> [g x d/g], order preserved. Throws Error(kIndivisible).
Tensor channel_split(const Tensor& feature, std::size_t groups);
Tensor channel_merge(const Tensor& tokens);

struct AttentionBlockTrace {
  ops::AttentionTrace attention;
  Tensor attended;   // [g x attn_dim], before output projection
};

struct FuseTrace {
  Tensor temporal, spatial;                // F_t, F_s
  Tensor tokens_temporal, tokens_spatial;  // channel-group tokens
  AttentionBlockTrace intra_t, intra_s, cross_t, cross_s;
  Tensor residual_temporal, residual_spatial;  // F + A + C, before layer norm
};

// Returns (F_t', F_s').
std::pair<Tensor, Tensor> dual_attention_fuse(const Tensor& temporal, const Tensor& spatial,
                                              const ModelParams& params, const ModelConfig& cfg,
                                              FuseTrace* trace = nullptr);
// Accumulates parameter gradients; returns (dF_t, dF_s).
std::pair<Tensor, Tensor> dual_attention_fuse_backward(const FuseTrace& trace, const Tensor& dtemporal_out,
                                                       const Tensor& dspatial_out, ModelParams& params,
                                                       const ModelConfig& cfg);

// ---- fusion head ----

struct HeadTrace {
  Tensor fusion_in;   // concatenated (or single-branch) features
  Tensor hidden_pre;  // MLP pre-activation
  Tensor fused;       // F_fused
  Tensor logits;
  Tensor probabilities;
};

Tensor fuse_and_classify(const Tensor& fusion_in, const ModelParams& params, HeadTrace* trace = nullptr);
// Accumulates parameter gradients; returns d(fusion_in).
Tensor fuse_and_classify_backward(const HeadTrace& trace, const Tensor& dlogits, ModelParams& params);

// ---- whole model ----

struct ForwardTrace {
  TemporalTrace temporal_branch;
  SpatialTrace spatial_branch;
  FuseTrace fuse;
  HeadTrace head;
  Tensor temporal_features, spatial_features;  // F_t, F_s
  Tensor temporal_attended, spatial_attended;  // F_t', F_s'

  const Tensor& probabilities() const { return head.probabilities; }
};

ForwardTrace forward(std::span<const double> series, const gaf::GafImage& img, const ModelParams& params,
                     const ModelConfig& cfg);

// Accumulates scale * dL/dtheta for the cross-entropy of this sample.
void backward(const ForwardTrace& trace, std::size_t label, ModelParams& params, const ModelConfig& cfg,
              double scale = 1.0);
// Same, starting from an arbitrary logit gradient.
void backward_from_logits(const ForwardTrace& trace, const Tensor& dlogits, ModelParams& params,
                          const ModelConfig& cfg);

std::size_t predict(const ForwardTrace& trace);

// ---- serialization ----

inline constexpr std::uint16_t kFormatVersion = 1;

void save_model(const std::filesystem::path& path, const ModelConfig& cfg, const ModelParams& params);
std::vector<unsigned char> serialize_model(const ModelConfig& cfg, const ModelParams& params);

struct LoadedModel {
  ModelConfig config;
  ModelParams params;
};
LoadedModel load_model(const std::filesystem::path& path);
LoadedModel deserialize_model(std::span<const unsigned char> bytes);

}  // namespace gafnet::model

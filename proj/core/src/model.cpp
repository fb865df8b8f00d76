#include "gafnet/model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "gafnet/error.hpp"
#include "gafnet/rng.hpp"

namespace gafnet::model {

namespace {

void accumulate(ParamTensor& p, const Tensor& g) { p.grad += g; }

Tensor flatten(const Tensor& t) { return t.reshaped({t.size()}); }

}  // namespace

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::kFull: return "full";
    case Variant::kNoDualAttention: return "no_dual_attention";
    case Variant::kNoCrossChannel: return "no_cross_channel";
    case Variant::kTimeOnly: return "time_only";
    case Variant::kGafOnly: return "gaf_only";
  }
  return "unknown";
}

Variant parse_variant(std::string_view name) {
  if (name == "full") return Variant::kFull;
  if (name == "no_dual_attention" || name == "no_dual") return Variant::kNoDualAttention;
  if (name == "no_cross_channel" || name == "no_cross") return Variant::kNoCrossChannel;
  if (name == "time_only") return Variant::kTimeOnly;
  if (name == "gaf_only") return Variant::kGafOnly;
  throw Error(ErrorKind::kUnknownVariant, "unknown ablation variant '" + std::string(name) + "'");
}

std::size_t ModelConfig::fusion_dim() const {
  switch (variant) {
    case Variant::kTimeOnly: return temporal_dim();
    case Variant::kGafOnly: return spatial_dim();
    default: return temporal_dim() + spatial_dim();
  }
}

void ModelConfig::validate() const {
  auto bad = [](const std::string& what) { throw Error(ErrorKind::kInvalidArgument, "model config: " + what); };
  if (input_length < 2) bad("input_length must be >= 2");
  if (lstm_hidden == 0) bad("lstm_hidden must be positive");
  if (cnn2d_layers.empty()) bad("at least one conv2d layer is required");
  for (const auto& l : cnn1d_layers) {
    if (l.channels == 0 || l.kernel == 0) bad("conv1d layers need positive channels and kernel");
    if (l.kernel % 2 == 0) bad("conv1d kernels must be odd");
  }
  std::size_t side = input_length;
  for (const auto& l : cnn2d_layers) {
    if (l.channels == 0 || l.kernel == 0 || l.stride == 0) bad("conv2d layers need positive fields");
    if (l.stride == 1 && l.kernel % 2 == 0) bad("stride-1 conv2d kernels must be odd");
    if (l.stride > 1 && side < l.kernel) bad("conv2d stack shrinks the image below the kernel size");
    side = ops::conv2d_output_side(side, l.kernel, l.stride);
  }
  if (groups == 0) bad("groups must be positive");
  if (attn_dim == 0) bad("attn_dim must be positive");
  if (mlp_hidden == 0) bad("mlp_hidden must be positive");
  if (num_classes < 2) bad("num_classes must be >= 2");
  if (temporal_dim() % groups != 0)
    throw Error(ErrorKind::kIndivisible, "temporal dim " + std::to_string(temporal_dim()) +
                                             " not divisible by groups " + std::to_string(groups));
  if (spatial_dim() % groups != 0)
    throw Error(ErrorKind::kIndivisible, "spatial dim " + std::to_string(spatial_dim()) +
                                             " not divisible by groups " + std::to_string(groups));
}

ModelConfig ablation_variant(ModelConfig cfg, Variant variant) {
  cfg.variant = variant;
  cfg.validate();
  return cfg;
}

std::vector<ParamTensor*> ModelParams::tensors() {
  std::vector<ParamTensor*> out;
  for (std::size_t l = 0; l < conv1d_kernels.size(); ++l) {
    out.push_back(&conv1d_kernels[l]);
    out.push_back(&conv1d_bias[l]);
  }
  for (ParamTensor* p : {&lstm_fwd_input, &lstm_fwd_recurrent, &lstm_fwd_bias, &lstm_bwd_input,
                         &lstm_bwd_recurrent, &lstm_bwd_bias})
    out.push_back(p);
  for (std::size_t l = 0; l < conv2d_kernels.size(); ++l) {
    out.push_back(&conv2d_kernels[l]);
    out.push_back(&conv2d_bias[l]);
  }
  for (AttentionParams* a : {&intra_temporal, &intra_spatial, &cross_temporal, &cross_spatial}) {
    out.push_back(&a->query);
    out.push_back(&a->key);
    out.push_back(&a->value);
    out.push_back(&a->output);
  }
  for (ParamTensor* p : {&norm_temporal_gain, &norm_temporal_bias, &norm_spatial_gain, &norm_spatial_bias,
                         &mlp_weight, &mlp_bias, &classifier_weight, &classifier_bias})
    out.push_back(p);
  return out;
}

std::vector<const ParamTensor*> ModelParams::tensors() const {
  auto mut = const_cast<ModelParams*>(this)->tensors();
  return {mut.begin(), mut.end()};
}

void ModelParams::zero_grad() {
  for (ParamTensor* p : tensors()) p->zero_grad();
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const ParamTensor* p : tensors()) n += p->value.size();
  return n;
}

ModelParams zero_params(const ModelConfig& cfg) {
  cfg.validate();
  ModelParams p;
  auto param = [](Shape s) { return ParamTensor(Tensor(std::move(s))); };

  std::size_t channels = 1;
  for (const auto& l : cfg.cnn1d_layers) {
    p.conv1d_kernels.push_back(param({l.channels, channels, l.kernel}));
    p.conv1d_bias.push_back(param({l.channels}));
    channels = l.channels;
  }
  const std::size_t h = cfg.lstm_hidden;
  p.lstm_fwd_input = param({channels, 4 * h});
  p.lstm_fwd_recurrent = param({h, 4 * h});
  p.lstm_fwd_bias = param({4 * h});
  p.lstm_bwd_input = param({channels, 4 * h});
  p.lstm_bwd_recurrent = param({h, 4 * h});
  p.lstm_bwd_bias = param({4 * h});

  channels = 1;
  for (const auto& l : cfg.cnn2d_layers) {
    p.conv2d_kernels.push_back(param({l.channels, channels, l.kernel, l.kernel}));
    p.conv2d_bias.push_back(param({l.channels}));
    channels = l.channels;
  }

  const std::size_t ct = cfg.temporal_dim() / cfg.groups, cs = cfg.spatial_dim() / cfg.groups;
  const std::size_t d = cfg.attn_dim;
  auto attention = [&](std::size_t cq, std::size_t ckv) {
    return AttentionParams{param({cq, d}), param({ckv, d}), param({ckv, d}), param({d, cq})};
  };
  p.intra_temporal = attention(ct, ct);
  p.intra_spatial = attention(cs, cs);
  p.cross_temporal = attention(ct, cs);
  p.cross_spatial = attention(cs, ct);

  p.norm_temporal_gain = param({cfg.temporal_dim()});
  p.norm_temporal_bias = param({cfg.temporal_dim()});
  p.norm_spatial_gain = param({cfg.spatial_dim()});
  p.norm_spatial_bias = param({cfg.spatial_dim()});
  p.mlp_weight = param({cfg.fusion_dim(), cfg.mlp_hidden});
  p.mlp_bias = param({cfg.mlp_hidden});
  p.classifier_weight = param({cfg.mlp_hidden, cfg.num_classes});
  p.classifier_bias = param({cfg.num_classes});
  return p;
}

ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed) {
  ModelParams p = zero_params(cfg);
  Rng rng(seed);
  const ParamTensor* norms[] = {&p.norm_temporal_gain, &p.norm_temporal_bias, &p.norm_spatial_gain,
                                &p.norm_spatial_bias};
  double bound = 1.0;
  for (ParamTensor* t : p.tensors()) {
    if (std::find(std::begin(norms), std::end(norms), t) != std::end(norms)) continue;
    const Shape& s = t->value.shape();
    // Biases reuse the bound of the weight tensor that precedes them.
    if (s.size() > 1) {
      std::size_t fan_in = 1;
      for (std::size_t i = (s.size() == 2 ? 0 : 1); i < (s.size() == 2 ? 1 : s.size()); ++i) fan_in *= s[i];
      bound = std::sqrt(1.0 / static_cast<double>(fan_in));
    }
    for (double& v : t->value.data()) v = rng.uniform(-bound, bound);
  }
  p.norm_temporal_gain.value.fill(1.0);
  p.norm_spatial_gain.value.fill(1.0);
  const std::size_t h = cfg.lstm_hidden;
  for (std::size_t j = h; j < 2 * h; ++j) {
    p.lstm_fwd_bias.value[j] = 1.0;
    p.lstm_bwd_bias.value[j] = 1.0;
  }
  return p;
}

// ---- temporal branch ----

Tensor temporal_branch(std::span<const double> series, const ModelParams& params, const ModelConfig& cfg,
                       TemporalTrace* trace) {
  TemporalTrace local;
  TemporalTrace& tr = trace ? *trace : local;
  tr.input = Tensor({1, series.size()}, std::vector<double>(series.begin(), series.end()));
  tr.conv_pre.clear();
  tr.conv_post.clear();
  const Tensor* x = &tr.input;
  for (std::size_t l = 0; l < cfg.cnn1d_layers.size(); ++l) {
    tr.conv_pre.push_back(ops::conv1d(*x, params.conv1d_kernels[l].value, params.conv1d_bias[l].value));
    tr.conv_post.push_back(ops::relu(tr.conv_pre.back()));
    x = &tr.conv_post.back();
  }
  tr.sequence = ops::transpose(*x);
  tr.lstm_out = ops::bilstm_forward(tr.sequence, params.lstm_forward(), params.lstm_backward(), &tr.lstm);
  tr.pooled_in = ops::transpose(tr.lstm_out);
  return ops::global_avg_pool(tr.pooled_in);
}

std::vector<double> temporal_branch_backward(const TemporalTrace& tr, const Tensor& dfeature,
                                             ModelParams& params, const ModelConfig& cfg) {
  const Tensor dpooled = ops::global_avg_pool_backward(tr.pooled_in.shape(), dfeature);
  const Tensor dlstm_out = ops::transpose(dpooled);
  const ops::BiLstmGrads lg =
      ops::bilstm_backward(tr.sequence, params.lstm_forward(), params.lstm_backward(), tr.lstm, dlstm_out);
  accumulate(params.lstm_fwd_input, lg.forward.dinput_weight);
  accumulate(params.lstm_fwd_recurrent, lg.forward.drecurrent_weight);
  accumulate(params.lstm_fwd_bias, lg.forward.dbias);
  accumulate(params.lstm_bwd_input, lg.backward.dinput_weight);
  accumulate(params.lstm_bwd_recurrent, lg.backward.drecurrent_weight);
  accumulate(params.lstm_bwd_bias, lg.backward.dbias);

  Tensor dx = ops::transpose(lg.dx);
  for (std::size_t l = cfg.cnn1d_layers.size(); l-- > 0;) {
    const Tensor dpre = ops::relu_backward(tr.conv_pre[l], dx);
    const Tensor& input = l == 0 ? tr.input : tr.conv_post[l - 1];
    ops::ConvGrads cg = ops::conv1d_backward(input, params.conv1d_kernels[l].value, dpre);
    accumulate(params.conv1d_kernels[l], cg.dkernels);
    accumulate(params.conv1d_bias[l], cg.dbias);
    dx = std::move(cg.dx);
  }
  return dx.values();
}

// ---- spatial branch ----

Tensor spatial_branch(const gaf::GafImage& img, const ModelParams& params, const ModelConfig& cfg,
                      SpatialTrace* trace) {
  const std::size_t w = img.side();
  return spatial_branch(Tensor({1, w, w}, std::vector<double>(img.data().begin(), img.data().end())), params,
                        cfg, trace);
}

Tensor spatial_branch(const Tensor& image, const ModelParams& params, const ModelConfig& cfg,
                      SpatialTrace* trace) {
  SpatialTrace local;
  SpatialTrace& tr = trace ? *trace : local;
  require_rank(image, 3, "spatial branch image");
  tr.input = image;
  tr.conv_pre.clear();
  tr.conv_post.clear();
  const Tensor* x = &tr.input;
  for (std::size_t l = 0; l < cfg.cnn2d_layers.size(); ++l) {
    tr.conv_pre.push_back(ops::conv2d(*x, params.conv2d_kernels[l].value, params.conv2d_bias[l].value,
                                      cfg.cnn2d_layers[l].stride));
    tr.conv_post.push_back(ops::relu(tr.conv_pre.back()));
    x = &tr.conv_post.back();
  }
  return ops::global_avg_pool(*x);
}

Tensor spatial_branch_backward(const SpatialTrace& tr, const Tensor& dfeature, ModelParams& params,
                               const ModelConfig& cfg) {
  Tensor dx = ops::global_avg_pool_backward(tr.conv_post.back().shape(), dfeature);
  for (std::size_t l = cfg.cnn2d_layers.size(); l-- > 0;) {
    const Tensor dpre = ops::relu_backward(tr.conv_pre[l], dx);
    const Tensor& input = l == 0 ? tr.input : tr.conv_post[l - 1];
    ops::ConvGrads cg =
        ops::conv2d_backward(input, params.conv2d_kernels[l].value, dpre, cfg.cnn2d_layers[l].stride);
    accumulate(params.conv2d_kernels[l], cg.dkernels);
    accumulate(params.conv2d_bias[l], cg.dbias);
    dx = std::move(cg.dx);
  }
  return dx;
}

// ---- dual-layer attention ----

Tensor channel_split(const Tensor& feature, std::size_t groups) {
  require_rank(feature, 1, "channel_split input");
  if (groups == 0 || feature.size() % groups != 0)
    throw Error(ErrorKind::kIndivisible, "feature of size " + std::to_string(feature.size()) +
                                             " cannot be split into " + std::to_string(groups) + " groups");
  return feature.reshaped({groups, feature.size() / groups});
}

Tensor channel_merge(const Tensor& tokens) { return flatten(tokens); }

namespace {

Tensor attend(const Tensor& tokens_q, const Tensor& tokens_kv, const AttentionParams& p,
              AttentionBlockTrace& tr) {
  tr.attended = ops::cross_attention(tokens_q, tokens_kv, p.weights(), &tr.attention);
  return ops::matmul(tr.attended, p.output.value);
}

// Returns (dtokens_q, dtokens_kv).
std::pair<Tensor, Tensor> attend_backward(const Tensor& tokens_q, const Tensor& tokens_kv, AttentionParams& p,
                                          const AttentionBlockTrace& tr, const Tensor& dout) {
  const ops::MatmulGrads og = ops::matmul_backward(tr.attended, p.output.value, dout);
  accumulate(p.output, og.db);
  ops::AttentionGrads ag = ops::cross_attention_backward(tokens_q, tokens_kv, p.weights(), tr.attention, og.da);
  accumulate(p.query, ag.dquery);
  accumulate(p.key, ag.dkey);
  accumulate(p.value, ag.dvalue);
  return {std::move(ag.dtokens_q), std::move(ag.dtokens_kv)};
}

}  // namespace

std::pair<Tensor, Tensor> dual_attention_fuse(const Tensor& temporal, const Tensor& spatial,
                                              const ModelParams& params, const ModelConfig& cfg,
                                              FuseTrace* trace) {
  FuseTrace local;
  FuseTrace& tr = trace ? *trace : local;
  require_shape(temporal, {cfg.temporal_dim()}, "temporal feature");
  require_shape(spatial, {cfg.spatial_dim()}, "spatial feature");
  tr.temporal = temporal;
  tr.spatial = spatial;
  tr.tokens_temporal = channel_split(temporal, cfg.groups);
  tr.tokens_spatial = channel_split(spatial, cfg.groups);

  tr.residual_temporal = temporal;
  tr.residual_spatial = spatial;
  tr.residual_temporal += flatten(attend(tr.tokens_temporal, tr.tokens_temporal, params.intra_temporal, tr.intra_t));
  tr.residual_spatial += flatten(attend(tr.tokens_spatial, tr.tokens_spatial, params.intra_spatial, tr.intra_s));
  if (cfg.variant != Variant::kNoCrossChannel) {
    tr.residual_temporal +=
        flatten(attend(tr.tokens_temporal, tr.tokens_spatial, params.cross_temporal, tr.cross_t));
    tr.residual_spatial +=
        flatten(attend(tr.tokens_spatial, tr.tokens_temporal, params.cross_spatial, tr.cross_s));
  }
  return {ops::layer_norm(tr.residual_temporal, params.norm_temporal_gain.value, params.norm_temporal_bias.value),
          ops::layer_norm(tr.residual_spatial, params.norm_spatial_gain.value, params.norm_spatial_bias.value)};
}

std::pair<Tensor, Tensor> dual_attention_fuse_backward(const FuseTrace& tr, const Tensor& dtemporal_out,
                                                       const Tensor& dspatial_out, ModelParams& params,
                                                       const ModelConfig& cfg) {
  const ops::LayerNormGrads nt =
      ops::layer_norm_backward(tr.residual_temporal, params.norm_temporal_gain.value, dtemporal_out);
  const ops::LayerNormGrads ns =
      ops::layer_norm_backward(tr.residual_spatial, params.norm_spatial_gain.value, dspatial_out);
  accumulate(params.norm_temporal_gain, nt.dgain);
  accumulate(params.norm_temporal_bias, nt.dbias);
  accumulate(params.norm_spatial_gain, ns.dgain);
  accumulate(params.norm_spatial_bias, ns.dbias);

  const Tensor dres_t = nt.dx.reshaped(tr.tokens_temporal.shape());
  const Tensor dres_s = ns.dx.reshaped(tr.tokens_spatial.shape());
  Tensor dtok_t(tr.tokens_temporal.shape()), dtok_s(tr.tokens_spatial.shape());

  auto [iq_t, ikv_t] = attend_backward(tr.tokens_temporal, tr.tokens_temporal, params.intra_temporal, tr.intra_t, dres_t);
  dtok_t += iq_t;
  dtok_t += ikv_t;
  auto [iq_s, ikv_s] = attend_backward(tr.tokens_spatial, tr.tokens_spatial, params.intra_spatial, tr.intra_s, dres_s);
  dtok_s += iq_s;
  dtok_s += ikv_s;
  if (cfg.variant != Variant::kNoCrossChannel) {
    auto [cq_t, ckv_t] = attend_backward(tr.tokens_temporal, tr.tokens_spatial, params.cross_temporal, tr.cross_t, dres_t);
    dtok_t += cq_t;
    dtok_s += ckv_t;
    auto [cq_s, ckv_s] = attend_backward(tr.tokens_spatial, tr.tokens_temporal, params.cross_spatial, tr.cross_s, dres_s);
    dtok_s += cq_s;
    dtok_t += ckv_s;
  }
  Tensor dtemporal = nt.dx;
  Tensor dspatial = ns.dx;
  dtemporal += flatten(dtok_t);
  dspatial += flatten(dtok_s);
  return {std::move(dtemporal), std::move(dspatial)};
}

// ---- fusion head ----

Tensor fuse_and_classify(const Tensor& fusion_in, const ModelParams& params, HeadTrace* trace) {
  HeadTrace local;
  HeadTrace& tr = trace ? *trace : local;
  tr.fusion_in = fusion_in;
  tr.hidden_pre = ops::linear(fusion_in, params.mlp_weight.value, params.mlp_bias.value);
  tr.fused = ops::relu(tr.hidden_pre);
  tr.logits = ops::linear(tr.fused, params.classifier_weight.value, params.classifier_bias.value);
  tr.probabilities = ops::softmax(tr.logits, 0);
  return tr.probabilities;
}

Tensor fuse_and_classify_backward(const HeadTrace& tr, const Tensor& dlogits, ModelParams& params) {
  const ops::LinearGrads cg = ops::linear_backward(tr.fused, params.classifier_weight.value, dlogits);
  accumulate(params.classifier_weight, cg.dweight);
  accumulate(params.classifier_bias, cg.dbias);
  const Tensor dpre = ops::relu_backward(tr.hidden_pre, cg.dx);
  ops::LinearGrads mg = ops::linear_backward(tr.fusion_in, params.mlp_weight.value, dpre);
  accumulate(params.mlp_weight, mg.dweight);
  accumulate(params.mlp_bias, mg.dbias);
  return std::move(mg.dx);
}

// ---- whole model ----

ForwardTrace forward(std::span<const double> series, const gaf::GafImage& img, const ModelParams& params,
                     const ModelConfig& cfg) {
  if (series.size() != cfg.input_length)
    throw Error(ErrorKind::kShapeMismatch, "series length " + std::to_string(series.size()) +
                                               " does not match model input length " +
                                               std::to_string(cfg.input_length));
  ForwardTrace tr;
  if (cfg.uses_temporal()) tr.temporal_features = temporal_branch(series, params, cfg, &tr.temporal_branch);
  if (cfg.uses_spatial()) {
    if (img.side() != cfg.input_length)
      throw Error(ErrorKind::kShapeMismatch, "GAF image side does not match model input length");
    tr.spatial_features = spatial_branch(img, params, cfg, &tr.spatial_branch);
  }
  Tensor fusion_in;
  switch (cfg.variant) {
    case Variant::kFull:
    case Variant::kNoCrossChannel: {
      auto [t, s] = dual_attention_fuse(tr.temporal_features, tr.spatial_features, params, cfg, &tr.fuse);
      tr.temporal_attended = std::move(t);
      tr.spatial_attended = std::move(s);
      fusion_in = ops::concat(tr.temporal_attended, tr.spatial_attended, 0);
      break;
    }
    case Variant::kNoDualAttention:
      fusion_in = ops::concat(tr.temporal_features, tr.spatial_features, 0);
      break;
    case Variant::kTimeOnly:
      fusion_in = tr.temporal_features;
      break;
    case Variant::kGafOnly:
      fusion_in = tr.spatial_features;
      break;
  }
  fuse_and_classify(fusion_in, params, &tr.head);
  return tr;
}

void backward_from_logits(const ForwardTrace& tr, const Tensor& dlogits, ModelParams& params,
                          const ModelConfig& cfg) {
  const Tensor dfusion = fuse_and_classify_backward(tr.head, dlogits, params);
  Tensor dtemporal, dspatial;
  switch (cfg.variant) {
    case Variant::kFull:
    case Variant::kNoCrossChannel: {
      const std::size_t dt = cfg.temporal_dim();
      ops::ConcatGrads cg = ops::concat_backward({dt}, {cfg.spatial_dim()}, dfusion, 0);
      auto [t, s] = dual_attention_fuse_backward(tr.fuse, cg.da, cg.db, params, cfg);
      dtemporal = std::move(t);
      dspatial = std::move(s);
      break;
    }
    case Variant::kNoDualAttention: {
      ops::ConcatGrads cg = ops::concat_backward({cfg.temporal_dim()}, {cfg.spatial_dim()}, dfusion, 0);
      dtemporal = std::move(cg.da);
      dspatial = std::move(cg.db);
      break;
    }
    case Variant::kTimeOnly:
      dtemporal = dfusion;
      break;
    case Variant::kGafOnly:
      dspatial = dfusion;
      break;
  }
  if (cfg.uses_temporal()) temporal_branch_backward(tr.temporal_branch, dtemporal, params, cfg);
  if (cfg.uses_spatial()) spatial_branch_backward(tr.spatial_branch, dspatial, params, cfg);
}

void backward(const ForwardTrace& tr, std::size_t label, ModelParams& params, const ModelConfig& cfg,
              double scale) {
  if (label >= cfg.num_classes) throw Error(ErrorKind::kInvalidArgument, "label out of range");
  Tensor dlogits = tr.head.probabilities;
  dlogits[label] -= 1.0;
  dlogits *= scale;
  backward_from_logits(tr, dlogits, params, cfg);
}

std::size_t predict(const ForwardTrace& tr) {
  const auto p = tr.head.probabilities.data();
  return static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
}

}  // namespace gafnet::model

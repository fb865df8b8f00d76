#include "gafnet/optim.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>
#include <sstream>

#include "gafnet/error.hpp"
#include "gafnet/gaf.hpp"
#include "gafnet/rng.hpp"

namespace gafnet::optim {

namespace {

void check_targets(const Tensor& probs, const Tensor& onehot) {
  require_rank(probs, 2, "cross_entropy predictions");
  require_shape(onehot, probs.shape(), "cross_entropy targets");
  for (std::size_t i = 0; i < onehot.dim(0); ++i) {
    std::size_t ones = 0;
    for (std::size_t j = 0; j < onehot.dim(1); ++j) {
      const double y = onehot.at(i, j);
      if (y == 1.0)
        ++ones;
      else if (y != 0.0)
        throw Error(ErrorKind::kNonOneHotLabel, "target row " + std::to_string(i) + " is not one-hot");
    }
    if (ones != 1) throw Error(ErrorKind::kNonOneHotLabel, "target row " + std::to_string(i) + " is not one-hot");
  }
}

}  // namespace

double cross_entropy(const Tensor& probs, const Tensor& onehot) {
  check_targets(probs, onehot);
  double loss = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i)
    if (onehot[i] != 0.0) loss -= onehot[i] * std::log(probs[i] + kLogEpsilon);
  return loss / static_cast<double>(probs.dim(0));
}

Tensor cross_entropy_logit_grad(const Tensor& probs, const Tensor& onehot) {
  check_targets(probs, onehot);
  Tensor g(probs.shape());
  const double inv = 1.0 / static_cast<double>(probs.dim(0));
  for (std::size_t i = 0; i < probs.size(); ++i) g[i] = (probs[i] - onehot[i]) * inv;
  return g;
}

Tensor one_hot(std::span<const std::size_t> labels, std::size_t num_classes) {
  Tensor y({labels.size(), num_classes});
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= num_classes) throw Error(ErrorKind::kNonOneHotLabel, "label out of range");
    y.at(i, labels[i]) = 1.0;
  }
  return y;
}

double lr_schedule(std::size_t step, const ScheduleConfig& cfg) {
  const double t = static_cast<double>(step);
  switch (cfg.kind) {
    case ScheduleKind::kInverseSqrt:
      return cfg.initial_lr / std::sqrt(1.0 + cfg.decay * t);
    case ScheduleKind::kCosine: {
      if (cfg.total_steps == 0) return cfg.initial_lr;
      const double frac = std::min(1.0, t / static_cast<double>(cfg.total_steps));
      return cfg.initial_lr * (1.0 + std::cos(std::numbers::pi * frac)) / 2.0;
    }
  }
  return cfg.initial_lr;
}

void adam_step(std::span<ParamTensor* const> params, AdamState& state, double lr) {
  if (state.first_moment.empty()) {
    for (const ParamTensor* p : params) {
      state.first_moment.emplace_back(p->value.shape());
      state.second_moment.emplace_back(p->value.shape());
    }
  }
  if (state.first_moment.size() != params.size())
    throw Error(ErrorKind::kShapeMismatch, "optimizer state does not match the parameter list");
  ++state.step;
  const AdamConfig& c = state.config;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(c.beta1, t);
  const double correction2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t n = 0; n < params.size(); ++n) {
    ParamTensor& p = *params[n];
    Tensor& m = state.first_moment[n];
    Tensor& v = state.second_moment[n];
    require_shape(p.grad, p.value.shape(), "adam gradient");
    require_shape(m, p.value.shape(), "adam moment");
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g;
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g * g;
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      p.value[i] -= lr * m_hat / (std::sqrt(v_hat) + c.epsilon);
    }
  }
}

Predictions predict_dataset(const model::ModelParams& params, const model::ModelConfig& cfg,
                            const data::Dataset& ds) {
  if (ds.items.empty()) throw Error(ErrorKind::kEmptyDataset, "nothing to predict");
  if (ds.length() != cfg.input_length)
    throw Error(ErrorKind::kShapeMismatch, "data length " + std::to_string(ds.length()) +
                                               " does not match model input length " +
                                               std::to_string(cfg.input_length));
  Predictions out;
  out.probabilities = Tensor({ds.size(), cfg.num_classes});
  out.labels.reserve(ds.size());
  double loss = 0.0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& item = ds.items[i];
    if (item.class_id >= cfg.num_classes) throw Error(ErrorKind::kShapeMismatch, "label exceeds model classes");
    const gaf::GafImage img = cfg.uses_spatial() ? gaf::gaf_transform(item.segment) : gaf::GafImage{};
    const model::ForwardTrace tr = model::forward(item.segment.values, img, params, cfg);
    for (std::size_t c = 0; c < cfg.num_classes; ++c) out.probabilities.at(i, c) = tr.probabilities()[c];
    loss -= std::log(tr.probabilities()[item.class_id] + kLogEpsilon);
    out.labels.push_back(item.class_id);
  }
  out.mean_loss = loss / static_cast<double>(ds.size());
  return out;
}

metrics::EvalReport evaluate_dataset(const model::ModelParams& params, const model::ModelConfig& cfg,
                                     const data::Dataset& ds) {
  const Predictions p = predict_dataset(params, cfg, ds);
  return metrics::evaluate(p.probabilities, p.labels, cfg.num_classes);
}

TrainResult train(const model::ModelConfig& cfg, const data::Dataset& train_set, const data::Dataset& validation,
                  const TrainConfig& tc, const EpochCallback& on_epoch) {
  cfg.validate();
  if (train_set.items.empty()) throw Error(ErrorKind::kEmptyDataset, "training split is empty");
  if (validation.items.empty()) throw Error(ErrorKind::kEmptyDataset, "validation split is empty");
  if (tc.epochs == 0 || tc.batch_size == 0)
    throw Error(ErrorKind::kInvalidArgument, "epochs and batch_size must be positive");
  if (train_set.length() != cfg.input_length)
    throw Error(ErrorKind::kShapeMismatch, "training data length does not match model input length");

  model::ModelParams params = model::init_params(cfg, derive_seed(tc.seed, 0x1417));
  const auto tensors = params.tensors();
  AdamState adam;
  ScheduleConfig schedule = tc.schedule;
  const std::size_t batches_per_epoch = (train_set.size() + tc.batch_size - 1) / tc.batch_size;
  if (schedule.kind == ScheduleKind::kCosine && schedule.total_steps == 0)
    schedule.total_steps = tc.epochs * batches_per_epoch;

  // Segments are preprocessed by the caller; GAF images are rebuilt per use.
  TrainResult result;
  result.params = params;
  bool have_best = false;
  double best_acc = 0, best_loss = 0;
  std::size_t step = 0;

  for (std::size_t epoch = 1; epoch <= tc.epochs; ++epoch) {
    double epoch_loss = 0.0;
    double lr = 0.0;
    for (const auto& batch : data::make_batches(train_set.size(), tc.batch_size, tc.seed, epoch)) {
      params.zero_grad();
      const double scale = 1.0 / static_cast<double>(batch.size());
      for (std::size_t idx : batch) {
        const auto& item = train_set.items[idx];
        const gaf::GafImage img = cfg.uses_spatial() ? gaf::gaf_transform(item.segment) : gaf::GafImage{};
        const model::ForwardTrace tr = model::forward(item.segment.values, img, params, cfg);
        epoch_loss -= std::log(tr.probabilities()[item.class_id] + kLogEpsilon);
        model::backward(tr, item.class_id, params, cfg, scale);
      }
      lr = lr_schedule(step, schedule);
      adam_step(tensors, adam, lr);
      ++step;
    }
    const Predictions val = predict_dataset(params, cfg, validation);
    const metrics::EvalReport report = metrics::evaluate(val.probabilities, val.labels, cfg.num_classes);
    EpochRecord rec{epoch, epoch_loss / static_cast<double>(train_set.size()), report.accuracy, val.mean_loss, lr};
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);

    const bool better = !have_best || rec.val_accuracy > best_acc ||
                        (rec.val_accuracy == best_acc && rec.val_loss < best_loss);
    if (tc.checkpoint == CheckpointPolicy::kLast || better) {
      result.params = params;
      result.selected_epoch = epoch;
      have_best = true;
      best_acc = rec.val_accuracy;
      best_loss = rec.val_loss;
    }
  }
  return result;
}

std::string history_csv(const std::vector<EpochRecord>& history) {
  std::ostringstream os;
  os << "epoch,train_loss,val_accuracy,lr\n";
  char buf[128];
  for (const auto& r : history) {
    std::snprintf(buf, sizeof buf, "%zu,%.9f,%.6f,%.9g\n", r.epoch, r.train_loss, r.val_accuracy, r.lr);
    os << buf;
  }
  return os.str();
}

}  // namespace gafnet::optim

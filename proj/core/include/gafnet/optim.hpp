#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "gafnet/data.hpp"
#include "gafnet/metrics.hpp"
#include "gafnet/model.hpp"
#include "gafnet/tensor.hpp"

namespace gafnet::optim {

inline constexpr double kLogEpsilon = 1e-12;

// Batch-mean cross-entropy: -(1/N) sum_i sum_j y_ij log(p_ij + 1e-12).
// probs, onehot: [N x C]. Throws Error(kNonOneHotLabel) for a bad target.
double cross_entropy(const Tensor& probs, const Tensor& onehot);
// Gradient of the batch-mean loss w.r.t. the logits: (probs - onehot) / N.
Tensor cross_entropy_logit_grad(const Tensor& probs, const Tensor& onehot);
Tensor one_hot(std::span<const std::size_t> labels, std::size_t num_classes);

enum class ScheduleKind { kInverseSqrt, kCosine };

struct ScheduleConfig {
  ScheduleKind kind = ScheduleKind::kInverseSqrt;
  double initial_lr = 1e-3;
  double decay = 0.01;          // inverse_sqrt
  std::size_t total_steps = 0;  // cosine; 0 means epochs * batches per epoch

  bool operator==(const ScheduleConfig&) const = default;
};

// inverse_sqrt: lr0 / sqrt(1 + decay * t); cosine: lr0 * (1 + cos(pi t / T)) / 2.
double lr_schedule(std::size_t step, const ScheduleConfig& cfg);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
  std::size_t step = 0;
};

// Bias-corrected Adam update of every parameter from its .grad; allocates
// the moment buffers on the first call.
void adam_step(std::span<ParamTensor* const> params, AdamState& state, double lr);

enum class CheckpointPolicy { kBestValidation, kLast };

struct TrainConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 64;
  std::uint64_t seed = 42;
  ScheduleConfig schedule;
  CheckpointPolicy checkpoint = CheckpointPolicy::kBestValidation;

  bool operator==(const TrainConfig&) const = default;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0;
  double val_accuracy = 0;
  double val_loss = 0;
  double lr = 0;  // rate used by the epoch's final step
};

struct TrainResult {
  model::ModelParams params;
  std::vector<EpochRecord> history;
  std::size_t selected_epoch = 0;
};

// Per-sample class probabilities [N x C] for a dataset.
struct Predictions {
  Tensor probabilities;
  std::vector<std::size_t> labels;
  double mean_loss = 0;
};
Predictions predict_dataset(const model::ModelParams& params, const model::ModelConfig& cfg,
                            const data::Dataset& ds);

metrics::EvalReport evaluate_dataset(const model::ModelParams& params, const model::ModelConfig& cfg,
                                     const data::Dataset& ds);

using EpochCallback = std::function<void(const EpochRecord&)>;

// Mini-batch Adam training. Each epoch reshuffles with (seed, epoch), runs
// forward/backward per sample with the batch-mean loss and steps with the
// scheduled rate (t = global step). With kBestValidation the returned params
// are those of the epoch with the highest validation accuracy, ties broken
// by lower validation loss, then by the earlier epoch.
TrainResult train(const model::ModelConfig& cfg, const data::Dataset& train_set, const data::Dataset& validation,
                  const TrainConfig& tc, const EpochCallback& on_epoch = {});

// epoch,train_loss,val_accuracy,lr
std::string history_csv(const std::vector<EpochRecord>& history);

}  // namespace gafnet::optim

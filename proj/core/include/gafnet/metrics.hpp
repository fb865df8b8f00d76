#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "gafnet/tensor.hpp"

namespace gafnet::metrics {

struct EvalReport {
  double accuracy = 0;
  double macro_f1 = 0;
  double macro_auc = 0;
  std::vector<std::vector<std::size_t>> confusion;  // rows = truth, cols = prediction
  std::vector<double> per_class_f1;
};

double accuracy(std::span<const std::size_t> preds, std::span<const std::size_t> labels);

std::vector<double> per_class_f1(std::span<const std::size_t> preds, std::span<const std::size_t> labels,
                                 std::size_t num_classes);
// Unweighted mean of per-class F1; a class with precision + recall == 0
// contributes 0.
double macro_f1(std::span<const std::size_t> preds, std::span<const std::size_t> labels, std::size_t num_classes);

// One-vs-rest AUC per class by the Mann-Whitney rank statistic (ties count
// one half), averaged over classes present in `labels`. scores: [N x C].
double macro_auc(const Tensor& scores, std::span<const std::size_t> labels, std::size_t num_classes);

std::vector<std::vector<std::size_t>> confusion_matrix(std::span<const std::size_t> preds,
                                                       std::span<const std::size_t> labels,
                                                       std::size_t num_classes);

EvalReport evaluate(const Tensor& scores, std::span<const std::size_t> labels, std::size_t num_classes);

// key: value lines followed by a confusion block.
std::string format_report(const EvalReport& report);

}  // namespace gafnet::metrics

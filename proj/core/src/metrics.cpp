#include "gafnet/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "gafnet/error.hpp"

namespace gafnet::metrics {

namespace {

void check_pair(std::span<const std::size_t> preds, std::span<const std::size_t> labels) {
  if (preds.size() != labels.size())
    throw Error(ErrorKind::kLengthMismatch, std::to_string(preds.size()) + " predictions vs " +
                                                std::to_string(labels.size()) + " labels");
  if (labels.empty()) throw Error(ErrorKind::kEmptyDataset, "no samples to score");
}

void check_ids(std::span<const std::size_t> ids, std::size_t num_classes) {
  for (std::size_t id : ids)
    if (id >= num_classes) throw Error(ErrorKind::kInvalidArgument, "class id out of range");
}

std::string fixed(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

double accuracy(std::span<const std::size_t> preds, std::span<const std::size_t> labels) {
  check_pair(preds, labels);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) correct += preds[i] == labels[i];
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

std::vector<std::vector<std::size_t>> confusion_matrix(std::span<const std::size_t> preds,
                                                       std::span<const std::size_t> labels,
                                                       std::size_t num_classes) {
  check_pair(preds, labels);
  check_ids(preds, num_classes);
  check_ids(labels, num_classes);
  std::vector<std::vector<std::size_t>> m(num_classes, std::vector<std::size_t>(num_classes, 0));
  for (std::size_t i = 0; i < preds.size(); ++i) ++m[labels[i]][preds[i]];
  return m;
}

std::vector<double> per_class_f1(std::span<const std::size_t> preds, std::span<const std::size_t> labels,
                                 std::size_t num_classes) {
  const auto m = confusion_matrix(preds, labels, num_classes);
  std::vector<double> f1(num_classes, 0.0);
  for (std::size_t c = 0; c < num_classes; ++c) {
    const double tp = static_cast<double>(m[c][c]);
    double predicted = 0, actual = 0;
    for (std::size_t k = 0; k < num_classes; ++k) {
      predicted += static_cast<double>(m[k][c]);
      actual += static_cast<double>(m[c][k]);
    }
    const double precision = predicted > 0 ? tp / predicted : 0.0;
    const double recall = actual > 0 ? tp / actual : 0.0;
    f1[c] = precision + recall > 0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
  }
  return f1;
}

double macro_f1(std::span<const std::size_t> preds, std::span<const std::size_t> labels, std::size_t num_classes) {
  const auto f1 = per_class_f1(preds, labels, num_classes);
  return std::accumulate(f1.begin(), f1.end(), 0.0) / static_cast<double>(num_classes);
}

double macro_auc(const Tensor& scores, std::span<const std::size_t> labels, std::size_t num_classes) {
  require_shape(scores, {labels.size(), num_classes}, "macro_auc scores");
  check_ids(labels, num_classes);
  const std::size_t n = labels.size();
  std::vector<std::size_t> order(n);
  std::vector<double> ranks(n);
  double sum = 0.0;
  std::size_t classes_scored = 0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    std::size_t positives = 0;
    for (std::size_t l : labels) positives += l == c;
    if (positives == 0 || positives == n) continue;
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores.at(a, c) < scores.at(b, c); });
    // Average 1-based ranks over tied runs.
    for (std::size_t i = 0; i < n;) {
      std::size_t j = i;
      while (j + 1 < n && scores.at(order[j + 1], c) == scores.at(order[i], c)) ++j;
      const double avg = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
      for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
      i = j + 1;
    }
    double rank_sum = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      if (labels[i] == c) rank_sum += ranks[i];
    const double p = static_cast<double>(positives), q = static_cast<double>(n - positives);
    const double u = rank_sum - p * (p + 1.0) / 2.0;
    sum += u / (p * q);
    ++classes_scored;
  }
  if (classes_scored == 0)
    throw Error(ErrorKind::kSingleClassLabels, "AUC needs both positive and negative samples");
  return sum / static_cast<double>(classes_scored);
}

EvalReport evaluate(const Tensor& scores, std::span<const std::size_t> labels, std::size_t num_classes) {
  require_shape(scores, {labels.size(), num_classes}, "evaluate scores");
  std::vector<std::size_t> preds(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < num_classes; ++c)
      if (scores.at(i, c) > scores.at(i, best)) best = c;
    preds[i] = best;
  }
  EvalReport r;
  r.accuracy = accuracy(preds, labels);
  r.per_class_f1 = per_class_f1(preds, labels, num_classes);
  r.macro_f1 = macro_f1(preds, labels, num_classes);
  r.macro_auc = macro_auc(scores, labels, num_classes);
  r.confusion = confusion_matrix(preds, labels, num_classes);
  return r;
}

std::string format_report(const EvalReport& report) {
  std::ostringstream os;
  os << "accuracy: " << fixed(report.accuracy) << '\n';
  os << "macro_f1: " << fixed(report.macro_f1) << '\n';
  os << "macro_auc: " << fixed(report.macro_auc) << '\n';
  os << "per_class_f1:";
  for (double f : report.per_class_f1) os << ' ' << fixed(f);
  os << '\n';
  os << "confusion:\n";
  for (const auto& row : report.confusion) {
    for (std::size_t k = 0; k < row.size(); ++k) os << (k ? " " : "") << row[k];
    os << '\n';
  }
  return os.str();
}

}  // namespace gafnet::metrics

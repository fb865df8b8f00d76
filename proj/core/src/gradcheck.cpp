#include "gafnet/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "gafnet/error.hpp"
#include "gafnet/rng.hpp"

namespace gafnet {

double grad_check(const DiffOp& op, std::vector<Tensor> inputs, double eps, std::uint64_t seed) {
  const Tensor out = op.forward(inputs);
  Rng rng(seed);
  Tensor readout(out.shape());
  for (double& r : readout.data()) r = rng.uniform(-1.0, 1.0);

  auto objective = [&](const std::vector<Tensor>& xs) {
    const Tensor y = op.forward(xs);
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += readout[i] * y[i];
    return s;
  };

  const std::vector<Tensor> analytic = op.backward(inputs, readout);
  if (analytic.size() != inputs.size())
    throw Error(ErrorKind::kShapeMismatch, "backward returned the wrong number of gradients");

  double worst = 0.0;
  for (std::size_t n = 0; n < inputs.size(); ++n) {
    require_shape(analytic[n], inputs[n].shape(), "analytic gradient");
    for (std::size_t i = 0; i < inputs[n].size(); ++i) {
      const double saved = inputs[n][i];
      inputs[n][i] = saved + eps;
      const double up = objective(inputs);
      inputs[n][i] = saved - eps;
      const double down = objective(inputs);
      inputs[n][i] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double a = analytic[n][i];
      if (!std::isfinite(a) || !std::isfinite(numeric))
        throw Error(ErrorKind::kNonFiniteGradient, "non-finite gradient in input " + std::to_string(n));
      const double err = std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace gafnet

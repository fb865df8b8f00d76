#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "gafnet/tensor.hpp"

namespace gafnet {

// A function of several tensors together with its hand-written backward.
// backward(inputs, dout) returns one gradient per input, same shapes.
struct DiffOp {
  std::function<Tensor(const std::vector<Tensor>&)> forward;
  std::function<std::vector<Tensor>(const std::vector<Tensor>&, const Tensor&)> backward;
};

// Central-difference check of the scalar readout sum(r * forward(inputs)),
// with r drawn uniformly from [-1, 1] using `seed`. Returns the maximum over
// all input entries of |analytic - numeric| / max(1, |analytic|, |numeric|).
// Throws Error(kNonFiniteGradient) if any gradient is not finite.
double grad_check(const DiffOp& op, std::vector<Tensor> inputs, double eps = 1e-5, std::uint64_t seed = 0);

}  // namespace gafnet

#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "radiodx/tensor.hpp"

namespace radiodx {

using ScalarFunction = std::function<double(const std::vector<Tensor64>& probes)>;

/// Compares analytic gradients of a scalar function with central differences.
///
/// `analytic[i]` must have the shape of `probes[i]`. Each probe coordinate is
/// perturbed by +/-step in turn. Returns the maximum over all coordinates of
/// |analytic - numeric| / max(1, |analytic|, |numeric|). `step` must lie in
/// [1e-4, 1e-2].
double finite_diff_check(const ScalarFunction& fn, std::vector<Tensor64> probes,
                         const std::vector<Tensor64>& analytic, double step);

/// Tensor with entries uniform in [lo, hi], reproducible from `seed`.
Tensor64 random_tensor64(const Shape& shape, std::uint64_t seed, double lo = -1.0,
                         double hi = 1.0);

/// sum(a .* b); used to project vector-valued ops onto a scalar.
double dot(const Tensor64& a, const Tensor64& b);

}  // namespace radiodx

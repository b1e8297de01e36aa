#include "radiodx/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "radiodx/errors.hpp"
#include "radiodx/random.hpp"

namespace radiodx {

double finite_diff_check(const ScalarFunction& fn, std::vector<Tensor64> probes,
                         const std::vector<Tensor64>& analytic, double step) {
  if (!(step >= 1e-4 && step <= 1e-2)) {
    throw ArgumentError("finite_diff_check: step must lie in [1e-4, 1e-2]");
  }
  if (analytic.size() != probes.size()) {
    throw ArgumentError("finite_diff_check: one analytic gradient per probe is required");
  }
  double worst = 0.0;
  for (std::size_t p = 0; p < probes.size(); ++p) {
    if (analytic[p].shape() != probes[p].shape()) {
      throw ShapeError("finite_diff_check: gradient " + to_string(analytic[p].shape()) +
                       " does not match probe " + to_string(probes[p].shape()));
    }
    for (std::size_t i = 0; i < probes[p].size(); ++i) {
      const double original = probes[p][i];
      probes[p][i] = original + step;
      const double plus = fn(probes);
      probes[p][i] = original - step;
      const double minus = fn(probes);
      probes[p][i] = original;
      const double numeric = (plus - minus) / (2.0 * step);
      const double a = analytic[p][i];
      const double denom = std::max({1.0, std::abs(a), std::abs(numeric)});
      worst = std::max(worst, std::abs(a - numeric) / denom);
    }
  }
  return worst;
}

Tensor64 random_tensor64(const Shape& shape, std::uint64_t seed, double lo, double hi) {
  Tensor64 t(shape);
  Rng rng(seed);
  for (auto& v : t.data()) v = uniform_range(rng, lo, hi);
  return t;
}

double dot(const Tensor64& a, const Tensor64& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("dot: " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += a[i] * b[i];
  return sum;
}

}  // namespace radiodx

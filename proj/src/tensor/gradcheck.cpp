#include "tensor/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "core/error.hpp"
#include "core/rng.hpp"

namespace advpaint {

double evaluate_scalar(const ScalarFn& f, const Tensor& x) {
  Graph g;
  Var in = g.constant(x);
  const double v = f(g, in).value().item();
  require(std::isfinite(v), ErrorCode::kNumeric, "non-finite function value in gradient check");
  return v;
}

Tensor analytic_gradient(const ScalarFn& f, const Tensor& x) {
  Graph g;
  Var in = g.input(x);
  Var out = f(g, in);
  g.backward(out);
  return g.grad(in);
}

std::vector<std::size_t> sample_coords(std::size_t numel, std::size_t count, std::uint64_t seed) {
  std::vector<std::size_t> all(numel);
  std::iota(all.begin(), all.end(), std::size_t{0});
  if (count >= numel) return all;
  Rng rng(seed);
  // Partial Fisher-Yates.
  for (std::size_t i = 0; i < count; ++i) {
    const auto j = static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(i),
                                                            static_cast<std::int64_t>(numel - 1)));
    std::swap(all[i], all[j]);
  }
  all.resize(count);
  return all;
}

double gradient_check(const ScalarFn& f, const Tensor& x, double step,
                      std::span<const std::size_t> coords) {
  require(step >= 1e-7 && step <= 1e-3, ErrorCode::kContract,
          "gradient check step " + std::to_string(step) + " outside [1e-7, 1e-3]");
  const Tensor grad = analytic_gradient(f, x);
  double worst = 0.0;
  Tensor probe = x;
  for (std::size_t i : coords) {
    require(i < x.numel(), ErrorCode::kDimension, "gradient check coordinate out of range");
    const double orig = probe[i];
    probe[i] = orig + step;
    const double fp = evaluate_scalar(f, probe);
    probe[i] = orig - step;
    const double fm = evaluate_scalar(f, probe);
    probe[i] = orig;
    const double central = (fp - fm) / (2.0 * step);
    const double rel = std::abs(grad[i] - central) / (std::abs(central) + 1e-12);
    worst = std::max(worst, rel);
  }
  return worst;
}

}  // namespace advpaint

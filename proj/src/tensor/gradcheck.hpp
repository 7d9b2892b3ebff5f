#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "tensor/graph.hpp"

namespace advpaint {

/// Builds a one-element output from a leaf inside the given graph.
using ScalarFn = std::function<Var(Graph&, Var)>;

/// Evaluates f at x without tracking gradients.
double evaluate_scalar(const ScalarFn& f, const Tensor& x);

/// Reverse-mode gradient of f at x.
Tensor analytic_gradient(const ScalarFn& f, const Tensor& x);

/// `count` distinct flat indices into a tensor of `numel` entries (all of them
/// when count >= numel), drawn from `seed`.
std::vector<std::size_t> sample_coords(std::size_t numel, std::size_t count, std::uint64_t seed);

/// max over coords of |analytic - central| / (|central| + 1e-12).
/// step must lie in [1e-7, 1e-3].
double gradient_check(const ScalarFn& f, const Tensor& x, double step,
                      std::span<const std::size_t> coords);

}  // namespace advpaint

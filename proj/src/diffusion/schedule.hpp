#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "tensor/graph.hpp"

namespace advpaint {

/// Linear-beta noise schedule. Arrays are indexed by timestep 0..T with the
/// t = 0 entry fixed at alpha_bar = 1 (no noise).
struct NoiseSchedule {
  std::size_t train_steps = 0;
  std::vector<double> beta;
  std::vector<double> alpha;
  std::vector<double> alpha_bar;
  std::vector<double> sigma;  // zero: deterministic sampling

  double alpha_bar_at(std::size_t t) const;
};

inline constexpr std::size_t kDefaultTrainSteps = 1000;
inline constexpr double kDefaultBetaStart = 1e-4;
inline constexpr double kDefaultBetaEnd = 0.02;

NoiseSchedule make_schedule(std::size_t train_steps, double beta_start, double beta_end);
NoiseSchedule default_schedule();

/// sqrt(ab_t) z0 + sqrt(1 - ab_t) eps; differentiable in z0. t = 0 returns z0.
Var forward_diffuse(Var z0, std::size_t t, Var eps, const NoiseSchedule& sched);
Tensor forward_diffuse(const Tensor& z0, std::size_t t, const Tensor& eps,
                       const NoiseSchedule& sched);
Var forward_diffuse_alpha_bar(Var z0, double alpha_bar, Var eps);

/// Predicted clean latent (z_t - sqrt(1 - ab_t) eps_hat) / sqrt(ab_t).
Tensor predict_z0(const Tensor& z_t, const Tensor& eps_hat, std::size_t t,
                  const NoiseSchedule& sched);

/// Deterministic (sigma = 0) step from t to t_prev.
Tensor ddim_step(const Tensor& z_t, const Tensor& eps_hat, std::size_t t, std::size_t t_prev,
                 const NoiseSchedule& sched);

/// Descending timesteps T, T - T/n, ..., T/n.
std::vector<std::size_t> inference_timesteps(std::size_t train_steps, std::size_t inference_steps);

}  // namespace advpaint

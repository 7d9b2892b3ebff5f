#include "diffusion/schedule.hpp"

#include <cmath>
#include <string>

#include "core/error.hpp"
#include "tensor/ops.hpp"

namespace advpaint {

double NoiseSchedule::alpha_bar_at(std::size_t t) const {
  require(t <= train_steps, ErrorCode::kInvalidArgument,
          "timestep " + std::to_string(t) + " outside 0.." + std::to_string(train_steps));
  return alpha_bar[t];
}

NoiseSchedule make_schedule(std::size_t train_steps, double beta_start, double beta_end) {
  require(train_steps >= 2, ErrorCode::kConfig, "schedule needs at least 2 steps");
  require(beta_start > 0.0 && beta_start < beta_end && beta_end < 1.0, ErrorCode::kConfig,
          "schedule needs 0 < beta_start < beta_end < 1");
  NoiseSchedule s;
  s.train_steps = train_steps;
  s.beta.assign(train_steps + 1, 0.0);
  s.alpha.assign(train_steps + 1, 1.0);
  s.alpha_bar.assign(train_steps + 1, 1.0);
  s.sigma.assign(train_steps + 1, 0.0);
  const double span = static_cast<double>(train_steps - 1);
  for (std::size_t t = 1; t <= train_steps; ++t) {
    s.beta[t] = beta_start + (beta_end - beta_start) * static_cast<double>(t - 1) / span;
    s.alpha[t] = 1.0 - s.beta[t];
    s.alpha_bar[t] = s.alpha_bar[t - 1] * s.alpha[t];
  }
  return s;
}

NoiseSchedule default_schedule() {
  return make_schedule(kDefaultTrainSteps, kDefaultBetaStart, kDefaultBetaEnd);
}

Var forward_diffuse_alpha_bar(Var z0, double alpha_bar, Var eps) {
  require(alpha_bar >= 0.0 && alpha_bar <= 1.0, ErrorCode::kInvalidArgument,
          "alpha_bar outside [0, 1]");
  return add(scale(z0, std::sqrt(alpha_bar)), scale(eps, std::sqrt(1.0 - alpha_bar)));
}

Var forward_diffuse(Var z0, std::size_t t, Var eps, const NoiseSchedule& sched) {
  return forward_diffuse_alpha_bar(z0, sched.alpha_bar_at(t), eps);
}

Tensor forward_diffuse(const Tensor& z0, std::size_t t, const Tensor& eps,
                       const NoiseSchedule& sched) {
  Graph g;
  return forward_diffuse(g.constant(z0), t, g.constant(eps), sched).value();
}

Tensor predict_z0(const Tensor& z_t, const Tensor& eps_hat, std::size_t t,
                  const NoiseSchedule& sched) {
  require(z_t.shape() == eps_hat.shape(), ErrorCode::kDimension,
          "predict_z0: shape mismatch " + shape_str(z_t.shape()) + " vs " +
              shape_str(eps_hat.shape()));
  const double ab = sched.alpha_bar_at(t);
  const double a = std::sqrt(ab), b = std::sqrt(1.0 - ab);
  Tensor z0(z_t.shape());
  for (std::size_t i = 0; i < z0.numel(); ++i) z0[i] = (z_t[i] - b * eps_hat[i]) / a;
  return z0;
}

Tensor ddim_step(const Tensor& z_t, const Tensor& eps_hat, std::size_t t, std::size_t t_prev,
                 const NoiseSchedule& sched) {
  require(t > t_prev, ErrorCode::kInvalidArgument,
          "ddim_step needs t > t_prev, got " + std::to_string(t) + " -> " + std::to_string(t_prev));
  const Tensor z0 = predict_z0(z_t, eps_hat, t, sched);
  const double ab_prev = sched.alpha_bar_at(t_prev);
  const double a = std::sqrt(ab_prev), b = std::sqrt(1.0 - ab_prev);
  Tensor out(z_t.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a * z0[i] + b * eps_hat[i];
  return out;
}

std::vector<std::size_t> inference_timesteps(std::size_t train_steps, std::size_t inference_steps) {
  require(inference_steps >= 1 && inference_steps <= train_steps &&
              train_steps % inference_steps == 0,
          ErrorCode::kConfig,
          std::to_string(inference_steps) + " inference steps do not divide " +
              std::to_string(train_steps) + " training steps");
  const std::size_t stride = train_steps / inference_steps;
  std::vector<std::size_t> ts;
  for (std::size_t t = train_steps; t >= stride; t -= stride) {
    ts.push_back(t);
    if (t == stride) break;
  }
  return ts;
}

}  // namespace advpaint

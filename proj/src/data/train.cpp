#include "data/train.hpp"

#include <cmath>

#include "core/error.hpp"
#include "core/rng.hpp"
#include "diffusion/sampler.hpp"
#include "model/codec.hpp"
#include "model/denoiser.hpp"
#include "tensor/ops.hpp"

namespace advpaint {

void TrainConfig::validate() const {
  auto check = [](bool ok, const std::string& what) {
    require(ok, ErrorCode::kConfig, "train config: " + what);
  };
  check(steps >= 1, "steps must be positive");
  check(batch_size >= 1, "batch size must be positive");
  check(learning_rate > 0.0, "learning rate must be positive");
  check(beta1 > 0.0 && beta1 < 1.0 && beta2 > 0.0 && beta2 < 1.0, "Adam betas must lie in (0, 1)");
  check(adam_eps > 0.0, "Adam epsilon must be positive");
  check(cond_dropout >= 0.0 && cond_dropout < 1.0, "dropout must lie in [0, 1)");
  check(checkpoint_every >= 1, "checkpoint interval must be positive");
}

TrainResult train(const TrainConfig& config, const std::vector<ShapeSample>& dataset,
                  const NoiseSchedule& schedule, const DenoiserConfig& model_config,
                  const std::optional<Checkpoint>& init,
                  const std::optional<std::filesystem::path>& out, const TrainProgress& progress) {
  config.validate();
  require(!dataset.empty(), ErrorCode::kInvalidArgument, "training dataset is empty");
  Checkpoint ck = init ? *init : Checkpoint::initialize(model_config, config.seed);
  ck.validate();
  const DenoiserConfig& mc = ck.config;
  const PatchCodec codec(mc);
  const std::size_t image_size = mc.image_size;
  for (const auto& s : dataset)
    require(s.image.shape() == Shape{mc.image_channels, image_size, image_size},
            ErrorCode::kDimension, "dataset image shape does not match the model");

  std::map<std::string, Tensor> m1, m2, grad;
  for (const auto& [name, w] : ck.weights) {
    m1.emplace(name, Tensor(w.shape(), 0.0));
    m2.emplace(name, Tensor(w.shape(), 0.0));
    grad.emplace(name, Tensor(w.shape(), 0.0));
  }

  Rng rng(derive_seed(config.seed, 0x7a17));
  TrainResult result;
  result.loss_trace.reserve(config.steps);
  const double inv_batch = 1.0 / static_cast<double>(config.batch_size);
  const std::size_t first_step = ck.train_step;

  for (std::size_t step = 1; step <= config.steps; ++step) {
    for (auto& [name, g] : grad) g.fill(0.0);
    double batch_loss = 0.0;
    for (std::size_t b = 0; b < config.batch_size; ++b) {
      const auto& sample = dataset[static_cast<std::size_t>(
          rng.uniform_int(0, static_cast<std::int64_t>(dataset.size()) - 1))];
      const std::size_t t =
          static_cast<std::size_t>(rng.uniform_int(1, static_cast<std::int64_t>(schedule.train_steps)));
      const MaskSpec mask = random_training_mask(rng, sample.bbox, image_size);
      const bool drop = rng.uniform() < config.cond_dropout;
      const Tensor z0 = codec.encode(sample.image);
      Tensor eps(z0.shape());
      for (double& v : eps.data()) v = rng.normal();
      const InpaintCondition cond = make_condition(ck, sample.image, mask);
      const Tensor z_t = forward_diffuse(z0, t, eps, schedule);
      const std::vector<int> prompt = drop ? std::vector<int>{} : sample.prompt();

      Graph g;
      const ParamVars params = bind_weights(g, ck, true);
      const DenoiserOutput o = forward_with_taps(g, mc, params, g.constant(z_t),
                                                 g.constant(cond.z0m), g.constant(cond.m_lat), t,
                                                 prompt);
      const double inv_n = 1.0 / static_cast<double>(eps.numel());
      Var loss = scale(sum_squares(sub(o.eps, g.constant(eps))), inv_n);
      const double value = loss.value().item();
      require(std::isfinite(value), ErrorCode::kTraining,
              "training diverged at step " + std::to_string(first_step + step));
      batch_loss += value * inv_batch;
      g.backward(loss);
      for (auto& [name, acc] : grad) {
        const Tensor& gw = g.grad(params.at(name));
        for (std::size_t i = 0; i < acc.numel(); ++i) acc[i] += gw[i] * inv_batch;
      }
    }
    require(std::isfinite(batch_loss), ErrorCode::kTraining,
            "training diverged at step " + std::to_string(first_step + step));

    const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(step));
    const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(step));
    for (auto& [name, w] : ck.weights) {
      const Tensor& gw = grad.at(name);
      Tensor& a = m1.at(name);
      Tensor& v = m2.at(name);
      for (std::size_t i = 0; i < w.numel(); ++i) {
        a[i] = config.beta1 * a[i] + (1.0 - config.beta1) * gw[i];
        v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * gw[i] * gw[i];
        const double mhat = a[i] / bc1;
        const double vhat = v[i] / bc2;
        w[i] -= config.learning_rate * mhat / (std::sqrt(vhat) + config.adam_eps);
      }
      require(w.all_finite(), ErrorCode::kTraining,
              "weight " + name + " became non-finite at step " + std::to_string(first_step + step));
    }
    ck.train_step = first_step + step;
    result.loss_trace.push_back(batch_loss);
    if (progress) progress(step, batch_loss);
    if (out && (step % config.checkpoint_every == 0 || step == config.steps)) ck.save(*out);
  }
  result.checkpoint = std::move(ck);
  return result;
}

double smoothed_loss(const std::vector<double>& trace, std::size_t step, std::size_t window) {
  require(step >= 1 && step <= trace.size() && window >= 1, ErrorCode::kInvalidArgument,
          "smoothed_loss: step outside the trace");
  const std::size_t begin = step >= window ? step - window : 0;
  double s = 0.0;
  for (std::size_t i = begin; i < step; ++i) s += trace[i];
  return s / static_cast<double>(step - begin);
}

}  // namespace advpaint

#include "diffusion/sampler.hpp"

#include <algorithm>
#include <cmath>

#include "core/error.hpp"
#include "core/rng.hpp"
#include "model/codec.hpp"
#include "model/denoiser.hpp"

namespace advpaint {

Tensor guidance_combine(const Tensor& eps_u, const Tensor& eps_c, double scale) {
  require(eps_u.shape() == eps_c.shape(), ErrorCode::kDimension,
          "guidance branches differ in shape: " + shape_str(eps_u.shape()) + " vs " +
              shape_str(eps_c.shape()));
  require(scale >= 0.0, ErrorCode::kInvalidArgument, "guidance scale must be non-negative");
  Tensor out(eps_u.shape());
  for (std::size_t i = 0; i < out.numel(); ++i)
    out[i] = (1.0 - scale) * eps_u[i] + scale * eps_c[i];
  return out;
}

Tensor cfg_predict(const Checkpoint& ck, const Tensor& z_t, const Tensor& z0m,
                   const Tensor& m_lat, std::size_t t, std::span<const int> cond_tokens,
                   std::span<const int> null_tokens, double scale) {
  require(scale >= 0.0, ErrorCode::kInvalidArgument, "guidance scale must be non-negative");
  const Tensor eps_c = predict_eps(ck, z_t, z0m, m_lat, t, cond_tokens);
  const Tensor eps_u = predict_eps(ck, z_t, z0m, m_lat, t, null_tokens);
  return guidance_combine(eps_u, eps_c, scale);
}

InpaintCondition make_condition(const Checkpoint& ck, const Tensor& image, const MaskSpec& mask) {
  const DenoiserConfig& cfg = ck.config;
  const Shape expect{cfg.image_channels, cfg.image_size, cfg.image_size};
  require(image.shape() == expect, ErrorCode::kDimension,
          "image must be " + shape_str(expect) + ", got " + shape_str(image.shape()));
  require(mask.height() == cfg.image_size && mask.width() == cfg.image_size,
          ErrorCode::kDimension, "mask must match the image resolution");
  const PatchCodec codec(cfg);
  Tensor masked = image;
  const Tensor m = mask.broadcast(cfg.image_channels);
  for (std::size_t i = 0; i < masked.numel(); ++i) masked[i] *= m[i];
  return {codec.encode(masked), resize_mask_to_latent(mask, cfg.patch)};
}

Tensor clip_noise_estimate(const Checkpoint& ck, const Tensor& z_t, const Tensor& eps_hat,
                           std::size_t t, const NoiseSchedule& sched) {
  const PatchCodec codec(ck.config);
  Tensor pixels = codec.decode(predict_z0(z_t, eps_hat, t, sched));
  for (double& v : pixels.data()) v = std::clamp(v, 0.0, 1.0);
  const Tensor z0 = codec.encode(pixels);
  const double ab = sched.alpha_bar_at(t);
  const double a = std::sqrt(ab);
  const double b = std::sqrt(1.0 - ab);
  Tensor eps(z_t.shape());
  for (std::size_t i = 0; i < eps.numel(); ++i) eps[i] = (z_t[i] - a * z0[i]) / b;
  return eps;
}

Tensor inpaint_sample(const Checkpoint& ck, const NoiseSchedule& sched, const Tensor& image,
                      const MaskSpec& mask, std::span<const int> prompt, const SamplerConfig& cfg) {
  ck.require_trained();
  require(cfg.deterministic, ErrorCode::kConfig, "only deterministic sampling is supported");
  for (double v : image.data())
    require(v >= 0.0 && v <= 1.0, ErrorCode::kInvalidArgument, "image values must lie in [0, 1]");
  const std::vector<int> cond = pad_prompt(prompt, ck.config);
  const std::vector<int> null_tokens(ck.config.seq_len, 0);
  const InpaintCondition c = make_condition(ck, image, mask);
  const auto steps = inference_timesteps(sched.train_steps, cfg.inference_steps);

  const std::size_t ls = ck.config.latent_size();
  Tensor z({ck.config.latent_channels, ls, ls});
  Rng rng(derive_seed(cfg.seed, 0x5a3e));
  for (double& v : z.data()) v = rng.normal();

  for (std::size_t i = 0; i < steps.size(); ++i) {
    const std::size_t t = steps[i];
    const std::size_t t_prev = i + 1 < steps.size() ? steps[i + 1] : 0;
    Tensor eps = cfg_predict(ck, z, c.z0m, c.m_lat, t, cond, null_tokens, cfg.guidance_scale);
    if (cfg.clip_sample) eps = clip_noise_estimate(ck, z, eps, t, sched);
    z = ddim_step(z, eps, t, t_prev, sched);
  }
  Tensor out = PatchCodec(ck.config).decode(z);
  for (double& v : out.data()) v = std::clamp(v, 0.0, 1.0);
  return out;
}

}  // namespace advpaint

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "diffusion/schedule.hpp"
#include "model/checkpoint.hpp"
#include "region/masks.hpp"

namespace advpaint {

struct SamplerConfig {
  std::size_t inference_steps = 50;
  double guidance_scale = 7.5;
  std::uint64_t seed = 0;
  bool deterministic = true;  // sigma_t = 0; the only supported mode
  /// Projects each predicted clean latent onto images in [0, 1] (decode, clip,
  /// encode) and re-derives the noise estimate from it before stepping.
  bool clip_sample = true;
};

/// eps_u + scale * (eps_c - eps_u), evaluated as (1 - scale) eps_u + scale eps_c
/// so that scale 0 and 1 return the branch predictions exactly.
Tensor guidance_combine(const Tensor& eps_u, const Tensor& eps_c, double scale);

/// Classifier-free guided noise prediction for the denoiser input
/// concat(z_t, z0m, m_lat). Tokens are padded with the null id 0.
Tensor cfg_predict(const Checkpoint& ck, const Tensor& z_t, const Tensor& z0m,
                   const Tensor& m_lat, std::size_t t, std::span<const int> cond_tokens,
                   std::span<const int> null_tokens, double scale);

/// Latent-space conditioning for an image and keep/hole mask.
struct InpaintCondition {
  Tensor z0m;    // encode(x (x) m)
  Tensor m_lat;  // resized mask
};
InpaintCondition make_condition(const Checkpoint& ck, const Tensor& image, const MaskSpec& mask);

/// The clip_sample projection: returns the noise estimate consistent with the
/// clipped clean prediction at timestep t.
Tensor clip_noise_estimate(const Checkpoint& ck, const Tensor& z_t, const Tensor& eps_hat,
                           std::size_t t, const NoiseSchedule& sched);

/// Regenerates the hole of `image`: seeded z_T ~ N(0, I), deterministic DDIM
/// over the inference timesteps with guidance, decode, clip to [0, 1].
Tensor inpaint_sample(const Checkpoint& ck, const NoiseSchedule& sched, const Tensor& image,
                      const MaskSpec& mask, std::span<const int> prompt, const SamplerConfig& cfg);

}  // namespace advpaint

#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "diffusion/schedule.hpp"
#include "model/checkpoint.hpp"
#include "model/denoiser.hpp"
#include "region/masks.hpp"

namespace advpaint {

enum class Objective { kAttn, kCrossOnly, kSelfOnly, kNoiseMax, kNoiseMin, kLatentMin };

const char* objective_name(Objective o);
/// "attn", "cross-only", "self-only", "noise-max", "noise-min", "latent-min";
/// kInvalidArgument otherwise.
Objective parse_objective(const std::string& name);
bool uses_taps(Objective o);

/// Layer indices (0-based) that contribute; empty selects every layer.
using LayerSubset = std::vector<std::size_t>;

/// Sum over layers of ||cross_q(adv) - cross_q(clean)||^2. The clean taps are
/// constants, so gradients reach only the adversarial pass.
Var loss_cross(Graph& g, const TapValues& clean, const TapSet& adv, const LayerSubset& layers = {});
/// Same for self_q, self_k and self_v.
Var loss_self(Graph& g, const TapValues& clean, const TapSet& adv, const LayerSubset& layers = {});
/// loss_cross + loss_self.
Var loss_attn(Graph& g, const TapValues& clean, const TapSet& adv, const LayerSubset& layers = {});

/// Everything one denoiser pass of the attack holds fixed.
struct PassSetup {
  const Checkpoint* ck = nullptr;
  const NoiseSchedule* sched = nullptr;
  std::size_t timestep = 0;
  Tensor eps;                  // latent noise, fixed for the stage
  MaskSpec hole;               // keep/hole mask of the pass
  std::vector<int> tokens;     // conditional prompt
};

/// Denoiser pass on an image leaf: z_t from encode(x), z0m from
/// encode(x (x) hole), m' from the hole mask.
struct PassOutput {
  DenoiserOutput out;
  Var z0;
};
PassOutput attack_pass(Graph& g, const ParamVars& params, Var image, const PassSetup& setup);

/// Clean taps for `image` under `setup` (values only).
TapValues clean_taps(const Tensor& image, const PassSetup& setup);

struct ObjectiveSpec {
  Objective kind = Objective::kAttn;
  LayerSubset layers;
  std::optional<Tensor> target_latent;  // latent-min; zeros when absent
  double loss_scale = 1.0;
};

/// The ascent objective at `image` (a graph leaf). `clean` is required for the
/// attention objectives. Noise objectives are +-||eps - eps_theta||^2;
/// latent-min is -||z_trg - encode(x)||^2.
Var objective_loss(Graph& g, const ParamVars& params, Var image, const PassSetup& setup,
                   const ObjectiveSpec& spec, const TapValues* clean);

}  // namespace advpaint

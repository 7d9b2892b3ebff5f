#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "attack/objectives.hpp"

namespace advpaint {

enum class StageMode { kSingle, kTwoStage, kMultiObject };
const char* stage_mode_name(StageMode m);
/// "single", "two" / "two-stage", "multi" / "multi-object".
StageMode parse_stage_mode(const std::string& name);

struct AttackConfig {
  double eta = 0.06;
  double alpha0 = 0.03;
  std::size_t iters = 250;
  Objective objective = Objective::kAttn;
  StageMode stages = StageMode::kTwoStage;
  double rho = 1.2;
  std::optional<std::size_t> timestep;  // defaults to the last training timestep
  std::uint64_t seed = 0;
  std::optional<Tensor> target_latent;
  LayerSubset layers;
  double loss_scale = 1.0;  // positive; leaves the sign-ascent path unchanged
  std::vector<int> prompt;  // conditioning tokens for the attack pass

  /// kConfig on out-of-range settings.
  void validate() const;
};

/// alpha0 * (1 - i / N), never below alpha0 / 100.
double step_size(const AttackConfig& cfg, std::size_t i);

/// Clips delta to [-eta, eta] and to [-x, 1 - x] elementwise.
Tensor project_delta(const Tensor& delta, const Tensor& x, double eta);
/// clip(x + delta, 0, 1).
Tensor apply_delta(const Tensor& x, const Tensor& delta);

/// Called after every update with the iteration index, the stage delta and
/// the adversarial image fed to the next pass.
using IterationHook = std::function<void(std::size_t, const Tensor&, const Tensor&)>;

struct StageResult {
  Tensor delta;          // C x H x W, zero outside the support
  Tensor initial_delta;  // the uniform draw after projection
  std::vector<double> loss_trace;  // loss before each of the N updates
  double final_loss = 0.0;         // loss after the last update
};

/// Sign-gradient ascent on one region. `x_adv_in` supplies the pixels outside
/// the support (earlier stages). The noise draw and clean taps are fixed for
/// the whole stage.
StageResult pgd_stage(const Checkpoint& ck, const NoiseSchedule& sched, const Tensor& x,
                      const Tensor& x_adv_in, const Tensor& support, const MaskSpec& hole,
                      const AttackConfig& cfg, std::uint64_t stage_seed,
                      const IterationHook& hook = {});

struct StageRecord {
  std::string label;
  Tensor support;  // H x W
  MaskSpec hole;
  std::vector<double> loss_trace;
  double final_loss = 0.0;
};

struct ProtectionResult {
  Tensor delta;          // sum of the stage perturbations
  Tensor initial_delta;  // sum of the stage initial draws
  Tensor adversarial;    // clip(x + delta, 0, 1)
  std::vector<StageRecord> stages;
  AttackConfig config;
  std::size_t iterations = 0;

  void save(const std::filesystem::path& path) const;
};

/// The stage regions protect() optimizes, in order, empty ones removed.
std::vector<Region> protection_regions(const std::vector<Box>& boxes, const AttackConfig& cfg,
                                       std::size_t size);

/// Hole mask of a stage's denoiser pass: keeps exactly the region
/// (all-keep for single-stage).
MaskSpec stage_hole_mask(const Region& region, const AttackConfig& cfg, std::size_t size);

/// The uniform draw pgd_stage starts from, already projected.
Tensor initial_stage_delta(const Tensor& x, const Tensor& support, double eta,
                           std::uint64_t stage_seed);

/// The perturbation protect() would start from, with no optimization: the
/// unprotected random-noise duplicate.
Tensor random_delta(const Tensor& x, const std::vector<Box>& boxes, const AttackConfig& cfg);

/// Seed of stage `index` under cfg.seed.
std::uint64_t stage_seed(const AttackConfig& cfg, std::size_t index);

/// Hook variant that also receives the stage index.
using StageIterationHook = std::function<void(std::size_t, std::size_t, const Tensor&, const Tensor&)>;

/// Region-wise protection. two-stage: [union of rho-enlarged boxes, rest];
/// multi-object: one region per box plus the rest; single: the whole image
/// with an all-keep hole mask. Each stage keeps exactly its own region in the
/// hole mask of its denoiser pass.
ProtectionResult protect(const Checkpoint& ck, const NoiseSchedule& sched, const Tensor& x,
                         const std::vector<Box>& boxes, const AttackConfig& cfg,
                         const StageIterationHook& hook = {});

}  // namespace advpaint

#include "attack/pgd.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>

#include "core/error.hpp"
#include "core/rng.hpp"
#include "io/container.hpp"

namespace advpaint {
namespace {

Tensor region_support_3d(const Tensor& support, std::size_t channels) {
  const std::size_t hw = support.numel();
  Tensor out({channels, support.extent(0), support.extent(1)});
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t i = 0; i < hw; ++i) out[c * hw + i] = support[i];
  return out;
}

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

double evaluate(const Checkpoint& ck, const Tensor& image, const PassSetup& setup,
                const ObjectiveSpec& spec, const TapValues* clean, Tensor* grad) {
  Graph g;
  const ParamVars params = bind_weights(g, ck, false);
  Var x = grad ? g.input(image) : g.constant(image);
  Var loss = objective_loss(g, params, x, setup, spec, clean);
  const double value = loss.value().item();
  if (grad && std::isfinite(value)) {
    g.backward(loss);
    *grad = g.grad(x);
  }
  return value;
}

}  // namespace

const char* stage_mode_name(StageMode m) {
  switch (m) {
    case StageMode::kSingle: return "single";
    case StageMode::kTwoStage: return "two";
    case StageMode::kMultiObject: return "multi";
  }
  return "?";
}

StageMode parse_stage_mode(const std::string& name) {
  if (name == "single") return StageMode::kSingle;
  if (name == "two" || name == "two-stage") return StageMode::kTwoStage;
  if (name == "multi" || name == "multi-object") return StageMode::kMultiObject;
  fail(ErrorCode::kInvalidArgument, "unknown stage mode '" + name + "'");
}

void AttackConfig::validate() const {
  auto check = [](bool ok, const std::string& what) {
    require(ok, ErrorCode::kConfig, "attack config: " + what);
  };
  check(std::isfinite(eta) && eta > 0.0, "eta must be positive");
  check(std::isfinite(alpha0) && alpha0 >= 0.0, "alpha0 must be non-negative");
  check(iters >= 1, "iters must be at least 1");
  check(std::isfinite(rho) && rho >= 1.0, "rho must be at least 1");
  check(std::isfinite(loss_scale) && loss_scale > 0.0, "loss scale must be positive");
  check(!timestep || *timestep >= 1, "timestep must be at least 1");
}

double step_size(const AttackConfig& cfg, std::size_t i) {
  const double n = static_cast<double>(cfg.iters);
  const double a = cfg.alpha0 * (1.0 - static_cast<double>(i) / n);
  return std::max(a, cfg.alpha0 / 100.0);
}

Tensor project_delta(const Tensor& delta, const Tensor& x, double eta) {
  require(delta.shape() == x.shape(), ErrorCode::kDimension,
          "delta " + shape_str(delta.shape()) + " does not match image " + shape_str(x.shape()));
  Tensor out(delta.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) {
    const double lo = std::max(-eta, -x[i]);
    const double hi = std::min(eta, 1.0 - x[i]);
    out[i] = std::clamp(delta[i], lo, std::max(lo, hi));
  }
  return out;
}

Tensor apply_delta(const Tensor& x, const Tensor& delta) {
  require(delta.shape() == x.shape(), ErrorCode::kDimension,
          "delta " + shape_str(delta.shape()) + " does not match image " + shape_str(x.shape()));
  Tensor out(x.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = std::clamp(x[i] + delta[i], 0.0, 1.0);
  return out;
}

StageResult pgd_stage(const Checkpoint& ck, const NoiseSchedule& sched, const Tensor& x,
                      const Tensor& x_adv_in, const Tensor& support, const MaskSpec& hole,
                      const AttackConfig& cfg, std::uint64_t stage_seed,
                      const IterationHook& hook) {
  cfg.validate();
  const DenoiserConfig& mc = ck.config;
  const Shape image_shape{mc.image_channels, mc.image_size, mc.image_size};
  require(x.shape() == image_shape && x_adv_in.shape() == image_shape, ErrorCode::kDimension,
          "attack images must be " + shape_str(image_shape));
  require(support.shape() == Shape{mc.image_size, mc.image_size}, ErrorCode::kDimension,
          "region support must be " + std::to_string(mc.image_size) + "x" +
              std::to_string(mc.image_size));
  for (double v : x.data())
    require(v >= 0.0 && v <= 1.0, ErrorCode::kInvalidArgument, "image values must lie in [0, 1]");
  require(sum(support) > 0.0, ErrorCode::kInvalidArgument, "region support is empty");

  PassSetup setup;
  setup.ck = &ck;
  setup.sched = &sched;
  setup.timestep = cfg.timestep.value_or(sched.train_steps);
  require(setup.timestep <= sched.train_steps, ErrorCode::kConfig,
          "attack timestep exceeds the schedule");
  setup.hole = hole;
  setup.tokens = pad_prompt(cfg.prompt, mc);
  setup.eps = Tensor({mc.latent_channels, mc.latent_size(), mc.latent_size()});
  Rng noise_rng(derive_seed(stage_seed, 1));
  for (double& v : setup.eps.data()) v = noise_rng.normal();

  ObjectiveSpec spec{cfg.objective, cfg.layers, cfg.target_latent, cfg.loss_scale};
  std::optional<TapValues> clean;
  if (uses_taps(cfg.objective)) clean = clean_taps(x, setup);
  const TapValues* clean_ptr = clean ? &*clean : nullptr;

  const Tensor s3 = region_support_3d(support, mc.image_channels);
  Tensor delta = initial_stage_delta(x, support, cfg.eta, stage_seed);

  auto compose = [&](const Tensor& d) {
    Tensor out(image_shape);
    for (std::size_t i = 0; i < out.numel(); ++i)
      out[i] = s3[i] != 0.0 ? std::clamp(x[i] + d[i], 0.0, 1.0) : x_adv_in[i];
    return out;
  };

  StageResult result;
  result.initial_delta = delta;
  result.loss_trace.reserve(cfg.iters);
  Tensor grad;
  for (std::size_t i = 0; i < cfg.iters; ++i) {
    const Tensor x_adv = compose(delta);
    const double loss = evaluate(ck, x_adv, setup, spec, clean_ptr, &grad);
    require(std::isfinite(loss) && grad.all_finite(), ErrorCode::kAttack,
            "attack loss is not finite at iteration " + std::to_string(i));
    result.loss_trace.push_back(loss);
    const double alpha = step_size(cfg, i);
    for (std::size_t j = 0; j < delta.numel(); ++j)
      if (s3[j] != 0.0) delta[j] += alpha * sign(grad[j]);
    delta = project_delta(delta, x, cfg.eta);
    if (hook) hook(i, delta, compose(delta));
  }
  result.final_loss = evaluate(ck, compose(delta), setup, spec, clean_ptr, nullptr);
  require(std::isfinite(result.final_loss), ErrorCode::kAttack,
          "attack loss is not finite after iteration " + std::to_string(cfg.iters));
  result.delta = std::move(delta);
  return result;
}

std::vector<Region> protection_regions(const std::vector<Box>& boxes, const AttackConfig& cfg,
                                       std::size_t n) {
  std::vector<Region> regions;
  if (cfg.stages == StageMode::kSingle) {
    regions.push_back({Tensor({n, n}, 1.0), std::nullopt, "image"});
    return regions;
  }
  require(!boxes.empty(), ErrorCode::kInvalidArgument,
          std::string(stage_mode_name(cfg.stages)) + "-stage protection needs at least one box");
  auto parts = multi_object_regions(boxes, cfg.rho, n, n);
  if (cfg.stages == StageMode::kTwoStage && parts.size() > 2) {
    Region inside{Tensor({n, n}, 0.0), std::nullopt, "inside"};
    for (std::size_t r = 0; r + 1 < parts.size(); ++r)
      for (std::size_t i = 0; i < n * n; ++i) inside.support[i] += parts[r].support[i];
    regions.push_back(std::move(inside));
    regions.push_back(std::move(parts.back()));
  } else {
    regions = std::move(parts);
    if (cfg.stages == StageMode::kTwoStage) regions[0].label = "inside";
  }
  std::erase_if(regions, [](const Region& r) { return r.area() == 0; });
  return regions;
}

MaskSpec stage_hole_mask(const Region& region, const AttackConfig& cfg, std::size_t n) {
  if (cfg.stages == StageMode::kSingle) return MaskSpec::all_keep(n, n);
  return MaskSpec::from_grid(region.support, MaskOrigin::kCustom, region.box);
}

Tensor initial_stage_delta(const Tensor& x, const Tensor& support, double eta,
                           std::uint64_t seed) {
  const std::size_t channels = x.extent(0);
  const Tensor s3 = region_support_3d(support, channels);
  require(s3.shape() == x.shape(), ErrorCode::kDimension, "support does not match the image");
  Rng rng(derive_seed(seed, 2));
  Tensor delta(x.shape());
  for (std::size_t i = 0; i < delta.numel(); ++i) {
    const double u = rng.uniform(-eta, eta);
    delta[i] = s3[i] != 0.0 ? u : 0.0;
  }
  return project_delta(delta, x, eta);
}

std::uint64_t stage_seed(const AttackConfig& cfg, std::size_t index) {
  return derive_seed(cfg.seed, index);
}

Tensor random_delta(const Tensor& x, const std::vector<Box>& boxes, const AttackConfig& cfg) {
  cfg.validate();
  const std::size_t n = x.extent(1);
  Tensor delta(x.shape(), 0.0);
  const auto regions = protection_regions(boxes, cfg, n);
  for (std::size_t r = 0; r < regions.size(); ++r) {
    const Tensor d = initial_stage_delta(x, regions[r].support, cfg.eta, stage_seed(cfg, r));
    for (std::size_t i = 0; i < d.numel(); ++i) delta[i] += d[i];
  }
  return delta;
}

ProtectionResult protect(const Checkpoint& ck, const NoiseSchedule& sched, const Tensor& x,
                         const std::vector<Box>& boxes, const AttackConfig& cfg,
                         const StageIterationHook& hook) {
  cfg.validate();
  const DenoiserConfig& mc = ck.config;
  const std::size_t n = mc.image_size;

  const std::vector<Region> regions = protection_regions(boxes, cfg, n);

  ProtectionResult result;
  result.config = cfg;
  result.delta = Tensor(x.shape(), 0.0);
  result.initial_delta = Tensor(x.shape(), 0.0);
  Tensor x_adv = x;
  for (std::size_t r = 0; r < regions.size(); ++r) {
    const Region& region = regions[r];
    const MaskSpec hole = stage_hole_mask(region, cfg, n);
    const std::size_t stage_index = r;
    IterationHook stage_hook;
    if (hook)
      stage_hook = [&](std::size_t i, const Tensor& d, const Tensor& xa) {
        hook(stage_index, i, d, xa);
      };
    StageResult sr = pgd_stage(ck, sched, x, x_adv, region.support, hole, cfg,
                               stage_seed(cfg, stage_index), stage_hook);
    for (std::size_t i = 0; i < x.numel(); ++i) {
      result.delta[i] += sr.delta[i];
      result.initial_delta[i] += sr.initial_delta[i];
    }
    x_adv = apply_delta(x, result.delta);
    result.iterations += cfg.iters;
    result.stages.push_back({region.label, region.support, hole, std::move(sr.loss_trace),
                             sr.final_loss});
  }
  result.adversarial = apply_delta(x, result.delta);
  return result;
}

void ProtectionResult::save(const std::filesystem::path& path) const {
  std::vector<ContainerEntry> entries;
  nlohmann::ordered_json j;
  j["eta"] = config.eta;
  j["alpha0"] = config.alpha0;
  j["iters"] = config.iters;
  j["objective"] = objective_name(config.objective);
  j["stages"] = stage_mode_name(config.stages);
  j["rho"] = config.rho;
  if (config.timestep) j["timestep"] = *config.timestep;
  j["seed"] = config.seed;
  std::vector<std::size_t> layers;
  for (std::size_t l : config.layers) layers.push_back(l + 1);
  j["layers"] = layers;
  j["prompt"] = config.prompt;
  j["iterations"] = iterations;
  entries.push_back(ContainerEntry::from_string("__attack__", j.dump()));
  entries.push_back(ContainerEntry::from_tensor("delta", delta));
  entries.push_back(ContainerEntry::from_tensor("initial_delta", initial_delta));
  entries.push_back(ContainerEntry::from_tensor("adversarial", adversarial));
  for (std::size_t s = 0; s < stages.size(); ++s) {
    const std::string prefix = "stage" + std::to_string(s) + ".";
    entries.push_back(ContainerEntry::from_string(prefix + "label", stages[s].label));
    entries.push_back(ContainerEntry::from_tensor(prefix + "support", stages[s].support));
    Tensor trace({stages[s].loss_trace.size() + 1});
    std::copy(stages[s].loss_trace.begin(), stages[s].loss_trace.end(), trace.storage().begin());
    trace[stages[s].loss_trace.size()] = stages[s].final_loss;
    entries.push_back(ContainerEntry::from_tensor(prefix + "loss_trace", trace));
  }
  write_container_file(path, entries);
}

}  // namespace advpaint

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

#include "data/shapes.hpp"
#include "diffusion/schedule.hpp"
#include "model/checkpoint.hpp"

namespace advpaint {

struct TrainConfig {
  std::size_t steps = 3000;
  std::size_t batch_size = 16;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double cond_dropout = 0.1;
  std::uint64_t seed = 0;
  std::size_t checkpoint_every = 1000;

  /// kConfig unless all positive and dropout in [0, 1).
  void validate() const;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<double> loss_trace;  // one batch-mean loss per step
};

/// Called after every step with (step index from 1, batch loss).
using TrainProgress = std::function<void(std::size_t, double)>;

/// Minimizes the mean squared noise-prediction error with Adam. Weights start
/// from `init` (or a fresh seeded initialization). When `out` is set the
/// checkpoint is written every checkpoint_every steps and at the end.
/// A non-finite loss raises kTraining naming the step.
TrainResult train(const TrainConfig& config, const std::vector<ShapeSample>& dataset,
                  const NoiseSchedule& schedule, const DenoiserConfig& model_config,
                  const std::optional<Checkpoint>& init = std::nullopt,
                  const std::optional<std::filesystem::path>& out = std::nullopt,
                  const TrainProgress& progress = {});

/// Mean of the trailing `window` entries ending at `step` (1-based).
double smoothed_loss(const std::vector<double>& trace, std::size_t step, std::size_t window);

}  // namespace advpaint

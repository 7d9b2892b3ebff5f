#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "io/container.hpp"
#include "model/config.hpp"

namespace advpaint {

/// Name and shape of every denoiser weight, in a fixed order.
std::vector<std::pair<std::string, Shape>> parameter_layout(const DenoiserConfig& config);

struct InitOptions {
  double stddev = 0.02;
  bool zero_head = true;
};

/// Denoiser weights plus the config they were built for.
struct Checkpoint {
  DenoiserConfig config;
  std::map<std::string, Tensor> weights;
  std::uint64_t train_step = 0;
  std::uint64_t seed = 0;

  /// Seeded normal weights; norm gains 1, biases 0, output head optionally zero.
  static Checkpoint initialize(const DenoiserConfig& config, std::uint64_t seed,
                               const InitOptions& options = {});

  /// kCheckpoint unless the weight names and shapes match the config exactly.
  void validate() const;
  /// kCheckpoint for a checkpoint that has never been trained.
  void require_trained() const;

  const Tensor& weight(const std::string& name) const;
  std::size_t parameter_count() const;

  std::vector<ContainerEntry> to_entries() const;
  static Checkpoint from_entries(const std::vector<ContainerEntry>& entries);

  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);
};

}  // namespace advpaint

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace advpaint {

struct GradcheckItem {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t coords = 0;
};

struct GradcheckReport {
  std::vector<GradcheckItem> items;
  double max_rel_error = 0.0;
};

/// Called once per finished item.
using GradcheckProgress = std::function<void(const GradcheckItem&)>;

/// Central-difference checks of every differentiable primitive, the denoiser
/// training loss, and every attack objective on the toy denoiser, each at
/// `coords` seeded coordinates.
GradcheckReport run_gradcheck_suite(std::uint64_t seed, double step, std::size_t coords = 20,
                                    const GradcheckProgress& progress = {});

}  // namespace advpaint

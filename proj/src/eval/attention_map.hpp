#pragma once

#include <cstdint>
#include <string>

#include "model/denoiser.hpp"

namespace advpaint {

enum class Branch { kSelf, kCross };
const char* branch_name(Branch b);
Branch parse_branch(const std::string& name);

struct HeatMap {
  Tensor map;               // out_size x out_size in [0, 1]
  bool degenerate = false;  // zero-variance features: flat 0.5 map
};

inline constexpr std::size_t kHeatMapSize = 16;

/// First principal component of the tokens x width feature matrix, by power
/// iteration on the centred covariance (100 iterations, seeded start, sign
/// chosen so the largest-magnitude entry of the component is positive).
/// Returns the per-token scores; empty when the features have no variance.
std::vector<double> principal_scores(const Tensor& features, std::uint64_t seed);

/// Bilinear resize of a h x w grid to out x out (pixel-centre alignment).
Tensor resize_bilinear(const Tensor& grid, std::size_t out_h, std::size_t out_w);

/// PCA heat map of one layer's attention output (layer is 1-based).
HeatMap attention_pca_map(const TapValues& taps, std::size_t layer, Branch branch,
                          std::uint64_t seed = 0, std::size_t out_size = kHeatMapSize);

/// The same from a raw feature matrix laid out on a grid_h x grid_w grid.
HeatMap feature_pca_map(const Tensor& features, std::size_t grid_h, std::size_t grid_w,
                        std::uint64_t seed = 0, std::size_t out_size = kHeatMapSize);

}  // namespace advpaint

#pragma once

#include <cstdint>
#include <limits>

#include "model/checkpoint.hpp"
#include "model/denoiser.hpp"
#include "region/masks.hpp"

namespace advpaint {

inline constexpr double kPsnrIdentical = std::numeric_limits<double>::infinity();

/// 10 log10(1 / MSE); +infinity for identical images.
double psnr(const Tensor& a, const Tensor& b);

/// softmax(q_h k_h^T / sqrt(d)) for every head: heads x rows(q) x rows(k).
Tensor attention_maps(const Tensor& q, const Tensor& k, std::size_t heads);

/// Mean over rows (last axis vectors) of 1 - cosine similarity. A zero row
/// matches only another zero row.
double map_divergence(const Tensor& a, const Tensor& b);

/// Mean of the self and cross branch divergences, each averaged over layers,
/// heads and rows. Symmetric; in [0, 2].
double attention_divergence(const TapValues& a, const TapValues& b, std::size_t heads);

/// Mean squared difference over hole pixels and channels; 0 for an empty hole.
double hole_deviation(const Tensor& a, const Tensor& b, const MaskSpec& mask);

/// ||encode(a) - encode(b)||_2.
double latent_l2(const DenoiserConfig& config, const Tensor& a, const Tensor& b);

/// Adds seeded N(0, sigma^2) noise per value and clips to [0, 1].
Tensor gaussian_purify(const Tensor& image, double sigma, std::uint64_t seed);

}  // namespace advpaint

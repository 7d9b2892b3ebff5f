#include "eval/attention_map.hpp"

#include <algorithm>
#include <cmath>

#include "core/error.hpp"
#include "core/rng.hpp"

namespace advpaint {
namespace {

constexpr int kPowerIterations = 100;
constexpr double kDegenerateTol = 1e-12;

}  // namespace

const char* branch_name(Branch b) { return b == Branch::kSelf ? "self" : "cross"; }

Branch parse_branch(const std::string& name) {
  if (name == "self") return Branch::kSelf;
  if (name == "cross") return Branch::kCross;
  fail(ErrorCode::kInvalidArgument, "unknown branch '" + name + "' (self or cross)");
}

std::vector<double> principal_scores(const Tensor& features, std::uint64_t seed) {
  require(features.rank() == 2, ErrorCode::kDimension, "features must be tokens x width");
  const std::size_t n = features.extent(0);
  const std::size_t c = features.extent(1);
  Tensor centred = features;
  for (std::size_t j = 0; j < c; ++j) {
    double mu = 0.0;
    for (std::size_t i = 0; i < n; ++i) mu += features.at(i, j);
    mu /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) centred.at(i, j) -= mu;
  }
  if (max_abs(centred) <= kDegenerateTol) return {};

  Tensor cov({c, c}, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t a = 0; a < c; ++a)
      for (std::size_t b = 0; b < c; ++b) cov.at(a, b) += centred.at(i, a) * centred.at(i, b);

  Rng rng(derive_seed(seed, 0x9ca1));
  std::vector<double> v(c), next(c);
  for (double& x : v) x = rng.normal();
  for (int it = 0; it < kPowerIterations; ++it) {
    double norm = 0.0;
    for (std::size_t a = 0; a < c; ++a) {
      double s = 0.0;
      for (std::size_t b = 0; b < c; ++b) s += cov.at(a, b) * v[b];
      next[a] = s;
      norm += s * s;
    }
    norm = std::sqrt(norm);
    if (norm <= kDegenerateTol) return {};
    for (std::size_t a = 0; a < c; ++a) v[a] = next[a] / norm;
  }
  std::size_t arg = 0;
  for (std::size_t a = 1; a < c; ++a)
    if (std::abs(v[a]) > std::abs(v[arg])) arg = a;
  if (v[arg] < 0.0)
    for (double& x : v) x = -x;

  std::vector<double> scores(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t a = 0; a < c; ++a) scores[i] += centred.at(i, a) * v[a];
  return scores;
}

Tensor resize_bilinear(const Tensor& grid, std::size_t out_h, std::size_t out_w) {
  require(grid.rank() == 2, ErrorCode::kDimension, "resize expects an h x w grid");
  const std::size_t h = grid.extent(0);
  const std::size_t w = grid.extent(1);
  Tensor out({out_h, out_w});
  auto source = [](std::size_t dst, std::size_t in, std::size_t outn, std::size_t& i0,
                   std::size_t& i1, double& frac) {
    double s = (static_cast<double>(dst) + 0.5) * static_cast<double>(in) /
                   static_cast<double>(outn) - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(in - 1));
    i0 = static_cast<std::size_t>(std::floor(s));
    i1 = std::min(i0 + 1, in - 1);
    frac = s - static_cast<double>(i0);
  };
  for (std::size_t y = 0; y < out_h; ++y) {
    std::size_t y0, y1;
    double fy;
    source(y, h, out_h, y0, y1, fy);
    for (std::size_t x = 0; x < out_w; ++x) {
      std::size_t x0, x1;
      double fx;
      source(x, w, out_w, x0, x1, fx);
      const double top = grid.at(y0, x0) * (1.0 - fx) + grid.at(y0, x1) * fx;
      const double bottom = grid.at(y1, x0) * (1.0 - fx) + grid.at(y1, x1) * fx;
      out.at(y, x) = top * (1.0 - fy) + bottom * fy;
    }
  }
  return out;
}

HeatMap feature_pca_map(const Tensor& features, std::size_t grid_h, std::size_t grid_w,
                        std::uint64_t seed, std::size_t out_size) {
  require(features.rank() == 2 && features.extent(0) == grid_h * grid_w, ErrorCode::kDimension,
          "features " + shape_str(features.shape()) + " do not fit a " + std::to_string(grid_h) +
              "x" + std::to_string(grid_w) + " grid");
  HeatMap result{Tensor({out_size, out_size}, 0.5), true};
  const std::vector<double> scores = principal_scores(features, seed);
  if (scores.empty()) return result;
  const Tensor resized = resize_bilinear(Tensor({grid_h, grid_w}, scores), out_size, out_size);
  const auto [lo, hi] = std::minmax_element(resized.data().begin(), resized.data().end());
  const double range = *hi - *lo;
  if (range <= kDegenerateTol) return result;
  const double low = *lo;
  for (std::size_t i = 0; i < resized.numel(); ++i)
    result.map[i] = (resized[i] - low) / range;
  result.map[static_cast<std::size_t>(hi - resized.data().begin())] = 1.0;
  result.degenerate = false;
  return result;
}

HeatMap attention_pca_map(const TapValues& taps, std::size_t layer, Branch branch,
                          std::uint64_t seed, std::size_t out_size) {
  require(layer >= 1 && layer <= taps.size(), ErrorCode::kInvalidArgument,
          "layer must lie in 1.." + std::to_string(taps.size()));
  const LayerTapValues& l = taps[layer - 1];
  return feature_pca_map(branch == Branch::kSelf ? l.self_out : l.cross_out, l.grid_h, l.grid_w,
                         seed, out_size);
}

}  // namespace advpaint

#include "eval/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "core/error.hpp"
#include "core/rng.hpp"
#include "model/codec.hpp"

namespace advpaint {
namespace {

void same_shape(const Tensor& a, const Tensor& b, const char* what) {
  require(a.shape() == b.shape(), ErrorCode::kDimension,
          std::string(what) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
              shape_str(b.shape()));
}

}  // namespace

double psnr(const Tensor& a, const Tensor& b) {
  same_shape(a, b, "psnr");
  double se = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    const double d = a[i] - b[i];
    se += d * d;
  }
  if (se == 0.0) return kPsnrIdentical;
  return 10.0 * std::log10(static_cast<double>(a.numel()) / se);
}

Tensor attention_maps(const Tensor& q, const Tensor& k, std::size_t heads) {
  require(q.rank() == 2 && k.rank() == 2 && q.extent(1) == k.extent(1), ErrorCode::kDimension,
          "attention_maps: q " + shape_str(q.shape()) + " and k " + shape_str(k.shape()));
  const std::size_t width = q.extent(1);
  require(heads >= 1 && width % heads == 0, ErrorCode::kDimension,
          "width " + std::to_string(width) + " not divisible by " + std::to_string(heads) +
              " heads");
  const std::size_t n = q.extent(0);
  const std::size_t m = k.extent(0);
  const std::size_t d = width / heads;
  const double s = 1.0 / std::sqrt(static_cast<double>(d));
  Tensor out({heads, n, m});
  std::vector<double> row(m);
  for (std::size_t h = 0; h < heads; ++h)
    for (std::size_t i = 0; i < n; ++i) {
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < m; ++j) {
        double dot = 0.0;
        for (std::size_t c = 0; c < d; ++c) dot += q.at(i, h * d + c) * k.at(j, h * d + c);
        row[j] = dot * s;
        mx = std::max(mx, row[j]);
      }
      double total = 0.0;
      for (std::size_t j = 0; j < m; ++j) {
        row[j] = std::exp(row[j] - mx);
        total += row[j];
      }
      for (std::size_t j = 0; j < m; ++j) out[(h * n + i) * m + j] = row[j] / total;
    }
  return out;
}

double map_divergence(const Tensor& a, const Tensor& b) {
  same_shape(a, b, "map_divergence");
  const std::size_t m = a.shape().back();
  const std::size_t rows = a.numel() / m;
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      const double x = a[r * m + j];
      const double y = b[r * m + j];
      dot += x * y;
      na += x * x;
      nb += y * y;
    }
    double cosine;
    if (na == 0.0 || nb == 0.0) cosine = (na == 0.0 && nb == 0.0) ? 1.0 : 0.0;
    else cosine = std::clamp(dot / std::sqrt(na * nb), -1.0, 1.0);
    total += 1.0 - cosine;
  }
  return total / static_cast<double>(rows);
}

double attention_divergence(const TapValues& a, const TapValues& b, std::size_t heads) {
  require(a.size() == b.size() && !a.empty(), ErrorCode::kDimension,
          "attention_divergence: layer count mismatch");
  double self_total = 0.0;
  double cross_total = 0.0;
  for (std::size_t l = 0; l < a.size(); ++l) {
    self_total += map_divergence(attention_maps(a[l].self_q, a[l].self_k, heads),
                                 attention_maps(b[l].self_q, b[l].self_k, heads));
    cross_total += map_divergence(attention_maps(a[l].cross_q, a[l].cross_k, heads),
                                  attention_maps(b[l].cross_q, b[l].cross_k, heads));
  }
  const double layers = static_cast<double>(a.size());
  return 0.5 * (self_total / layers + cross_total / layers);
}

double hole_deviation(const Tensor& a, const Tensor& b, const MaskSpec& mask) {
  same_shape(a, b, "hole_deviation");
  require(a.rank() == 3 && a.extent(1) == mask.height() && a.extent(2) == mask.width(),
          ErrorCode::kDimension, "hole_deviation: mask does not match the images");
  double se = 0.0;
  std::size_t count = 0;
  for (std::size_t c = 0; c < a.extent(0); ++c)
    for (std::size_t y = 0; y < mask.height(); ++y)
      for (std::size_t x = 0; x < mask.width(); ++x) {
        if (!mask.is_hole(y, x)) continue;
        const double d = a.at(c, y, x) - b.at(c, y, x);
        se += d * d;
        ++count;
      }
  return count == 0 ? 0.0 : se / static_cast<double>(count);
}

double latent_l2(const DenoiserConfig& config, const Tensor& a, const Tensor& b) {
  same_shape(a, b, "latent_l2");
  const PatchCodec codec(config);
  const Tensor za = codec.encode(a);
  const Tensor zb = codec.encode(b);
  double s = 0.0;
  for (std::size_t i = 0; i < za.numel(); ++i) s += (za[i] - zb[i]) * (za[i] - zb[i]);
  return std::sqrt(s);
}

Tensor gaussian_purify(const Tensor& image, double sigma, std::uint64_t seed) {
  require(std::isfinite(sigma) && sigma >= 0.0, ErrorCode::kInvalidArgument,
          "purification sigma must be non-negative");
  Tensor out = image;
  if (sigma == 0.0) return out;
  Rng rng(derive_seed(seed, 0x9e71));
  for (double& v : out.data()) v = std::clamp(v + sigma * rng.normal(), 0.0, 1.0);
  return out;
}

}  // namespace advpaint

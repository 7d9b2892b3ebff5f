#include "model/codec.hpp"

#include <cmath>

#include "core/error.hpp"
#include "core/rng.hpp"
#include "tensor/ops.hpp"

namespace advpaint {

PatchCodec::PatchCodec(const DenoiserConfig& config) : config_(config) {
  config.validate();
  const std::size_t pp = config.patch * config.patch;
  const std::size_t dim = config.image_channels * pp;
  const std::size_t rows = config.latent_channels;
  matrix_ = Tensor({rows, dim}, 0.0);
  // Patch layout from pixel_unshuffle: index (c * p + dy) * p + dx = c * pp + k.
  const double inv = 1.0 / std::sqrt(static_cast<double>(pp));
  for (std::size_t c = 0; c < config.image_channels; ++c)
    for (std::size_t k = 0; k < pp; ++k) matrix_.at(c, c * pp + k) = inv;

  Rng rng(config.codec_seed);
  for (std::size_t r = config.image_channels; r < rows; ++r) {
    std::vector<double> v(dim);
    double norm = 0.0;
    // Redraw in the (measure-zero) event the draw lies in the span of earlier rows.
    do {
      for (double& x : v) x = rng.normal();
      for (int pass = 0; pass < 2; ++pass) {
        for (std::size_t q = 0; q < r; ++q) {
          double dot = 0.0;
          for (std::size_t j = 0; j < dim; ++j) dot += v[j] * matrix_.at(q, j);
          for (std::size_t j = 0; j < dim; ++j) v[j] -= dot * matrix_.at(q, j);
        }
      }
      norm = 0.0;
      for (double x : v) norm += x * x;
      norm = std::sqrt(norm);
    } while (norm < 1e-6);
    for (std::size_t j = 0; j < dim; ++j) matrix_.at(r, j) = v[j] / norm;
  }

  encode_kernel_ = matrix_.reshaped({rows, dim, 1, 1});
  decode_kernel_ = Tensor({dim, rows, 1, 1});
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < dim; ++j) decode_kernel_[j * rows + r] = matrix_.at(r, j);
}

Var PatchCodec::encode(Var image) const {
  const Shape expect{config_.image_channels, config_.image_size, config_.image_size};
  require(image.shape() == expect, ErrorCode::kDimension,
          "encode expects " + shape_str(expect) + ", got " + shape_str(image.shape()));
  Graph& g = *image.graph();
  Var patches = pixel_unshuffle(image, config_.patch);
  return conv2d(patches, g.constant(encode_kernel_), Var{}, 1, 0);
}

Var PatchCodec::decode(Var latent) const {
  const Shape expect{config_.latent_channels, config_.latent_size(), config_.latent_size()};
  require(latent.shape() == expect, ErrorCode::kDimension,
          "decode expects " + shape_str(expect) + ", got " + shape_str(latent.shape()));
  Graph& g = *latent.graph();
  Var patches = conv2d(latent, g.constant(decode_kernel_), Var{}, 1, 0);
  return pixel_shuffle(patches, config_.patch);
}

Tensor PatchCodec::encode(const Tensor& image) const {
  Graph g;
  return encode(g.constant(image)).value();
}

Tensor PatchCodec::decode(const Tensor& latent) const {
  Graph g;
  return decode(g.constant(latent)).value();
}

}  // namespace advpaint

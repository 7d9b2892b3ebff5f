#pragma once

#include "model/config.hpp"
#include "tensor/graph.hpp"

namespace advpaint {

/// Fixed linear autoencoder between images (C x S x S) and latents
/// (latent_channels x S/p x S/p). Patches are flattened to C*p*p values and
/// multiplied by a semi-orthonormal matrix whose first C rows are the
/// per-channel patch means (so flat regions round-trip exactly) and whose
/// remaining rows are seeded random directions orthogonalized against them.
class PatchCodec {
 public:
  explicit PatchCodec(const DenoiserConfig& config);

  /// latent_channels x (C*p*p), orthonormal rows.
  const Tensor& matrix() const { return matrix_; }

  Var encode(Var image) const;
  Var decode(Var latent) const;
  Tensor encode(const Tensor& image) const;
  Tensor decode(const Tensor& latent) const;

 private:
  DenoiserConfig config_;
  Tensor matrix_;
  Tensor encode_kernel_;  // latent x patch_dim x 1 x 1
  Tensor decode_kernel_;  // patch_dim x latent x 1 x 1
};

}  // namespace advpaint

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "tensor/graph.hpp"

namespace advpaint {

// Differentiable primitives. Every op checks its output is finite and throws
// Error(kDimension) on shape violations.

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double c);
Var silu(Var a);

/// a[..., C] + b[C], the bias add of a linear layer.
Var add_rowvec(Var a, Var b);

Var reshape(Var a, Shape shape);
/// 2-D transpose.
Var transpose(Var a);
/// Concatenation along axis 0 (channels of C x H x W maps).
Var concat_channels(const std::vector<Var>& parts);
/// Concatenation of 2-D tensors along the last axis.
Var concat_cols(const std::vector<Var>& parts);
/// Columns [begin, end) of a 2-D tensor.
Var slice_cols(Var a, std::size_t begin, std::size_t end);

/// Nearest-neighbour 2x upsampling of C x H x W.
Var upsample2x(Var a);
/// 2x2 average pooling of C x H x W (H, W even).
Var avgpool2x2(Var a);
/// C x H x W -> (C*f*f) x H/f x W/f; channel order is (c, dy, dx).
Var pixel_unshuffle(Var a, std::size_t factor);
/// Inverse of pixel_unshuffle.
Var pixel_shuffle(Var a, std::size_t factor);

/// Rows of `table` (V x D) selected by `ids`; -> len(ids) x D.
Var embedding(Var table, std::span<const int> ids);

Var sum(Var a);
Var mean(Var a);
/// Sum of squared entries.
Var sum_squares(Var a);

Var matmul(Var a, Var b);
Var softmax_lastdim(Var a);

/// Cross-correlation of x [C_in x H x W] with w [C_out x C_in x k x k], k in {1, 3},
/// zero padding. `bias` may be an unbound Var (no bias).
Var conv2d(Var x, Var w, Var bias, std::size_t stride, std::size_t pad);

/// Normalizes over the last extent, epsilon 1e-5, then gamma * xhat + beta.
Var layer_norm(Var x, Var gamma, Var beta);

inline constexpr double kLayerNormEps = 1e-5;

}  // namespace advpaint

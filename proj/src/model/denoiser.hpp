#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "model/checkpoint.hpp"
#include "region/masks.hpp"
#include "tensor/graph.hpp"

namespace advpaint {

/// Values captured inside one attention block. Projections are tokens x width
/// (cross_k / cross_v are seq_len x width); *_out is the attention output
/// softmax(q k^T / sqrt(d)) v before the output projection.
template <typename T>
struct LayerTapsT {
  T self_q, self_k, self_v, self_out;
  T cross_q, cross_k, cross_v, cross_out;
  std::size_t grid_h = 0;
  std::size_t grid_w = 0;
};

using LayerTaps = LayerTapsT<Var>;
using LayerTapValues = LayerTapsT<Tensor>;
/// One entry per attention block: down16, down8, up8, up16.
using TapSet = std::vector<LayerTaps>;
using TapValues = std::vector<LayerTapValues>;

TapValues tap_values(const TapSet& taps);

using ParamVars = std::map<std::string, Var>;

/// Adds every weight to the graph, as inputs when trainable, else constants.
ParamVars bind_weights(Graph& g, const Checkpoint& ck, bool trainable);

struct DenoiserOutput {
  Var eps;
  TapSet taps;
};

/// Pads a prompt with the null token to seq_len. kInvalidArgument for ids
/// outside the vocabulary or prompts longer than seq_len.
std::vector<int> pad_prompt(std::span<const int> prompt, const DenoiserConfig& config);

/// Noise prediction for concat(z_t, z0m, m_lat) at timestep t, conditioned on
/// `tokens` (padded to seq_len by pad_prompt).
DenoiserOutput forward_with_taps(Graph& g, const DenoiserConfig& config, const ParamVars& params,
                                 Var z_t, Var z0m, Var m_lat, std::size_t t,
                                 std::span<const int> tokens);

/// Value-only convenience wrapper.
Tensor predict_eps(const Checkpoint& ck, const Tensor& z_t, const Tensor& z0m,
                   const Tensor& m_lat, std::size_t t, std::span<const int> tokens);

/// p x p average pool then threshold: >= 0.5 keeps. -> 1 x H/p x W/p.
Tensor resize_mask_to_latent(const MaskSpec& mask, std::size_t patch);

/// Sinusoidal embedding [sin(t f_i), cos(t f_i)], f_i = 10000^(-i / (dim/2)).
Tensor timestep_embedding(std::size_t t, std::size_t dim);

}  // namespace advpaint

#include "attack/objectives.hpp"

#include "core/error.hpp"
#include "model/codec.hpp"
#include "tensor/ops.hpp"

namespace advpaint {
namespace {

std::vector<std::size_t> resolve_layers(std::size_t count, const LayerSubset& layers) {
  if (layers.empty()) {
    std::vector<std::size_t> all(count);
    for (std::size_t i = 0; i < count; ++i) all[i] = i;
    return all;
  }
  for (std::size_t l : layers)
    require(l < count, ErrorCode::kInvalidArgument,
            "layer " + std::to_string(l) + " out of range (" + std::to_string(count) + " layers)");
  return layers;
}

void check_layers(const TapValues& clean, const TapSet& adv) {
  require(clean.size() == adv.size(), ErrorCode::kDimension,
          "tap layer count mismatch: " + std::to_string(clean.size()) + " vs " +
              std::to_string(adv.size()));
}

Var distance(Graph& g, Var adv, const Tensor& clean) {
  require(adv.shape() == clean.shape(), ErrorCode::kDimension,
          "tap shape mismatch: " + shape_str(adv.shape()) + " vs " + shape_str(clean.shape()));
  return sum_squares(sub(adv, g.constant(clean)));
}

Var total(Graph& g, const std::vector<Var>& terms) {
  if (terms.empty()) return g.constant(Tensor::scalar(0.0));
  Var acc = terms[0];
  for (std::size_t i = 1; i < terms.size(); ++i) acc = add(acc, terms[i]);
  return acc;
}

}  // namespace

const char* objective_name(Objective o) {
  switch (o) {
    case Objective::kAttn: return "attn";
    case Objective::kCrossOnly: return "cross-only";
    case Objective::kSelfOnly: return "self-only";
    case Objective::kNoiseMax: return "noise-max";
    case Objective::kNoiseMin: return "noise-min";
    case Objective::kLatentMin: return "latent-min";
  }
  return "?";
}

Objective parse_objective(const std::string& name) {
  for (Objective o : {Objective::kAttn, Objective::kCrossOnly, Objective::kSelfOnly,
                      Objective::kNoiseMax, Objective::kNoiseMin, Objective::kLatentMin})
    if (name == objective_name(o)) return o;
  fail(ErrorCode::kInvalidArgument, "unknown objective '" + name + "'");
}

bool uses_taps(Objective o) {
  return o == Objective::kAttn || o == Objective::kCrossOnly || o == Objective::kSelfOnly;
}

Var loss_cross(Graph& g, const TapValues& clean, const TapSet& adv, const LayerSubset& layers) {
  check_layers(clean, adv);
  std::vector<Var> terms;
  for (std::size_t l : resolve_layers(adv.size(), layers))
    terms.push_back(distance(g, adv[l].cross_q, clean[l].cross_q));
  return total(g, terms);
}

Var loss_self(Graph& g, const TapValues& clean, const TapSet& adv, const LayerSubset& layers) {
  check_layers(clean, adv);
  std::vector<Var> terms;
  for (std::size_t l : resolve_layers(adv.size(), layers)) {
    terms.push_back(distance(g, adv[l].self_q, clean[l].self_q));
    terms.push_back(distance(g, adv[l].self_k, clean[l].self_k));
    terms.push_back(distance(g, adv[l].self_v, clean[l].self_v));
  }
  return total(g, terms);
}

Var loss_attn(Graph& g, const TapValues& clean, const TapSet& adv, const LayerSubset& layers) {
  return add(loss_cross(g, clean, adv, layers), loss_self(g, clean, adv, layers));
}

PassOutput attack_pass(Graph& g, const ParamVars& params, Var image, const PassSetup& setup) {
  require(setup.ck && setup.sched, ErrorCode::kContract, "attack pass without model or schedule");
  const DenoiserConfig& cfg = setup.ck->config;
  const PatchCodec codec(cfg);
  Var z0 = codec.encode(image);
  Var z_t = forward_diffuse(z0, setup.timestep, g.constant(setup.eps), *setup.sched);
  Var masked = mul(image, g.constant(setup.hole.broadcast(cfg.image_channels)));
  Var z0m = codec.encode(masked);
  Var m_lat = g.constant(resize_mask_to_latent(setup.hole, cfg.patch));
  return {forward_with_taps(g, cfg, params, z_t, z0m, m_lat, setup.timestep, setup.tokens), z0};
}

TapValues clean_taps(const Tensor& image, const PassSetup& setup) {
  Graph g;
  const ParamVars params = bind_weights(g, *setup.ck, false);
  return tap_values(attack_pass(g, params, g.constant(image), setup).out.taps);
}

Var objective_loss(Graph& g, const ParamVars& params, Var image, const PassSetup& setup,
                   const ObjectiveSpec& spec, const TapValues* clean) {
  Var loss;
  if (spec.kind == Objective::kLatentMin) {
    const PatchCodec codec(setup.ck->config);
    Var z = codec.encode(image);
    Tensor target = spec.target_latent ? *spec.target_latent : Tensor(z.shape(), 0.0);
    require(target.shape() == z.shape(), ErrorCode::kDimension,
            "target latent must be " + shape_str(z.shape()) + ", got " + shape_str(target.shape()));
    loss = scale(sum_squares(sub(g.constant(target), z)), -1.0);
  } else {
    const PassOutput pass = attack_pass(g, params, image, setup);
    switch (spec.kind) {
      case Objective::kNoiseMax:
      case Objective::kNoiseMin: {
        Var err = sum_squares(sub(g.constant(setup.eps), pass.out.eps));
        loss = spec.kind == Objective::kNoiseMax ? err : scale(err, -1.0);
        break;
      }
      default: {
        require(clean != nullptr, ErrorCode::kContract, "attention objective needs clean taps");
        if (spec.kind == Objective::kAttn) loss = loss_attn(g, *clean, pass.out.taps, spec.layers);
        else if (spec.kind == Objective::kCrossOnly)
          loss = loss_cross(g, *clean, pass.out.taps, spec.layers);
        else loss = loss_self(g, *clean, pass.out.taps, spec.layers);
      }
    }
  }
  return spec.loss_scale == 1.0 ? loss : scale(loss, spec.loss_scale);
}

}  // namespace advpaint

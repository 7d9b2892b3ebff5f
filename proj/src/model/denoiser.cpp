#include "model/denoiser.hpp"

#include <cmath>

#include "core/error.hpp"
#include "tensor/ops.hpp"

namespace advpaint {
namespace {

struct Ctx {
  Graph& g;
  const DenoiserConfig& cfg;
  const ParamVars& p;

  Var w(const std::string& name) const {
    auto it = p.find(name);
    require(it != p.end(), ErrorCode::kCheckpoint, "missing weight " + name);
    return it->second;
  }
};

// C x H x W <-> (H*W) x C
Var to_tokens(Var x) {
  const Shape& s = x.shape();
  return transpose(reshape(x, {s[0], s[1] * s[2]}));
}

Var from_tokens(Var t, std::size_t h, std::size_t w) {
  return reshape(transpose(t), {t.shape()[1], h, w});
}

Var linear(const Ctx& c, Var x, const std::string& name, bool bias) {
  Var y = matmul(x, c.w(name + ".w"));
  return bias ? add_rowvec(y, c.w(name + ".b")) : y;
}

Var norm_tokens(const Ctx& c, Var tokens, const std::string& name) {
  return layer_norm(tokens, c.w(name + ".gamma"), c.w(name + ".beta"));
}

Var norm_map(const Ctx& c, Var x, const std::string& name) {
  const Shape& s = x.shape();
  return from_tokens(norm_tokens(c, to_tokens(x), name), s[1], s[2]);
}

Var res_block(const Ctx& c, Var x, Var temb_act, const std::string& name, std::size_t cout) {
  const std::size_t cin = x.shape()[0];
  Var h = silu(norm_map(c, x, name + ".norm1"));
  Var shift = reshape(linear(c, temb_act, name + ".temb", true), {cout});
  Var bias1 = add(c.w(name + ".conv1.b"), shift);
  h = conv2d(h, c.w(name + ".conv1.w"), bias1, 1, 1);
  h = silu(norm_map(c, h, name + ".norm2"));
  h = conv2d(h, c.w(name + ".conv2.w"), c.w(name + ".conv2.b"), 1, 1);
  Var skip = x;
  if (cin != cout) skip = conv2d(x, c.w(name + ".skip.w"), c.w(name + ".skip.b"), 1, 0);
  return add(skip, h);
}

// Multi-head attention output (before the output projection).
Var attend(Var q, Var k, Var v, std::size_t heads) {
  const std::size_t width = q.shape()[1];
  const std::size_t d = width / heads;
  const double scale_factor = 1.0 / std::sqrt(static_cast<double>(d));
  std::vector<Var> outs;
  outs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    Var qh = heads == 1 ? q : slice_cols(q, h * d, (h + 1) * d);
    Var kh = heads == 1 ? k : slice_cols(k, h * d, (h + 1) * d);
    Var vh = heads == 1 ? v : slice_cols(v, h * d, (h + 1) * d);
    Var scores = scale(matmul(qh, transpose(kh)), scale_factor);
    outs.push_back(matmul(softmax_lastdim(scores), vh));
  }
  return heads == 1 ? outs[0] : concat_cols(outs);
}

Var attention_block(const Ctx& c, Var x, Var temb_act, Var context, const std::string& name,
                    std::size_t cout, LayerTaps& taps) {
  Var h = res_block(c, x, temb_act, name + ".res", cout);
  const std::size_t gh = h.shape()[1];
  const std::size_t gw = h.shape()[2];
  Var tokens = to_tokens(h);

  Var n = norm_tokens(c, tokens, name + ".self.norm");
  taps.self_q = matmul(n, c.w(name + ".self.q.w"));
  taps.self_k = matmul(n, c.w(name + ".self.k.w"));
  taps.self_v = matmul(n, c.w(name + ".self.v.w"));
  taps.self_out = attend(taps.self_q, taps.self_k, taps.self_v, c.cfg.heads);
  tokens = add(tokens, linear(c, taps.self_out, name + ".self.out", true));

  n = norm_tokens(c, tokens, name + ".cross.norm");
  taps.cross_q = matmul(n, c.w(name + ".cross.q.w"));
  taps.cross_k = matmul(context, c.w(name + ".cross.k.w"));
  taps.cross_v = matmul(context, c.w(name + ".cross.v.w"));
  taps.cross_out = attend(taps.cross_q, taps.cross_k, taps.cross_v, c.cfg.heads);
  tokens = add(tokens, linear(c, taps.cross_out, name + ".cross.out", true));

  taps.grid_h = gh;
  taps.grid_w = gw;
  return from_tokens(tokens, gh, gw);
}

}  // namespace

TapValues tap_values(const TapSet& taps) {
  TapValues out;
  out.reserve(taps.size());
  for (const auto& l : taps) {
    out.push_back({l.self_q.value(), l.self_k.value(), l.self_v.value(), l.self_out.value(),
                   l.cross_q.value(), l.cross_k.value(), l.cross_v.value(), l.cross_out.value(),
                   l.grid_h, l.grid_w});
  }
  return out;
}

ParamVars bind_weights(Graph& g, const Checkpoint& ck, bool trainable) {
  ParamVars p;
  for (const auto& [name, t] : ck.weights) p.emplace(name, trainable ? g.input(t) : g.constant(t));
  return p;
}

std::vector<int> pad_prompt(std::span<const int> prompt, const DenoiserConfig& config) {
  require(prompt.size() <= config.seq_len, ErrorCode::kInvalidArgument,
          "prompt has " + std::to_string(prompt.size()) + " tokens, model accepts at most " +
              std::to_string(config.seq_len));
  std::vector<int> tokens(config.seq_len, 0);
  for (std::size_t i = 0; i < prompt.size(); ++i) {
    require(prompt[i] >= 0 && static_cast<std::size_t>(prompt[i]) < config.vocab,
            ErrorCode::kInvalidArgument,
            "token id " + std::to_string(prompt[i]) + " outside vocabulary of " +
                std::to_string(config.vocab));
    tokens[i] = prompt[i];
  }
  return tokens;
}

Tensor timestep_embedding(std::size_t t, std::size_t dim) {
  const std::size_t half = dim / 2;
  Tensor e({1, dim});
  for (std::size_t i = 0; i < half; ++i) {
    const double freq =
        std::exp(-std::log(10000.0) * static_cast<double>(i) / static_cast<double>(half));
    const double arg = static_cast<double>(t) * freq;
    e[i] = std::sin(arg);
    e[half + i] = std::cos(arg);
  }
  return e;
}

DenoiserOutput forward_with_taps(Graph& g, const DenoiserConfig& cfg, const ParamVars& params,
                                 Var z_t, Var z0m, Var m_lat, std::size_t t,
                                 std::span<const int> tokens) {
  const std::size_t ls = cfg.latent_size();
  const Shape lat{cfg.latent_channels, ls, ls};
  require(z_t.shape() == lat && z0m.shape() == lat, ErrorCode::kDimension,
          "denoiser latents must be " + shape_str(lat) + ", got " + shape_str(z_t.shape()) +
              " and " + shape_str(z0m.shape()));
  require(m_lat.shape() == Shape{1, ls, ls}, ErrorCode::kDimension,
          "latent mask must be 1x" + std::to_string(ls) + "x" + std::to_string(ls) + ", got " +
              shape_str(m_lat.shape()));
  const std::vector<int> ids = pad_prompt(tokens, cfg);
  Ctx c{g, cfg, params};

  Var temb = g.constant(timestep_embedding(t, cfg.time_dim));
  temb = linear(c, silu(linear(c, temb, "time.fc1", true)), "time.fc2", true);
  Var temb_act = silu(temb);
  Var context = embedding(c.w("context.embed"), ids);

  DenoiserOutput out;
  out.taps.resize(DenoiserConfig::kLayers);
  const std::size_t hi = cfg.width_hi;
  const std::size_t lo = cfg.width_lo;

  Var x = concat_channels({z_t, z0m, m_lat});
  Var h0 = conv2d(x, c.w("stem.w"), c.w("stem.b"), 1, 1);
  Var h1 = attention_block(c, h0, temb_act, context, "down16", hi, out.taps[0]);
  Var h2 = avgpool2x2(h1);
  Var h3 = attention_block(c, h2, temb_act, context, "down8", lo, out.taps[1]);
  Var u = conv2d(concat_channels({h3, h2}), c.w("merge8.w"), c.w("merge8.b"), 1, 0);
  u = attention_block(c, u, temb_act, context, "up8", lo, out.taps[2]);
  u = conv2d(concat_channels({upsample2x(u), h1}), c.w("merge16.w"), c.w("merge16.b"), 1, 0);
  u = attention_block(c, u, temb_act, context, "up16", hi, out.taps[3]);
  u = silu(norm_map(c, u, "head.norm"));
  out.eps = conv2d(u, c.w("head.conv.w"), c.w("head.conv.b"), 1, 1);
  return out;
}

Tensor predict_eps(const Checkpoint& ck, const Tensor& z_t, const Tensor& z0m,
                   const Tensor& m_lat, std::size_t t, std::span<const int> tokens) {
  Graph g;
  const ParamVars p = bind_weights(g, ck, false);
  return forward_with_taps(g, ck.config, p, g.constant(z_t), g.constant(z0m), g.constant(m_lat),
                           t, tokens)
      .eps.value();
}

Tensor resize_mask_to_latent(const MaskSpec& mask, std::size_t patch) {
  const std::size_t h = mask.height();
  const std::size_t w = mask.width();
  require(patch >= 1 && h % patch == 0 && w % patch == 0, ErrorCode::kDimension,
          "mask " + std::to_string(h) + "x" + std::to_string(w) + " not divisible by patch " +
              std::to_string(patch));
  for (double v : mask.grid.data())
    require(v == 0.0 || v == 1.0, ErrorCode::kInvalidArgument, "mask is not binary");
  Tensor out({1, h / patch, w / patch});
  const double area = static_cast<double>(patch * patch);
  for (std::size_t y = 0; y < h / patch; ++y)
    for (std::size_t x = 0; x < w / patch; ++x) {
      double keep = 0.0;
      for (std::size_t dy = 0; dy < patch; ++dy)
        for (std::size_t dx = 0; dx < patch; ++dx)
          keep += mask.grid.at(y * patch + dy, x * patch + dx);
      out.at(0, y, x) = keep / area >= 0.5 ? 1.0 : 0.0;
    }
  return out;
}

}  // namespace advpaint

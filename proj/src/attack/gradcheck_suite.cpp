#include "attack/gradcheck_suite.hpp"

#include <algorithm>

#include "attack/objectives.hpp"
#include "core/rng.hpp"
#include "model/codec.hpp"
#include "tensor/gradcheck.hpp"
#include "tensor/ops.hpp"

namespace advpaint {
namespace {

Tensor random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

// sum(R (x) y) for a fixed random R. Positive weights keep summed
// contributions from cancelling to a near-zero gradient.
Var weighted_sum(Graph& g, Var y, std::uint64_t seed) {
  Rng rng(seed);
  return sum(mul(y, g.constant(random_tensor(rng, y.shape(), 0.5, 1.5))));
}

class Suite {
 public:
  Suite(std::uint64_t seed, double step, std::size_t coords, const GradcheckProgress& progress)
      : seed_(seed), step_(step), coords_(coords), progress_(progress), rng_(seed) {}

  void check(const std::string& name, const ScalarFn& f, const Tensor& x) {
    const auto idx = sample_coords(x.numel(), coords_, derive_seed(seed_, report_.items.size()));
    GradcheckItem item{name, gradient_check(f, x, step_, idx), idx.size()};
    report_.max_rel_error = std::max(report_.max_rel_error, item.max_rel_error);
    if (progress_) progress_(item);
    report_.items.push_back(std::move(item));
  }

  // f(x) = sum(R (x) op(x)).
  void unary(const std::string& name, const std::function<Var(Graph&, Var)>& op, const Tensor& x) {
    const std::uint64_t wseed = derive_seed(seed_, 1000 + report_.items.size());
    check(name, [op, wseed](Graph& g, Var v) { return weighted_sum(g, op(g, v), wseed); }, x);
  }

  Tensor rand(Shape s, double lo = -1.0, double hi = 1.0) { return random_tensor(rng_, s, lo, hi); }

  GradcheckReport take() { return std::move(report_); }

 private:
  std::uint64_t seed_;
  double step_;
  std::size_t coords_;
  GradcheckProgress progress_;
  Rng rng_;
  GradcheckReport report_;
};

void primitives(Suite& s) {
  const Tensor a = s.rand({3, 4, 4});
  const Tensor b = s.rand({3, 4, 4});
  s.unary("add.a", [b](Graph& g, Var x) { return add(x, g.constant(b)); }, a);
  s.unary("add.b", [a](Graph& g, Var x) { return add(g.constant(a), x); }, b);
  s.unary("sub.a", [b](Graph& g, Var x) { return sub(x, g.constant(b)); }, a);
  s.unary("sub.b", [a](Graph& g, Var x) { return sub(g.constant(a), x); }, b);
  s.unary("mul.a", [b](Graph& g, Var x) { return mul(x, g.constant(b)); }, a);
  s.unary("mul.b", [a](Graph& g, Var x) { return mul(g.constant(a), x); }, b);
  s.unary("scale", [](Graph&, Var x) { return scale(x, -1.7); }, a);
  s.unary("silu", [](Graph&, Var x) { return silu(x); }, s.rand({3, 4, 4}, -3.0, 3.0));

  const Tensor m = s.rand({5, 6});
  const Tensor r = s.rand({6});
  s.unary("add_rowvec.a", [r](Graph& g, Var x) { return add_rowvec(x, g.constant(r)); }, m);
  s.unary("add_rowvec.b", [m](Graph& g, Var x) { return add_rowvec(g.constant(m), x); }, r);
  s.unary("reshape", [](Graph&, Var x) { return reshape(x, {6, 5}); }, m);
  s.unary("transpose", [](Graph&, Var x) { return transpose(x); }, m);
  s.unary("concat_channels", [b](Graph& g, Var x) { return concat_channels({g.constant(b), x}); }, a);
  s.unary("concat_cols", [m](Graph& g, Var x) { return concat_cols({x, g.constant(m)}); }, m);
  s.unary("slice_cols", [](Graph&, Var x) { return slice_cols(x, 2, 5); }, m);
  s.unary("upsample2x", [](Graph&, Var x) { return upsample2x(x); }, a);
  s.unary("avgpool2x2", [](Graph&, Var x) { return avgpool2x2(x); }, a);
  s.unary("pixel_unshuffle", [](Graph&, Var x) { return pixel_unshuffle(x, 2); }, a);
  s.unary("pixel_shuffle", [](Graph&, Var x) { return pixel_shuffle(x, 2); }, s.rand({8, 3, 3}));
  const std::vector<int> ids{3, 0, 3, 1};
  s.unary("embedding", [ids](Graph&, Var x) { return embedding(x, ids); }, s.rand({4, 5}));
  s.check("sum", [](Graph&, Var x) { Var t = sum(x); return mul(t, t); }, a);
  s.check("mean", [](Graph&, Var x) { Var t = mean(x); return mul(t, t); }, a);
  Tensor away_from_zero = s.rand({3, 4, 4}, 0.5, 1.0);
  for (std::size_t i = 0; i < away_from_zero.numel(); i += 2) away_from_zero[i] *= -1.0;
  s.check("sum_squares", [](Graph&, Var x) { return sum_squares(x); }, away_from_zero);

  const Tensor p = s.rand({4, 3});
  const Tensor q = s.rand({3, 5});
  s.unary("matmul.a", [q](Graph& g, Var x) { return matmul(x, g.constant(q)); }, p);
  s.unary("matmul.b", [p](Graph& g, Var x) { return matmul(g.constant(p), x); }, q);
  s.unary("softmax_lastdim", [](Graph&, Var x) { return softmax_lastdim(x); }, s.rand({4, 6}, -2, 2));
  s.check("softmax_sum_squares",
          [](Graph&, Var x) { return sum_squares(softmax_lastdim(x)); }, s.rand({8}, -2, 2));

  const Tensor img = s.rand({3, 6, 6});
  const Tensor w3 = s.rand({4, 3, 3, 3});
  const Tensor w1 = s.rand({4, 3, 1, 1});
  const Tensor bias = s.rand({4});
  s.unary("conv2d.x.k3", [w3, bias](Graph& g, Var x) {
    return conv2d(x, g.constant(w3), g.constant(bias), 1, 1);
  }, img);
  s.unary("conv2d.w.k3", [img, bias](Graph& g, Var x) {
    return conv2d(g.constant(img), x, g.constant(bias), 1, 1);
  }, w3);
  s.unary("conv2d.bias", [img, w3](Graph& g, Var x) {
    return conv2d(g.constant(img), g.constant(w3), x, 1, 1);
  }, bias);
  s.unary("conv2d.x.k3.stride2", [w3](Graph& g, Var x) {
    return conv2d(x, g.constant(w3), Var{}, 2, 1);
  }, s.rand({3, 7, 7}));
  s.unary("conv2d.x.k1", [w1, bias](Graph& g, Var x) {
    return conv2d(x, g.constant(w1), g.constant(bias), 1, 0);
  }, img);
  s.unary("conv2d.w.k1", [img](Graph& g, Var x) { return conv2d(g.constant(img), x, Var{}, 1, 0); },
          w1);

  const Tensor ln_x = s.rand({5, 6}, -2, 2);
  const Tensor gamma = s.rand({6}, 0.5, 1.5);
  const Tensor beta = s.rand({6});
  s.unary("layer_norm.x", [gamma, beta](Graph& g, Var x) {
    return layer_norm(x, g.constant(gamma), g.constant(beta));
  }, ln_x);
  s.unary("layer_norm.gamma", [ln_x, beta](Graph& g, Var x) {
    return layer_norm(g.constant(ln_x), x, g.constant(beta));
  }, gamma);
  s.unary("layer_norm.beta", [ln_x, gamma](Graph& g, Var x) {
    return layer_norm(g.constant(ln_x), g.constant(gamma), x);
  }, beta);
}

void model_checks(Suite& s, std::uint64_t seed) {
  const DenoiserConfig cfg = DenoiserConfig::toy();
  const Checkpoint ck = Checkpoint::initialize(cfg, seed, {0.1, false});
  const NoiseSchedule sched = default_schedule();
  const std::size_t n = cfg.image_size;
  Rng rng(derive_seed(seed, 77));
  const Tensor x = random_tensor(rng, {cfg.image_channels, n, n}, 0.1, 0.9);
  Tensor x_adv = x;
  for (double& v : x_adv.data()) v += rng.uniform(-0.06, 0.06);

  PassSetup setup;
  setup.ck = &ck;
  setup.sched = &sched;
  setup.timestep = sched.train_steps / 2;
  setup.hole = box_to_mask({4, 4, 12, 12}, false, n, n);
  setup.tokens = pad_prompt(std::vector<int>{2, 5}, cfg);
  setup.eps = random_tensor(rng, {cfg.latent_channels, cfg.latent_size(), cfg.latent_size()});
  for (double& v : setup.eps.data()) v = rng.normal();
  const TapValues clean = clean_taps(x, setup);

  // Noise-prediction training loss with respect to the first layer weights.
  const Tensor z0 = PatchCodec(cfg).encode(x);
  const Tensor z_t = forward_diffuse(z0, 400, setup.eps, sched);
  const Tensor m_lat = resize_mask_to_latent(setup.hole, cfg.patch);
  const Tensor z0m = PatchCodec(cfg).encode(x);
  s.check("denoiser.train_loss.stem", [&](Graph& g, Var w) {
    ParamVars p = bind_weights(g, ck, false);
    p["stem.w"] = w;
    const DenoiserOutput o = forward_with_taps(g, cfg, p, g.constant(z_t), g.constant(z0m),
                                               g.constant(m_lat), 400, setup.tokens);
    return sum_squares(sub(o.eps, g.constant(setup.eps)));
  }, ck.weight("stem.w"));
  s.check("denoiser.train_loss.z_t", [&](Graph& g, Var z) {
    const ParamVars p = bind_weights(g, ck, false);
    const DenoiserOutput o = forward_with_taps(g, cfg, p, z, g.constant(z0m), g.constant(m_lat),
                                               400, setup.tokens);
    return sum_squares(sub(o.eps, g.constant(setup.eps)));
  }, z_t);

  for (Objective o : {Objective::kAttn, Objective::kCrossOnly, Objective::kSelfOnly,
                      Objective::kNoiseMax, Objective::kNoiseMin, Objective::kLatentMin}) {
    ObjectiveSpec spec{o, {}, std::nullopt, 1.0};
    s.check(std::string("objective.") + objective_name(o), [&, spec](Graph& g, Var img) {
      const ParamVars p = bind_weights(g, ck, false);
      return objective_loss(g, p, img, setup, spec, &clean);
    }, x_adv);
  }
}

}  // namespace

GradcheckReport run_gradcheck_suite(std::uint64_t seed, double step, std::size_t coords,
                                    const GradcheckProgress& progress) {
  Suite s(seed, step, coords, progress);
  primitives(s);
  model_checks(s, seed);
  return s.take();
}

}  // namespace advpaint

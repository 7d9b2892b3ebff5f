#include <doctest.h>

#include <cmath>
#include <vector>

#include "core/error.hpp"
#include "core/rng.hpp"
#include "diffusion/sampler.hpp"
#include "diffusion/schedule.hpp"
#include "eval/metrics.hpp"
#include "model/checkpoint.hpp"
#include "model/denoiser.hpp"
#include "region/masks.hpp"

using namespace advpaint;

namespace {

Tensor normal_tensor(Rng& rng, Shape shape) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = rng.normal();
  return t;
}

}  // namespace

TEST_CASE("schedule invariants") {
  const NoiseSchedule s = default_schedule();
  REQUIRE(s.train_steps == 1000);
  CHECK(s.alpha_bar_at(0) == 1.0);
  CHECK(s.alpha_bar_at(1) == 1.0 - 1e-4);
  for (std::size_t t = 1; t <= 1000; ++t) {
    CHECK(s.beta[t] > 0.0);
    CHECK(s.beta[t] < 1.0);
    if (t > 1) CHECK(s.beta[t] > s.beta[t - 1]);
    CHECK(s.alpha_bar[t] < s.alpha_bar[t - 1]);
    CHECK(s.alpha_bar[t] > 0.0);
    CHECK(s.sigma[t] == 0.0);
  }
  CHECK(s.beta[1000] == doctest::Approx(0.02).epsilon(1e-14));

  double running = 1.0;
  for (std::size_t i = 0; i < 1000; ++i) {
    const double beta = 1e-4 + (0.02 - 1e-4) * static_cast<double>(i) / 999.0;
    running *= 1.0 - beta;
  }
  CHECK(std::abs(s.alpha_bar_at(1000) - running) <= 1e-15);
  CHECK(running == doctest::Approx(4.0358e-5).epsilon(1e-3));

  CHECK_THROWS_AS(make_schedule(1, 1e-4, 0.02), Error);
  CHECK_THROWS_AS(make_schedule(10, 0.02, 1e-4), Error);
  CHECK_THROWS_AS(make_schedule(10, 0.0, 0.02), Error);
}

TEST_CASE("inference timesteps") {
  const auto ts = inference_timesteps(1000, 50);
  REQUIRE(ts.size() == 50);
  CHECK(ts.front() == 1000);
  CHECK(ts.back() == 20);
  for (std::size_t i = 1; i < ts.size(); ++i) CHECK(ts[i - 1] - ts[i] == 20);
}

TEST_CASE("forward_diffuse examples") {
  const NoiseSchedule s = default_schedule();
  Rng rng(1);
  const Tensor z0 = normal_tensor(rng, {4, 8, 8});
  const Tensor eps = normal_tensor(rng, {4, 8, 8});
  CHECK(forward_diffuse(z0, 0, eps, s) == z0);
  {
    Graph g;
    CHECK(forward_diffuse_alpha_bar(g.constant(z0), 0.0, g.constant(eps)).value() == eps);
  }
  CHECK_THROWS_AS(forward_diffuse(z0, 1001, eps, s), Error);

  const std::size_t n = 10000;
  for (std::size_t t : {1, 300, 1000}) {
    Tensor a({n}), e({n});
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = rng.normal();
      e[i] = rng.normal();
    }
    const Tensor z = forward_diffuse(a, t, e, s);
    double mean = 0.0, var = 0.0;
    for (double v : z.data()) mean += v / n;
    for (double v : z.data()) var += (v - mean) * (v - mean) / (n - 1);
    CHECK(std::abs(var - 1.0) <= 0.05);
  }
}

TEST_CASE("ddim round trip and special cases") {
  const NoiseSchedule s = default_schedule();
  Rng rng(2);
  const Tensor z0 = normal_tensor(rng, {4, 16, 16});
  const Tensor eps = normal_tensor(rng, {4, 16, 16});
  for (std::size_t t : {1, 20, 500, 980, 1000}) {
    const Tensor z_t = forward_diffuse(z0, t, eps, s);
    CHECK(max_abs_diff(predict_z0(z_t, eps, t, s), z0) <= 1e-9);
    CHECK(max_abs_diff(ddim_step(z_t, eps, t, 0, s), z0) <= 1e-9);
    if (t > 20) {
      const Tensor prev = ddim_step(z_t, eps, t, 20, s);
      CHECK(max_abs_diff(prev, forward_diffuse(z0, 20, eps, s)) <= 1e-9);
    }
  }
  const Tensor z_t = forward_diffuse(z0, 700, eps, s);
  CHECK(ddim_step(z_t, eps, 700, 0, s) == predict_z0(z_t, eps, 700, s));
  CHECK_THROWS_AS(ddim_step(z_t, eps, 500, 500, s), Error);
  CHECK_THROWS_AS(ddim_step(z_t, eps, 500, 600, s), Error);

  NoiseSchedule flat = s;
  for (double& a : flat.alpha_bar) a = 0.5;
  const Tensor zero(z_t.shape());
  CHECK(max_abs_diff(ddim_step(z_t, zero, 700, 300, flat), z_t) <= 1e-15);
}

TEST_CASE("classifier-free guidance is affine in scale") {
  const DenoiserConfig cfg = DenoiserConfig::toy();
  const Checkpoint ck = Checkpoint::initialize(cfg, 3, {0.1, false});
  Rng rng(3);
  const std::size_t ls = cfg.latent_size();
  const Tensor z_t = normal_tensor(rng, {cfg.latent_channels, ls, ls});
  const Tensor z0m = normal_tensor(rng, {cfg.latent_channels, ls, ls});
  const Tensor m_lat({1, ls, ls}, 1.0);
  const std::vector<int> cond = pad_prompt(std::vector<int>{2, 5}, cfg);
  const std::vector<int> null = pad_prompt(std::vector<int>{}, cfg);

  const Tensor e_c = predict_eps(ck, z_t, z0m, m_lat, 500, cond);
  const Tensor e_u = predict_eps(ck, z_t, z0m, m_lat, 500, null);
  CHECK(max_abs_diff(e_c, e_u) > 0.0);
  CHECK(cfg_predict(ck, z_t, z0m, m_lat, 500, cond, null, 1.0) == e_c);
  CHECK(cfg_predict(ck, z_t, z0m, m_lat, 500, cond, null, 0.0) == e_u);
  const Tensor mid = cfg_predict(ck, z_t, z0m, m_lat, 500, cond, null, 0.5);
  for (std::size_t i = 0; i < mid.numel(); ++i) CHECK(std::abs(mid[i] - 0.5 * (e_c[i] + e_u[i])) <= 1e-12);
  const Tensor big = cfg_predict(ck, z_t, z0m, m_lat, 500, cond, null, 7.5);
  for (std::size_t i = 0; i < big.numel(); ++i) {
    CHECK(std::abs(big[i] - (e_u[i] + 7.5 * (e_c[i] - e_u[i]))) <= 1e-12);
  }
  const std::vector<int> bad = {9, 0, 0, 0};
  CHECK_THROWS_AS(cfg_predict(ck, z_t, z0m, m_lat, 500, bad, null, 1.0), Error);
}

TEST_CASE("inpaint_sample is deterministic and defined for an empty hole") {
  const DenoiserConfig cfg = DenoiserConfig::toy();
  Checkpoint ck = Checkpoint::initialize(cfg, 4, {0.1, false});
  ck.train_step = 1;
  const NoiseSchedule s = default_schedule();
  Rng rng(4);
  Tensor image({3, cfg.image_size, cfg.image_size});
  for (double& v : image.data()) v = rng.uniform();
  const MaskSpec hole = box_to_mask({4, 4, 10, 10}, true, cfg.image_size, cfg.image_size);
  SamplerConfig sc;
  sc.inference_steps = 10;
  sc.seed = 11;
  const std::vector<int> prompt = {1, 4};
  const Tensor a = inpaint_sample(ck, s, image, hole, prompt, sc);
  const Tensor b = inpaint_sample(ck, s, image, hole, prompt, sc);
  CHECK(a == b);
  for (double v : a.data()) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  sc.seed = 12;
  CHECK(inpaint_sample(ck, s, image, hole, prompt, sc) != a);

  const MaskSpec keep = MaskSpec::all_keep(cfg.image_size, cfg.image_size);
  const Tensor c = inpaint_sample(ck, s, image, keep, prompt, sc);
  CHECK(c.all_finite());
  CHECK(hole_deviation(c, image, keep) == 0.0);

  const std::vector<int> too_long = {1, 2, 3, 4, 5};
  CHECK_THROWS_AS(inpaint_sample(ck, s, image, hole, too_long, sc), Error);
  Checkpoint fresh = Checkpoint::initialize(cfg, 4);
  try {
    inpaint_sample(fresh, s, image, hole, prompt, sc);
    FAIL("untrained checkpoint accepted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kCheckpoint);
  }
}

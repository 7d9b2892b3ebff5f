#include <doctest.h>

#include <cmath>
#include <vector>

#include "core/error.hpp"
#include "core/rng.hpp"
#include "eval/metrics.hpp"
#include "io/container.hpp"
#include "model/checkpoint.hpp"
#include "model/codec.hpp"
#include "model/denoiser.hpp"
#include "region/masks.hpp"
#include "tensor/ops.hpp"

using namespace advpaint;

namespace {

Tensor uniform_tensor(Rng& rng, Shape shape) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = rng.uniform();
  return t;
}

}  // namespace

TEST_CASE("codec rows are orthonormal") {
  const DenoiserConfig cfg;
  const PatchCodec codec(cfg);
  const Tensor& m = codec.matrix();
  REQUIRE(m.shape() == Shape{4, 12});
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 4; ++j) {
      double dot = 0.0;
      for (std::size_t k = 0; k < 12; ++k) dot += m.at(i, k) * m.at(j, k);
      CHECK(std::abs(dot - (i == j ? 1.0 : 0.0)) <= 1e-12);
    }
  }
}

TEST_CASE("encode and decode") {
  const DenoiserConfig cfg;
  const PatchCodec codec(cfg);
  Rng rng(1);
  const Tensor a = uniform_tensor(rng, {3, 32, 32});
  const Tensor b = uniform_tensor(rng, {3, 32, 32});
  CHECK(codec.encode(Tensor({3, 32, 32})) == Tensor({4, 16, 16}));
  CHECK(codec.decode(Tensor({4, 16, 16})) == Tensor({3, 32, 32}));

  Tensor ab = a;
  for (std::size_t i = 0; i < ab.numel(); ++i) ab[i] += b[i];
  const Tensor za = codec.encode(a), zb = codec.encode(b), zab = codec.encode(ab);
  for (std::size_t i = 0; i < za.numel(); ++i) CHECK(std::abs(zab[i] - za[i] - zb[i]) <= 1e-12);

  CHECK(max_abs_diff(codec.encode(codec.decode(za)), za) <= 1e-10);
  const Tensor proj = codec.decode(za);
  CHECK(max_abs_diff(codec.decode(codec.encode(proj)), proj) <= 1e-10);

  Tensor mid = za;
  for (std::size_t i = 0; i < mid.numel(); ++i) mid[i] = 0.5 * (za[i] + zb[i]);
  const Tensor da = codec.decode(za), db = codec.decode(zb), dm = codec.decode(mid);
  for (std::size_t i = 0; i < dm.numel(); ++i) CHECK(std::abs(dm[i] - 0.5 * (da[i] + db[i])) <= 1e-12);

  const Tensor flat({3, 32, 32}, 0.4);
  CHECK(max_abs_diff(codec.decode(codec.encode(flat)), flat) <= 1e-12);
  CHECK_THROWS_AS(codec.encode(Tensor({3, 30, 32})), Error);
  CHECK_THROWS_AS(codec.decode(Tensor({3, 16, 16})), Error);
}

TEST_CASE("mask resize to latent") {
  CHECK(resize_mask_to_latent(MaskSpec::all_keep(32, 32), 2) == Tensor({1, 16, 16}, 1.0));

  const MaskSpec one = box_to_mask({6, 4, 8, 6}, true, 32, 32);
  const Tensor lat = resize_mask_to_latent(one, 2);
  for (std::size_t y = 0; y < 16; ++y) {
    for (std::size_t x = 0; x < 16; ++x) CHECK(lat.at(0, y, x) == ((y == 2 && x == 3) ? 0.0 : 1.0));
  }

  Tensor checker({32, 32});
  for (std::size_t y = 0; y < 32; ++y) {
    for (std::size_t x = 0; x < 32; ++x) checker.at(y, x) = static_cast<double>((x + y) % 2);
  }
  CHECK(resize_mask_to_latent(MaskSpec::from_grid(checker), 2) == Tensor({1, 16, 16}, 1.0));
  Tensor three_hole({32, 32}, 1.0);
  three_hole.at(0, 0) = three_hole.at(0, 1) = three_hole.at(1, 0) = 0.0;
  CHECK(resize_mask_to_latent(MaskSpec::from_grid(three_hole), 2).at(0, 0, 0) == 0.0);

  Tensor grey({32, 32}, 0.5);
  CHECK_THROWS_AS(MaskSpec::from_grid(grey), Error);
}

TEST_CASE("denoiser taps on the standard config") {
  const DenoiserConfig cfg;
  const Checkpoint ck = Checkpoint::initialize(cfg, 2);
  Rng rng(2);
  const Tensor z_t = uniform_tensor(rng, {4, 16, 16});
  const Tensor z0m = uniform_tensor(rng, {4, 16, 16});
  const Tensor m_lat({1, 16, 16}, 1.0);
  const std::vector<int> tokens = pad_prompt(std::vector<int>{1, 5}, cfg);

  auto run = [&] {
    Graph g;
    const ParamVars p = bind_weights(g, ck, false);
    const DenoiserOutput out =
        forward_with_taps(g, cfg, p, g.constant(z_t), g.constant(z0m), g.constant(m_lat), 700, tokens);
    return std::pair{out.eps.value(), tap_values(out.taps)};
  };
  const auto [eps, taps] = run();
  const auto [eps2, taps2] = run();
  CHECK(eps == eps2);
  REQUIRE(taps.size() == 4);
  for (std::size_t l = 0; l < 4; ++l) {
    CHECK(taps[l].self_q == taps2[l].self_q);
    CHECK(taps[l].cross_q == taps2[l].cross_q);
  }
  CHECK(eps.shape() == Shape{4, 16, 16});
  CHECK(taps[0].self_q.shape() == Shape{256, 32});
  CHECK(taps[1].self_q.shape() == Shape{64, 64});
  CHECK(taps[2].self_q.shape() == Shape{64, 64});
  CHECK(taps[3].self_q.shape() == Shape{256, 32});
  CHECK(taps[0].cross_k.shape() == Shape{4, 32});
  // Zero head: the untrained model predicts zero noise.
  CHECK(max_abs(eps) == 0.0);

  auto rows_sum_to_one = [](const Tensor& maps) {
    const std::size_t cols = maps.shape().back();
    for (std::size_t r = 0; r < maps.numel() / cols; ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < cols; ++c) s += maps[r * cols + c];
      CHECK(std::abs(s - 1.0) <= 1e-12);
    }
  };
  for (const LayerTapValues& lt : taps) {
    rows_sum_to_one(attention_maps(lt.self_q, lt.self_k, 2));
    rows_sum_to_one(attention_maps(lt.cross_q, lt.cross_k, 2));
  }
}

TEST_CASE("denoiser rejects bad tokens and shapes") {
  const DenoiserConfig cfg = DenoiserConfig::toy();
  CHECK_THROWS_AS(pad_prompt(std::vector<int>{8}, cfg), Error);
  CHECK_THROWS_AS(pad_prompt(std::vector<int>{-1}, cfg), Error);
  CHECK_THROWS_AS(pad_prompt(std::vector<int>{1, 2, 3, 4, 5}, cfg), Error);
  CHECK(pad_prompt(std::vector<int>{3}, cfg) == std::vector<int>{3, 0, 0, 0});
  const Checkpoint ck = Checkpoint::initialize(cfg, 3);
  const std::vector<int> tokens = pad_prompt(std::vector<int>{}, cfg);
  CHECK_THROWS_AS(predict_eps(ck, Tensor({4, 8, 8}), Tensor({4, 8, 8}), Tensor({1, 4, 4}), 10, tokens), Error);
}

TEST_CASE("checkpoint round trip") {
  const Checkpoint ck = Checkpoint::initialize(DenoiserConfig::toy(), 5);
  const auto bytes = container_write(ck.to_entries());
  const Checkpoint back = Checkpoint::from_entries(container_read(bytes));
  CHECK(back.config == ck.config);
  CHECK(back.weights == ck.weights);
  CHECK(back.seed == ck.seed);
  CHECK(back.parameter_count() == ck.parameter_count());

  auto entries = ck.to_entries();
  entries.erase(entries.begin());
  CHECK_THROWS_AS(Checkpoint::from_entries(entries), Error);
}

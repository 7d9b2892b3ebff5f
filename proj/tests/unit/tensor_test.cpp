#include <doctest.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <vector>

#include "core/error.hpp"
#include "core/rng.hpp"
#include "tensor/gradcheck.hpp"
#include "tensor/graph.hpp"
#include "tensor/ops.hpp"

using namespace advpaint;

namespace {

Tensor random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

Tensor eval(const std::function<Var(Graph&)>& f) {
  Graph g;
  return f(g).value();
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::kInvalidArgument;
}

}  // namespace

TEST_CASE("tensor rejects bad shapes") {
  CHECK(code_of([] { Tensor({2, 0}); }) == ErrorCode::kDimension);
  CHECK(code_of([] { Tensor({2, 2}, std::vector<double>{1, 2, 3}); }) == ErrorCode::kDimension);
}

TEST_CASE("matmul identity and scalar") {
  Rng rng(1);
  const Tensor a = random_tensor(rng, {3, 3});
  Tensor eye({3, 3});
  for (std::size_t i = 0; i < 3; ++i) eye.at(i, i) = 1.0;
  CHECK(eval([&](Graph& g) { return matmul(g.constant(eye), g.constant(a)); }) == a);
  const Tensor six = eval([](Graph& g) {
    return matmul(g.constant(Tensor({1, 1}, {2.0})), g.constant(Tensor({1, 1}, {3.0})));
  });
  CHECK(six[0] == 6.0);
}

TEST_CASE("matmul matches triple loop") {
  Rng rng(2);
  for (const auto& [m, k, n] : std::vector<std::array<std::size_t, 3>>{{5, 4, 3}, {16, 9, 13}, {1, 16, 1}}) {
    const Tensor a = random_tensor(rng, {m, k});
    const Tensor b = random_tensor(rng, {k, n});
    const Tensor c = eval([&](Graph& g) { return matmul(g.constant(a), g.constant(b)); });
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        double ref = 0.0;
        for (std::size_t p = 0; p < k; ++p) ref += a.at(i, p) * b.at(p, j);
        CHECK(std::abs(c.at(i, j) - ref) <= 1e-12);
      }
    }
  }
}

TEST_CASE("matmul shape mismatch names both shapes") {
  Graph g;
  try {
    matmul(g.constant(Tensor({2, 3})), g.constant(Tensor({4, 2})));
    FAIL("no error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kDimension);
    const std::string msg = e.what();
    CHECK(msg.find("2x3") != std::string::npos);
    CHECK(msg.find("4x2") != std::string::npos);
  }
}

TEST_CASE("softmax examples") {
  const Tensor flat = eval([](Graph& g) { return softmax_lastdim(g.constant(Tensor({4}, 0.0))); });
  for (double v : flat.data()) CHECK(v == doctest::Approx(0.25).epsilon(1e-15));

  const Tensor big = eval([](Graph& g) { return softmax_lastdim(g.constant(Tensor({2}, {1000.0, 0.0}))); });
  CHECK(std::abs(big[0] - 1.0) <= 1e-12);
  CHECK(std::abs(big[1]) <= 1e-12);

  Rng rng(3);
  const Tensor x = random_tensor(rng, {6, 7}, -5.0, 5.0);
  Tensor shifted = x;
  for (double& v : shifted.data()) v += 3.7;
  const Tensor a = eval([&](Graph& g) { return softmax_lastdim(g.constant(x)); });
  const Tensor b = eval([&](Graph& g) { return softmax_lastdim(g.constant(shifted)); });
  CHECK(max_abs_diff(a, b) <= 1e-12);
  for (std::size_t r = 0; r < 6; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < 7; ++c) {
      CHECK(a.at(r, c) >= 0.0);
      CHECK(a.at(r, c) <= 1.0);
      s += a.at(r, c);
    }
    CHECK(std::abs(s - 1.0) <= 1e-12);
  }
}

TEST_CASE("conv2d matches six-loop oracle") {
  Rng rng(4);
  struct Case {
    std::size_t cin, cout, h, w, k, stride, pad;
  };
  for (const Case& c : {Case{3, 4, 6, 5, 3, 1, 1}, Case{2, 3, 7, 7, 3, 2, 1}, Case{5, 2, 4, 4, 1, 1, 0},
                        Case{2, 2, 5, 5, 3, 1, 0}}) {
    const Tensor x = random_tensor(rng, {c.cin, c.h, c.w});
    const Tensor w = random_tensor(rng, {c.cout, c.cin, c.k, c.k});
    const Tensor b = random_tensor(rng, {c.cout});
    const Tensor y = eval([&](Graph& g) {
      return conv2d(g.constant(x), g.constant(w), g.constant(b), c.stride, c.pad);
    });
    const std::size_t oh = (c.h + 2 * c.pad - c.k) / c.stride + 1;
    const std::size_t ow = (c.w + 2 * c.pad - c.k) / c.stride + 1;
    REQUIRE(y.shape() == Shape{c.cout, oh, ow});
    for (std::size_t o = 0; o < c.cout; ++o) {
      for (std::size_t i = 0; i < oh; ++i) {
        for (std::size_t j = 0; j < ow; ++j) {
          double ref = b[o];
          for (std::size_t ci = 0; ci < c.cin; ++ci) {
            for (std::size_t ky = 0; ky < c.k; ++ky) {
              for (std::size_t kx = 0; kx < c.k; ++kx) {
                const long yy = static_cast<long>(i * c.stride + ky) - static_cast<long>(c.pad);
                const long xx = static_cast<long>(j * c.stride + kx) - static_cast<long>(c.pad);
                if (yy < 0 || xx < 0 || yy >= static_cast<long>(c.h) || xx >= static_cast<long>(c.w)) continue;
                ref += w[((o * c.cin + ci) * c.k + ky) * c.k + kx] * x.at(ci, yy, xx);
              }
            }
          }
          CHECK(std::abs(y.at(o, i, j) - ref) <= 1e-12);
        }
      }
    }
  }
}

TEST_CASE("conv2d special kernels") {
  Rng rng(5);
  const Tensor x = random_tensor(rng, {3, 5, 6});
  Tensor delta({3, 3, 3, 3});
  for (std::size_t c = 0; c < 3; ++c) delta[((c * 3 + c) * 3 + 1) * 3 + 1] = 1.0;
  const Tensor same = eval([&](Graph& g) { return conv2d(g.constant(x), g.constant(delta), Var(), 1, 1); });
  CHECK(same == x);

  const Tensor w = random_tensor(rng, {4, 3, 1, 1});
  const Tensor y = eval([&](Graph& g) { return conv2d(g.constant(x), g.constant(w), Var(), 1, 0); });
  const Tensor mixed = eval([&](Graph& g) {
    return matmul(g.constant(w.reshaped({4, 3})), g.constant(x.reshaped({3, 30})));
  });
  CHECK(max_abs_diff(y.reshaped({4, 30}), mixed) <= 1e-12);

  Graph g;
  CHECK(code_of([&] { conv2d(g.constant(Tensor({1, 6, 6})), g.constant(Tensor({1, 1, 3, 3})), Var(), 2, 1); }) ==
        ErrorCode::kDimension);
}

TEST_CASE("layer_norm") {
  const Tensor ones({3}, 1.0);
  const Tensor zeros({3}, 0.0);
  const Tensor flat = eval([&](Graph& g) {
    return layer_norm(g.constant(Tensor({2, 3}, 4.2)), g.constant(ones), g.constant(zeros));
  });
  for (double v : flat.data()) CHECK(v == 0.0);

  Rng rng(6);
  const Tensor x = random_tensor(rng, {5, 8}, -3.0, 3.0);
  const Tensor y = eval([&](Graph& g) {
    return layer_norm(g.constant(x), g.constant(Tensor({8}, 1.0)), g.constant(Tensor({8}, 0.0)));
  });
  for (std::size_t r = 0; r < 5; ++r) {
    double mean = 0.0, var = 0.0, xm = 0.0, xv = 0.0;
    for (std::size_t c = 0; c < 8; ++c) xm += x.at(r, c) / 8.0;
    for (std::size_t c = 0; c < 8; ++c) xv += (x.at(r, c) - xm) * (x.at(r, c) - xm) / 8.0;
    for (std::size_t c = 0; c < 8; ++c) mean += y.at(r, c) / 8.0;
    for (std::size_t c = 0; c < 8; ++c) var += y.at(r, c) * y.at(r, c) / 8.0;
    CHECK(std::abs(mean) <= 1e-10);
    CHECK(std::abs(var - xv / (xv + kLayerNormEps)) <= 1e-10);
  }

  const ScalarFn f = [](Graph& g, Var v) {
    Rng w(60);
    Tensor gamma({8}), beta({8}), weights({5, 8});
    for (double& q : gamma.data()) q = w.uniform(0.5, 1.5);
    for (double& q : beta.data()) q = w.uniform(-0.5, 0.5);
    for (double& q : weights.data()) q = w.uniform(0.5, 1.5);
    return sum(mul(layer_norm(v, g.constant(gamma), g.constant(beta)), g.constant(weights)));
  };
  CHECK(gradient_check(f, x, 1e-5, sample_coords(x.numel(), 20, 61)) <= 1e-6);
}

TEST_CASE("backward examples") {
  Rng rng(7);
  const Tensor x = random_tensor(rng, {4, 3});
  Graph g;
  const Var v = g.input(x);
  const Var unused = g.input(random_tensor(rng, {2}));
  const Var loss = sum_squares(v);
  g.backward(loss);
  for (std::size_t i = 0; i < x.numel(); ++i) CHECK(g.grad(v)[i] == 2.0 * x[i]);
  for (double d : g.grad(unused).data()) CHECK(d == 0.0);

  Graph h;
  const Var w = h.input(x);
  CHECK(code_of([&] { h.backward(scale(w, 2.0)); }) == ErrorCode::kContract);
}

TEST_CASE("primitives reject non-finite values") {
  Graph g;
  const Var big = g.constant(Tensor({2}, 1e300));
  CHECK(code_of([&] { mul(big, big); }) == ErrorCode::kNumeric);
}

TEST_CASE("gradient_check examples") {
  Rng rng(8);
  const Tensor x = random_tensor(rng, {3, 4});
  const ScalarFn f_sum = [](Graph&, Var v) { return sum(v); };
  CHECK(gradient_check(f_sum, x, 1e-5, sample_coords(x.numel(), 12, 1)) <= 1e-10);

  const Tensor s = random_tensor(rng, {8}, -2.0, 2.0);
  const ScalarFn f_soft = [](Graph&, Var v) { return sum_squares(softmax_lastdim(v)); };
  CHECK(gradient_check(f_soft, s, 1e-5, sample_coords(s.numel(), 8, 2)) <= 1e-6);

  CHECK(code_of([&] { gradient_check(f_sum, x, 1e-2, sample_coords(x.numel(), 2, 1)); }) ==
        ErrorCode::kContract);
  const ScalarFn f_bad = [](Graph& g, Var v) {
    return v.value()[0] > 0.0 ? sum(v) : g.constant(Tensor({1}, std::nan("")));
  };
  CHECK_THROWS_AS(gradient_check(f_bad, Tensor({1}, 1e-6), 1e-5, sample_coords(1, 1, 0)), Error);
}

TEST_CASE("sample_coords is seeded and distinct") {
  const auto a = sample_coords(100, 20, 9);
  const auto b = sample_coords(100, 20, 9);
  CHECK(a == b);
  std::vector<std::size_t> sorted = a;
  std::sort(sorted.begin(), sorted.end());
  CHECK(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end());
  CHECK(sample_coords(5, 20, 9).size() == 5);
}

TEST_CASE("primitives are bit-deterministic") {
  Rng rng(10);
  const Tensor x = random_tensor(rng, {4, 8, 8});
  const Tensor w = random_tensor(rng, {6, 4, 3, 3});
  auto run = [&] {
    Graph g;
    const Var xv = g.input(x);
    const Var y = silu(conv2d(xv, g.constant(w), Var(), 1, 1));
    const Var loss = sum_squares(softmax_lastdim(reshape(avgpool2x2(y), {6, 16})));
    g.backward(loss);
    return std::pair{loss.value(), g.grad(xv)};
  };
  CHECK(run() == run());
}

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <vector>

#include <json.hpp>

#include "core/error.hpp"
#include "core/rng.hpp"
#include "data/shapes.hpp"
#include "diffusion/schedule.hpp"
#include "eval/attention_map.hpp"
#include "eval/experiment.hpp"
#include "eval/metrics.hpp"
#include "model/checkpoint.hpp"
#include "test_util.hpp"

using namespace advpaint;

namespace {

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string item;
  while (std::getline(ss, item, sep)) out.push_back(item);
  return out;
}

}  // namespace

TEST_CASE("psnr examples") {
  const Tensor a({3, 8, 8}, 0.5);
  CHECK(psnr(a, a) == kPsnrIdentical);
  Tensor b = a;
  for (std::size_t i = 0; i < b.numel(); ++i) b[i] += (i % 2 ? 0.06 : -0.06);
  CHECK(std::abs(psnr(a, b) - (-20.0 * std::log10(0.06))) <= 1e-9);
  CHECK(psnr(a, b) == doctest::Approx(24.4370).epsilon(1e-4));
  Tensor c = a;
  for (double& v : c.data()) v += 0.1;
  CHECK(psnr(a, c) == doctest::Approx(20.0).epsilon(1e-12));
  CHECK_THROWS_AS(psnr(a, Tensor({3, 8, 7})), Error);

  Rng rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    Tensor d = a;
    for (double& v : d.data()) v += rng.uniform(-0.06, 0.06);
    CHECK(psnr(a, d) >= -20.0 * std::log10(0.06));
  }
}

TEST_CASE("map divergence examples") {
  const Tensor one_hot_a({2, 3}, {1, 0, 0, 0, 1, 0});
  const Tensor one_hot_b({2, 3}, {0, 1, 0, 0, 0, 1});
  CHECK(map_divergence(one_hot_a, one_hot_a) == 0.0);
  CHECK(map_divergence(one_hot_a, one_hot_b) == doctest::Approx(1.0).epsilon(1e-15));
  const Tensor neg({2, 3}, {-1, 0, 0, 0, -1, 0});
  CHECK(map_divergence(one_hot_a, neg) == doctest::Approx(2.0).epsilon(1e-15));
  CHECK_THROWS_AS(map_divergence(one_hot_a, Tensor({3, 2})), Error);
}

TEST_CASE("attention divergence of model taps") {
  const DenoiserConfig cfg = DenoiserConfig::toy();
  const Checkpoint ck = Checkpoint::initialize(cfg, 2, {0.1, false});
  Rng rng(2);
  auto taps_for = [&](double jitter) {
    Tensor z({4, 8, 8}), m({1, 8, 8}, 1.0);
    Rng r(3);
    for (double& v : z.data()) v = r.normal() + jitter * rng.normal();
    Graph g;
    const ParamVars p = bind_weights(g, ck, false);
    const std::vector<int> tokens = pad_prompt(std::vector<int>{1, 4}, cfg);
    return tap_values(forward_with_taps(g, cfg, p, g.constant(z), g.constant(z), g.constant(m), 500, tokens).taps);
  };
  const TapValues a = taps_for(0.0), b = taps_for(0.5), c = taps_for(0.5);
  CHECK(attention_divergence(a, a, cfg.heads) == 0.0);
  const double ab = attention_divergence(a, b, cfg.heads);
  CHECK(ab > 0.0);
  CHECK(ab <= 2.0);
  CHECK(ab == attention_divergence(b, a, cfg.heads));
  CHECK(attention_divergence(b, c, cfg.heads) >= 0.0);
}

TEST_CASE("hole deviation examples") {
  Tensor a({1, 4, 4}, 0.3);
  Tensor b = a;
  const MaskSpec hole = box_to_mask({0, 0, 2, 2}, true, 4, 4);
  CHECK(hole_deviation(a, a, hole) == 0.0);
  b.at(0, 0, 0) += 0.1;
  CHECK(hole_deviation(a, b, hole) == doctest::Approx(0.0025).epsilon(1e-12));
  b.at(0, 3, 3) += 0.7;
  CHECK(hole_deviation(a, b, hole) == doctest::Approx(0.0025).epsilon(1e-12));
  CHECK(hole_deviation(a, b, MaskSpec::all_keep(4, 4)) == 0.0);
  CHECK_THROWS_AS(hole_deviation(a, Tensor({1, 4, 5}), hole), Error);
}

TEST_CASE("latent_l2") {
  const DenoiserConfig cfg;
  const Tensor a({3, 32, 32}, 0.2);
  Tensor b = a;
  CHECK(latent_l2(cfg, a, b) == 0.0);
  for (double& v : b.data()) v += 0.1;
  // Flat shift: only the per-channel mean rows see it, 2 * 0.1 per patch.
  CHECK(latent_l2(cfg, a, b) == doctest::Approx(std::sqrt(3.0 * 256.0 * 0.04)).epsilon(1e-12));
}

TEST_CASE("pca heat map") {
  Rng rng(4);
  std::vector<double> u(16), v(6);
  for (double& x : u) x = rng.uniform(-1.0, 1.0);
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  Tensor f({16, 6});
  for (std::size_t i = 0; i < 16; ++i) {
    for (std::size_t j = 0; j < 6; ++j) f.at(i, j) = u[i] * v[j];
  }
  const std::vector<double> scores = principal_scores(f, 9);
  REQUIRE(scores.size() == 16);
  double um = 0.0;
  for (double x : u) um += x / 16.0;
  double dot = 0.0, nu = 0.0, ns = 0.0;
  for (std::size_t i = 0; i < 16; ++i) {
    dot += (u[i] - um) * scores[i];
    nu += (u[i] - um) * (u[i] - um);
    ns += scores[i] * scores[i];
  }
  CHECK(std::abs(std::abs(dot) / std::sqrt(nu * ns) - 1.0) <= 1e-9);
  CHECK(principal_scores(f, 9) == scores);

  const HeatMap map = feature_pca_map(f, 4, 4, 9, 4);
  CHECK_FALSE(map.degenerate);
  CHECK(*std::min_element(map.map.data().begin(), map.map.data().end()) == 0.0);
  CHECK(*std::max_element(map.map.data().begin(), map.map.data().end()) == 1.0);
  const auto [lo, hi] = std::minmax_element(u.begin(), u.end());
  const double sign = dot > 0 ? 1.0 : -1.0;
  for (std::size_t i = 0; i < 16; ++i) {
    const double expect = sign > 0 ? (u[i] - *lo) / (*hi - *lo) : (*hi - u[i]) / (*hi - *lo);
    CHECK(std::abs(map.map[i] - expect) <= 1e-9);
  }
  const HeatMap big = feature_pca_map(f, 4, 4, 9);
  CHECK(big.map.shape() == Shape{16, 16});

  const HeatMap flat = feature_pca_map(Tensor({16, 6}, 0.7), 4, 4, 9);
  CHECK(flat.degenerate);
  for (double x : flat.map.data()) CHECK(x == 0.5);
}

TEST_CASE("bilinear resize") {
  const Tensor g({2, 2}, {0, 1, 2, 3});
  const Tensor r = resize_bilinear(g, 4, 4);
  CHECK(r.at(0, 0) == 0.0);
  CHECK(r.at(3, 3) == 3.0);
  CHECK(r.at(0, 1) == doctest::Approx(0.25));
  CHECK(resize_bilinear(g, 2, 2) == g);
}

TEST_CASE("gaussian purification") {
  const Tensor x({1, 1, 100000}, 0.5);
  CHECK(gaussian_purify(x, 0.0, 3) == x);
  const Tensor y = gaussian_purify(x, 0.05, 3);
  CHECK(y == gaussian_purify(x, 0.05, 3));
  double mean = 0.0, var = 0.0;
  for (std::size_t i = 0; i < x.numel(); ++i) mean += (y[i] - x[i]) / x.numel();
  for (std::size_t i = 0; i < x.numel(); ++i) var += (y[i] - x[i] - mean) * (y[i] - x[i] - mean) / (x.numel() - 1);
  CHECK(std::abs(std::sqrt(var) - 0.05) <= 0.02 * 0.05);
  const Tensor edge = gaussian_purify(Tensor({1, 1, 1000}, 0.99), 0.3, 4);
  for (double v : edge.data()) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
}

TEST_CASE("experiment harness") {
  const TempDir dir("experiment");
  gen_dataset(3, 21, dir.path / "data", 16);
  Checkpoint ck = Checkpoint::initialize(DenoiserConfig::toy(), 22, {0.1, false});
  ck.train_step = 1;
  const NoiseSchedule sched = default_schedule();

  nlohmann::json j = {{"dataset", "data"},
                      {"count", 2},
                      {"masks", {"seg", "bbox", "shifted"}},
                      {"objectives", {"attn", "random"}},
                      {"stages", {"two"}},
                      {"attack", {{"iters", 2}}},
                      {"sampler", {{"inference_steps", 4}}},
                      {"seed", 4},
                      {"max_shift", 3}};
  const ExperimentPlan plan = plan_from_json(j, dir.path);
  const ExperimentReport report = run_experiment(plan, ck, sched);
  CHECK(report.failures.empty());
  CHECK(report.rows.size() == report.planned_rows);
  std::size_t masks = 0;
  for (const auto& img : plan.images) masks += plan_masks(plan, img, 16).size();
  CHECK(report.planned_rows == masks * 1 * 2 * 1);

  const std::string csv = report_csv(report);
  std::stringstream lines(csv);
  std::string line;
  std::getline(lines, line);
  const auto header = split(line, ',');
  REQUIRE(header.size() == 11);
  std::map<std::string, std::vector<double>> div, hole;
  while (std::getline(lines, line)) {
    const auto cells = split(line, ',');
    REQUIRE(cells.size() == 11);
    div[cells[4]].push_back(std::stod(cells[7]));
    hole[cells[4]].push_back(std::stod(cells[8]));
    CHECK(std::stod(cells[6]) >= -20.0 * std::log10(0.06));
  }
  const auto summary = nlohmann::json::parse(report_summary_json(report));
  for (const auto& [name, values] : div) {
    double s = 0.0;
    for (double v : values) s += v;
    CHECK(summary["objectives"][name]["attention_divergence"]["mean"].get<double>() ==
          doctest::Approx(s / values.size()).epsilon(1e-12));
    double h = 0.0;
    for (double v : hole[name]) h += v;
    CHECK(summary["objectives"][name]["hole_deviation_vs_clean"]["mean"].get<double>() ==
          doctest::Approx(h / values.size()).epsilon(1e-12));
  }

  ExperimentPlan shuffled = plan;
  std::reverse(shuffled.images.begin(), shuffled.images.end());
  shuffled.threads = 2;
  const ExperimentReport again = run_experiment(shuffled, ck, sched);
  CHECK(report_summary_json(again) == report_summary_json(report));
  CHECK(report_csv(again) == csv);

  ExperimentPlan broken = plan;
  broken.sampler.inference_steps = 3;
  const ExperimentReport partial = run_experiment(broken, ck, sched);
  CHECK(partial.rows.empty());
  CHECK(partial.failures.size() == report.planned_rows);

  j["prompts"] = nlohmann::json::array();
  CHECK_THROWS_AS(plan_from_json(j, dir.path), Error);
  j.erase("prompts");
  j["bogus"] = 1;
  CHECK_THROWS_AS(plan_from_json(j, dir.path), Error);
}

#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <random>

#include "cats/calibration.hpp"
#include "support/oracles.hpp"

using namespace cats;
using Catch::Matchers::WithinAbs;

namespace {

ActivationSample sample_of(std::vector<float> mags, std::string layer = "0") {
  ActivationSample s;
  s.layer_id = std::move(layer);
  s.magnitudes = std::move(mags);
  return s;
}

ModelConfig small_config() {
  ModelConfig c;
  c.vocab = 32;
  c.d = 16;
  c.m = 40;
  c.layers = 2;
  c.heads = 2;
  c.max_seq = 16;
  c.seed = 3;
  return c;
}

}  // namespace

TEST_CASE("empirical CDF example", "[calibration]") {
  const auto s = sample_of({0.05f, 0.1f, 0.2f, 0.3f});
  CHECK(empirical_cdf(s, 0.1) == 0.5);
  CHECK(empirical_cdf(s, 0.0) == 0.0);
  CHECK(empirical_cdf(s, 1.0) == 1.0);
}

TEST_CASE("threshold fit example", "[calibration]") {
  const auto s = sample_of({0.05f, 0.1f, 0.2f, 0.3f});
  const Threshold th = fit_threshold(s, 0.5);
  CHECK(th.t == 0.1f);
  CHECK(th.target_sparsity == 0.5);
  CHECK(th.sample_count == 4);
  CHECK(th.layer_id == "0");
  CHECK(fit_threshold(s, 0.0).t == 0.0f);
  CHECK(fit_threshold(s, 0.26).t == 0.1f);
  CHECK(fit_threshold(s, 0.25).t == 0.05f);
  CHECK(fit_threshold(s, 0.99).t == 0.3f);
}

TEST_CASE("zeros alone can meet the target", "[calibration]") {
  CHECK(fit_threshold(sample_of({0, 0, 0, 1}), 0.7).t == 0.0f);
  CHECK(fit_threshold(sample_of({0, 0, 0, 1}), 0.8).t == 1.0f);
}

TEST_CASE("threshold fit rejects bad input", "[calibration]") {
  CHECK_THROWS_AS(fit_threshold(sample_of({}), 0.5), DomainError);
  CHECK_THROWS_AS(fit_threshold(sample_of({1.0f}), 1.0), DomainError);
  CHECK_THROWS_AS(fit_threshold(sample_of({1.0f}), -0.1), DomainError);
  CHECK_THROWS_AS(fit_threshold(sample_of({-1.0f}), 0.5), DomainError);
  CHECK_THROWS_AS(fit_threshold(sample_of({NAN}), 0.5), DomainError);
  CHECK_THROWS_AS(empirical_cdf(sample_of({}), 0.5), DomainError);
}

TEST_CASE("threshold fit equals a brute-force scan", "[calibration]") {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 1 + rng() % 400;
    std::vector<float> mags(n);
    // coarse grid so ties and zeros are common
    for (auto& v : mags) v = static_cast<float>(rng() % 12) * 0.125f;
    const double k = static_cast<double>(rng() % 1000) / 1000.0;
    const Threshold th = fit_threshold(sample_of(mags), k);
    CHECK(th.t == oracle::fit_threshold_scan(mags, k));
    // defining property: F(t) >= k and nothing smaller in {0} U sample reaches k
    CHECK(empirical_cdf(sample_of(mags), th.t) >= k);
  }
}

TEST_CASE("fitted cutoff is monotone in k", "[calibration]") {
  std::mt19937_64 rng(29);
  std::vector<float> mags(1000);
  for (auto& v : mags) v = std::fabs(static_cast<float>(std::normal_distribution<double>()(rng)));
  float prev = -1.0f;
  for (double k = 0.0; k < 1.0; k += 0.05) {
    const float t = fit_threshold(sample_of(mags), k).t;
    CHECK(t >= prev);
    prev = t;
  }
}

TEST_CASE("histogram bins cover [0, range_max] and count overflow", "[calibration]") {
  const auto s = sample_of({0.0f, 0.1f, 0.25f, 0.5f, 0.99f, 1.0f, 1.5f});
  const Histogram h = histogram(s, 4, 1.0);
  REQUIRE(h.edges.size() == 5);
  CHECK(h.edges.front() == 0.0);
  CHECK(h.edges.back() == 1.0);
  CHECK(h.counts == std::vector<std::uint64_t>{2, 1, 1, 2});
  CHECK(h.overflow == 1);
  CHECK(h.total() == 7);
  CHECK_THROWS_AS(histogram(s, 0, 1.0), DomainError);
  CHECK_THROWS_AS(histogram(s, 4, 0.0), DomainError);
}

TEST_CASE("reservoir keeps everything under capacity and caps above it", "[calibration]") {
  Reservoir small(1, 100);
  for (int i = 0; i < 50; ++i) small.add(static_cast<float>(i));
  CHECK(small.values().size() == 50);
  CHECK(small.seen() == 50);

  Reservoir capped(1, 100);
  for (int i = 0; i < 10000; ++i) capped.add(static_cast<float>(i));
  CHECK(capped.values().size() == 100);
  CHECK(capped.seen() == 10000);
  // a uniform sample of 0..9999 should have mean near 5000
  double mean = 0.0;
  for (float v : capped.values()) mean += v;
  mean /= 100.0;
  CHECK(std::fabs(mean - 5000.0) < 1000.0);
}

TEST_CASE("select_inputs is a seeded, ordered subset", "[calibration]") {
  CHECK(select_inputs(5, 10, 0).size() == 5);
  const auto a = select_inputs(1000, 500, 7);
  CHECK(a.size() == 500);
  CHECK(std::is_sorted(a.begin(), a.end()));
  CHECK(std::adjacent_find(a.begin(), a.end()) == a.end());
  CHECK(select_inputs(1000, 500, 7) == a);
  CHECK(select_inputs(1000, 500, 8) != a);
}

TEST_CASE("collected MLP activations pool every token and channel", "[calibration]") {
  const ModelConfig c = small_config();
  const ToyModel model = build_toy_model(c);
  const Dataset data = random_dataset(6, 5, c.vocab, 1);
  const ActivationSample s = collect_activations(model, data, 1, 500, 0);
  CHECK(s.magnitudes.size() == 6 * 5 * c.m);
  CHECK(s.layer_id == "1");
  for (float v : s.magnitudes) CHECK(v >= 0.0f);
  CHECK_THROWS_AS(collect_activations(model, data, 2, 500, 0), DomainError);
  CHECK_THROWS_AS(collect_activations(model, {}, 0, 500, 0), DomainError);
  const ActivationSample few = collect_activations(model, data, 0, 2, 0);
  CHECK(few.magnitudes.size() == 2 * 5 * c.m);
}

TEST_CASE("calibrate_model fits one threshold per site and layer", "[calibration]") {
  const ModelConfig c = small_config();
  const ToyModel model = build_toy_model(c);
  const Dataset data = random_dataset(20, 8, c.vocab, 2);

  const CalibrationReport mlp = calibrate_model(model, data, 0.5, 4);
  CHECK(mlp.layers.size() == c.layers);
  const ThresholdSet ts = mlp.thresholds();
  CHECK(ts.mlp.size() == c.layers);
  CHECK(ts.attention_input.empty());
  for (const auto& lc : mlp.layers) {
    CHECK(lc.histogram.total() == lc.threshold.sample_count);
    CHECK(lc.threshold.sample_count == 20 * 8 * c.m);
    CHECK(lc.threshold.t > 0.0f);
  }

  const CalibrationReport both = calibrate_model(model, data, 0.5, 4, CatsMode::kMlpAttention);
  CHECK(both.layers.size() == 3 * c.layers);
  const ThresholdSet bs = both.thresholds();
  CHECK(bs.attention_input.size() == c.layers);
  CHECK(bs.mlp_input.size() == c.layers);
  CHECK(bs.mlp == ts.mlp);

  CHECK(calibrate_model(model, data, 0.5, 4).thresholds() == ts);
  CHECK_THROWS_AS(calibrate_model(model, data, 1.0, 4), DomainError);
  CHECK_THROWS_AS(calibrate_model(model, data, 0.5, 4, CatsMode::kOff), DomainError);
}

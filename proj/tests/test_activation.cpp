#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "cats/activation.hpp"
#include "support/oracles.hpp"

using namespace cats;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

TEST_CASE("silu reference values", "[activation]") {
  CHECK_THAT(silu(1.0f), WithinAbs(0.731059, 1e-6));
  CHECK(silu(0.0f) == 0.0f);
  const float big = silu(20.0f);
  CHECK(big >= 19.9999f);
  CHECK(big <= 20.0f);
  CHECK(std::isfinite(silu(-1000.0f)));
  CHECK(silu(-1000.0f) == Catch::Approx(0.0f).margin(0.0));
  CHECK(silu(1000.0f) == 1000.0f);
  CHECK(sigmoid(200.0f) == 1.0f);
  CHECK(sigmoid(-200.0f) == 0.0f);
}

TEST_CASE("silu agrees with a double oracle over a wide range", "[activation]") {
  for (int i = -4000; i <= 4000; ++i) {
    const float u = static_cast<float>(i) * 0.01f;
    const double want = oracle::silu(u);
    CHECK_THAT(silu(u), WithinAbs(want, 1e-6 + 1e-6 * std::fabs(want)));
  }
}

TEST_CASE("relu", "[activation]") {
  CHECK(relu(-1.0f) == 0.0f);
  CHECK(relu(2.5f) == 2.5f);
  CHECK(apply(Activation::kRelu, Vector{-1, 0, 3}) == Vector{0, 0, 3});
}

TEST_CASE("cats_apply example", "[activation]") {
  const Vector v{0.1f, -0.2f, 0.0f, 0.16f};
  const Threshold th = threshold_at(0.15f);
  CHECK(cats_apply(v, th) == Vector{0.0f, -0.2f, 0.0f, 0.16f});
  const Mask mask = mask_from(v, th);
  CHECK(mask.popcount() == 2);
  CHECK(mask.sparsity() == 0.5);
  CHECK_FALSE(mask[0]);
  CHECK(mask[1]);
  CHECK_FALSE(mask[2]);
  CHECK(mask[3]);
}

TEST_CASE("a value equal to the cutoff is kept", "[activation]") {
  const Threshold th = threshold_at(0.25f);
  CHECK(cats_apply(Vector{0.25f, -0.25f, 0.2499999f}, th) == Vector{0.25f, -0.25f, 0.0f});
}

TEST_CASE("zero cutoff keeps everything", "[activation]") {
  const Vector v = random_vector(100, 3, 1.0f);
  CHECK(cats_apply(v, threshold_at(0.0f)) == v);
  CHECK(mask_from(v, threshold_at(0.0f)).popcount() == 100);
}

TEST_CASE("thresholding is idempotent and monotone in t", "[activation]") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const Vector v = random_vector(200, rng(), 1.0f);
    const float t1 = static_cast<float>(rng() % 1000) / 800.0f;
    const float t2 = t1 + static_cast<float>(rng() % 1000) / 1000.0f;
    const Vector once = cats_apply(v, threshold_at(t1));
    CHECK(cats_apply(once, threshold_at(t1)) == once);
    const Mask m1 = mask_from(v, threshold_at(t1));
    const Mask m2 = mask_from(v, threshold_at(t2));
    CHECK(m2.popcount() <= m1.popcount());
    for (std::size_t j = 0; j < v.size(); ++j)
      if (m2[j]) CHECK(m1[j]);
  }
}

TEST_CASE("cats_silu composes silu and thresholding", "[activation]") {
  const Vector u = random_vector(300, 8, 2.0f);
  const Threshold th = threshold_at(0.3f);
  const Vector out = cats_silu(u, th);
  for (std::size_t j = 0; j < u.size(); ++j) {
    const float s = silu(u[j]);
    CHECK(out[j] == (std::fabs(s) >= 0.3f ? s : 0.0f));
  }
}

TEST_CASE("thresholds are validated", "[activation]") {
  CHECK_THROWS_AS(threshold_at(-0.1f), DomainError);
  CHECK_THROWS_AS(threshold_at(NAN), DomainError);
  CHECK_THROWS_AS(threshold_at(INFINITY), DomainError);
  Threshold th;
  th.target_sparsity = 1.0;
  CHECK_THROWS_AS(validate(th), DomainError);
}

TEST_CASE("derivative at zero without a cutoff", "[activation]") {
  const Vector g = cats_silu_derivative(Vector{0.0f}, threshold_at(0.0f));
  CHECK_THAT(g[0], WithinAbs(0.5, 1e-7));
}

TEST_CASE("derivative is zero where the output is cut", "[activation]") {
  const Threshold th = threshold_at(0.5f);
  const Vector g = cats_silu_derivative(Vector{0.1f, -0.3f, 2.0f}, th);
  CHECK(g[0] == 0.0f);
  CHECK(g[1] == 0.0f);
  const double s = 1.0 / (1.0 + std::exp(-2.0));
  CHECK_THAT(g[2], WithinAbs(s * (1 + 2.0 * (1 - s)), 1e-6));
}

TEST_CASE("derivative refuses points inside the kink window", "[activation]") {
  const float t = silu(1.0f);
  CHECK_THROWS_AS(cats_silu_derivative(Vector{1.0f}, threshold_at(t)), NearThresholdError);
  CHECK_THROWS_AS(cats_silu_derivative(Vector{3.0f, 1.0f}, threshold_at(t + 5e-5f)), NearThresholdError);
  CHECK_NOTHROW(cats_silu_derivative(Vector{1.0f}, threshold_at(t + 2e-4f)));
}

TEST_CASE("derivative matches finite differences away from the kink", "[activation]") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> uu(-8.0, 8.0), tt(0.0, 1.0);
  int checked = 0;
  while (checked < 500) {
    const double u = uu(rng);
    const double t = tt(rng);
    const double h = 1e-3;
    // keep the whole stencil on one side of the cutoff
    bool clear = true;
    for (double x : {u - h, u, u + h})
      if (std::fabs(std::fabs(oracle::silu(x)) - t) < 1e-3) clear = false;
    if ((std::fabs(oracle::silu(u - h)) >= t) != (std::fabs(oracle::silu(u + h)) >= t)) clear = false;
    if (!clear) continue;
    const float g = cats_silu_derivative(Vector{static_cast<float>(u)}, threshold_at(static_cast<float>(t)))[0];
    CHECK_THAT(g, WithinAbs(oracle::cats_silu_fd(u, t, h), 1e-4));
    ++checked;
  }
}

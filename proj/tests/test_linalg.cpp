#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "cats/linalg.hpp"

using namespace cats;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

// Double-precision x W over the logical matrix, independent of layout.
std::vector<double> gemv_double(const Vector& x, const Matrix& w) {
  std::vector<double> out(w.cols(), 0.0);
  for (std::size_t i = 0; i < w.rows(); ++i)
    for (std::size_t j = 0; j < w.cols(); ++j) out[j] += static_cast<double>(x[i]) * w(i, j);
  return out;
}

// Bound on float accumulation error: n * eps * sum |x_i W_ij|.
double error_bound(const Vector& x, const Matrix& w, std::size_t j) {
  double s = 0.0;
  for (std::size_t i = 0; i < w.rows(); ++i) s += std::fabs(static_cast<double>(x[i]) * w(i, j));
  return static_cast<double>(w.rows()) * 1.2e-7 * s + 1e-30;
}

}  // namespace

TEST_CASE("gemv of a 2x2 example", "[linalg]") {
  const Vector x{1.0f, 1.0f};
  for (Layout layout : {Layout::kRowMajor, Layout::kColMajor}) {
    const Matrix w = Matrix::from_rows({{1, 2}, {3, 4}}, layout);
    CHECK(gemv(x, w) == Vector{4.0f, 6.0f});
  }
}

TEST_CASE("gemv rejects mismatched shapes", "[linalg]") {
  const Matrix w(3, 2, Layout::kRowMajor);
  CHECK_THROWS_AS(gemv(Vector(2), w), ShapeError);
  CHECK_THROWS_AS(gemv(Vector(4), w), ShapeError);
  CHECK_NOTHROW(gemv(Vector(3), w));
}

TEST_CASE("matrix buffer size is checked", "[linalg]") {
  CHECK_THROWS_AS(Matrix(2, 3, Layout::kRowMajor, std::vector<float>(5)), ShapeError);
  CHECK_THROWS_AS(Matrix::from_rows({{1, 2}, {3}}), ShapeError);
}

TEST_CASE("layouts address the same logical element", "[linalg]") {
  const Matrix r = random_matrix(5, 7, Layout::kRowMajor, 3, 1.0f);
  const Matrix c = r.with_layout(Layout::kColMajor);
  CHECK(c.layout() == Layout::kColMajor);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 7; ++j) CHECK(r(i, j) == c(i, j));
  CHECK(c.with_layout(Layout::kRowMajor) == r);
  CHECK_THROWS_AS(r.col(0), ShapeError);
  CHECK_THROWS_AS(c.row(0), ShapeError);
  CHECK(r.row(2)[4] == r(2, 4));
  CHECK(c.col(4)[2] == r(2, 4));
}

TEST_CASE("identity is a fixed point of gemv", "[linalg]") {
  const Vector x = random_vector(33, 9, 1.0f);
  for (Layout layout : {Layout::kRowMajor, Layout::kColMajor})
    CHECK(gemv(x, Matrix::identity(33, layout)) == x);
}

TEST_CASE("gemv matches a double oracle in both layouts", "[linalg]") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t rows = 1 + rng() % 300;
    const std::size_t cols = 1 + rng() % 200;
    const Vector x = random_vector(rows, rng(), 1.0f);
    const Matrix wr = random_matrix(rows, cols, Layout::kRowMajor, rng(), 0.5f);
    const Matrix wc = wr.with_layout(Layout::kColMajor);
    const std::vector<double> want = gemv_double(x, wr);
    const Vector yr = gemv(x, wr);
    const Vector yc = gemv(x, wc);
    for (std::size_t j = 0; j < cols; ++j) {
      const double tol = error_bound(x, wr, j);
      CHECK(std::fabs(yr[j] - want[j]) <= tol);
      CHECK(std::fabs(yc[j] - want[j]) <= tol);
      CHECK(std::fabs(yr[j] - yc[j]) <= 2 * tol);
    }
  }
}

TEST_CASE("gemv is linear in x", "[linalg]") {
  const Matrix w = random_matrix(64, 48, Layout::kColMajor, 5, 1.0f);
  const Vector a = random_vector(64, 6, 1.0f);
  const Vector b = random_vector(64, 7, 1.0f);
  const float alpha = 0.75f, beta = -1.5f;
  Vector combo(64);
  for (std::size_t i = 0; i < 64; ++i) combo[i] = alpha * a[i] + beta * b[i];
  const Vector lhs = gemv(combo, w);
  const Vector ya = gemv(a, w), yb = gemv(b, w);
  for (std::size_t j = 0; j < 48; ++j) {
    double scale = 0.0;
    for (std::size_t i = 0; i < 64; ++i) scale += std::fabs(combo[i] * w(i, j)) + std::fabs(alpha * a[i] * w(i, j)) + std::fabs(beta * b[i] * w(i, j));
    CHECK_THAT(lhs[j], WithinAbs(alpha * ya[j] + beta * yb[j], 64 * 1.2e-7 * scale + 1e-6));
  }
}

TEST_CASE("threaded gemv is bit-identical to single-threaded", "[linalg]") {
  const Vector x = random_vector(257, 1, 1.0f);
  for (Layout layout : {Layout::kRowMajor, Layout::kColMajor}) {
    const Matrix w = random_matrix(257, 301, layout, 2, 1.0f);
    const Vector one = gemv(x, w, 1);
    for (unsigned t : {2u, 3u, 7u}) CHECK(gemv(x, w, t) == one);
  }
}

TEST_CASE("dot handles every tail length", "[linalg]") {
  for (std::size_t n = 0; n < 70; ++n) {
    std::vector<float> a(n), b(n);
    double want = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = static_cast<float>(i % 7) - 3.0f;
      b[i] = 0.5f * static_cast<float>(i % 5);
      want += static_cast<double>(a[i]) * b[i];
    }
    CHECK(dot(a, b) == static_cast<float>(want));  // exact: small integers and halves
  }
  CHECK_THROWS_AS(dot(std::vector<float>(3), std::vector<float>(4)), ShapeError);
}

TEST_CASE("elementwise_mul", "[linalg]") {
  CHECK(elementwise_mul(Vector{1, 2, 3}, Vector{4, 5, -6}) == Vector{4, 10, -18});
  CHECK_THROWS_AS(elementwise_mul(Vector(2), Vector(3)), ShapeError);
}

TEST_CASE("random_matrix draws N(0, scale^2) reproducibly", "[linalg]") {
  const Matrix w = random_matrix(1000, 1000, Layout::kRowMajor, 42, 0.02f);
  double sum = 0.0, sq = 0.0;
  for (float v : w.data()) {
    sum += v;
    sq += static_cast<double>(v) * v;
  }
  const double n = 1e6;
  const double mean = sum / n;
  const double sd = std::sqrt(sq / n - mean * mean);
  CHECK_THAT(sd, WithinAbs(0.02, 0.0005));
  CHECK_THAT(mean, WithinAbs(0.0, 1e-4));
  CHECK(random_matrix(1000, 1000, Layout::kRowMajor, 42, 0.02f) == w);
  CHECK_FALSE(random_matrix(1000, 1000, Layout::kRowMajor, 43, 0.02f) == w);
  CHECK_THROWS_AS(random_matrix(2, 2, Layout::kRowMajor, 0, 0.0f), DomainError);
  CHECK_THROWS_AS(random_vector(2, 0, -1.0f), DomainError);
}

#pragma once

// Dense FP32 substrate: matrices with an explicit storage layout, vectors,
// matrix-vector products with a fixed accumulation order, seeded Gaussian
// initialization.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "cats/errors.hpp"

namespace cats {

enum class Layout : std::uint8_t { kRowMajor = 0, kColMajor = 1 };

inline const char* to_string(Layout layout) {
  return layout == Layout::kRowMajor ? "row-major" : "column-major";
}

class Vector {
 public:
  Vector() = default;
  explicit Vector(std::size_t n, float fill = 0.0f) : data_(n, fill) {}
  Vector(std::initializer_list<float> values) : data_(values) {}
  explicit Vector(std::vector<float> values) : data_(std::move(values)) {}

  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  float operator[](std::size_t i) const { return data_[i]; }
  float& operator[](std::size_t i) { return data_[i]; }

  const float* data() const noexcept { return data_.data(); }
  float* data() noexcept { return data_.data(); }
  std::span<const float> span() const noexcept { return data_; }
  std::span<float> span() noexcept { return data_; }

  auto begin() const noexcept { return data_.begin(); }
  auto end() const noexcept { return data_.end(); }
  auto begin() noexcept { return data_.begin(); }
  auto end() noexcept { return data_.end(); }

  const std::vector<float>& values() const noexcept { return data_; }

  friend bool operator==(const Vector&, const Vector&) = default;

 private:
  std::vector<float> data_;
};

class Matrix {
 public:
  Matrix() = default;

  Matrix(std::size_t rows, std::size_t cols, Layout layout)
      : rows_(rows), cols_(cols), layout_(layout), data_(rows * cols, 0.0f) {}

  Matrix(std::size_t rows, std::size_t cols, Layout layout,
         std::vector<float> data)
      : rows_(rows), cols_(cols), layout_(layout), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
      throw ShapeError("matrix buffer holds " + std::to_string(data_.size()) +
                       " elements, expected " + std::to_string(rows_) + "x" +
                       std::to_string(cols_));
    }
  }

  // Row-major literal, stored in the requested layout.
  static Matrix from_rows(std::initializer_list<std::initializer_list<float>> rows,
                          Layout layout = Layout::kRowMajor) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    Matrix out(r, c, layout);
    std::size_t i = 0;
    for (const auto& row : rows) {
      if (row.size() != c) throw ShapeError("ragged matrix literal");
      std::size_t j = 0;
      for (float v : row) out.at(i, j++) = v;
      ++i;
    }
    return out;
  }

  static Matrix identity(std::size_t n, Layout layout = Layout::kRowMajor) {
    Matrix out(n, n, layout);
    for (std::size_t i = 0; i < n; ++i) out.at(i, i) = 1.0f;
    return out;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  Layout layout() const noexcept { return layout_; }
  std::size_t size() const noexcept { return data_.size(); }

  std::size_t offset(std::size_t i, std::size_t j) const noexcept {
    return layout_ == Layout::kRowMajor ? i * cols_ + j : j * rows_ + i;
  }

  float operator()(std::size_t i, std::size_t j) const { return data_[offset(i, j)]; }
  float& at(std::size_t i, std::size_t j) { return data_[offset(i, j)]; }

  std::span<const float> data() const noexcept { return data_; }
  std::span<float> mutable_data() noexcept { return data_; }

  // Contiguous row i; only meaningful for row-major storage.
  std::span<const float> row(std::size_t i) const {
    if (layout_ != Layout::kRowMajor) throw ShapeError("row() on a column-major matrix");
    return std::span<const float>(data_).subspan(i * cols_, cols_);
  }

  // Contiguous column j; only meaningful for column-major storage.
  std::span<const float> col(std::size_t j) const {
    if (layout_ != Layout::kColMajor) throw ShapeError("col() on a row-major matrix");
    return std::span<const float>(data_).subspan(j * rows_, rows_);
  }

  // Same logical matrix, re-stored in `layout`.
  Matrix with_layout(Layout layout) const {
    if (layout == layout_) return *this;
    Matrix out(rows_, cols_, layout);
    for (std::size_t i = 0; i < rows_; ++i)
      for (std::size_t j = 0; j < cols_; ++j) out.at(i, j) = (*this)(i, j);
    return out;
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  Layout layout_ = Layout::kRowMajor;
  std::vector<float> data_;
};

namespace detail {

// Splits [0, n) into `threads` contiguous chunks. Chunks write disjoint
// outputs, so the result never depends on the thread count.
template <typename Fn>
void parallel_ranges(std::size_t n, unsigned threads, Fn&& fn) {
  if (threads <= 1 || n < 2) {
    fn(std::size_t{0}, n);
    return;
  }
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, n));
  const std::size_t chunk = (n + threads - 1) / threads;
  std::vector<std::jthread> pool;
  pool.reserve(threads - 1);
  for (unsigned t = 1; t < threads; ++t) {
    const std::size_t b = std::min(n, t * chunk);
    const std::size_t e = std::min(n, b + chunk);
    if (b < e) pool.emplace_back([&fn, b, e] { fn(b, e); });
  }
  fn(std::size_t{0}, std::min(n, chunk));
}

}  // namespace detail

// 16 interleaved FP32 partial sums, folded pairwise. The order depends only
// on the length, never on alignment or threads.
inline float dot(const float* a, const float* b, std::size_t n) noexcept {
  constexpr std::size_t kLanes = 16;
  float acc[kLanes] = {};
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes)
    for (std::size_t l = 0; l < kLanes; ++l) acc[l] += a[i + l] * b[i + l];
  for (std::size_t l = 0; i < n; ++i, ++l) acc[l] += a[i] * b[i];
  for (std::size_t w = kLanes / 2; w > 0; w /= 2)
    for (std::size_t l = 0; l < w; ++l) acc[l] += acc[l + w];
  return acc[0];
}

inline float dot(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) throw ShapeError("dot: length mismatch");
  return dot(a.data(), b.data(), a.size());
}

// y[i] += alpha * x[i]
inline void axpy(float* __restrict y, float alpha, const float* __restrict x,
                 std::size_t n) noexcept {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

// out[j] = sum_i x[i] * W[i,j].
//
// Row-major W: rows are folded into the output one at a time in ascending i.
// Column-major W: each output is a dot() over the contiguous column.
inline Vector gemv(const Vector& x, const Matrix& w, unsigned threads = 1) {
  if (x.size() != w.rows()) {
    throw ShapeError("gemv: x has length " + std::to_string(x.size()) +
                     " but W has " + std::to_string(w.rows()) + " rows");
  }
  const std::size_t rows = w.rows();
  const std::size_t cols = w.cols();
  Vector out(cols);
  const float* xp = x.data();
  const float* wp = w.data().data();
  float* op = out.data();
  if (w.layout() == Layout::kRowMajor) {
    detail::parallel_ranges(cols, threads, [&](std::size_t b, std::size_t e) {
      for (std::size_t i = 0; i < rows; ++i)
        axpy(op + b, xp[i], wp + i * cols + b, e - b);
    });
  } else {
    detail::parallel_ranges(cols, threads, [&](std::size_t b, std::size_t e) {
      for (std::size_t j = b; j < e; ++j) op[j] = dot(xp, wp + j * rows, rows);
    });
  }
  return out;
}

inline Vector elementwise_mul(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) {
    throw ShapeError("elementwise_mul: lengths " + std::to_string(a.size()) +
                     " and " + std::to_string(b.size()));
  }
  Vector out(a.size());
  for (std::size_t j = 0; j < a.size(); ++j) out[j] = a[j] * b[j];
  return out;
}

// Gaussian N(0, scale^2) entries drawn in storage order from a single
// mt19937_64 stream.
inline Matrix random_matrix(std::size_t rows, std::size_t cols, Layout layout,
                            std::uint64_t seed, float scale) {
  if (!(scale > 0.0f)) throw DomainError("random_matrix: scale must be > 0");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, static_cast<double>(scale));
  std::vector<float> data(rows * cols);
  for (float& v : data) v = static_cast<float>(normal(rng));
  return Matrix(rows, cols, layout, std::move(data));
}

inline Vector random_vector(std::size_t n, std::uint64_t seed, float scale) {
  if (!(scale > 0.0f)) throw DomainError("random_vector: scale must be > 0");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, static_cast<double>(scale));
  Vector out(n);
  for (float& v : out) v = static_cast<float>(normal(rng));
  return out;
}

}  // namespace cats

#pragma once

// Gated-MLP forward passes: the dense reference, the thresholded reference
// that skips nothing, and two sparse paths that only touch the up/down
// weights of surviving channels. Every path can report what it touched.

#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "cats/activation.hpp"
#include "cats/errors.hpp"
#include "cats/linalg.hpp"

namespace cats {

// W_gate [d x m] row-major, W_up [d x m] column-major (channel j is a
// contiguous column), W_down [m x d] row-major (channel j is a contiguous row).
struct GatedMlpWeights {
  std::size_t d = 0;
  std::size_t m = 0;
  Matrix gate;
  Matrix up;
  Matrix down;

  friend bool operator==(const GatedMlpWeights&, const GatedMlpWeights&) = default;
};

inline void validate(const GatedMlpWeights& w) {
  auto expect = [](const Matrix& mat, std::size_t r, std::size_t c, Layout layout,
                   const char* name) {
    if (mat.rows() != r || mat.cols() != c) {
      throw ShapeError(std::string(name) + " is " + std::to_string(mat.rows()) + "x" +
                       std::to_string(mat.cols()) + ", expected " + std::to_string(r) +
                       "x" + std::to_string(c));
    }
    if (mat.layout() != layout) {
      throw ShapeError(std::string(name) + " must be stored " + to_string(layout));
    }
  };
  expect(w.gate, w.d, w.m, Layout::kRowMajor, "W_gate");
  expect(w.up, w.d, w.m, Layout::kColMajor, "W_up");
  expect(w.down, w.m, w.d, Layout::kRowMajor, "W_down");
}

// Builds weights from matrices in any layout, re-storing them as required.
inline GatedMlpWeights make_weights(const Matrix& gate, const Matrix& up, const Matrix& down) {
  GatedMlpWeights w;
  w.d = gate.rows();
  w.m = gate.cols();
  w.gate = gate.with_layout(Layout::kRowMajor);
  w.up = up.with_layout(Layout::kColMajor);
  w.down = down.with_layout(Layout::kRowMajor);
  validate(w);
  return w;
}

// splitmix64 step; derives independent sub-seeds from one user seed.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) noexcept {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

inline GatedMlpWeights random_weights(std::size_t d, std::size_t m, std::uint64_t seed,
                                      float scale) {
  GatedMlpWeights w;
  w.d = d;
  w.m = m;
  w.gate = random_matrix(d, m, Layout::kRowMajor, derive_seed(seed, 0), scale);
  w.up = random_matrix(d, m, Layout::kColMajor, derive_seed(seed, 1), scale);
  w.down = random_matrix(m, d, Layout::kRowMajor, derive_seed(seed, 2), scale);
  return w;
}

// Work a forward pass performed. bytes_loaded counts weight bytes only.
struct CostCount {
  std::uint64_t mul_adds = 0;
  std::uint64_t bytes_loaded = 0;
  std::uint64_t channels_active = 0;

  CostCount& operator+=(const CostCount& o) {
    mul_adds += o.mul_adds;
    bytes_loaded += o.bytes_loaded;
    channels_active += o.channels_active;
    return *this;
  }
  friend bool operator==(const CostCount&, const CostCount&) = default;
};

struct KernelOptions {
  Activation activation = Activation::kSilu;
  // Channels per up-projection tile. Affects speed only.
  std::size_t tile = 64;
  unsigned threads = 1;
};

struct SparseForward {
  Vector y;
  Mask mask;
  CostCount cost;
  // Fused products (x W_up)[j] * v[j], length m; exactly 0 for masked-out j.
  Vector hidden;
  // v = act(x W_gate) before thresholding.
  Vector activation;
};

namespace detail {

inline void check_input(const Vector& x, const GatedMlpWeights& w) {
  if (x.size() != w.d) {
    throw ShapeError("x has length " + std::to_string(x.size()) + ", block expects d = " +
                     std::to_string(w.d));
  }
  validate(w);
}

}  // namespace detail

// (act(x W_gate) * (x W_up)) W_down, composed from linalg primitives.
inline Vector dense_mlp_forward(const Vector& x, const GatedMlpWeights& w,
                                const KernelOptions& opts = {}, CostCount* cost = nullptr) {
  detail::check_input(x, w);
  const Vector v = apply(opts.activation, gemv(x, w.gate, opts.threads));
  const Vector u = gemv(x, w.up, opts.threads);
  const Vector h = elementwise_mul(v, u);
  Vector y = gemv(h, w.down, opts.threads);
  if (cost) {
    const std::uint64_t dm = static_cast<std::uint64_t>(w.d) * w.m;
    CostCount c;
    c.mul_adds = dm /* gate */ + dm /* up */ + w.m /* v*u */ + dm /* down */;
    c.bytes_loaded = 3 * dm * sizeof(float);
    c.channels_active = w.m;
    *cost += c;
  }
  return y;
}

// Same as dense_mlp_forward with the activation thresholded. Nothing is
// skipped: this is the oracle for the sparse paths.
inline Vector cats_mlp_reference(const Vector& x, const GatedMlpWeights& w, const Threshold& th,
                                 const KernelOptions& opts = {}) {
  detail::check_input(x, w);
  const Vector v = cats_apply(apply(opts.activation, gemv(x, w.gate, opts.threads)), th);
  const Vector u = gemv(x, w.up, opts.threads);
  return gemv(elementwise_mul(v, u), w.down, opts.threads);
}

// Mask-controlled sparse forward. The up-projection of channel j and its
// product with v[j] happen in one pass over column j of W_up; masked-out
// channels never read their W_up column or W_down row. The down-projection
// folds surviving rows into y in ascending channel order.
inline SparseForward cats_mlp_masked(const Vector& x, const GatedMlpWeights& w,
                                     const Threshold& th, const KernelOptions& opts = {}) {
  detail::check_input(x, w);
  const std::size_t d = w.d;
  const std::size_t m = w.m;
  const std::size_t tile = opts.tile == 0 ? 1 : opts.tile;

  Vector v = apply(opts.activation, gemv(x, w.gate, opts.threads));
  Mask mask = mask_from(v, th);

  std::atomic<std::uint64_t> up_channels{0};
  Vector x1(m);
  const float* xp = x.data();
  const float* up = w.up.data().data();
  const std::size_t n_tiles = (m + tile - 1) / tile;
  detail::parallel_ranges(n_tiles, opts.threads, [&](std::size_t tb, std::size_t te) {
    std::uint64_t touched = 0;
    for (std::size_t t = tb; t < te; ++t) {
      const std::size_t j_end = std::min(m, (t + 1) * tile);
      for (std::size_t j = t * tile; j < j_end; ++j) {
        if (!mask[j]) continue;
        x1[j] = dot(xp, up + j * d, d) * v[j];
        ++touched;
      }
    }
    up_channels += touched;
  });

  std::atomic<std::uint64_t> down_mul_adds{0};
  Vector y(d);
  const float* down = w.down.data().data();
  detail::parallel_ranges(d, opts.threads, [&](std::size_t b, std::size_t e) {
    std::uint64_t work = 0;
    for (std::size_t j = 0; j < m; ++j) {
      if (!mask[j]) continue;
      axpy(y.data() + b, x1[j], down + j * d + b, e - b);
      work += e - b;
    }
    down_mul_adds += work;
  });

  const std::uint64_t dm = static_cast<std::uint64_t>(d) * m;
  const std::uint64_t active = up_channels.load();
  CostCount cost;
  cost.channels_active = active;
  cost.mul_adds = dm + active * d + active + down_mul_adds.load();
  cost.bytes_loaded = (dm + active * d) * sizeof(float) + down_mul_adds.load() * sizeof(float);
  return {std::move(y), std::move(mask), cost, std::move(x1), std::move(v)};
}

inline std::vector<std::uint32_t> compact_indices(const Mask& mask) {
  std::vector<std::uint32_t> idcs;
  idcs.reserve(mask.popcount());
  for (std::size_t j = 0; j < mask.size(); ++j)
    if (mask[j]) idcs.push_back(static_cast<std::uint32_t>(j));
  return idcs;
}

// Index-compaction variant: the mask is first squeezed into a list of
// surviving channels and the weights are gathered through it. Kept for
// ablation against cats_mlp_masked; the arithmetic is identical.
inline SparseForward cats_mlp_compacted(const Vector& x, const GatedMlpWeights& w,
                                        const Threshold& th, const KernelOptions& opts = {}) {
  detail::check_input(x, w);
  const std::size_t d = w.d;
  const std::size_t m = w.m;

  Vector v = apply(opts.activation, gemv(x, w.gate, opts.threads));
  Mask mask = mask_from(v, th);
  const std::vector<std::uint32_t> idcs = compact_indices(mask);
  const std::size_t a = idcs.size();

  Vector x1(a);
  const float* xp = x.data();
  const float* up = w.up.data().data();
  detail::parallel_ranges(a, opts.threads, [&](std::size_t b, std::size_t e) {
    for (std::size_t n = b; n < e; ++n) x1[n] = dot(xp, up + std::size_t{idcs[n]} * d, d) * v[idcs[n]];
  });

  Vector y(d);
  const float* down = w.down.data().data();
  detail::parallel_ranges(d, opts.threads, [&](std::size_t b, std::size_t e) {
    for (std::size_t n = 0; n < a; ++n)
      axpy(y.data() + b, x1[n], down + std::size_t{idcs[n]} * d + b, e - b);
  });

  const std::uint64_t dm = static_cast<std::uint64_t>(d) * m;
  CostCount cost;
  cost.channels_active = a;
  cost.mul_adds = dm + 2 * static_cast<std::uint64_t>(a) * d + a;
  cost.bytes_loaded = (dm + 2 * static_cast<std::uint64_t>(a) * d) * sizeof(float);
  Vector hidden(m);
  for (std::size_t n = 0; n < a; ++n) hidden[idcs[n]] = x1[n];
  return {std::move(y), std::move(mask), cost, std::move(hidden), std::move(v)};
}

// Active channel count the analytic model assumes at a given sparsity.
inline std::size_t active_channels(std::size_t m, double sparsity) {
  return static_cast<std::size_t>(std::llround(static_cast<double>(m) * (1.0 - sparsity)));
}

inline CostCount cost_model(std::size_t d, std::size_t m, double sparsity) {
  if (!(sparsity >= 0.0 && sparsity <= 1.0))
    throw DomainError("cost_model: sparsity must lie in [0, 1]");
  const std::uint64_t a = active_channels(m, sparsity);
  const std::uint64_t dm = static_cast<std::uint64_t>(d) * m;
  CostCount c;
  c.channels_active = a;
  c.mul_adds = dm + d * a + a + a * d;
  c.bytes_loaded = sizeof(float) * (dm + 2 * d * a);
  return c;
}

// Hidden width of the dense block that does only the work of the surviving
// channels at sparsity k. Never below one channel.
inline std::size_t optimal_width(std::size_t m, double k) {
  if (!(k >= 0.0 && k < 1.0)) throw DomainError("optimal_width: k must lie in [0, 1)");
  return std::max<std::size_t>(1, active_channels(m, k));
}

// The first `width` channels of `w` as a standalone block.
inline GatedMlpWeights truncate_weights(const GatedMlpWeights& w, std::size_t width) {
  validate(w);
  if (width == 0 || width > w.m)
    throw ShapeError("truncate_weights: width " + std::to_string(width) + " not in [1, " +
                     std::to_string(w.m) + "]");
  GatedMlpWeights out;
  out.d = w.d;
  out.m = width;
  out.gate = Matrix(w.d, width, Layout::kRowMajor);
  out.up = Matrix(w.d, width, Layout::kColMajor);
  out.down = Matrix(width, w.d, Layout::kRowMajor);
  for (std::size_t i = 0; i < w.d; ++i)
    for (std::size_t j = 0; j < width; ++j) {
      out.gate.at(i, j) = w.gate(i, j);
      out.up.at(i, j) = w.up(i, j);
      out.down.at(j, i) = w.down(j, i);
    }
  return out;
}

// Timing proxy only: a plain dense pass at reduced width.
inline Vector optimal_baseline_forward(const Vector& x, const GatedMlpWeights& w_truncated,
                                       const KernelOptions& opts = {}) {
  return dense_mlp_forward(x, w_truncated, opts);
}

}  // namespace cats

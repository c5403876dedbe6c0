#pragma once

// Independent reference computations for the tests. Nothing here calls into
// the library's arithmetic: sums run in double, in textbook loop order.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <vector>

namespace oracle {

inline double silu(double u) { return u / (1.0 + std::exp(-u)); }

// Central finite difference of the thresholded SiLU, evaluated in double.
inline double cats_silu_fd(double u, double t, double h = 1e-3) {
  auto f = [t](double x) {
    const double s = silu(x);
    return std::fabs(s) >= t ? s : 0.0;
  };
  return (f(u + h) - f(u - h)) / (2.0 * h);
}

// Threshold fit by scanning: candidates are 0 and every sample value in ascending
// order; F(c) is recomputed from the sorted prefix for each candidate.
inline float fit_threshold_scan(std::vector<float> mags, double k) {
  std::sort(mags.begin(), mags.end());
  const double n = static_cast<double>(mags.size());
  std::vector<float> candidates;
  candidates.push_back(0.0f);
  candidates.insert(candidates.end(), mags.begin(), mags.end());
  std::size_t below = 0;  // count of sorted values <= current candidate
  for (float c : candidates) {
    while (below < mags.size() && mags[below] <= c) ++below;
    if (static_cast<double>(below) / n >= k) return c;
  }
  return mags.back();
}

// Row-major dense matrices given as (rows, cols, data).
struct Dense {
  std::size_t rows, cols;
  std::vector<double> data;
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
};

// (CATS_t(act(x Wg)) * (x Wu)) Wd in double, with the threshold decided on
// the float activation so the mask matches the implementation's.
inline std::vector<double> gated_mlp(const std::vector<double>& x, const Dense& wg, const Dense& wu,
                                     const Dense& wd, float t, bool relu = false) {
  const std::size_t d = wg.rows, m = wg.cols;
  std::vector<double> h(m, 0.0);
  for (std::size_t j = 0; j < m; ++j) {
    double g = 0.0, u = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      g += x[i] * wg(i, j);
      u += x[i] * wu(i, j);
    }
    const double a = relu ? std::max(g, 0.0) : silu(g);
    const float af = static_cast<float>(a);
    h[j] = std::fabs(af) >= t ? a * u : 0.0;
  }
  std::vector<double> y(wd.cols, 0.0);
  for (std::size_t j = 0; j < m; ++j)
    for (std::size_t c = 0; c < wd.cols; ++c) y[c] += h[j] * wd(j, c);
  return y;
}

}  // namespace oracle

#pragma once

// SiLU, ReLU, the magnitude-threshold operation and its composition with
// SiLU, channel masks, and the piecewise derivative of the composition.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "cats/errors.hpp"
#include "cats/linalg.hpp"

namespace cats {

// A fitted per-layer cutoff. `t` is in activation-magnitude units.
struct Threshold {
  float t = 0.0f;
  double target_sparsity = 0.0;
  std::string layer_id;
  std::size_t sample_count = 0;

  friend bool operator==(const Threshold&, const Threshold&) = default;
};

inline void validate(const Threshold& th) {
  if (!(th.t >= 0.0f) || !std::isfinite(th.t))
    throw DomainError("threshold must be finite and >= 0");
  if (!(th.target_sparsity >= 0.0 && th.target_sparsity < 1.0))
    throw DomainError("target sparsity must lie in [0, 1)");
}

// Threshold with only the cutoff set; for tests and hand-built configs.
inline Threshold threshold_at(float t) {
  Threshold th;
  th.t = t;
  validate(th);
  return th;
}

enum class Activation : std::uint8_t { kSilu, kRelu };

inline const char* to_string(Activation a) { return a == Activation::kSilu ? "silu" : "relu"; }

// Logistic function, saturated beyond |u| > 80 where exp() would overflow
// the float range in intermediate steps.
inline float sigmoid(float u) noexcept {
  if (u > 80.0f) return 1.0f;
  if (u < -80.0f) return 0.0f;
  if (u >= 0.0f) return 1.0f / (1.0f + std::exp(-u));
  const float e = std::exp(u);
  return e / (1.0f + e);
}

inline float silu(float u) noexcept { return u * sigmoid(u); }

inline float relu(float u) noexcept { return u > 0.0f ? u : 0.0f; }

inline float apply(Activation a, float u) noexcept {
  return a == Activation::kSilu ? silu(u) : relu(u);
}

inline Vector silu(const Vector& v) {
  Vector out(v.size());
  for (std::size_t j = 0; j < v.size(); ++j) out[j] = silu(v[j]);
  return out;
}

inline Vector relu(const Vector& v) {
  Vector out(v.size());
  for (std::size_t j = 0; j < v.size(); ++j) out[j] = relu(v[j]);
  return out;
}

inline Vector apply(Activation a, const Vector& v) {
  return a == Activation::kSilu ? silu(v) : relu(v);
}

// |v| == t is kept.
inline bool retained(float v, float t) noexcept { return std::fabs(v) >= t; }

inline Vector cats_apply(const Vector& v, const Threshold& th) {
  Vector out(v.size());
  for (std::size_t j = 0; j < v.size(); ++j) out[j] = retained(v[j], th.t) ? v[j] : 0.0f;
  return out;
}

inline Vector cats_silu(const Vector& u, const Threshold& th) {
  return cats_apply(silu(u), th);
}

class Mask {
 public:
  Mask() = default;
  explicit Mask(std::vector<std::uint8_t> bits) : bits_(std::move(bits)) {
    for (auto& b : bits_) {
      b = b ? 1 : 0;
      popcount_ += b;
    }
  }

  std::size_t size() const noexcept { return bits_.size(); }
  std::size_t popcount() const noexcept { return popcount_; }
  bool operator[](std::size_t j) const { return bits_[j] != 0; }
  const std::vector<std::uint8_t>& bits() const noexcept { return bits_; }

  // Fraction of channels switched off.
  double sparsity() const noexcept {
    return bits_.empty() ? 0.0
                         : 1.0 - static_cast<double>(popcount_) /
                                     static_cast<double>(bits_.size());
  }

  friend bool operator==(const Mask&, const Mask&) = default;

 private:
  std::vector<std::uint8_t> bits_;
  std::size_t popcount_ = 0;
};

inline Mask mask_from(const Vector& v, const Threshold& th) {
  std::vector<std::uint8_t> bits(v.size());
  for (std::size_t j = 0; j < v.size(); ++j) bits[j] = retained(v[j], th.t) ? 1 : 0;
  return Mask(std::move(bits));
}

// Half-width of the band around the cutoff where the derivative is refused.
inline constexpr float kKinkWindow = 1e-4f;

// d/du CATS_t(SiLU(u)): SiLU' where the output survives, 0 where it is cut.
// With t == 0 nothing is cut and there is no discontinuity to guard.
inline Vector cats_silu_derivative(const Vector& u, const Threshold& th) {
  Vector out(u.size());
  for (std::size_t j = 0; j < u.size(); ++j) {
    const float mag = std::fabs(silu(u[j]));
    if (th.t > 0.0f && std::fabs(mag - th.t) < kKinkWindow) {
      throw NearThresholdError("cats_silu_derivative: u[" + std::to_string(j) +
                               "] = " + std::to_string(u[j]) +
                               " is within the kink window of t = " +
                               std::to_string(th.t));
    }
    if (mag >= th.t) {
      const float s = sigmoid(u[j]);
      out[j] = s * (1.0f + u[j] * (1.0f - s));
    } else {
      out[j] = 0.0f;
    }
  }
  return out;
}

}  // namespace cats

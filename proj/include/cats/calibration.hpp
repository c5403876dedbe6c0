#pragma once

// Threshold calibration: pool activation magnitudes from a seeded subset of
// inputs, then pick the smallest observed magnitude (or 0) at which the
// empirical CDF reaches the target sparsity.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <iterator>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "cats/activation.hpp"
#include "cats/errors.hpp"
#include "cats/model.hpp"

namespace cats {

struct ActivationSample {
  std::string layer_id;
  std::vector<float> magnitudes;
  std::string source;
};

inline void validate(const ActivationSample& s) {
  if (s.magnitudes.empty()) throw DomainError("activation sample for layer '" + s.layer_id + "' is empty");
  for (float v : s.magnitudes)
    if (!(v >= 0.0f) || !std::isfinite(v))
      throw DomainError("activation sample holds a negative or non-finite magnitude");
}

// Fraction of magnitudes <= t_prime.
inline double empirical_cdf(const ActivationSample& sample, float t_prime) {
  if (sample.magnitudes.empty()) throw DomainError("empirical_cdf: empty sample");
  const auto below = std::count_if(sample.magnitudes.begin(), sample.magnitudes.end(),
                                   [t_prime](float v) { return v <= t_prime; });
  return static_cast<double>(below) / static_cast<double>(sample.magnitudes.size());
}

// t = min{ t' in {0} U sample : F(t') >= k }.
//
// F only changes at sample values, so the answer is the value of rank c*
// (1-based) where c* is the smallest count with c*/n >= k, unless the
// zeros alone already reach k.
inline Threshold fit_threshold(const ActivationSample& sample, double k) {
  if (!(k >= 0.0 && k < 1.0)) throw DomainError("fit_threshold: k must lie in [0, 1)");
  validate(sample);
  const std::size_t n = sample.magnitudes.size();
  const double dn = static_cast<double>(n);
  auto reaches = [&](std::size_t count) { return static_cast<double>(count) / dn >= k; };

  Threshold th;
  th.target_sparsity = k;
  th.layer_id = sample.layer_id;
  th.sample_count = n;

  const auto zeros = static_cast<std::size_t>(
      std::count(sample.magnitudes.begin(), sample.magnitudes.end(), 0.0f));
  if (reaches(zeros)) {
    th.t = 0.0f;
    return th;
  }
  std::size_t lo = 1, hi = n;  // reaches(n) holds since k < 1
  while (lo < hi) {
    const std::size_t mid = lo + (hi - lo) / 2;
    if (reaches(mid)) hi = mid;
    else lo = mid + 1;
  }
  std::vector<float> work = sample.magnitudes;
  std::nth_element(work.begin(), work.begin() + static_cast<std::ptrdiff_t>(lo - 1), work.end());
  th.t = work[lo - 1];
  return th;
}

struct Histogram {
  double range_max = 0.0;
  std::vector<double> edges;           // bins + 1 lower/upper edges over [0, range_max]
  std::vector<std::uint64_t> counts;   // one per bin
  std::uint64_t overflow = 0;          // values > range_max

  std::uint64_t total() const {
    return std::accumulate(counts.begin(), counts.end(), overflow);
  }
};

// Uniform bins over [0, range_max]; range_max itself falls in the last bin.
inline Histogram histogram(const ActivationSample& sample, std::size_t bins, double range_max) {
  if (bins == 0) throw DomainError("histogram: bins must be >= 1");
  if (!(range_max > 0.0) || !std::isfinite(range_max))
    throw DomainError("histogram: range_max must be finite and > 0");
  Histogram h;
  h.range_max = range_max;
  h.counts.assign(bins, 0);
  h.edges.resize(bins + 1);
  for (std::size_t b = 0; b <= bins; ++b)
    h.edges[b] = range_max * static_cast<double>(b) / static_cast<double>(bins);
  for (float v : sample.magnitudes) {
    const double x = v;
    if (x > range_max) {
      ++h.overflow;
      continue;
    }
    auto b = static_cast<std::size_t>(x / range_max * static_cast<double>(bins));
    ++h.counts[std::min(b, bins - 1)];
  }
  return h;
}

// Uniform reservoir (Algorithm R) bounding the pooled sample per layer.
class Reservoir {
 public:
  static constexpr std::size_t kDefaultCapacity = 10'000'000;

  explicit Reservoir(std::uint64_t seed, std::size_t capacity = kDefaultCapacity)
      : capacity_(capacity), rng_(seed) {}

  void add(float v) {
    ++seen_;
    if (values_.size() < capacity_) {
      values_.push_back(v);
      return;
    }
    std::uniform_int_distribution<std::uint64_t> pick(0, seen_ - 1);
    const std::uint64_t slot = pick(rng_);
    if (slot < capacity_) values_[slot] = v;
  }

  std::uint64_t seen() const noexcept { return seen_; }
  std::vector<float> take() && { return std::move(values_); }
  const std::vector<float>& values() const noexcept { return values_; }

 private:
  std::size_t capacity_;
  std::mt19937_64 rng_;
  std::uint64_t seen_ = 0;
  std::vector<float> values_;
};

// Calibration inputs per the default protocol.
inline constexpr std::size_t kDefaultMaxInputs = 500;

// Seeded subset of at most `max_inputs` sequences, original order kept.
inline std::vector<std::size_t> select_inputs(std::size_t available, std::size_t max_inputs,
                                              std::uint64_t seed) {
  std::vector<std::size_t> all(available);
  std::iota(all.begin(), all.end(), std::size_t{0});
  if (available <= max_inputs) return all;
  std::vector<std::size_t> picked;
  picked.reserve(max_inputs);
  std::mt19937_64 rng(seed);
  std::sample(all.begin(), all.end(), std::back_inserter(picked), max_inputs, rng);
  return picked;
}

using SampleKey = std::pair<Site, std::size_t>;  // (site, layer)

// Magnitudes of the base (unthresholded) model at every requested site and
// layer, pooled over all token positions of the selected inputs.
inline std::map<SampleKey, ActivationSample> collect_samples(
    const ToyModel& model, const Dataset& dataset, const std::vector<Site>& sites,
    const std::set<std::size_t>& layers, std::size_t max_inputs, std::uint64_t seed,
    std::size_t reservoir_capacity = Reservoir::kDefaultCapacity) {
  if (dataset.empty()) throw DomainError("calibration dataset is empty");
  if (max_inputs == 0) throw DomainError("max_inputs must be >= 1");
  for (std::size_t l : layers)
    if (l >= model.config.layers)
      throw DomainError("unknown layer " + std::to_string(l) + " (model has " +
                        std::to_string(model.config.layers) + ")");

  std::map<SampleKey, Reservoir> pools;
  std::uint64_t stream = 1;
  for (Site s : sites)
    for (std::size_t l : layers)
      pools.emplace(SampleKey{s, l}, Reservoir(derive_seed(seed, stream++), reservoir_capacity));

  const CatsSettings base;
  for (std::size_t idx : select_inputs(dataset.size(), max_inputs, derive_seed(seed, 0))) {
    Capture cap;
    cap.layers = layers;
    forward(model, base, dataset[idx], &cap);
    for (Site s : sites)
      for (std::size_t l : layers) {
        Reservoir& pool = pools.at({s, l});
        for (float v : cap.at(s)[l]) pool.add(std::fabs(v));
      }
  }

  std::map<SampleKey, ActivationSample> out;
  for (auto& [key, pool] : pools) {
    ActivationSample sample;
    sample.layer_id = std::to_string(key.second);
    sample.source = std::string(to_string(key.first)) + " over " +
                    std::to_string(std::min(dataset.size(), max_inputs)) + " inputs";
    sample.magnitudes = std::move(pool).take();
    out.emplace(key, std::move(sample));
  }
  return out;
}

inline ActivationSample collect_activations(const ToyModel& model, const Dataset& dataset,
                                            std::size_t layer, std::size_t max_inputs,
                                            std::uint64_t seed) {
  auto samples = collect_samples(model, dataset, {Site::kMlpActivation}, {layer}, max_inputs, seed);
  return std::move(samples.begin()->second);
}

struct LayerCalibration {
  Site site = Site::kMlpActivation;
  std::size_t layer = 0;
  Threshold threshold;
  Histogram histogram;
};

struct CalibrationReport {
  double target_sparsity = 0.0;
  std::uint64_t seed = 0;
  CatsMode mode = CatsMode::kMlp;
  std::size_t max_inputs = kDefaultMaxInputs;
  std::vector<LayerCalibration> layers;

  ThresholdSet thresholds() const {
    ThresholdSet set;
    for (const auto& lc : layers) set.at(lc.site).push_back(lc.threshold);
    return set;
  }
};

inline constexpr std::size_t kReportHistogramBins = 50;

// One threshold per Gated-MLP block (and, in mlp+attention mode, one per
// wrapped sublayer input), each fitted independently on the base model.
inline CalibrationReport calibrate_model(const ToyModel& model, const Dataset& dataset, double k,
                                         std::uint64_t seed, CatsMode mode = CatsMode::kMlp,
                                         std::size_t max_inputs = kDefaultMaxInputs) {
  if (!(k >= 0.0 && k < 1.0)) throw DomainError("calibrate_model: k must lie in [0, 1)");
  if (mode == CatsMode::kOff) throw DomainError("calibrate_model: mode must enable CATS");

  std::vector<Site> sites;
  for (std::size_t s = 0; s < kSiteCount; ++s)
    if (site_active(mode, static_cast<Site>(s))) sites.push_back(static_cast<Site>(s));
  std::set<std::size_t> layers;
  for (std::size_t l = 0; l < model.config.layers; ++l) layers.insert(l);

  auto samples = collect_samples(model, dataset, sites, layers, max_inputs, seed);

  CalibrationReport report;
  report.target_sparsity = k;
  report.seed = seed;
  report.mode = mode;
  report.max_inputs = max_inputs;
  for (Site s : sites)
    for (std::size_t l : layers) {
      const ActivationSample& sample = samples.at({s, l});
      LayerCalibration lc;
      lc.site = s;
      lc.layer = l;
      lc.threshold = fit_threshold(sample, k);
      double range = fit_threshold(sample, 0.99).t;
      if (!(range > 0.0)) range = *std::max_element(sample.magnitudes.begin(), sample.magnitudes.end());
      if (!(range > 0.0)) range = 1.0;
      lc.histogram = histogram(sample, kReportHistogramBins, range);
      report.layers.push_back(std::move(lc));
    }
  return report;
}

}  // namespace cats

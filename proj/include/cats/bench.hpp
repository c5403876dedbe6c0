#pragma once

// Latency and throughput measurement. Every cell runs warmup rounds, then
// timed rounds; a cell's latency is the geometric mean over its rounds.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <ctime>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <unistd.h>

#include "cats/activation.hpp"
#include "cats/calibration.hpp"
#include "cats/errors.hpp"
#include "cats/kernel.hpp"
#include "cats/model.hpp"

namespace cats {

inline double geometric_mean(const std::vector<double>& xs) {
  if (xs.empty()) throw DomainError("geometric_mean of an empty list");
  double log_sum = 0.0;
  for (double x : xs) {
    if (!(x > 0.0)) throw DomainError("geometric_mean needs positive values");
    log_sum += std::log(x);
  }
  return std::exp(log_sum / static_cast<double>(xs.size()));
}

enum class Variant : std::uint8_t { kDense, kCatsMasked, kCatsCompacted, kOptimal };

inline const char* to_string(Variant v) {
  switch (v) {
    case Variant::kDense: return "dense";
    case Variant::kCatsMasked: return "cats-masked";
    case Variant::kCatsCompacted: return "cats-compacted";
    case Variant::kOptimal: return "optimal";
  }
  return "?";
}

inline Variant parse_variant(const std::string& s) {
  for (Variant v : {Variant::kDense, Variant::kCatsMasked, Variant::kCatsCompacted, Variant::kOptimal})
    if (s == to_string(v)) return v;
  throw DomainError("unknown variant '" + s + "' (expected dense, cats-masked, cats-compacted or optimal)");
}

struct Environment {
  unsigned threads = 1;
  std::string compiler;
  std::string build_flags;
  std::string timestamp;  // UTC, ISO 8601
};

inline std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline Environment current_environment(unsigned threads) {
  Environment env;
  env.threads = threads;
#if defined(__clang__)
  env.compiler = "clang " __clang_version__;
#elif defined(__GNUC__)
  env.compiler = "gcc " __VERSION__;
#else
  env.compiler = "unknown";
#endif
#ifdef CATS_BUILD_FLAGS
  env.build_flags = CATS_BUILD_FLAGS;
#endif
  env.timestamp = utc_timestamp();
  return env;
}

// Bytes the OS reports as available, or nullopt when unknown.
inline std::optional<std::uint64_t> available_memory_bytes() {
  std::ifstream in("/proc/meminfo");
  std::string key;
  std::uint64_t kb = 0;
  std::string unit;
  while (in >> key >> kb >> unit)
    if (key == "MemAvailable:") return kb * 1024;
  const long pages = sysconf(_SC_AVPHYS_PAGES);
  const long page = sysconf(_SC_PAGESIZE);
  if (pages > 0 && page > 0) return static_cast<std::uint64_t>(pages) * static_cast<std::uint64_t>(page);
  return std::nullopt;
}

struct BenchConfig {
  std::size_t d = 4096;
  std::size_t m = 14336;
  std::vector<double> sparsities = {0.5, 0.7, 0.9};
  std::vector<Variant> variants = {Variant::kDense, Variant::kCatsMasked};
  std::size_t warmup_rounds = 20;
  std::size_t repeat_count = 80;
  unsigned threads = 1;
  std::uint64_t seed = 0;
  std::size_t tile = 64;
};

inline void validate(const BenchConfig& c) {
  if (c.d == 0 || c.m == 0) throw DomainError("bench: d and m must be >= 1");
  if (c.repeat_count == 0) throw DomainError("bench: repeat_count must be >= 1");
  if (c.sparsities.empty()) throw DomainError("bench: no sparsity levels");
  for (double s : c.sparsities)
    if (!(s >= 0.0 && s < 1.0)) throw DomainError("bench: sparsity levels must lie in [0, 1)");
  if (c.variants.empty()) throw DomainError("bench: no variants");
  if (c.threads == 0) throw DomainError("bench: threads must be >= 1");
}

struct BenchCell {
  Variant variant = Variant::kDense;
  double sparsity = 0.0;
  double geomean_ns = 0.0;
  double speedup = 1.0;            // dense geomean / this geomean, same sparsity
  double achieved_sparsity = 0.0;  // mean mask sparsity over timed rounds
  std::size_t hidden_width = 0;    // m, or the truncated width for optimal
  CostCount cost;                  // last timed round
  CostCount modeled;               // cost_model at the target sparsity
};

struct BenchReport {
  std::size_t d = 0;
  std::size_t m = 0;
  std::size_t warmup_rounds = 0;
  std::size_t repeat_count = 0;
  std::uint64_t seed = 0;
  Environment environment;
  std::vector<BenchCell> cells;

  const BenchCell* find(Variant v, double sparsity) const {
    for (const auto& c : cells)
      if (c.variant == v && c.sparsity == sparsity) return &c;
    return nullptr;
  }
};

namespace detail {

template <typename Fn>
double time_ns(Fn&& fn) {
  const auto t0 = std::chrono::steady_clock::now();
  fn();
  const auto t1 = std::chrono::steady_clock::now();
  return std::max(1.0, std::chrono::duration<double, std::nano>(t1 - t0).count());
}

inline void check_capacity(const BenchConfig& c) {
  const bool optimal = std::find(c.variants.begin(), c.variants.end(), Variant::kOptimal) != c.variants.end();
  double widest = 0.0;
  for (double s : c.sparsities) widest = std::max(widest, 1.0 - s);
  const double floats = 3.0 * static_cast<double>(c.d) * static_cast<double>(c.m) *
                        (1.0 + (optimal ? widest : 0.0));
  const auto need = static_cast<std::uint64_t>(floats * sizeof(float));
  if (auto avail = available_memory_bytes(); avail && need > *avail) {
    throw CapacityError("bench needs about " + std::to_string(need >> 20) + " MiB of weights but only " +
                        std::to_string(*avail >> 20) + " MiB are available");
  }
}

}  // namespace detail

// Kernel latency per (variant, sparsity). Each round draws a fresh input
// from the seed, fits the threshold to that input's own activation
// magnitudes at the target sparsity, then times one kernel call. Threshold
// fitting and input generation sit outside the timed region.
inline BenchReport bench_mlp(const BenchConfig& config, const GatedMlpWeights* weights = nullptr) {
  validate(config);
  std::optional<GatedMlpWeights> owned;
  if (weights) {
    validate(*weights);
    if (weights->d != config.d || weights->m != config.m)
      throw ShapeError("bench: supplied weights do not match the configured shape");
  } else {
    detail::check_capacity(config);
    owned = random_weights(config.d, config.m, config.seed,
                           1.0f / std::sqrt(static_cast<float>(config.d)));
    weights = &*owned;
  }
  const GatedMlpWeights& w = *weights;
  KernelOptions opts;
  opts.threads = config.threads;
  opts.tile = config.tile;

  BenchReport report;
  report.d = config.d;
  report.m = config.m;
  report.warmup_rounds = config.warmup_rounds;
  report.repeat_count = config.repeat_count;
  report.seed = config.seed;
  report.environment = current_environment(config.threads);

  const std::size_t total_rounds = config.warmup_rounds + config.repeat_count;
  volatile float sink = 0.0f;

  for (std::size_t si = 0; si < config.sparsities.size(); ++si) {
    const double k = config.sparsities[si];
    std::vector<Variant> order = {Variant::kDense};
    for (Variant v : config.variants)
      if (v != Variant::kDense) order.push_back(v);

    double dense_ns = 0.0;
    for (Variant variant : order) {
      std::optional<GatedMlpWeights> truncated;
      if (variant == Variant::kOptimal) truncated = truncate_weights(w, optimal_width(w.m, k));

      BenchCell cell;
      cell.variant = variant;
      cell.sparsity = k;
      cell.hidden_width = truncated ? truncated->m : w.m;
      cell.modeled = variant == Variant::kDense ? cost_model(w.d, w.m, 0.0)
                     : variant == Variant::kOptimal ? cost_model(w.d, cell.hidden_width, 0.0)
                                                    : cost_model(w.d, w.m, k);
      std::vector<double> samples;
      samples.reserve(config.repeat_count);
      double sparsity_sum = 0.0;

      for (std::size_t round = 0; round < total_rounds; ++round) {
        const Vector x = random_vector(w.d, derive_seed(config.seed, 1000 + si * total_rounds + round), 1.0f);
        Threshold th;
        if (variant == Variant::kCatsMasked || variant == Variant::kCatsCompacted) {
          ActivationSample sample;
          const Vector v = apply(opts.activation, gemv(x, w.gate, opts.threads));
          sample.magnitudes.reserve(v.size());
          for (float a : v) sample.magnitudes.push_back(std::fabs(a));
          th = fit_threshold(sample, k);
        }

        CostCount cost;
        double achieved = 0.0;
        double ns = 0.0;
        switch (variant) {
          case Variant::kDense:
            ns = detail::time_ns([&] { sink = sink + dense_mlp_forward(x, w, opts)[0]; });
            cost = cell.modeled;
            break;
          case Variant::kOptimal:
            ns = detail::time_ns([&] { sink = sink + optimal_baseline_forward(x, *truncated, opts)[0]; });
            cost = cell.modeled;
            break;
          case Variant::kCatsMasked:
          case Variant::kCatsCompacted: {
            SparseForward r;
            ns = detail::time_ns([&] {
              r = variant == Variant::kCatsMasked ? cats_mlp_masked(x, w, th, opts)
                                                  : cats_mlp_compacted(x, w, th, opts);
            });
            sink = sink + r.y[0];
            cost = r.cost;
            achieved = r.mask.sparsity();
            break;
          }
        }
        if (round < config.warmup_rounds) continue;
        samples.push_back(ns);
        sparsity_sum += achieved;
        cell.cost = cost;
      }
      cell.geomean_ns = geometric_mean(samples);
      cell.achieved_sparsity = sparsity_sum / static_cast<double>(config.repeat_count);
      if (variant == Variant::kDense) dense_ns = cell.geomean_ns;
      cell.speedup = dense_ns / cell.geomean_ns;
      if (variant == Variant::kDense) cell.speedup = 1.0;

      const bool requested =
          std::find(config.variants.begin(), config.variants.end(), variant) != config.variants.end();
      if (requested) report.cells.push_back(cell);
    }
  }
  return report;
}

struct GenBenchConfig {
  ModelConfig model;
  std::size_t samples = 50;
  std::size_t gen_len = 32;
  std::size_t prompt_len = 8;
  std::vector<double> sparsities = {0.5};
  std::size_t calibration_sequences = 64;
  std::size_t calibration_length = 32;
  std::uint64_t seed = 0;
  unsigned threads = 1;
};

inline void validate(const GenBenchConfig& c) {
  validate(c.model);
  if (c.samples == 0) throw DomainError("bench-gen: samples must be >= 1");
  if (c.gen_len == 0 || c.prompt_len == 0) throw DomainError("bench-gen: gen_len and prompt_len must be >= 1");
  if (c.prompt_len + c.gen_len - 1 > c.model.max_seq)
    throw DomainError("bench-gen: prompt_len + gen_len exceeds the model's max_seq");
  if (c.calibration_sequences == 0 || c.calibration_length == 0 ||
      c.calibration_length > c.model.max_seq)
    throw DomainError("bench-gen: invalid calibration dataset shape");
  for (double s : c.sparsities)
    if (!(s >= 0.0 && s < 1.0)) throw DomainError("bench-gen: sparsity levels must lie in [0, 1)");
  if (c.threads == 0) throw DomainError("bench-gen: threads must be >= 1");
}

struct GenRun {
  CatsMode mode = CatsMode::kOff;
  double sparsity = 0.0;                   // 0 for the dense run
  double geomean_latency_ns = 0.0;         // first to last generated token
  double throughput_tokens_per_s = 0.0;    // geometric mean over samples
  double throughput_ratio = 1.0;           // vs dense
};

struct GenReport {
  ModelConfig model;
  std::size_t samples = 0;
  std::size_t gen_len = 0;
  std::size_t prompt_len = 0;
  std::uint64_t seed = 0;
  Environment environment;
  std::vector<GenRun> runs;
};

// Greedy decoding throughput at batch 1, dense vs thresholded MLPs. The timed
// span starts with the decode step that yields the first generated token and
// ends when the last one is produced. Samples interleave the configurations
// so drift affects them alike.
inline GenReport bench_generation(const GenBenchConfig& config) {
  validate(config);
  const ToyModel model = build_toy_model(config.model);
  const Dataset prompts =
      random_dataset(config.samples, config.prompt_len, config.model.vocab, derive_seed(config.seed, 1));
  const Dataset calibration = random_dataset(config.calibration_sequences, config.calibration_length,
                                             config.model.vocab, derive_seed(config.seed, 2));

  std::vector<CatsSettings> settings;
  std::vector<GenRun> runs;
  {
    CatsSettings dense;
    dense.kernel.threads = config.threads;
    settings.push_back(dense);
    runs.push_back(GenRun{});
  }
  for (double k : config.sparsities) {
    CatsSettings s;
    s.mode = CatsMode::kMlp;
    s.kernel.threads = config.threads;
    s.thresholds = calibrate_model(model, calibration, k, derive_seed(config.seed, 3)).thresholds();
    settings.push_back(std::move(s));
    GenRun r;
    r.mode = CatsMode::kMlp;
    r.sparsity = k;
    runs.push_back(r);
  }

  std::vector<std::vector<double>> latencies(settings.size());
  std::vector<std::vector<double>> throughputs(settings.size());
  volatile std::uint32_t sink = 0;
  for (const auto& prompt : prompts) {
    for (std::size_t c = 0; c < settings.size(); ++c) {
      Decoder dec(model, settings[c]);
      for (std::size_t i = 0; i + 1 < prompt.size(); ++i) dec.feed(prompt[i]);
      const double ns = detail::time_ns([&] {
        Vector logits = dec.feed(prompt.back());
        for (std::size_t g = 0; g < config.gen_len; ++g) {
          const std::uint32_t next = argmax(logits);
          sink = sink + next;
          if (g + 1 < config.gen_len) logits = dec.feed(next);
        }
      });
      latencies[c].push_back(ns);
      throughputs[c].push_back(static_cast<double>(config.gen_len) / (ns * 1e-9));
    }
  }

  GenReport report;
  report.model = config.model;
  report.samples = config.samples;
  report.gen_len = config.gen_len;
  report.prompt_len = config.prompt_len;
  report.seed = config.seed;
  report.environment = current_environment(config.threads);
  for (std::size_t c = 0; c < settings.size(); ++c) {
    runs[c].geomean_latency_ns = geometric_mean(latencies[c]);
    runs[c].throughput_tokens_per_s = geometric_mean(throughputs[c]);
    runs[c].throughput_ratio = runs[c].throughput_tokens_per_s / runs[0].throughput_tokens_per_s;
  }
  report.runs = std::move(runs);
  return report;
}

}  // namespace cats

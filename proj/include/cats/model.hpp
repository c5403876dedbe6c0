#pragma once

// Desk-scale decoder-only transformer: learned token and absolute position
// embeddings, pre-norm causal multi-head attention, and one Gated-MLP per
// layer. Thresholding can wrap the MLP activation only, or additionally the
// vectors entering each attention and MLP sublayer.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "cats/activation.hpp"
#include "cats/errors.hpp"
#include "cats/kernel.hpp"
#include "cats/linalg.hpp"

namespace cats {

using TokenSequence = std::vector<std::uint32_t>;
using Dataset = std::vector<TokenSequence>;

enum class CatsMode : std::uint8_t { kOff, kMlp, kMlpAttention };

inline const char* to_string(CatsMode mode) {
  switch (mode) {
    case CatsMode::kOff: return "off";
    case CatsMode::kMlp: return "mlp";
    case CatsMode::kMlpAttention: return "mlp+attention";
  }
  return "?";
}

inline CatsMode parse_cats_mode(const std::string& s) {
  if (s == "off") return CatsMode::kOff;
  if (s == "mlp") return CatsMode::kMlp;
  if (s == "mlp+attention") return CatsMode::kMlpAttention;
  throw DomainError("unknown CATS mode '" + s + "' (expected off, mlp or mlp+attention)");
}

struct ModelConfig {
  std::size_t vocab = 256;
  std::size_t d = 64;
  std::size_t m = 172;
  std::size_t layers = 4;
  std::size_t heads = 4;
  std::size_t max_seq = 64;
  Activation activation = Activation::kSilu;
  std::uint64_t seed = 0;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

inline void validate(const ModelConfig& c) {
  if (c.vocab == 0 || c.d == 0 || c.m == 0 || c.layers == 0 || c.heads == 0 || c.max_seq == 0)
    throw DomainError("model config: every dimension must be >= 1");
  if (c.d % c.heads != 0)
    throw DomainError("model config: d = " + std::to_string(c.d) +
                      " is not divisible by heads = " + std::to_string(c.heads));
}

// Where a threshold applies inside layer i.
enum class Site : std::uint8_t {
  kMlpActivation = 0,   // act(x W_gate) inside the MLP
  kAttentionInput = 1,  // normalized hidden vector entering attention
  kMlpInput = 2,        // normalized hidden vector entering the MLP
};
inline constexpr std::size_t kSiteCount = 3;

inline const char* to_string(Site s) {
  switch (s) {
    case Site::kMlpActivation: return "mlp_activation";
    case Site::kAttentionInput: return "attention_input";
    case Site::kMlpInput: return "mlp_input";
  }
  return "?";
}

struct ThresholdSet {
  std::vector<Threshold> mlp;
  std::vector<Threshold> attention_input;
  std::vector<Threshold> mlp_input;

  const std::vector<Threshold>& at(Site s) const {
    switch (s) {
      case Site::kMlpActivation: return mlp;
      case Site::kAttentionInput: return attention_input;
      case Site::kMlpInput: return mlp_input;
    }
    return mlp;
  }
  std::vector<Threshold>& at(Site s) {
    return const_cast<std::vector<Threshold>&>(std::as_const(*this).at(s));
  }

  friend bool operator==(const ThresholdSet&, const ThresholdSet&) = default;
};

struct CatsSettings {
  CatsMode mode = CatsMode::kOff;
  ThresholdSet thresholds;
  KernelOptions kernel;
};

inline bool site_active(CatsMode mode, Site s) {
  if (mode == CatsMode::kOff) return false;
  if (s == Site::kMlpActivation) return true;
  return mode == CatsMode::kMlpAttention;
}

// Same cutoff for every site the mode uses.
inline ThresholdSet uniform_thresholds(std::size_t layers, CatsMode mode, float t) {
  ThresholdSet set;
  for (std::size_t s = 0; s < kSiteCount; ++s) {
    if (!site_active(mode, static_cast<Site>(s))) continue;
    for (std::size_t i = 0; i < layers; ++i) {
      Threshold th = threshold_at(t);
      th.layer_id = std::to_string(i);
      set.at(static_cast<Site>(s)).push_back(th);
    }
  }
  return set;
}

inline void validate(const CatsSettings& s, std::size_t layers) {
  for (std::size_t k = 0; k < kSiteCount; ++k) {
    const Site site = static_cast<Site>(k);
    const auto& ths = s.thresholds.at(site);
    const std::size_t want = site_active(s.mode, site) ? layers : 0;
    if (ths.size() != want) {
      throw DomainError(std::string("mode ") + to_string(s.mode) + " needs " +
                        std::to_string(want) + " " + to_string(site) + " thresholds, got " +
                        std::to_string(ths.size()));
    }
    for (const auto& th : ths) validate(th);
  }
}

struct AttentionWeights {
  Matrix q, k, v, o;  // d x d, row-major, applied as x W
};

struct TransformerLayer {
  AttentionWeights attention;
  GatedMlpWeights mlp;
};

struct ToyModel {
  ModelConfig config;
  Matrix embedding;    // vocab x d
  Matrix positions;    // max_seq x d
  std::vector<TransformerLayer> layers;
  Matrix unembedding;  // d x vocab
};

inline ToyModel build_toy_model(const ModelConfig& config) {
  validate(config);
  const float scale = 1.0f / std::sqrt(static_cast<float>(config.d));
  const std::size_t d = config.d;
  std::uint64_t stream = 0;
  auto next_seed = [&] { return derive_seed(config.seed, stream++); };

  ToyModel model;
  model.config = config;
  model.embedding = random_matrix(config.vocab, d, Layout::kRowMajor, next_seed(), scale);
  model.positions = random_matrix(config.max_seq, d, Layout::kRowMajor, next_seed(), scale);
  model.layers.resize(config.layers);
  for (auto& layer : model.layers) {
    layer.attention.q = random_matrix(d, d, Layout::kRowMajor, next_seed(), scale);
    layer.attention.k = random_matrix(d, d, Layout::kRowMajor, next_seed(), scale);
    layer.attention.v = random_matrix(d, d, Layout::kRowMajor, next_seed(), scale);
    layer.attention.o = random_matrix(d, d, Layout::kRowMajor, next_seed(), scale);
    layer.mlp = random_weights(d, config.m, next_seed(), scale);
  }
  model.unembedding = random_matrix(d, config.vocab, Layout::kRowMajor, next_seed(), scale);
  return model;
}

inline Vector rms_norm(const Vector& h) {
  double ss = 0.0;
  for (float v : h) ss += static_cast<double>(v) * v;
  const float inv = static_cast<float>(1.0 / std::sqrt(ss / static_cast<double>(h.size()) + 1e-6));
  Vector out(h.size());
  for (std::size_t i = 0; i < h.size(); ++i) out[i] = h[i] * inv;
  return out;
}

// Pre-threshold values seen at each site, token-major, for selected layers.
struct Capture {
  std::set<std::size_t> layers;
  std::map<std::size_t, std::vector<float>> mlp_activation;
  std::map<std::size_t, std::vector<float>> attention_input;
  std::map<std::size_t, std::vector<float>> mlp_input;

  std::map<std::size_t, std::vector<float>>& at(Site s) {
    switch (s) {
      case Site::kMlpActivation: return mlp_activation;
      case Site::kAttentionInput: return attention_input;
      case Site::kMlpInput: return mlp_input;
    }
    return mlp_activation;
  }
};

// Post-threshold zero counts per (site, layer).
struct ZeroTally {
  std::array<std::vector<std::uint64_t>, kSiteCount> zeros;
  std::array<std::vector<std::uint64_t>, kSiteCount> total;

  explicit ZeroTally(std::size_t layers) {
    for (std::size_t s = 0; s < kSiteCount; ++s) {
      zeros[s].assign(layers, 0);
      total[s].assign(layers, 0);
    }
  }
};

// Incremental decoder over one sequence. Keys and values of past positions
// live in a per-layer cache, so each step costs one vector pass per weight.
class Decoder {
 public:
  Decoder(const ToyModel& model, const CatsSettings& settings)
      : model_(&model), settings_(settings) {
    validate(settings_, model.config.layers);
    settings_.kernel.activation = model.config.activation;
    const std::size_t n = model.config.max_seq * model.config.d;
    keys_.assign(model.config.layers, std::vector<float>());
    values_.assign(model.config.layers, std::vector<float>());
    for (auto& k : keys_) k.reserve(n);
    for (auto& v : values_) v.reserve(n);
  }

  std::size_t position() const noexcept { return position_; }

  // Consumes one token and returns next-token logits.
  Vector feed(std::uint32_t token, Capture* capture = nullptr, ZeroTally* tally = nullptr) {
    const ModelConfig& c = model_->config;
    if (token >= c.vocab)
      throw DomainError("token id " + std::to_string(token) + " out of range for vocab " +
                        std::to_string(c.vocab));
    if (position_ >= c.max_seq)
      throw DomainError("sequence exceeds max_seq = " + std::to_string(c.max_seq));

    const std::size_t d = c.d;
    Vector h(d);
    auto emb = model_->embedding.row(token);
    auto pos = model_->positions.row(position_);
    for (std::size_t i = 0; i < d; ++i) h[i] = emb[i] + pos[i];

    for (std::size_t l = 0; l < c.layers; ++l) {
      const TransformerLayer& layer = model_->layers[l];
      const bool cap = capture && capture->layers.count(l) > 0;

      Vector a_in = rms_norm(h);
      a_in = wrap(Site::kAttentionInput, l, a_in, cap ? capture : nullptr, tally);
      const Vector attn = attention(l, layer.attention, a_in);
      for (std::size_t i = 0; i < d; ++i) h[i] += attn[i];

      Vector m_in = rms_norm(h);
      m_in = wrap(Site::kMlpInput, l, m_in, cap ? capture : nullptr, tally);
      const Vector y = mlp(l, layer.mlp, m_in, cap ? capture : nullptr, tally);
      for (std::size_t i = 0; i < d; ++i) h[i] += y[i];
    }
    ++position_;
    return gemv(rms_norm(h), model_->unembedding);
  }

 private:
  Vector wrap(Site site, std::size_t layer, const Vector& v, Capture* capture, ZeroTally* tally) {
    if (capture) append(capture->at(site)[layer], v);
    if (!site_active(settings_.mode, site)) return v;
    Vector out = cats_apply(v, settings_.thresholds.at(site)[layer]);
    if (tally) count_zeros(*tally, site, layer, out);
    return out;
  }

  Vector mlp(std::size_t layer, const GatedMlpWeights& w, const Vector& x, Capture* capture,
             ZeroTally* tally) {
    if (settings_.mode == CatsMode::kOff) {
      if (capture) append(capture->mlp_activation[layer], apply(settings_.kernel.activation, gemv(x, w.gate)));
      return dense_mlp_forward(x, w, settings_.kernel);
    }
    SparseForward r = cats_mlp_masked(x, w, settings_.thresholds.mlp[layer], settings_.kernel);
    if (capture) append(capture->mlp_activation[layer], r.activation);
    if (tally) {
      std::uint64_t zeros = 0;
      for (std::size_t j = 0; j < r.mask.size(); ++j)
        if (!r.mask[j] || r.activation[j] == 0.0f) ++zeros;
      const auto s = static_cast<std::size_t>(Site::kMlpActivation);
      tally->zeros[s][layer] += zeros;
      tally->total[s][layer] += r.mask.size();
    }
    return std::move(r.y);
  }

  Vector attention(std::size_t layer, const AttentionWeights& w, const Vector& x) {
    const std::size_t d = model_->config.d;
    const std::size_t heads = model_->config.heads;
    const std::size_t hd = d / heads;
    const Vector q = gemv(x, w.q);
    const Vector k = gemv(x, w.k);
    const Vector v = gemv(x, w.v);
    auto& keys = keys_[layer];
    auto& values = values_[layer];
    keys.insert(keys.end(), k.begin(), k.end());
    values.insert(values.end(), v.begin(), v.end());
    const std::size_t n = position_ + 1;

    const float inv_sqrt = 1.0f / std::sqrt(static_cast<float>(hd));
    Vector mixed(d);
    std::vector<float> scores(n);
    for (std::size_t hh = 0; hh < heads; ++hh) {
      const std::size_t off = hh * hd;
      float best = -INFINITY;
      for (std::size_t p = 0; p < n; ++p) {
        scores[p] = dot(q.data() + off, keys.data() + p * d + off, hd) * inv_sqrt;
        best = std::max(best, scores[p]);
      }
      float sum = 0.0f;
      for (std::size_t p = 0; p < n; ++p) {
        scores[p] = std::exp(scores[p] - best);
        sum += scores[p];
      }
      for (std::size_t p = 0; p < n; ++p)
        axpy(mixed.data() + off, scores[p] / sum, values.data() + p * d + off, hd);
    }
    return gemv(mixed, w.o);
  }

  static void append(std::vector<float>& dst, const Vector& v) {
    dst.insert(dst.end(), v.begin(), v.end());
  }

  static void count_zeros(ZeroTally& tally, Site site, std::size_t layer, const Vector& v) {
    const auto s = static_cast<std::size_t>(site);
    tally.zeros[s][layer] += static_cast<std::uint64_t>(std::count(v.begin(), v.end(), 0.0f));
    tally.total[s][layer] += v.size();
  }

  const ToyModel* model_;
  CatsSettings settings_;
  std::vector<std::vector<float>> keys_;
  std::vector<std::vector<float>> values_;
  std::size_t position_ = 0;
};

// Logits after every position of `tokens`.
inline std::vector<Vector> forward(const ToyModel& model, const CatsSettings& settings,
                                   const TokenSequence& tokens, Capture* capture = nullptr,
                                   ZeroTally* tally = nullptr) {
  if (tokens.size() > model.config.max_seq)
    throw DomainError("sequence of " + std::to_string(tokens.size()) +
                      " tokens exceeds max_seq = " + std::to_string(model.config.max_seq));
  Decoder dec(model, settings);
  std::vector<Vector> logits;
  logits.reserve(tokens.size());
  for (std::uint32_t tok : tokens) logits.push_back(dec.feed(tok, capture, tally));
  return logits;
}

// Forward with every sublayer input and MLP activation thresholded.
inline std::vector<Vector> attention_cats_forward(const ToyModel& model,
                                                  const CatsSettings& settings,
                                                  const TokenSequence& tokens) {
  if (settings.mode != CatsMode::kMlpAttention)
    throw DomainError("attention_cats_forward requires mode mlp+attention");
  return forward(model, settings, tokens);
}

// Lowest index wins ties.
inline std::uint32_t argmax(const Vector& logits) {
  return static_cast<std::uint32_t>(
      std::distance(logits.begin(), std::max_element(logits.begin(), logits.end())));
}

inline void check_generation(const ToyModel& model, const TokenSequence& prompt,
                             std::size_t n_tokens) {
  if (n_tokens == 0) throw DomainError("n_tokens must be >= 1");
  if (prompt.empty()) throw DomainError("prompt must contain at least one token");
  if (prompt.size() + n_tokens - 1 > model.config.max_seq)
    throw DomainError("prompt of " + std::to_string(prompt.size()) + " tokens plus " +
                      std::to_string(n_tokens) + " generated exceeds max_seq = " +
                      std::to_string(model.config.max_seq));
}

// Greedy decoding with the key/value cache; returns the generated tokens.
inline TokenSequence generate(const ToyModel& model, const CatsSettings& settings,
                              const TokenSequence& prompt, std::size_t n_tokens) {
  check_generation(model, prompt, n_tokens);
  Decoder dec(model, settings);
  Vector logits;
  for (std::uint32_t tok : prompt) logits = dec.feed(tok);
  TokenSequence out;
  out.reserve(n_tokens);
  for (std::size_t i = 0; i < n_tokens; ++i) {
    out.push_back(argmax(logits));
    if (i + 1 < n_tokens) logits = dec.feed(out.back());
  }
  return out;
}

// Greedy decoding that reruns the whole prefix for every token.
inline TokenSequence generate_uncached(const ToyModel& model, const CatsSettings& settings,
                                       const TokenSequence& prompt, std::size_t n_tokens) {
  check_generation(model, prompt, n_tokens);
  TokenSequence seq = prompt;
  TokenSequence out;
  for (std::size_t i = 0; i < n_tokens; ++i) {
    const std::uint32_t next = argmax(forward(model, settings, seq).back());
    out.push_back(next);
    seq.push_back(next);
  }
  return out;
}

struct SiteSparsity {
  std::size_t layer = 0;
  Site site = Site::kMlpActivation;
  std::uint64_t zeros = 0;
  std::uint64_t total = 0;
  double sparsity = 0.0;
};

struct SparsityReport {
  std::vector<SiteSparsity> sites;
  double mean = 0.0;      // over every reported site
  double mlp_mean = 0.0;  // over MLP activation sites only
};

// Fraction of thresholded entries that are exactly zero, per site, over all
// token positions of `dataset`.
inline SparsityReport sparsity_report(const ToyModel& model, const CatsSettings& settings,
                                      const Dataset& dataset) {
  if (settings.mode == CatsMode::kOff) throw DomainError("sparsity_report needs CATS enabled");
  if (dataset.empty()) throw DomainError("sparsity_report: empty dataset");
  ZeroTally tally(model.config.layers);
  for (const auto& seq : dataset) forward(model, settings, seq, nullptr, &tally);

  SparsityReport report;
  double sum = 0.0, mlp_sum = 0.0;
  std::size_t mlp_n = 0;
  for (std::size_t s = 0; s < kSiteCount; ++s) {
    const Site site = static_cast<Site>(s);
    if (!site_active(settings.mode, site)) continue;
    for (std::size_t l = 0; l < model.config.layers; ++l) {
      SiteSparsity e;
      e.layer = l;
      e.site = site;
      e.zeros = tally.zeros[s][l];
      e.total = tally.total[s][l];
      e.sparsity = e.total ? static_cast<double>(e.zeros) / static_cast<double>(e.total) : 0.0;
      sum += e.sparsity;
      if (site == Site::kMlpActivation) {
        mlp_sum += e.sparsity;
        ++mlp_n;
      }
      report.sites.push_back(e);
    }
  }
  report.mean = report.sites.empty() ? 0.0 : sum / static_cast<double>(report.sites.size());
  report.mlp_mean = mlp_n ? mlp_sum / static_cast<double>(mlp_n) : 0.0;
  return report;
}

// Uniform random token sequences.
inline Dataset random_dataset(std::size_t sequences, std::size_t length, std::size_t vocab,
                              std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::uint32_t> pick(0, static_cast<std::uint32_t>(vocab - 1));
  Dataset out(sequences, TokenSequence(length));
  for (auto& seq : out)
    for (auto& tok : seq) tok = pick(rng);
  return out;
}

}  // namespace cats

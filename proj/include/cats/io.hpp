#pragma once

// Text formats: token-sequence files, JSON documents for model configs,
// calibration/bench/generation/sparsity reports, and TSV histograms.

#include <cctype>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cats/bench.hpp"
#include "cats/calibration.hpp"
#include "cats/errors.hpp"
#include "cats/model.hpp"

namespace cats {

using nlohmann::json;

inline constexpr const char* kReportSchema = "cats.calibration/1";
inline constexpr const char* kBenchSchema = "cats.bench/1";
inline constexpr const char* kGenSchema = "cats.gen/1";
inline constexpr const char* kSparsitySchema = "cats.sparsity/1";

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << text;
  if (!out) throw IoError("write failed on '" + path + "'");
}

// One sequence per non-empty line, ids separated by whitespace or commas.
inline Dataset parse_token_sequences(const std::string& text) {
  Dataset out;
  TokenSequence current;
  std::size_t i = 0;
  while (i < text.size()) {
    const char c = text[i];
    if (c == '\n') {
      if (!current.empty()) out.push_back(std::move(current));
      current.clear();
      ++i;
    } else if (c == ' ' || c == '\t' || c == '\r' || c == ',') {
      ++i;
    } else if (std::isdigit(static_cast<unsigned char>(c))) {
      const std::size_t start = i;
      std::uint64_t v = 0;
      while (i < text.size() && std::isdigit(static_cast<unsigned char>(text[i]))) {
        v = v * 10 + static_cast<std::uint64_t>(text[i] - '0');
        if (v > UINT32_MAX) throw FormatError("token id too large", start);
        ++i;
      }
      current.push_back(static_cast<std::uint32_t>(v));
    } else {
      throw FormatError(std::string("unexpected character '") + c + "' in token file", i);
    }
  }
  if (!current.empty()) out.push_back(std::move(current));
  return out;
}

inline Dataset load_token_sequences(const std::string& path) {
  return parse_token_sequences(read_text_file(path));
}

inline std::string format_token_sequences(const Dataset& data) {
  std::string out;
  for (const auto& seq : data) {
    for (std::size_t i = 0; i < seq.size(); ++i) {
      if (i) out += ' ';
      out += std::to_string(seq[i]);
    }
    out += '\n';
  }
  return out;
}

// Parses JSON text; syntax errors become FormatError with the byte offset.
inline json parse_json(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("invalid JSON: ") + e.what(), e.byte > 0 ? e.byte - 1 : 0);
  }
}

namespace detail {

template <typename T>
T field(const json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) throw DomainError(std::string("missing field '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw DomainError(std::string("field '") + key + "' has the wrong type");
  }
}

template <typename T>
T field_or(const json& j, const char* key, T fallback) {
  return j.contains(key) ? field<T>(j, key) : fallback;
}

inline Activation parse_activation(const std::string& s) {
  if (s == "silu") return Activation::kSilu;
  if (s == "relu") return Activation::kRelu;
  throw DomainError("unknown activation '" + s + "'");
}

inline Site parse_site(const std::string& s) {
  for (std::size_t k = 0; k < kSiteCount; ++k)
    if (s == to_string(static_cast<Site>(k))) return static_cast<Site>(k);
  throw DomainError("unknown site '" + s + "'");
}

inline json cost_json(const CostCount& c) {
  return {{"mul_adds", c.mul_adds}, {"bytes_loaded", c.bytes_loaded}, {"channels_active", c.channels_active}};
}

inline CostCount cost_from_json(const json& j) {
  CostCount c;
  c.mul_adds = field<std::uint64_t>(j, "mul_adds");
  c.bytes_loaded = field<std::uint64_t>(j, "bytes_loaded");
  c.channels_active = field<std::uint64_t>(j, "channels_active");
  return c;
}

inline json environment_json(const Environment& e) {
  return {{"threads", e.threads}, {"compiler", e.compiler}, {"build_flags", e.build_flags}, {"timestamp", e.timestamp}};
}

inline Environment environment_from_json(const json& j) {
  Environment e;
  e.threads = field<unsigned>(j, "threads");
  e.compiler = field<std::string>(j, "compiler");
  e.build_flags = field<std::string>(j, "build_flags");
  e.timestamp = field<std::string>(j, "timestamp");
  return e;
}

inline void expect_schema(const json& j, const char* schema) {
  const auto got = field<std::string>(j, "schema");
  if (got != schema) throw DomainError("expected a '" + std::string(schema) + "' document, got '" + got + "'");
}

}  // namespace detail

inline json to_json(const ModelConfig& c) {
  return {{"vocab", c.vocab}, {"d", c.d},           {"m", c.m},
          {"layers", c.layers}, {"heads", c.heads}, {"max_seq", c.max_seq},
          {"activation", to_string(c.activation)}, {"seed", c.seed}};
}

inline ModelConfig model_config_from_json(const json& j) {
  ModelConfig c;
  c.vocab = detail::field<std::size_t>(j, "vocab");
  c.d = detail::field<std::size_t>(j, "d");
  c.m = detail::field<std::size_t>(j, "m");
  c.layers = detail::field<std::size_t>(j, "layers");
  c.heads = detail::field<std::size_t>(j, "heads");
  c.max_seq = detail::field<std::size_t>(j, "max_seq");
  c.activation = detail::parse_activation(detail::field_or<std::string>(j, "activation", "silu"));
  c.seed = detail::field_or<std::uint64_t>(j, "seed", 0);
  validate(c);
  return c;
}

inline json to_json(const Threshold& t) {
  return {{"t", t.t}, {"target_sparsity", t.target_sparsity}, {"layer_id", t.layer_id},
          {"sample_count", t.sample_count}};
}

inline Threshold threshold_from_json(const json& j) {
  Threshold t;
  t.t = detail::field<float>(j, "t");
  t.target_sparsity = detail::field<double>(j, "target_sparsity");
  t.layer_id = detail::field<std::string>(j, "layer_id");
  t.sample_count = detail::field<std::size_t>(j, "sample_count");
  validate(t);
  return t;
}

inline json to_json(const Histogram& h) {
  return {{"range_max", h.range_max}, {"edges", h.edges}, {"counts", h.counts}, {"overflow", h.overflow}};
}

inline Histogram histogram_from_json(const json& j) {
  Histogram h;
  h.range_max = detail::field<double>(j, "range_max");
  h.edges = detail::field<std::vector<double>>(j, "edges");
  h.counts = detail::field<std::vector<std::uint64_t>>(j, "counts");
  h.overflow = detail::field<std::uint64_t>(j, "overflow");
  if (h.edges.size() != h.counts.size() + 1) throw DomainError("histogram edges/counts length mismatch");
  return h;
}

inline json to_json(const CalibrationReport& r) {
  json layers = json::array();
  for (const auto& lc : r.layers) {
    layers.push_back({{"site", to_string(lc.site)},
                      {"layer", lc.layer},
                      {"threshold", to_json(lc.threshold)},
                      {"histogram", to_json(lc.histogram)}});
  }
  return {{"schema", kReportSchema}, {"target_sparsity", r.target_sparsity}, {"seed", r.seed},
          {"mode", to_string(r.mode)}, {"max_inputs", r.max_inputs},      {"layers", layers}};
}

inline CalibrationReport calibration_report_from_json(const json& j) {
  detail::expect_schema(j, kReportSchema);
  CalibrationReport r;
  r.target_sparsity = detail::field<double>(j, "target_sparsity");
  r.seed = detail::field<std::uint64_t>(j, "seed");
  r.mode = parse_cats_mode(detail::field<std::string>(j, "mode"));
  r.max_inputs = detail::field<std::size_t>(j, "max_inputs");
  for (const auto& e : detail::field<json>(j, "layers")) {
    LayerCalibration lc;
    lc.site = detail::parse_site(detail::field<std::string>(e, "site"));
    lc.layer = detail::field<std::size_t>(e, "layer");
    lc.threshold = threshold_from_json(detail::field<json>(e, "threshold"));
    lc.histogram = histogram_from_json(detail::field<json>(e, "histogram"));
    if (lc.histogram.total() != lc.threshold.sample_count)
      throw DomainError("histogram counts do not sum to the threshold's sample count");
    r.layers.push_back(std::move(lc));
  }
  return r;
}

inline json to_json(const BenchReport& r) {
  json cells = json::array();
  for (const auto& c : r.cells) {
    cells.push_back({{"variant", to_string(c.variant)},
                     {"sparsity", c.sparsity},
                     {"geomean_ns", c.geomean_ns},
                     {"speedup", c.speedup},
                     {"achieved_sparsity", c.achieved_sparsity},
                     {"hidden_width", c.hidden_width},
                     {"cost", detail::cost_json(c.cost)},
                     {"modeled_cost", detail::cost_json(c.modeled)}});
  }
  return {{"schema", kBenchSchema},
          {"shape", {{"d", r.d}, {"m", r.m}}},
          {"warmup_rounds", r.warmup_rounds},
          {"repeat_count", r.repeat_count},
          {"seed", r.seed},
          {"environment", detail::environment_json(r.environment)},
          {"results", cells}};
}

inline BenchReport bench_report_from_json(const json& j) {
  detail::expect_schema(j, kBenchSchema);
  BenchReport r;
  const json shape = detail::field<json>(j, "shape");
  r.d = detail::field<std::size_t>(shape, "d");
  r.m = detail::field<std::size_t>(shape, "m");
  r.warmup_rounds = detail::field<std::size_t>(j, "warmup_rounds");
  r.repeat_count = detail::field<std::size_t>(j, "repeat_count");
  r.seed = detail::field<std::uint64_t>(j, "seed");
  r.environment = detail::environment_from_json(detail::field<json>(j, "environment"));
  for (const auto& e : detail::field<json>(j, "results")) {
    BenchCell c;
    c.variant = parse_variant(detail::field<std::string>(e, "variant"));
    c.sparsity = detail::field<double>(e, "sparsity");
    c.geomean_ns = detail::field<double>(e, "geomean_ns");
    c.speedup = detail::field<double>(e, "speedup");
    c.achieved_sparsity = detail::field<double>(e, "achieved_sparsity");
    c.hidden_width = detail::field<std::size_t>(e, "hidden_width");
    c.cost = detail::cost_from_json(detail::field<json>(e, "cost"));
    c.modeled = detail::cost_from_json(detail::field<json>(e, "modeled_cost"));
    r.cells.push_back(c);
  }
  return r;
}

inline GenBenchConfig gen_bench_config_from_json(const json& j) {
  GenBenchConfig c;
  c.model = model_config_from_json(detail::field<json>(j, "model"));
  c.samples = detail::field_or<std::size_t>(j, "samples", c.samples);
  c.gen_len = detail::field_or<std::size_t>(j, "gen_len", c.gen_len);
  c.prompt_len = detail::field_or<std::size_t>(j, "prompt_len", c.prompt_len);
  c.sparsities = detail::field_or<std::vector<double>>(j, "sparsities", c.sparsities);
  c.calibration_sequences = detail::field_or<std::size_t>(j, "calibration_sequences", c.calibration_sequences);
  c.calibration_length = detail::field_or<std::size_t>(j, "calibration_length", c.calibration_length);
  c.seed = detail::field_or<std::uint64_t>(j, "seed", c.seed);
  c.threads = detail::field_or<unsigned>(j, "threads", c.threads);
  validate(c);
  return c;
}

inline json to_json(const GenReport& r) {
  json runs = json::array();
  for (const auto& g : r.runs) {
    runs.push_back({{"mode", to_string(g.mode)},
                    {"sparsity", g.sparsity},
                    {"geomean_latency_ns", g.geomean_latency_ns},
                    {"throughput_tokens_per_s", g.throughput_tokens_per_s},
                    {"throughput_ratio", g.throughput_ratio}});
  }
  return {{"schema", kGenSchema},
          {"model", to_json(r.model)},
          {"samples", r.samples},
          {"gen_len", r.gen_len},
          {"prompt_len", r.prompt_len},
          {"seed", r.seed},
          {"environment", detail::environment_json(r.environment)},
          {"runs", runs}};
}

inline GenReport gen_report_from_json(const json& j) {
  detail::expect_schema(j, kGenSchema);
  GenReport r;
  r.model = model_config_from_json(detail::field<json>(j, "model"));
  r.samples = detail::field<std::size_t>(j, "samples");
  r.gen_len = detail::field<std::size_t>(j, "gen_len");
  r.prompt_len = detail::field<std::size_t>(j, "prompt_len");
  r.seed = detail::field<std::uint64_t>(j, "seed");
  r.environment = detail::environment_from_json(detail::field<json>(j, "environment"));
  for (const auto& e : detail::field<json>(j, "runs")) {
    GenRun g;
    g.mode = parse_cats_mode(detail::field<std::string>(e, "mode"));
    g.sparsity = detail::field<double>(e, "sparsity");
    g.geomean_latency_ns = detail::field<double>(e, "geomean_latency_ns");
    g.throughput_tokens_per_s = detail::field<double>(e, "throughput_tokens_per_s");
    g.throughput_ratio = detail::field<double>(e, "throughput_ratio");
    r.runs.push_back(g);
  }
  return r;
}

inline json to_json(const SparsityReport& r, CatsMode mode) {
  json sites = json::array();
  for (const auto& s : r.sites) {
    sites.push_back({{"layer", s.layer}, {"site", to_string(s.site)}, {"zeros", s.zeros},
                     {"total", s.total}, {"sparsity", s.sparsity}});
  }
  return {{"schema", kSparsitySchema}, {"mode", to_string(mode)}, {"sites", sites},
          {"mean", r.mean}, {"mlp_mean", r.mlp_mean}};
}

inline SparsityReport sparsity_report_from_json(const json& j) {
  detail::expect_schema(j, kSparsitySchema);
  SparsityReport r;
  for (const auto& e : detail::field<json>(j, "sites")) {
    SiteSparsity s;
    s.layer = detail::field<std::size_t>(e, "layer");
    s.site = detail::parse_site(detail::field<std::string>(e, "site"));
    s.zeros = detail::field<std::uint64_t>(e, "zeros");
    s.total = detail::field<std::uint64_t>(e, "total");
    s.sparsity = detail::field<double>(e, "sparsity");
    r.sites.push_back(s);
  }
  r.mean = detail::field<double>(j, "mean");
  r.mlp_mean = detail::field<double>(j, "mlp_mean");
  return r;
}

// Canonical text of a JSON document: two-space indent, trailing newline.
inline std::string dump(const json& j) { return j.dump(2) + "\n"; }

// Two numeric columns per line: lower bin edge and count. A final line at
// range_max holds the overflow count (values above range_max).
inline std::string format_histogram_tsv(const Histogram& h) {
  std::ostringstream out;
  out.precision(9);
  for (std::size_t b = 0; b < h.counts.size(); ++b) out << h.edges[b] << '\t' << h.counts[b] << '\n';
  out << h.range_max << '\t' << h.overflow << '\n';
  return out.str();
}

}  // namespace cats

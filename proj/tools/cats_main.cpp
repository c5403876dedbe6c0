// Command-line front end: weight generation, calibration, histograms,
// generation, sparsity reports and benchmarks.
//
// Exit codes: 0 success, 2 usage, 3 I/O, 4 validation.

#include <cmath>
#include <cstdint>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cats/cats.hpp"

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;
constexpr int kExitValidation = 4;

cats::ModelConfig load_model(const std::string& path) {
  return cats::model_config_from_json(cats::parse_json(cats::read_text_file(path)));
}

cats::Dataset load_dataset(const std::string& path, const cats::ModelConfig& cfg) {
  cats::Dataset data = cats::load_token_sequences(path);
  if (data.empty()) throw cats::DomainError("'" + path + "' holds no token sequences");
  for (const auto& seq : data) {
    if (seq.size() > cfg.max_seq)
      throw cats::DomainError("a sequence in '" + path + "' is longer than max_seq");
    for (auto tok : seq)
      if (tok >= cfg.vocab)
        throw cats::DomainError("token " + std::to_string(tok) + " in '" + path + "' is outside the vocabulary");
  }
  return data;
}

cats::CalibrationReport load_report(const std::string& path) {
  return cats::calibration_report_from_json(cats::parse_json(cats::read_text_file(path)));
}

cats::CatsSettings settings_for(cats::CatsMode mode, const std::string& thresholds_path,
                                std::size_t layers) {
  cats::CatsSettings s;
  s.mode = mode;
  if (mode == cats::CatsMode::kOff) return s;
  if (thresholds_path.empty()) throw cats::DomainError("--thresholds is required unless --mode off");
  const cats::CalibrationReport report = load_report(thresholds_path);
  s.thresholds = report.thresholds();
  // A report calibrated for mlp+attention also serves plain mlp mode.
  if (mode == cats::CatsMode::kMlp) {
    s.thresholds.attention_input.clear();
    s.thresholds.mlp_input.clear();
  }
  cats::validate(s, layers);
  return s;
}

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw cats::DomainError("'" + item + "' is not a number");
    }
  }
  return out;
}

std::vector<std::string> split(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(item);
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Calibrated activation thresholding for Gated-MLP blocks"};
  app.require_subcommand(1);

  // gen-weights
  std::uint32_t gw_d = 0, gw_m = 0;
  std::uint64_t gw_seed = 0;
  float gw_scale = 0.0f;
  std::string gw_out;
  auto* gen_weights = app.add_subcommand("gen-weights", "Write a random Gated-MLP block to a weight file");
  gen_weights->add_option("--d", gw_d, "Input/output width")->required();
  gen_weights->add_option("--m", gw_m, "Hidden width")->required();
  gen_weights->add_option("--seed", gw_seed, "RNG seed")->required();
  gen_weights->add_option("--scale", gw_scale, "Standard deviation (default 1/sqrt(d))");
  gen_weights->add_option("--out", gw_out, "Output weight file")->required();

  // calibrate
  std::string cal_model, cal_data, cal_out, cal_mode = "mlp";
  double cal_k = 0.0;
  std::uint64_t cal_seed = 0;
  std::size_t cal_max_inputs = cats::kDefaultMaxInputs;
  auto* calibrate = app.add_subcommand("calibrate", "Fit per-layer thresholds for a target sparsity");
  calibrate->add_option("--model", cal_model, "Model config (JSON)")->required();
  calibrate->add_option("--data", cal_data, "Token sequences, one per line")->required();
  calibrate->add_option("--k", cal_k, "Target sparsity in [0, 1)")->required();
  calibrate->add_option("--seed", cal_seed, "Input-selection seed")->required();
  calibrate->add_option("--mode", cal_mode, "mlp or mlp+attention");
  calibrate->add_option("--max-inputs", cal_max_inputs, "Sequences drawn for calibration");
  calibrate->add_option("--out", cal_out, "Output report.json")->required();

  // hist
  std::string h_model, h_data, h_out;
  std::size_t h_layer = 0, h_bins = 50, h_max_inputs = cats::kDefaultMaxInputs;
  double h_range = 0.0;
  std::uint64_t h_seed = 0;
  auto* hist = app.add_subcommand("hist", "Export an activation-magnitude histogram");
  hist->add_option("--model", h_model, "Model config (JSON)")->required();
  hist->add_option("--data", h_data, "Token sequences, one per line")->required();
  hist->add_option("--layer", h_layer, "Layer index")->required();
  hist->add_option("--bins", h_bins, "Number of bins")->required();
  hist->add_option("--range-max", h_range, "Upper edge (default: 99th percentile)");
  hist->add_option("--seed", h_seed, "Input-selection seed");
  hist->add_option("--max-inputs", h_max_inputs, "Sequences drawn");
  hist->add_option("--out", h_out, "Output TSV")->required();

  // run
  std::string r_model, r_prompt, r_mode = "off", r_thresholds;
  std::size_t r_n = 0;
  auto* run = app.add_subcommand("run", "Greedy generation for each prompt line");
  run->add_option("--model", r_model, "Model config (JSON)")->required();
  run->add_option("--prompt", r_prompt, "Prompt token sequences, one per line")->required();
  run->add_option("--mode", r_mode, "off, mlp or mlp+attention");
  run->add_option("--thresholds", r_thresholds, "Calibration report.json");
  run->add_option("--n-tokens", r_n, "Tokens to generate")->required();

  // sparsity-report
  std::string s_model, s_data, s_thresholds, s_mode = "mlp", s_out;
  auto* sparsity = app.add_subcommand("sparsity-report", "Achieved sparsity per CATS site");
  sparsity->add_option("--model", s_model, "Model config (JSON)")->required();
  sparsity->add_option("--data", s_data, "Token sequences, one per line")->required();
  sparsity->add_option("--thresholds", s_thresholds, "Calibration report.json")->required();
  sparsity->add_option("--mode", s_mode, "mlp or mlp+attention (default mlp)");
  sparsity->add_option("--out", s_out, "Write JSON here instead of stdout");

  // bench-mlp
  std::size_t b_d = 4096, b_m = 14336, b_warmups = 20, b_repeats = 80, b_tile = 64;
  std::string b_sparsity = "0.5,0.7,0.9", b_variants = "dense,cats-masked", b_out, b_weights;
  unsigned b_threads = 1;
  std::uint64_t b_seed = 0;
  auto* bench_mlp = app.add_subcommand("bench-mlp", "Single-block latency benchmark");
  bench_mlp->add_option("--d", b_d, "Input/output width");
  bench_mlp->add_option("--m", b_m, "Hidden width");
  bench_mlp->add_option("--sparsity", b_sparsity, "Comma-separated sparsity levels");
  bench_mlp->add_option("--variants", b_variants, "Comma-separated: dense,cats-masked,cats-compacted,optimal");
  bench_mlp->add_option("--warmups", b_warmups, "Warmup rounds per cell");
  bench_mlp->add_option("--repeats", b_repeats, "Timed rounds per cell");
  bench_mlp->add_option("--threads", b_threads, "Kernel threads");
  bench_mlp->add_option("--seed", b_seed, "Seed for weights and inputs");
  bench_mlp->add_option("--tile", b_tile, "Channels per up-projection tile");
  bench_mlp->add_option("--weights", b_weights, "Use this weight file instead of random weights");
  bench_mlp->add_option("--out", b_out, "Output bench.json")->required();

  // bench-gen
  std::string g_config, g_out;
  std::size_t g_samples = 50;
  auto* bench_gen = app.add_subcommand("bench-gen", "Generation throughput, dense vs thresholded");
  bench_gen->add_option("--config", g_config, "Benchmark config (JSON)")->required();
  bench_gen->add_option("--samples", g_samples, "Prompts to time");
  bench_gen->add_option("--out", g_out, "Output gen.json")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (*gen_weights) {
      if (gw_d == 0 || gw_m == 0) throw cats::DomainError("--d and --m must be >= 1");
      const float scale = gw_scale > 0.0f ? gw_scale : 1.0f / std::sqrt(static_cast<float>(gw_d));
      cats::save_weights(gw_out, cats::random_weights(gw_d, gw_m, gw_seed, scale));
    } else if (*calibrate) {
      const auto cfg = load_model(cal_model);
      const auto data = load_dataset(cal_data, cfg);
      const auto model = cats::build_toy_model(cfg);
      const auto report = cats::calibrate_model(model, data, cal_k, cal_seed,
                                                cats::parse_cats_mode(cal_mode), cal_max_inputs);
      cats::write_text_file(cal_out, cats::dump(cats::to_json(report)));
    } else if (*hist) {
      const auto cfg = load_model(h_model);
      const auto data = load_dataset(h_data, cfg);
      const auto model = cats::build_toy_model(cfg);
      const auto sample = cats::collect_activations(model, data, h_layer, h_max_inputs, h_seed);
      double range = h_range;
      if (!(range > 0.0)) range = cats::fit_threshold(sample, 0.99).t;
      if (!(range > 0.0)) range = 1.0;
      cats::write_text_file(h_out, cats::format_histogram_tsv(cats::histogram(sample, h_bins, range)));
    } else if (*run) {
      const auto cfg = load_model(r_model);
      const auto prompts = load_dataset(r_prompt, cfg);
      const auto model = cats::build_toy_model(cfg);
      const auto settings = settings_for(cats::parse_cats_mode(r_mode), r_thresholds, cfg.layers);
      for (const auto& prompt : prompts) {
        std::cout << cats::format_token_sequences({cats::generate(model, settings, prompt, r_n)});
      }
    } else if (*sparsity) {
      const auto cfg = load_model(s_model);
      const auto data = load_dataset(s_data, cfg);
      const auto model = cats::build_toy_model(cfg);
      const auto mode = cats::parse_cats_mode(s_mode);
      const auto settings = settings_for(mode, s_thresholds, cfg.layers);
      const std::string text = cats::dump(cats::to_json(cats::sparsity_report(model, settings, data), mode));
      if (s_out.empty()) std::cout << text;
      else cats::write_text_file(s_out, text);
    } else if (*bench_mlp) {
      cats::BenchConfig config;
      config.d = b_d;
      config.m = b_m;
      config.sparsities = parse_list(b_sparsity);
      config.variants.clear();
      for (const auto& v : split(b_variants)) config.variants.push_back(cats::parse_variant(v));
      config.warmup_rounds = b_warmups;
      config.repeat_count = b_repeats;
      config.threads = b_threads;
      config.seed = b_seed;
      config.tile = b_tile;
      cats::BenchReport report;
      if (!b_weights.empty()) {
        const auto w = cats::load_weights(b_weights);
        config.d = w.d;
        config.m = w.m;
        report = cats::bench_mlp(config, &w);
      } else {
        report = cats::bench_mlp(config);
      }
      cats::write_text_file(b_out, cats::dump(cats::to_json(report)));
    } else if (*bench_gen) {
      auto j = cats::parse_json(cats::read_text_file(g_config));
      if (bench_gen->count("--samples")) j["samples"] = g_samples;
      const auto config = cats::gen_bench_config_from_json(j);
      cats::write_text_file(g_out, cats::dump(cats::to_json(cats::bench_generation(config))));
    }
  } catch (const cats::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const cats::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  }
  return 0;
}

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "synfin/arima_garch.hpp"
#include "synfin/metrics.hpp"
#include "synfin/series.hpp"
#include "synfin/timegan.hpp"
#include "synfin/vae.hpp"

namespace synfin::harness {

inline const std::vector<std::string> kModels{"arima_garch", "vae", "timegan"};

/// GARCH(1,1) ground truth used when no price file is configured.
struct BenchmarkConfig {
  std::size_t length = 2000;  // returns
  double omega = 0.05;
  double alpha = 0.1;
  double beta = 0.85;
  std::uint64_t seed = 2024;
  double initial_price = 100.0;
};

struct ArimaGarchConfig {
  ts::ArimaGrid grid;
  ts::GarchSpec garch;
};

struct MetricConfig {
  std::size_t acf_lags = 20;
  std::size_t psd_segment = 256;
  double psd_overlap = 0.5;
  std::size_t rolling_window = 30;
  std::size_t qq_points = 100;
  std::size_t leverage_lags = 10;
  metrics::MmdEstimator mmd_estimator = metrics::MmdEstimator::biased;
  std::size_t mmd_max_points = 2000;
};

struct DownstreamConfig {
  bool enabled = true;
  std::size_t portfolio_assets = 5;
  std::size_t portfolio_length = 250;
};

struct PrivacyConfig {
  bool enabled = true;
  double tau = 0.15;
  std::size_t n_shadow = 8;
  std::size_t k_neighbors = 5;
  std::size_t max_windows = 0;  // evenly thinned MIA dataset; 0 keeps all training windows
  std::uint64_t seed = 2024;
};

struct AblationConfig {
  std::vector<std::uint64_t> seeds;  // empty: the protocol seeds
  std::vector<std::string> timegan_variants{"none", "drop_supervised", "reduced_embedding", "shallow_1layer"};
  std::vector<double> vae_betas{0.5, 1.0, 2.0};
  bool vae_reduced_latent = true;
  std::vector<std::pair<std::size_t, std::size_t>> arima_orders{{0, 0}, {1, 0}, {0, 1}, {1, 1}, {2, 1}, {1, 2}, {2, 2}};
};

struct TrainConfig {
  std::string data_path;  // empty: simulated benchmark
  BenchmarkConfig benchmark;
  std::size_t adf_max_lag = 10;
  SplitFractions splits;
  std::size_t window = 30;
  std::size_t stride = 1;
  std::vector<std::uint64_t> seeds{123, 456, 789, 101112, 131415};
  std::vector<std::string> models = kModels;
  ArimaGarchConfig arima_garch;
  vae::VaeConfig vae;
  timegan::TimeGanConfig timegan;
  MetricConfig metrics;
  DownstreamConfig downstream;
  PrivacyConfig privacy;
  AblationConfig ablation;
  std::string output_dir = "out";

  /// Throws std::invalid_argument on inconsistent settings.
  void validate() const;
};

/// Defaults overridden by the keys present; unknown keys are rejected.
TrainConfig config_from_json(const nlohmann::json& j);
TrainConfig load_config(const std::filesystem::path& path);
nlohmann::json to_json(const TrainConfig& c);

/// Everything downstream of ingestion. Windows are in return units.
struct PreparedData {
  std::string source;
  PriceSeries prices;
  ReturnSeries returns;
  AdfResult adf;
  SplitSeries split;
  NormStats stats;  // fitted on the training split only
  WindowSet train;
  WindowSet validation;
  WindowSet test;
};

PriceSeries simulate_benchmark_prices(const BenchmarkConfig& b);
PreparedData prepare_data(const TrainConfig& config);
nlohmann::json describe(const PreparedData& data);

/// Which parts of a cell run after training and sampling.
struct Stages {
  bool metrics = true;
  bool downstream = true;
  bool privacy = true;
};

/// JSON report: config, data summary, one entry per (model, seed) cell and
/// per-model aggregates.
struct EvaluationReport {
  nlohmann::json json;
  std::size_t failed_cells = 0;
  bool ok() const { return failed_cells == 0; }
};

EvaluationReport run_protocol(const TrainConfig& config, const Stages& stages = {});
/// Same with data prepared by the caller.
EvaluationReport run_protocol(const TrainConfig& config, const PreparedData& data, const Stages& stages = {});

/// Mean and sample standard deviation (1/(K-1); 0 when K = 1).
struct Aggregate {
  double mean = 0.0;
  double std = 0.0;
  std::size_t n = 0;
};
Aggregate aggregate(const std::vector<double>& values);

struct AblationReport {
  nlohmann::json json;
  std::size_t failed_cells = 0;
  bool ok() const { return failed_cells == 0; }
};

/// `families` limits the grid to a subset of {"timegan", "vae", "arima_garch"}.
AblationReport run_ablations(const TrainConfig& config, const std::vector<std::string>& families = {});
AblationReport run_ablations(const TrainConfig& config, const PreparedData& data,
                             const std::vector<std::string>& families = {});

/// Writes the six plot-data CSV files; returns the paths written. Missing
/// sections are skipped and listed in `warnings`.
std::vector<std::filesystem::path> emit_plots(const nlohmann::json& report, const std::filesystem::path& dir,
                                              std::vector<std::string>* warnings = nullptr);

/// Trained model checkpoint plus what `generate` needs.
nlohmann::json fit_model(const std::string& model, std::uint64_t seed, const TrainConfig& config,
                         const PreparedData& data);
/// Size-matched synthetic returns from a checkpoint written by fit_model.
std::vector<double> generate_series(const nlohmann::json& checkpoint, std::size_t length, std::uint64_t seed);

void write_json(const std::filesystem::path& path, const nlohmann::json& j);
nlohmann::json read_json(const std::filesystem::path& path);

}  // namespace synfin::harness

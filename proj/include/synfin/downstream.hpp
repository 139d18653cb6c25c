#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "synfin/arima_garch.hpp"
#include "synfin/types.hpp"

namespace synfin::downstream {

/// Time x assets return matrix with column names.
struct AssetPanel {
  std::vector<std::string> names;
  Matrix returns;

  std::size_t assets() const { return static_cast<std::size_t>(returns.cols()); }
  std::size_t periods() const { return static_cast<std::size_t>(returns.rows()); }
  void validate() const;
};

AssetPanel make_panel(std::vector<std::vector<double>> columns, std::vector<std::string> names = {});

Vector mean_returns(const AssetPanel& panel);
/// Sample covariance (n - 1).
Matrix covariance(const AssetPanel& panel);

struct SolverOptions {
  std::size_t max_iterations = 10000;
  double kkt_tolerance = 1e-9;
  double ridge = 1e-8;
};

struct PortfolioSolution {
  Vector weights;
  double objective = 0.0;  // w' Sigma w
  std::size_t iterations = 0;
  double kkt_residual = 0.0;
};

/// Euclidean projection onto {w >= 0, sum w = 1}.
Vector project_to_simplex(const Vector& v);

/// Long-only minimum-variance weights by projected gradient with step
/// 1 / (2 lambda_max), started at uniform weights. `mu` only fixes the asset
/// count here; returns enter through the Sharpe evaluation.
PortfolioSolution mean_variance_optimize(const Vector& mu, const Matrix& sigma, const SolverOptions& options = {});

/// Annualized mean / std of the portfolio return series (risk-free rate 0, 252 periods).
double sharpe_ratio(const AssetPanel& panel, const Vector& weights);
double cosine_similarity(const Vector& a, const Vector& b);

struct PortfolioReport {
  Vector real_weights;
  Vector synth_weights;
  double real_sharpe = 0.0;   // real weights on the real panel
  double synth_sharpe = 0.0;  // synthetic weights on the real panel
  double sharpe_diff = 0.0;   // synth_sharpe - real_sharpe
  double risk_deviation = 0.0;
  double weight_cosine = 0.0;
};

PortfolioReport portfolio_task(const AssetPanel& real, const AssetPanel& synth);

/// `assets` contiguous blocks of `length` returns at seeded random offsets.
AssetPanel bootstrap_panel(std::span<const double> series, std::size_t assets, std::size_t length, std::uint64_t seed);
/// One column per replica, each truncated to `length`.
AssetPanel replica_panel(const std::vector<std::vector<double>>& replicas, std::size_t length);

struct ForecastScore {
  double rmse = 0.0;
  double mae = 0.0;
  double directional_accuracy = 0.0;
  ts::GarchFit garch;
  std::vector<double> forecast;  // one-step volatility
  std::vector<double> realized;  // absolute return
};

/// GARCH(1,1) fitted on the synthetic returns (demeaned by their own mean),
/// then one-step volatility forecasts across real_test scored against |r_t|,
/// the square root of the squared-return proxy.
ForecastScore volatility_forecast_task(std::span<const double> synth, std::span<const double> real_test);

/// Error and direction scores of a volatility forecast against the realized proxy.
ForecastScore score_forecast(std::vector<double> forecast, std::vector<double> realized);

void to_json(nlohmann::json& j, const PortfolioReport& r);
void to_json(nlohmann::json& j, const ForecastScore& s);

}  // namespace synfin::downstream

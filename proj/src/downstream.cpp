#include "synfin/downstream.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <Eigen/Eigenvalues>

#include "synfin/rng.hpp"
#include "synfin/series.hpp"

namespace synfin::downstream {

namespace {

std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

int sign(double x) { return (x > 0.0) - (x < 0.0); }

}  // namespace

void AssetPanel::validate() const {
  if (returns.cols() == 0 || returns.rows() < 2) throw std::invalid_argument("AssetPanel: need at least 2 periods and 1 asset");
  if (!names.empty() && names.size() != assets()) throw std::invalid_argument("AssetPanel: name count mismatch");
  if (!returns.allFinite()) throw std::invalid_argument("AssetPanel: missing or non-finite values");
}

AssetPanel make_panel(std::vector<std::vector<double>> columns, std::vector<std::string> names) {
  if (columns.empty()) throw std::invalid_argument("make_panel: no columns");
  const std::size_t n = columns.front().size();
  AssetPanel p;
  p.returns.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(columns.size()));
  for (std::size_t c = 0; c < columns.size(); ++c) {
    if (columns[c].size() != n) throw std::invalid_argument("make_panel: columns not aligned in time");
    for (std::size_t t = 0; t < n; ++t) p.returns(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(c)) = columns[c][t];
  }
  if (names.empty()) {
    for (std::size_t c = 0; c < columns.size(); ++c) names.push_back("asset" + std::to_string(c));
  }
  p.names = std::move(names);
  p.validate();
  return p;
}

Vector mean_returns(const AssetPanel& panel) { return panel.returns.colwise().mean().transpose(); }

Matrix covariance(const AssetPanel& panel) {
  panel.validate();
  const Matrix centred = panel.returns.rowwise() - panel.returns.colwise().mean();
  return centred.transpose() * centred / static_cast<double>(panel.periods() - 1);
}

Vector project_to_simplex(const Vector& v) {
  // Sort-based projection: find the threshold theta with sum max(v - theta, 0) = 1.
  std::vector<double> u(v.data(), v.data() + v.size());
  std::sort(u.begin(), u.end(), std::greater<>());
  double cumsum = 0.0, theta = 0.0;
  for (std::size_t j = 0; j < u.size(); ++j) {
    cumsum += u[j];
    const double t = (cumsum - 1.0) / static_cast<double>(j + 1);
    if (u[j] - t > 0.0) theta = t;
  }
  return (v.array() - theta).cwiseMax(0.0).matrix();
}

PortfolioSolution mean_variance_optimize(const Vector& mu, const Matrix& sigma, const SolverOptions& options) {
  const Eigen::Index n = sigma.rows();
  if (n == 0 || sigma.cols() != n) throw std::invalid_argument("mean_variance_optimize: covariance must be square and non-empty");
  if (mu.size() != n) throw std::invalid_argument("mean_variance_optimize: dimension mismatch");
  if (!sigma.allFinite()) throw std::invalid_argument("mean_variance_optimize: non-finite covariance");

  Matrix s = 0.5 * (sigma + sigma.transpose());
  const Eigen::SelfAdjointEigenSolver<Matrix> eig(s, Eigen::EigenvaluesOnly);
  const double lmin = eig.eigenvalues().minCoeff();
  const double lmax_raw = eig.eigenvalues().maxCoeff();
  if (lmin < -1e-6 * std::max(1.0, std::abs(lmax_raw))) throw std::invalid_argument("mean_variance_optimize: covariance is not positive semidefinite");
  if (lmin < 0.0) s += options.ridge * Matrix::Identity(n, n);

  PortfolioSolution sol;
  sol.weights = Vector::Constant(n, 1.0 / static_cast<double>(n));
  const double lmax = std::max(lmax_raw, 0.0);
  if (n > 1 && lmax > 0.0) {
    const double step = 1.0 / (2.0 * lmax);
    for (sol.iterations = 1; sol.iterations <= options.max_iterations; ++sol.iterations) {
      const Vector grad = 2.0 * (s * sol.weights);
      const Vector next = project_to_simplex(sol.weights - step * grad);
      sol.kkt_residual = (next - sol.weights).cwiseAbs().maxCoeff() / step;
      sol.weights = next;
      if (sol.kkt_residual < options.kkt_tolerance) break;
    }
    sol.iterations = std::min(sol.iterations, options.max_iterations);
  }
  sol.objective = std::max(0.0, sol.weights.dot(s * sol.weights));
  return sol;
}

double sharpe_ratio(const AssetPanel& panel, const Vector& weights) {
  panel.validate();
  if (weights.size() != static_cast<Eigen::Index>(panel.assets())) throw std::invalid_argument("sharpe_ratio: weight dimension mismatch");
  const Vector p = panel.returns * weights;
  const auto v = to_std(p);
  const double sd = std::sqrt(sample_variance(v));
  if (!(sd > 0.0)) throw std::invalid_argument("sharpe_ratio: zero-variance portfolio");
  return sample_mean(v) / sd * std::sqrt(252.0);
}

double cosine_similarity(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) throw std::invalid_argument("cosine_similarity: dimension mismatch");
  const double na = a.norm(), nb = b.norm();
  if (na == 0.0 || nb == 0.0) throw std::invalid_argument("cosine_similarity: zero vector");
  return std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
}

PortfolioReport portfolio_task(const AssetPanel& real, const AssetPanel& synth) {
  if (real.assets() != synth.assets()) throw std::invalid_argument("portfolio_task: asset universes differ");
  const Matrix sigma_real = covariance(real);
  const auto r = mean_variance_optimize(mean_returns(real), sigma_real);
  const auto s = mean_variance_optimize(mean_returns(synth), covariance(synth));
  PortfolioReport rep;
  rep.real_weights = r.weights;
  rep.synth_weights = s.weights;
  rep.real_sharpe = sharpe_ratio(real, r.weights);
  rep.synth_sharpe = sharpe_ratio(real, s.weights);
  rep.sharpe_diff = rep.synth_sharpe - rep.real_sharpe;
  rep.risk_deviation = std::abs(s.weights.dot(sigma_real * s.weights) - r.weights.dot(sigma_real * r.weights));
  rep.weight_cosine = cosine_similarity(r.weights, s.weights);
  return rep;
}

AssetPanel bootstrap_panel(std::span<const double> series, std::size_t assets, std::size_t length, std::uint64_t seed) {
  if (assets == 0 || length < 2) throw std::invalid_argument("bootstrap_panel: need at least one asset and two periods");
  if (series.size() < length) throw std::invalid_argument("bootstrap_panel: series shorter than block length");
  Rng rng(seed);
  std::vector<std::vector<double>> cols;
  std::vector<std::string> names;
  for (std::size_t a = 0; a < assets; ++a) {
    const std::size_t start = rng.index(series.size() - length + 1);
    const auto block = series.subspan(start, length);
    cols.emplace_back(block.begin(), block.end());
    names.push_back("block" + std::to_string(a));
  }
  return make_panel(std::move(cols), std::move(names));
}

AssetPanel replica_panel(const std::vector<std::vector<double>>& replicas, std::size_t length) {
  std::vector<std::vector<double>> cols;
  std::vector<std::string> names;
  for (std::size_t i = 0; i < replicas.size(); ++i) {
    if (replicas[i].size() < length) throw std::invalid_argument("replica_panel: replica shorter than panel length");
    cols.emplace_back(replicas[i].begin(), replicas[i].begin() + static_cast<std::ptrdiff_t>(length));
    names.push_back("replica" + std::to_string(i));
  }
  return make_panel(std::move(cols), std::move(names));
}

ForecastScore score_forecast(std::vector<double> forecast_vol, std::vector<double> realized_vol) {
  if (forecast_vol.size() != realized_vol.size() || forecast_vol.size() < 2) {
    throw std::invalid_argument("score_forecast: need two aligned series of length >= 2");
  }
  ForecastScore s;
  double se = 0.0, ae = 0.0;
  for (std::size_t t = 0; t < forecast_vol.size(); ++t) {
    const double e = forecast_vol[t] - realized_vol[t];
    se += e * e;
    ae += std::abs(e);
  }
  const double n = static_cast<double>(forecast_vol.size());
  s.rmse = std::sqrt(se / n);
  s.mae = ae / n;
  std::size_t hits = 0;
  for (std::size_t t = 1; t < forecast_vol.size(); ++t) {
    hits += sign(forecast_vol[t] - forecast_vol[t - 1]) == sign(realized_vol[t] - realized_vol[t - 1]) ? 1 : 0;
  }
  s.directional_accuracy = static_cast<double>(hits) / (n - 1.0);
  s.forecast = std::move(forecast_vol);
  s.realized = std::move(realized_vol);
  return s;
}

ForecastScore volatility_forecast_task(std::span<const double> synth, std::span<const double> real_test) {
  if (synth.size() < 250) throw std::invalid_argument("volatility_forecast_task: synthetic series needs >= 250 points");
  if (real_test.size() < 50) throw std::invalid_argument("volatility_forecast_task: real test series needs >= 50 points");
  const double mu = sample_mean(synth);
  std::vector<double> eps_synth(synth.begin(), synth.end());
  for (double& v : eps_synth) v -= mu;
  const ts::GarchFit g = ts::fit_garch(eps_synth);

  std::vector<double> eps_real(real_test.begin(), real_test.end());
  for (double& v : eps_real) v -= mu;
  std::vector<double> forecast = ts::rolling_variance(g, eps_real);
  for (double& v : forecast) v = std::sqrt(v);
  std::vector<double> realized(real_test.size());
  for (std::size_t t = 0; t < real_test.size(); ++t) realized[t] = std::abs(real_test[t]);
  ForecastScore s = score_forecast(std::move(forecast), std::move(realized));
  s.garch = g;
  return s;
}

void to_json(nlohmann::json& j, const PortfolioReport& r) {
  j = {{"real_weights", to_std(r.real_weights)},
       {"synth_weights", to_std(r.synth_weights)},
       {"real_sharpe", r.real_sharpe},
       {"synth_sharpe", r.synth_sharpe},
       {"sharpe_diff", r.sharpe_diff},
       {"risk_deviation", r.risk_deviation},
       {"weight_cosine", r.weight_cosine}};
}

void to_json(nlohmann::json& j, const ForecastScore& s) {
  j = {{"rmse", s.rmse},
       {"mae", s.mae},
       {"directional_accuracy", s.directional_accuracy},
       {"target", "absolute return"},
       {"garch", s.garch}};
}

}  // namespace synfin::downstream

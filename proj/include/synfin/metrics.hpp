#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "synfin/series.hpp"
#include "synfin/types.hpp"

namespace synfin::metrics {

struct DescriptiveStats {
  double mean = 0.0;
  double variance = 0.0;  // 1/(n-1)
  double skewness = 0.0;
  double excess_kurtosis = 0.0;
};

/// Moment ratios for skewness and kurtosis use 1/n central moments.
DescriptiveStats descriptive(std::span<const double> x);

enum class AcfTarget { returns, squared_returns };

struct AcfProfile {
  AcfTarget target = AcfTarget::returns;
  std::vector<double> rho;  // rho[k] for k = 0..max_lag
};

AcfProfile acf(std::span<const double> x, std::size_t max_lag, bool squared = false);

enum class MmdEstimator { biased, unbiased };

/// Median pairwise Euclidean distance over the pooled rows of X and Y. Pools
/// larger than `max_points` are thinned by a fixed stride first.
double median_heuristic_sigma(const Matrix& x, const Matrix& y, std::size_t max_points = 2000);

/// Squared MMD with k(a, b) = exp(-|a - b|^2 / (2 sigma^2)); each row is one point.
/// The default biased V-statistic keeps the i = i' terms.
double mmd_rbf(const Matrix& x, const Matrix& y, std::optional<double> sigma = std::nullopt,
               MmdEstimator estimator = MmdEstimator::biased);
double mmd_rbf(std::span<const double> x, std::span<const double> y,
               std::optional<double> sigma = std::nullopt);

/// One-dimensional sample as an n x 1 point matrix.
Matrix as_points(std::span<const double> x);

struct KsResult {
  double statistic = 0.0;
  double p_value = 1.0;
};

/// Survival function of the Kolmogorov distribution, P(K > lambda).
double kolmogorov_sf(double lambda);
KsResult ks_test(std::span<const double> x, std::span<const double> y);

double energy_distance(std::span<const double> x, std::span<const double> y);
double wasserstein1(std::span<const double> x, std::span<const double> y);

struct DistanceBundle {
  double mmd2 = 0.0;
  double rbf_sigma = 0.0;
  double ks_statistic = 0.0;
  double ks_p = 1.0;
  double energy = 0.0;
  double wasserstein1 = 0.0;
};

/// All 1-D distances between two samples of return values.
DistanceBundle distances(std::span<const double> real, std::span<const double> synth);

struct PcaProjection {
  Matrix components;  // T x k, columns orthonormal
  Vector eigenvalues;
  std::vector<double> explained_variance_ratio;
  Matrix real_scores;
  Matrix synth_scores;
};

/// Basis from the real windows only (centred at the real mean); both sets are
/// projected on it. k shrinks when the real covariance has lower rank.
PcaProjection pca_project(const WindowSet& real, const WindowSet& synth, std::size_t k = 2);

struct PsdProfile {
  std::vector<double> frequency;  // cycles per observation, k / L
  std::vector<double> power;
  std::size_t segment_length = 0;
  std::size_t segments = 0;
};

/// Welch estimate with mean-detrended, Hann-windowed segments. Power is the
/// density |FFT|^2 / sum(w^2), so white noise of variance s^2 is flat at s^2.
PsdProfile welch_psd(std::span<const double> x, std::size_t segment_length = 256,
                     double overlap = 0.5);

/// Sample standard deviation of each full window of length w.
std::vector<double> rolling_volatility(std::span<const double> x, std::size_t w = 30);

/// corr(r_t, r_{t+k}^2) for k = 1..max_lag (element k-1).
std::vector<double> leverage_corr(std::span<const double> x, std::size_t max_lag);

struct QqPairs {
  std::vector<double> probability;
  std::vector<double> real;
  std::vector<double> synth;
};

/// Linear-interpolated empirical quantiles at (i + 0.5) / n_q.
QqPairs qq_quantiles(std::span<const double> real, std::span<const double> synth,
                     std::size_t n_q = 100);
/// Quantile of an ascending sample with linear interpolation between order statistics.
double empirical_quantile(std::span<const double> sorted, double prob);

/// Sum over lags 1..max_lag of |rho_real - rho_synth| for returns plus squared returns.
double acf_l1_distance(std::span<const double> real, std::span<const double> synth,
                       std::size_t max_lag = 20);

void to_json(nlohmann::json& j, const DescriptiveStats& s);
void to_json(nlohmann::json& j, const DistanceBundle& d);

}  // namespace synfin::metrics

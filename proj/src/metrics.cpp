#include "synfin/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numbers>
#include <stdexcept>

#include <fftw3.h>
#include <Eigen/Eigenvalues>

namespace synfin::metrics {

namespace {

void require_nonempty(std::span<const double> x, const char* what) {
  if (x.empty()) throw std::invalid_argument(std::string(what) + ": empty sample");
}

std::vector<double> sorted_copy(std::span<const double> x) {
  std::vector<double> s(x.begin(), x.end());
  std::sort(s.begin(), s.end());
  return s;
}

double squared_distance(const Matrix& a, Eigen::Index i, const Matrix& b, Eigen::Index j) {
  double s = 0.0;
  for (Eigen::Index c = 0; c < a.cols(); ++c) {
    const double d = a(i, c) - b(j, c);
    s += d * d;
  }
  return s;
}

// Mean kernel value over all (i, j) pairs; `skip_diagonal` drops i == j.
double mean_kernel(const Matrix& a, const Matrix& b, double gamma, bool skip_diagonal) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < b.rows(); ++j) {
      if (skip_diagonal && i == j) continue;
      total += std::exp(-gamma * squared_distance(a, i, b, j));
    }
  }
  const double pairs = static_cast<double>(a.rows()) *
                       static_cast<double>(skip_diagonal ? b.rows() - 1 : b.rows());
  return total / pairs;
}

double mean_abs_pairwise(std::span<const double> a, std::span<const double> b) {
  double total = 0.0;
  for (double u : a) {
    for (double v : b) total += std::abs(u - v);
  }
  return total / (static_cast<double>(a.size()) * static_cast<double>(b.size()));
}

// FFTW's planner is not thread-safe.
std::mutex fftw_planner_mutex;

}  // namespace

DescriptiveStats descriptive(std::span<const double> x) {
  if (x.size() < 4) throw std::invalid_argument("descriptive: need at least 4 observations");
  const double n = static_cast<double>(x.size());
  DescriptiveStats s;
  s.mean = sample_mean(x);
  double m2 = 0.0, m3 = 0.0, m4 = 0.0;
  for (double v : x) {
    const double d = v - s.mean;
    const double d2 = d * d;
    m2 += d2;
    m3 += d2 * d;
    m4 += d2 * d2;
  }
  if (!(m2 > 0.0)) throw std::invalid_argument("descriptive: degenerate variance");
  s.variance = m2 / (n - 1.0);
  m2 /= n;
  m3 /= n;
  m4 /= n;
  s.skewness = m3 / std::pow(m2, 1.5);
  s.excess_kurtosis = m4 / (m2 * m2) - 3.0;
  return s;
}

AcfProfile acf(std::span<const double> x, std::size_t max_lag, bool squared) {
  if (x.size() <= max_lag + 1) throw std::invalid_argument("acf: series too short for max_lag");
  std::vector<double> y(x.begin(), x.end());
  if (squared) {
    for (double& v : y) v *= v;
  }
  const double mu = sample_mean(y);
  for (double& v : y) v -= mu;
  double denom = 0.0;
  for (double v : y) denom += v * v;
  if (!(denom > 0.0)) throw std::invalid_argument("acf: degenerate series");

  AcfProfile out;
  out.target = squared ? AcfTarget::squared_returns : AcfTarget::returns;
  out.rho.resize(max_lag + 1);
  for (std::size_t k = 0; k <= max_lag; ++k) {
    double num = 0.0;
    for (std::size_t t = k; t < y.size(); ++t) num += y[t] * y[t - k];
    out.rho[k] = num / denom;
  }
  out.rho[0] = 1.0;
  return out;
}

Matrix as_points(std::span<const double> x) {
  Matrix m(static_cast<Eigen::Index>(x.size()), 1);
  for (std::size_t i = 0; i < x.size(); ++i) m(static_cast<Eigen::Index>(i), 0) = x[i];
  return m;
}

double median_heuristic_sigma(const Matrix& x, const Matrix& y, std::size_t max_points) {
  const std::size_t total = static_cast<std::size_t>(x.rows() + y.rows());
  const std::size_t stride = total > max_points ? (total + max_points - 1) / max_points : 1;
  // Each sample is thinned on its own so the result does not depend on argument order.
  std::vector<const double*> rows;
  const auto cols = x.cols();
  for (const Matrix* m : {&x, &y}) {
    for (Eigen::Index r = 0; r < m->rows(); r += static_cast<Eigen::Index>(stride)) rows.push_back(&(*m)(r, 0));
  }
  std::vector<double> dist;
  dist.reserve(rows.size() * (rows.size() - 1) / 2);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = i + 1; j < rows.size(); ++j) {
      double s = 0.0;
      for (Eigen::Index c = 0; c < cols; ++c) {
        const double d = rows[i][c] - rows[j][c];
        s += d * d;
      }
      dist.push_back(std::sqrt(s));
    }
  }
  if (dist.empty()) return 1.0;
  const auto mid = dist.begin() + static_cast<std::ptrdiff_t>(dist.size() / 2);
  std::nth_element(dist.begin(), mid, dist.end());
  double med = *mid;
  if (dist.size() % 2 == 0) {
    med = 0.5 * (med + *std::max_element(dist.begin(), mid));
  }
  return med > 0.0 ? med : 1.0;
}

double mmd_rbf(const Matrix& x, const Matrix& y, std::optional<double> sigma,
               MmdEstimator estimator) {
  if (x.cols() != y.cols()) throw std::invalid_argument("mmd_rbf: dimension mismatch");
  const Eigen::Index min_points = estimator == MmdEstimator::unbiased ? 2 : 1;
  if (x.rows() < min_points || y.rows() < min_points) throw std::invalid_argument("mmd_rbf: sample too small");
  const double s = sigma ? *sigma : median_heuristic_sigma(x, y);
  if (!(s > 0.0)) throw std::invalid_argument("mmd_rbf: sigma must be positive");
  const double gamma = 1.0 / (2.0 * s * s);
  const bool unbiased = estimator == MmdEstimator::unbiased;
  // Cross terms are summed as k(x_i, y_j) in both calls so swapping X and Y is bit-exact.
  const double kxx = mean_kernel(x, x, gamma, unbiased);
  const double kyy = mean_kernel(y, y, gamma, unbiased);
  const double kxy = mean_kernel(x, y, gamma, false);
  const double kyx = mean_kernel(y, x, gamma, false);
  return (kxx + kyy) - (kxy + kyx);
}

double mmd_rbf(std::span<const double> x, std::span<const double> y, std::optional<double> sigma) {
  return mmd_rbf(as_points(x), as_points(y), sigma);
}

double kolmogorov_sf(double lambda) {
  if (lambda <= 0.0) return 1.0;
  constexpr double pi = std::numbers::pi;
  if (lambda < 1.18) {
    double cdf = 0.0;
    for (int k = 1; k <= 20; ++k) {
      const double a = 2.0 * k - 1.0;
      cdf += std::exp(-a * a * pi * pi / (8.0 * lambda * lambda));
    }
    cdf *= std::sqrt(2.0 * pi) / lambda;
    return std::clamp(1.0 - cdf, 0.0, 1.0);
  }
  double sf = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    sf += (k % 2 == 1 ? 2.0 : -2.0) * term;
    if (term < 1e-300) break;
  }
  return std::clamp(sf, 0.0, 1.0);
}

KsResult ks_test(std::span<const double> x, std::span<const double> y) {
  require_nonempty(x, "ks_test");
  require_nonempty(y, "ks_test");
  const auto a = sorted_copy(x);
  const auto b = sorted_copy(y);
  const double n = static_cast<double>(a.size()), m = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() || j < b.size()) {
    // Step past every copy of the next pooled value before comparing CDFs.
    double v;
    if (j == b.size() || (i < a.size() && a[i] <= b[j])) {
      v = a[i];
    } else {
      v = b[j];
    }
    while (i < a.size() && a[i] == v) ++i;
    while (j < b.size() && b[j] == v) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / n - static_cast<double>(j) / m));
  }
  const double en = n * m / (n + m);
  return {d, kolmogorov_sf(d * std::sqrt(en))};
}

double energy_distance(std::span<const double> x, std::span<const double> y) {
  require_nonempty(x, "energy_distance");
  require_nonempty(y, "energy_distance");
  const double e = 2.0 * mean_abs_pairwise(x, y) - mean_abs_pairwise(x, x) - mean_abs_pairwise(y, y);
  return std::max(e, 0.0);
}

double wasserstein1(std::span<const double> x, std::span<const double> y) {
  require_nonempty(x, "wasserstein1");
  require_nonempty(y, "wasserstein1");
  const auto a = sorted_copy(x);
  const auto b = sorted_copy(y);
  if (a.size() == b.size()) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
    return s / static_cast<double>(a.size());
  }
  // Integral of |F - G| over the merged support.
  std::vector<double> grid = a;
  grid.insert(grid.end(), b.begin(), b.end());
  std::sort(grid.begin(), grid.end());
  double total = 0.0;
  for (std::size_t k = 0; k + 1 < grid.size(); ++k) {
    const double width = grid[k + 1] - grid[k];
    if (width == 0.0) continue;
    const double fa = static_cast<double>(std::upper_bound(a.begin(), a.end(), grid[k]) - a.begin()) /
                      static_cast<double>(a.size());
    const double fb = static_cast<double>(std::upper_bound(b.begin(), b.end(), grid[k]) - b.begin()) /
                      static_cast<double>(b.size());
    total += std::abs(fa - fb) * width;
  }
  return total;
}

DistanceBundle distances(std::span<const double> real, std::span<const double> synth) {
  DistanceBundle d;
  const Matrix x = as_points(real);
  const Matrix y = as_points(synth);
  d.rbf_sigma = median_heuristic_sigma(x, y);
  d.mmd2 = mmd_rbf(x, y, d.rbf_sigma);
  const auto ks = ks_test(real, synth);
  d.ks_statistic = ks.statistic;
  d.ks_p = ks.p_value;
  d.energy = energy_distance(real, synth);
  d.wasserstein1 = wasserstein1(real, synth);
  return d;
}

PcaProjection pca_project(const WindowSet& real, const WindowSet& synth, std::size_t k) {
  if (real.length() != synth.length()) throw std::invalid_argument("pca_project: window lengths differ");
  if (k == 0 || real.size() < k + 1) throw std::invalid_argument("pca_project: need at least k + 1 real windows");
  const Eigen::RowVectorXd mean = real.data.colwise().mean();
  const Eigen::MatrixXd centred = real.data.rowwise() - mean;
  const Eigen::MatrixXd cov = centred.transpose() * centred / static_cast<double>(real.size() - 1);
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) throw std::runtime_error("pca_project: eigendecomposition failed");

  const Eigen::Index dim = cov.rows();
  const Vector values = solver.eigenvalues().reverse();
  const double total = values.cwiseMax(0.0).sum();
  const double tol = 1e-12 * std::max(values(0), 0.0);
  Eigen::Index rank = 0;
  while (rank < dim && values(rank) > tol) ++rank;
  const Eigen::Index keep = std::min<Eigen::Index>(static_cast<Eigen::Index>(k), rank);
  if (keep == 0) throw std::invalid_argument("pca_project: real windows have zero variance");

  PcaProjection out;
  out.components.resize(dim, keep);
  out.eigenvalues = values.head(keep);
  for (Eigen::Index c = 0; c < keep; ++c) {
    Vector v = solver.eigenvectors().col(dim - 1 - c);
    Eigen::Index arg;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0.0) v = -v;  // sign fixed for reproducible scores
    out.components.col(c) = v;
    out.explained_variance_ratio.push_back(total > 0.0 ? values(c) / total : 0.0);
  }
  out.real_scores = centred * out.components;
  out.synth_scores = (synth.data.rowwise() - mean) * out.components;
  return out;
}

PsdProfile welch_psd(std::span<const double> x, std::size_t segment_length, double overlap) {
  if (segment_length < 2) throw std::invalid_argument("welch_psd: segment length must be at least 2");
  if (!(overlap >= 0.0 && overlap < 1.0)) throw std::invalid_argument("welch_psd: overlap must be in [0, 1)");
  if (x.size() < segment_length) throw std::invalid_argument("welch_psd: series shorter than one segment");
  const std::size_t L = segment_length;
  const std::size_t step = std::max<std::size_t>(
      1, L - static_cast<std::size_t>(std::floor(overlap * static_cast<double>(L))));
  const std::size_t bins = L / 2 + 1;

  std::vector<double> window(L);
  double wss = 0.0;
  for (std::size_t n = 0; n < L; ++n) {
    window[n] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(n) / static_cast<double>(L));
    wss += window[n] * window[n];
  }

  double* in = fftw_alloc_real(L);
  fftw_complex* out = fftw_alloc_complex(bins);
  fftw_plan plan;
  {
    std::lock_guard lock(fftw_planner_mutex);
    plan = fftw_plan_dft_r2c_1d(static_cast<int>(L), in, out, FFTW_ESTIMATE);
  }

  PsdProfile psd;
  psd.segment_length = L;
  psd.power.assign(bins, 0.0);
  for (std::size_t start = 0; start + L <= x.size(); start += step) {
    const auto seg = x.subspan(start, L);
    const double mu = sample_mean(seg);
    for (std::size_t n = 0; n < L; ++n) in[n] = (seg[n] - mu) * window[n];
    fftw_execute(plan);
    for (std::size_t k = 0; k < bins; ++k) psd.power[k] += (out[k][0] * out[k][0] + out[k][1] * out[k][1]) / wss;
    ++psd.segments;
  }
  {
    std::lock_guard lock(fftw_planner_mutex);
    fftw_destroy_plan(plan);
  }
  fftw_free(in);
  fftw_free(out);

  for (double& p : psd.power) p /= static_cast<double>(psd.segments);
  psd.frequency.resize(bins);
  for (std::size_t k = 0; k < bins; ++k) psd.frequency[k] = static_cast<double>(k) / static_cast<double>(L);
  return psd;
}

std::vector<double> rolling_volatility(std::span<const double> x, std::size_t w) {
  if (w < 2) throw std::invalid_argument("rolling_volatility: window must be at least 2");
  if (x.size() < w) throw std::invalid_argument("rolling_volatility: series shorter than window");
  std::vector<double> out(x.size() - w + 1);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::sqrt(sample_variance(x.subspan(i, w)));
  return out;
}

std::vector<double> leverage_corr(std::span<const double> x, std::size_t max_lag) {
  if (max_lag == 0) throw std::invalid_argument("leverage_corr: lags start at 1");
  if (x.size() <= max_lag + 1) throw std::invalid_argument("leverage_corr: series too short");
  std::vector<double> out;
  for (std::size_t k = 1; k <= max_lag; ++k) {
    const std::size_t n = x.size() - k;
    const auto lead = x.first(n);
    std::vector<double> sq(n);
    for (std::size_t t = 0; t < n; ++t) sq[t] = x[t + k] * x[t + k];
    const double ma = sample_mean(lead), mb = sample_mean(sq);
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
      const double da = lead[t] - ma, db = sq[t] - mb;
      sab += da * db;
      saa += da * da;
      sbb += db * db;
    }
    if (!(saa > 0.0 && sbb > 0.0)) throw std::invalid_argument("leverage_corr: degenerate variance");
    out.push_back(sab / std::sqrt(saa * sbb));
  }
  return out;
}

double empirical_quantile(std::span<const double> sorted, double prob) {
  if (sorted.empty()) throw std::invalid_argument("empirical_quantile: empty sample");
  const double pos = std::clamp(prob, 0.0, 1.0) * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

QqPairs qq_quantiles(std::span<const double> real, std::span<const double> synth, std::size_t n_q) {
  require_nonempty(real, "qq_quantiles");
  require_nonempty(synth, "qq_quantiles");
  if (n_q == 0) throw std::invalid_argument("qq_quantiles: n_q must be positive");
  const auto a = sorted_copy(real);
  const auto b = sorted_copy(synth);
  QqPairs q;
  for (std::size_t i = 0; i < n_q; ++i) {
    const double p = (static_cast<double>(i) + 0.5) / static_cast<double>(n_q);
    q.probability.push_back(p);
    q.real.push_back(empirical_quantile(a, p));
    q.synth.push_back(empirical_quantile(b, p));
  }
  return q;
}

double acf_l1_distance(std::span<const double> real, std::span<const double> synth, std::size_t max_lag) {
  double total = 0.0;
  for (bool squared : {false, true}) {
    const auto a = acf(real, max_lag, squared);
    const auto b = acf(synth, max_lag, squared);
    for (std::size_t k = 1; k <= max_lag; ++k) total += std::abs(a.rho[k] - b.rho[k]);
  }
  return total;
}

void to_json(nlohmann::json& j, const DescriptiveStats& s) {
  j = {{"mean", s.mean}, {"variance", s.variance}, {"skewness", s.skewness}, {"excess_kurtosis", s.excess_kurtosis}};
}

void to_json(nlohmann::json& j, const DistanceBundle& d) {
  j = {{"mmd2", d.mmd2},     {"rbf_sigma", d.rbf_sigma}, {"ks_statistic", d.ks_statistic},
       {"ks_p", d.ks_p},     {"energy", d.energy},       {"wasserstein1", d.wasserstein1}};
}

}  // namespace synfin::metrics

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "synfin/series.hpp"

namespace synfin::ts {

struct ArimaOrder {
  std::size_t p = 0;
  std::size_t d = 0;
  std::size_t q = 0;

  bool operator==(const ArimaOrder&) const = default;
};

/// ARIMA(p,d,q) fitted on the d-times differenced series w:
///   w_t = c + sum phi_i w_{t-i} + e_t + sum theta_j e_{t-j}
struct ArimaFit {
  ArimaOrder order;
  std::vector<double> ar;
  std::vector<double> ma;
  double intercept = 0.0;
  double sigma2 = 0.0;
  double log_likelihood = 0.0;
  double aic = 0.0;
  std::vector<double> residuals;  // on the conditioning sample
  double anchor = 0.0;            // last level of the undifferenced series (d = 1)
};

struct ArimaGrid {
  std::size_t p_max = 5;
  std::size_t d_max = 1;
  std::size_t q_max = 5;
};

/// Number of free parameters counted by the AIC (coefficients, intercept, variance).
std::size_t arima_parameter_count(const ArimaOrder& order);

/// Fits one order by conditional Gaussian likelihood (sigma^2 profiled out).
/// `condition_on` leading observations are used only as lags, so fits that
/// share it are AIC-comparable. Throws if no stationary/invertible optimum exists.
ArimaFit fit_arima_order(std::span<const double> series, const ArimaOrder& order,
                         std::size_t condition_on);

/// Exhaustive AIC grid; ties broken by lowest p, then d, then q.
ArimaFit fit_arima(std::span<const double> train, const ArimaGrid& grid = {});

/// True when all roots of 1 - sum c_i z^i (sign = -1) or 1 + sum c_i z^i
/// (sign = +1) lie strictly outside the unit circle.
bool roots_outside_unit_circle(std::span<const double> coeffs, double sign);

enum class Innovation { normal, student_t };

std::string to_string(Innovation d);
Innovation innovation_from_string(std::string_view name);

/// sigma_t^2 = omega + sum_i alpha_i eps_{t-i}^2 + sum_j beta_j sigma_{t-j}^2
/// with alpha of length q and beta of length p.
struct GarchFit {
  std::size_t p = 1;
  std::size_t q = 1;
  double omega = 0.0;
  std::vector<double> alpha;
  std::vector<double> beta;
  Innovation innovation = Innovation::normal;
  double nu = 0.0;                // Student-t degrees of freedom when used
  double initial_variance = 0.0;  // seed for the variance recursion
  double log_likelihood = 0.0;
  bool homoskedastic = false;  // nested constant-variance model was retained
  std::vector<double> conditional_variance;

  double persistence() const;
  double unconditional_variance() const;
};

/// Builds a validated GARCH parameter set (omega > 0, alpha/beta >= 0,
/// persistence < 1). Throws std::invalid_argument otherwise.
GarchFit make_garch(double omega, std::vector<double> alpha, std::vector<double> beta,
                    Innovation innovation = Innovation::normal, double nu = 0.0);

struct GarchSpec {
  std::size_t p = 1;
  std::size_t q = 1;
  Innovation innovation = Innovation::normal;
  /// Keep the nested alpha = beta = 0 model unless the likelihood-ratio test
  /// rejects it at this level; 0 disables the check and returns the raw MLE.
  double nested_test_level = 0.05;
};

/// Log-likelihood of eps under the given parameters; optionally returns the
/// conditional variance path.
double garch_log_likelihood(std::span<const double> eps, const GarchFit& params,
                            std::vector<double>* variance = nullptr);

/// Maximum likelihood with log/logit/softmax reparameterization and several
/// deterministic starting points. Without ARCH effects beta is not identified,
/// so the constant-variance model is returned when the likelihood-ratio test
/// against it does not reject (see GarchSpec::nested_test_level). Throws on
/// non-convergence or a boundary solution (persistence numerically 1).
GarchFit fit_garch(std::span<const double> residuals, const GarchSpec& spec = {});

struct TestResult {
  double statistic = 0.0;
  double p_value = 1.0;
  std::size_t lags = 0;
};

struct DiagnosticsReport {
  TestResult ljung_box;
  TestResult arch_lm;
};

/// Upper tail of the chi-square distribution.
double chi_square_sf(double x, double dof);

TestResult ljung_box(std::span<const double> series, std::size_t lags);
/// Engle's LM test: n * R^2 of e_t^2 regressed on a constant and `lags` own lags.
TestResult arch_lm(std::span<const double> series, std::size_t lags);
DiagnosticsReport diagnose(std::span<const double> residuals, std::size_t lags = 20);

/// Residuals divided by the fitted conditional standard deviation.
std::vector<double> standardized_residuals(std::span<const double> residuals, const GarchFit& garch);

struct SimulatedPath {
  std::vector<double> returns;
  std::vector<double> variance;
  std::vector<double> innovations;  // eps_t = sigma_t z_t
};

constexpr std::size_t kBurnIn = 500;

/// GARCH innovations fed through the ARIMA mean recursion; the first kBurnIn
/// steps are discarded.
SimulatedPath simulate_path(const ArimaFit& arima, const GarchFit& garch, std::size_t length,
                            std::uint64_t seed);
ReturnSeries simulate(const ArimaFit& arima, const GarchFit& garch, std::size_t length,
                      std::uint64_t seed);

/// Zero-mean white-noise ARIMA(0,0,0) for pure GARCH simulation.
ArimaFit white_noise_mean(double intercept = 0.0);

/// Runs the recursion through `history` and forecasts `horizon` steps ahead;
/// element h-1 is the forecast of sigma^2_{T+h}. Multi-step forecasts replace
/// future eps^2 by its expectation. The recursion is seeded at `seed_variance`
/// (unconditional variance of the model when <= 0).
std::vector<double> forecast_variance(const GarchFit& garch, std::span<const double> history,
                                      std::size_t horizon, double seed_variance = 0.0);

/// One-step-ahead variance for every t in `series`: element t is the forecast
/// of sigma_t^2 made with eps_0..eps_{t-1}.
std::vector<double> rolling_variance(const GarchFit& garch, std::span<const double> series,
                                     double seed_variance = 0.0);

void to_json(nlohmann::json& j, const ArimaFit& fit);
void from_json(const nlohmann::json& j, ArimaFit& fit);
void to_json(nlohmann::json& j, const GarchFit& fit);
void from_json(const nlohmann::json& j, GarchFit& fit);

}  // namespace synfin::ts

#include "synfin/arima_garch.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <stdexcept>

#include <boost/math/special_functions/gamma.hpp>

#include "synfin/optim.hpp"
#include "synfin/rng.hpp"

namespace synfin::ts {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kRootMargin = 1e-4;

std::vector<double> difference(std::span<const double> y, std::size_t d) {
  std::vector<double> w(y.begin(), y.end());
  for (std::size_t k = 0; k < d; ++k) {
    for (std::size_t t = w.size() - 1; t > 0; --t) w[t] -= w[t - 1];
    w.erase(w.begin());
  }
  return w;
}

// Conditional sum of squares on w[start..]; earlier residuals are zero.
double arma_css(std::span<const double> w, std::size_t start, double c, std::span<const double> ar,
                std::span<const double> ma, std::vector<double>* residuals = nullptr) {
  std::vector<double> e(w.size(), 0.0);
  double ssr = 0.0;
  for (std::size_t t = start; t < w.size(); ++t) {
    double pred = c;
    for (std::size_t i = 0; i < ar.size(); ++i) pred += ar[i] * w[t - 1 - i];
    for (std::size_t j = 0; j < ma.size() && j < t; ++j) pred += ma[j] * e[t - 1 - j];
    e[t] = w[t] - pred;
    ssr += e[t] * e[t];
  }
  if (residuals) residuals->assign(e.begin() + static_cast<std::ptrdiff_t>(start), e.end());
  return ssr;
}

// Hannan-Rissanen starting values: long AR for proxy innovations, then OLS.
Vector hannan_rissanen(std::span<const double> w, const ArimaOrder& o, bool with_intercept) {
  const std::size_t k = (with_intercept ? 1 : 0) + o.p + o.q;
  Vector start = Vector::Zero(static_cast<Eigen::Index>(k));
  if (k == 0) return start;
  const std::size_t n = w.size();
  std::vector<double> innov(n, 0.0);
  const std::size_t m =
      o.q > 0 ? std::min<std::size_t>(std::max<std::size_t>(10, 2 * (o.p + o.q)), n / 4) : 0;
  if (o.q > 0) {
    Matrix x(static_cast<Eigen::Index>(n - m), static_cast<Eigen::Index>(m + 1));
    Vector y(static_cast<Eigen::Index>(n - m));
    for (std::size_t t = m; t < n; ++t) {
      const auto r = static_cast<Eigen::Index>(t - m);
      x(r, 0) = 1.0;
      for (std::size_t i = 1; i <= m; ++i) x(r, static_cast<Eigen::Index>(i)) = w[t - i];
      y(r) = w[t];
    }
    const Vector b = x.colPivHouseholderQr().solve(y);
    const Vector res = y - x * b;
    for (std::size_t t = m; t < n; ++t) innov[t] = res(static_cast<Eigen::Index>(t - m));
  }
  const std::size_t lead = std::max(o.p, o.q) + m;
  if (lead + k + 10 >= n) return start;
  Matrix x(static_cast<Eigen::Index>(n - lead), static_cast<Eigen::Index>(k));
  Vector y(static_cast<Eigen::Index>(n - lead));
  for (std::size_t t = lead; t < n; ++t) {
    const auto r = static_cast<Eigen::Index>(t - lead);
    Eigen::Index c = 0;
    if (with_intercept) x(r, c++) = 1.0;
    for (std::size_t i = 1; i <= o.p; ++i) x(r, c++) = w[t - i];
    for (std::size_t j = 1; j <= o.q; ++j) x(r, c++) = innov[t - j];
    y(r) = w[t];
  }
  start = x.colPivHouseholderQr().solve(y);
  if (!start.allFinite()) start.setZero();
  return start;
}

struct ArmaParams {
  double c = 0.0;
  std::vector<double> ar, ma;
};

ArmaParams unpack(const Vector& v, const ArimaOrder& o, bool with_intercept) {
  ArmaParams a;
  Eigen::Index k = 0;
  if (with_intercept) a.c = v(k++);
  for (std::size_t i = 0; i < o.p; ++i) a.ar.push_back(v(k++));
  for (std::size_t j = 0; j < o.q; ++j) a.ma.push_back(v(k++));
  return a;
}

bool admissible(const ArmaParams& a) {
  return roots_outside_unit_circle(a.ar, -1.0) && roots_outside_unit_circle(a.ma, 1.0);
}

// ---- GARCH helpers ----------------------------------------------------------

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Unconstrained vector: [log omega, logit persistence, softmax logits (p+q-1), log(nu-2)].
GarchFit garch_from_unconstrained(const Vector& x, const GarchSpec& spec) {
  const std::size_t m = spec.p + spec.q;
  GarchFit g;
  g.p = spec.p;
  g.q = spec.q;
  g.innovation = spec.innovation;
  g.omega = std::exp(x(0));
  const double s = logistic(x(1));
  std::vector<double> logits(m, 0.0);
  for (std::size_t i = 1; i < m; ++i) logits[i] = x(static_cast<Eigen::Index>(1 + i));
  const double mx = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (double& l : logits) total += (l = std::exp(l - mx));
  for (std::size_t i = 0; i < spec.q; ++i) g.alpha.push_back(s * logits[i] / total);
  for (std::size_t j = 0; j < spec.p; ++j) g.beta.push_back(s * logits[spec.q + j] / total);
  if (spec.innovation == Innovation::student_t) {
    g.nu = 2.0 + std::exp(x(static_cast<Eigen::Index>(1 + m)));
  }
  return g;
}

Vector garch_to_unconstrained(double omega, double persistence, double alpha_share,
                              const GarchSpec& spec, double nu) {
  const std::size_t m = spec.p + spec.q;
  Vector x = Vector::Zero(static_cast<Eigen::Index>(1 + m + (spec.innovation == Innovation::student_t)));
  x(0) = std::log(omega);
  x(1) = std::log(persistence / (1.0 - persistence));
  // Shares: alpha_share split over q alphas, the rest over p betas.
  std::vector<double> share(m);
  for (std::size_t i = 0; i < spec.q; ++i) share[i] = alpha_share / static_cast<double>(spec.q);
  for (std::size_t j = 0; j < spec.p; ++j) share[spec.q + j] = (1.0 - alpha_share) / static_cast<double>(spec.p);
  for (std::size_t i = 1; i < m; ++i) x(static_cast<Eigen::Index>(1 + i)) = std::log(share[i] / share[0]);
  if (spec.innovation == Innovation::student_t) x(static_cast<Eigen::Index>(1 + m)) = std::log(nu - 2.0);
  return x;
}

double draw_gamma(Rng& rng, double shape) {
  // Marsaglia-Tsang, shape >= 1.
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x = 0.0, v = 0.0;
    do {
      x = rng.normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = rng.uniform();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
  }
}

double draw_innovation(Rng& rng, const GarchFit& g) {
  if (g.innovation == Innovation::normal) return rng.normal();
  const double chi2 = 2.0 * draw_gamma(rng, g.nu / 2.0);
  return rng.normal() / std::sqrt(chi2 / g.nu) * std::sqrt((g.nu - 2.0) / g.nu);
}

std::vector<double> variance_path(const GarchFit& g, std::span<const double> eps, double seed,
                                  std::size_t extra = 0) {
  std::vector<double> s2(eps.size() + extra);
  for (std::size_t t = 0; t < s2.size(); ++t) {
    double v = g.omega;
    for (std::size_t i = 0; i < g.q; ++i) {
      const std::ptrdiff_t k = static_cast<std::ptrdiff_t>(t) - 1 - static_cast<std::ptrdiff_t>(i);
      double e2 = seed;
      if (k >= 0) e2 = static_cast<std::size_t>(k) < eps.size() ? eps[k] * eps[k] : s2[k];
      v += g.alpha[i] * e2;
    }
    for (std::size_t j = 0; j < g.p; ++j) {
      const std::ptrdiff_t k = static_cast<std::ptrdiff_t>(t) - 1 - static_cast<std::ptrdiff_t>(j);
      v += g.beta[j] * (k >= 0 ? s2[k] : seed);
    }
    s2[t] = v;
  }
  return s2;
}

}  // namespace

// ---- ARIMA -------------------------------------------------------------------

bool roots_outside_unit_circle(std::span<const double> coeffs, double sign) {
  std::size_t n = coeffs.size();
  while (n > 0 && coeffs[n - 1] == 0.0) --n;
  if (n == 0) return true;
  // Roots of 1 + sign*sum c_i z^i outside the unit circle <=> eigenvalues of
  // the companion matrix with first row -sign*c inside it.
  Eigen::MatrixXd comp = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) comp(0, static_cast<Eigen::Index>(i)) = -sign * coeffs[i];
  for (std::size_t i = 1; i < n; ++i) comp(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i - 1)) = 1.0;
  const Eigen::VectorXcd ev = comp.eigenvalues();
  return ev.cwiseAbs().maxCoeff() < 1.0 - kRootMargin;
}

std::size_t arima_parameter_count(const ArimaOrder& o) {
  return o.p + o.q + (o.d == 0 ? 1 : 0) + 1;
}

ArimaFit fit_arima_order(std::span<const double> series, const ArimaOrder& order,
                         std::size_t condition_on) {
  if (series.size() < 100) throw std::invalid_argument("fit_arima: series too short");
  if (sample_variance(series) == 0.0) throw std::invalid_argument("fit_arima: degenerate series");
  if (condition_on < order.p + order.d) {
    throw std::invalid_argument("fit_arima: conditioning sample shorter than the AR order");
  }
  const std::vector<double> w = difference(series, order.d);
  const std::size_t start = condition_on - order.d;
  const bool with_intercept = order.d == 0;
  const auto n_eff = static_cast<double>(w.size() - start);

  const auto objective = [&](const Vector& v) {
    const ArmaParams a = unpack(v, order, with_intercept);
    if (!admissible(a)) return kInf;
    const double ssr = arma_css(w, start, a.c, a.ar, a.ma);
    return 0.5 * n_eff * std::log(ssr / n_eff);
  };

  Vector x0 = hannan_rissanen(w, order, with_intercept);
  {
    ArmaParams a = unpack(x0, order, with_intercept);
    // Shrink AR/MA starting coefficients until admissible.
    for (int k = 0; k < 20 && !admissible(a); ++k) {
      for (double& v : a.ar) v *= 0.5;
      for (double& v : a.ma) v *= 0.5;
    }
    if (!admissible(a)) {
      std::fill(a.ar.begin(), a.ar.end(), 0.0);
      std::fill(a.ma.begin(), a.ma.end(), 0.0);
    }
    Eigen::Index k = 0;
    if (with_intercept) x0(k++) = a.c;
    for (double v : a.ar) x0(k++) = v;
    for (double v : a.ma) x0(k++) = v;
  }

  ArmaParams best;
  if (x0.size() > 0) {
    const auto res = optim::bfgs(objective, x0, {.max_iterations = 200, .gradient_tolerance = 1e-5,
                                                 .value_tolerance = 1e-10, .fd_step = 1e-6});
    if (!res.converged || !std::isfinite(res.value)) {
      throw std::runtime_error("fit_arima: optimizer did not converge (" + res.message + ")");
    }
    best = unpack(res.x, order, with_intercept);
  }

  ArimaFit fit;
  fit.order = order;
  fit.intercept = best.c;
  fit.ar = best.ar;
  fit.ma = best.ma;
  const double ssr = arma_css(w, start, best.c, best.ar, best.ma, &fit.residuals);
  fit.sigma2 = ssr / n_eff;
  if (!(fit.sigma2 > 0.0)) throw std::invalid_argument("fit_arima: degenerate series");
  fit.log_likelihood = -0.5 * n_eff * (std::log(2.0 * std::numbers::pi * fit.sigma2) + 1.0);
  fit.aic = 2.0 * static_cast<double>(arima_parameter_count(order)) - 2.0 * fit.log_likelihood;
  fit.anchor = series.back();
  if (!std::isfinite(fit.aic)) throw std::runtime_error("fit_arima: non-finite AIC");
  return fit;
}

ArimaFit fit_arima(std::span<const double> train, const ArimaGrid& grid) {
  if (train.size() < 100) throw std::invalid_argument("fit_arima: series too short");
  if (sample_variance(train) == 0.0) throw std::invalid_argument("fit_arima: degenerate series");
  const std::size_t condition_on = grid.p_max + grid.d_max;
  std::optional<ArimaFit> best;
  std::string last_error;
  for (std::size_t p = 0; p <= grid.p_max; ++p) {
    for (std::size_t d = 0; d <= grid.d_max; ++d) {
      for (std::size_t q = 0; q <= grid.q_max; ++q) {
        try {
          ArimaFit fit = fit_arima_order(train, {p, d, q}, condition_on);
          if (!best || fit.aic < best->aic) best = std::move(fit);
        } catch (const std::runtime_error& e) {
          last_error = e.what();
        }
      }
    }
  }
  if (!best) throw std::runtime_error("fit_arima: no candidate converged: " + last_error);
  return *best;
}

// ---- GARCH -----------------------------------------------------------------------

std::string to_string(Innovation d) { return d == Innovation::normal ? "normal" : "student_t"; }

Innovation innovation_from_string(std::string_view name) {
  if (name == "normal") return Innovation::normal;
  if (name == "student_t") return Innovation::student_t;
  throw std::invalid_argument("unknown innovation distribution: " + std::string(name));
}

double GarchFit::persistence() const {
  double s = 0.0;
  for (double a : alpha) s += a;
  for (double b : beta) s += b;
  return s;
}

double GarchFit::unconditional_variance() const { return omega / (1.0 - persistence()); }

GarchFit make_garch(double omega, std::vector<double> alpha, std::vector<double> beta,
                    Innovation innovation, double nu) {
  if (!(omega > 0.0)) throw std::invalid_argument("garch: omega must be positive");
  for (double a : alpha) if (!(a >= 0.0)) throw std::invalid_argument("garch: negative alpha");
  for (double b : beta) if (!(b >= 0.0)) throw std::invalid_argument("garch: negative beta");
  if (innovation == Innovation::student_t && !(nu > 2.0)) {
    throw std::invalid_argument("garch: Student-t needs nu > 2");
  }
  GarchFit g;
  g.q = alpha.size();
  g.p = beta.size();
  g.omega = omega;
  g.alpha = std::move(alpha);
  g.beta = std::move(beta);
  g.innovation = innovation;
  g.nu = nu;
  if (!(g.persistence() < 1.0)) throw std::invalid_argument("garch: persistence must be below 1");
  g.initial_variance = g.unconditional_variance();
  return g;
}

double garch_log_likelihood(std::span<const double> eps, const GarchFit& g,
                            std::vector<double>* variance) {
  std::vector<double> s2 = variance_path(g, eps, g.initial_variance);
  double ll = 0.0;
  if (g.innovation == Innovation::normal) {
    const double c = std::log(2.0 * std::numbers::pi);
    for (std::size_t t = 0; t < eps.size(); ++t) {
      if (!(s2[t] > 0.0)) return -kInf;
      ll -= 0.5 * (c + std::log(s2[t]) + eps[t] * eps[t] / s2[t]);
    }
  } else {
    const double nu = g.nu;
    const double c = std::lgamma(0.5 * (nu + 1.0)) - std::lgamma(0.5 * nu) -
                     0.5 * std::log(std::numbers::pi * (nu - 2.0));
    for (std::size_t t = 0; t < eps.size(); ++t) {
      if (!(s2[t] > 0.0)) return -kInf;
      ll += c - 0.5 * std::log(s2[t]) -
            0.5 * (nu + 1.0) * std::log1p(eps[t] * eps[t] / ((nu - 2.0) * s2[t]));
    }
  }
  if (variance) *variance = std::move(s2);
  return ll;
}

GarchFit fit_garch(std::span<const double> residuals, const GarchSpec& spec) {
  if (residuals.size() < 250) throw std::invalid_argument("fit_garch: residuals too short");
  if (spec.p == 0 || spec.q == 0) throw std::invalid_argument("fit_garch: orders must be >= 1");
  double var = 0.0;
  for (double e : residuals) var += e * e;
  var /= static_cast<double>(residuals.size());
  if (!(var > 0.0)) throw std::invalid_argument("fit_garch: zero variance");

  const auto objective = [&](const Vector& x) {
    GarchFit g = garch_from_unconstrained(x, spec);
    g.initial_variance = var;
    const double ll = garch_log_likelihood(residuals, g);
    return std::isfinite(ll) ? -ll / static_cast<double>(residuals.size()) : kInf;
  };

  struct Start {
    double persistence, alpha_share;
  };
  const Start starts[] = {{0.10, 0.5}, {0.50, 0.2}, {0.90, 0.1}, {0.97, 0.05}};
  std::optional<optim::MinimizeResult> best;
  std::string failure;
  for (const auto& s : starts) {
    const Vector x0 = garch_to_unconstrained(var * (1.0 - s.persistence), s.persistence,
                                             s.alpha_share, spec, 8.0);
    auto res = optim::bfgs(objective, x0, {.max_iterations = 300, .gradient_tolerance = 1e-7,
                                           .value_tolerance = 1e-13, .fd_step = 1e-6});
    if (!res.converged) {
      failure = res.message;
      continue;
    }
    if (!best || res.value < best->value) best = std::move(res);
  }
  if (!best) throw std::runtime_error("fit_garch: optimizer did not converge (" + failure + ")");

  GarchFit g = garch_from_unconstrained(best->x, spec);
  g.initial_variance = var;
  if (!(g.persistence() < 1.0 - 1e-6)) {
    throw std::runtime_error("fit_garch: boundary solution, alpha + beta = " +
                             std::to_string(g.persistence()));
  }
  g.log_likelihood = garch_log_likelihood(residuals, g, &g.conditional_variance);

  if (spec.nested_test_level > 0.0) {
    GarchFit flat = g;
    flat.omega = var;
    std::fill(flat.alpha.begin(), flat.alpha.end(), 0.0);
    std::fill(flat.beta.begin(), flat.beta.end(), 0.0);
    if (spec.innovation == Innovation::student_t) {
      // Profile nu for the constant-variance model.
      const auto nu_objective = [&](const Vector& x) {
        GarchFit probe = flat;
        probe.nu = 2.0 + std::exp(x(0));
        const double ll = garch_log_likelihood(residuals, probe);
        return std::isfinite(ll) ? -ll / static_cast<double>(residuals.size()) : kInf;
      };
      const auto res = optim::bfgs(nu_objective, Vector::Constant(1, std::log(g.nu - 2.0)));
      flat.nu = 2.0 + std::exp(res.x(0));
    }
    const double flat_ll = garch_log_likelihood(residuals, flat);
    const double lr = 2.0 * (g.log_likelihood - flat_ll);
    if (chi_square_sf(lr, static_cast<double>(spec.p + spec.q)) >= spec.nested_test_level) {
      flat.log_likelihood = garch_log_likelihood(residuals, flat, &flat.conditional_variance);
      flat.homoskedastic = true;
      return flat;
    }
  }
  return g;
}

// ---- diagnostics -----------------------------------------------------------------

double chi_square_sf(double x, double dof) {
  if (x <= 0.0) return 1.0;
  return boost::math::gamma_q(0.5 * dof, 0.5 * x);
}

TestResult ljung_box(std::span<const double> x, std::size_t lags) {
  if (lags == 0) throw std::invalid_argument("ljung_box: lags must be >= 1");
  if (x.size() <= lags + 10) throw std::invalid_argument("ljung_box: series too short");
  const double m = sample_mean(x);
  double denom = 0.0;
  for (double v : x) denom += (v - m) * (v - m);
  if (denom == 0.0) throw std::invalid_argument("ljung_box: degenerate series");
  const auto n = static_cast<double>(x.size());
  double q = 0.0;
  for (std::size_t k = 1; k <= lags; ++k) {
    double num = 0.0;
    for (std::size_t t = k; t < x.size(); ++t) num += (x[t] - m) * (x[t - k] - m);
    const double rho = num / denom;
    q += rho * rho / (n - static_cast<double>(k));
  }
  q *= n * (n + 2.0);
  return {q, chi_square_sf(q, static_cast<double>(lags)), lags};
}

TestResult arch_lm(std::span<const double> x, std::size_t lags) {
  if (lags == 0) throw std::invalid_argument("arch_lm: lags must be >= 1");
  if (x.size() <= lags + 10) throw std::invalid_argument("arch_lm: series too short");
  const std::size_t rows = x.size() - lags;
  Matrix design(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(lags + 1));
  Vector y(static_cast<Eigen::Index>(rows));
  for (std::size_t t = lags; t < x.size(); ++t) {
    const auto r = static_cast<Eigen::Index>(t - lags);
    design(r, 0) = 1.0;
    for (std::size_t k = 1; k <= lags; ++k) design(r, static_cast<Eigen::Index>(k)) = x[t - k] * x[t - k];
    y(r) = x[t] * x[t];
  }
  const double ybar = y.mean();
  const double tss = (y.array() - ybar).square().sum();
  if (tss == 0.0) throw std::invalid_argument("arch_lm: degenerate series");
  const Vector b = design.colPivHouseholderQr().solve(y);
  const double rss = (y - design * b).squaredNorm();
  const double lm = static_cast<double>(rows) * (1.0 - rss / tss);
  return {lm, chi_square_sf(lm, static_cast<double>(lags)), lags};
}

DiagnosticsReport diagnose(std::span<const double> residuals, std::size_t lags) {
  if (lags == 0) throw std::invalid_argument("diagnose: lags must be >= 1");
  if (residuals.size() <= lags + 10) throw std::invalid_argument("diagnose: series too short");
  return {ljung_box(residuals, lags), arch_lm(residuals, lags)};
}

std::vector<double> standardized_residuals(std::span<const double> residuals, const GarchFit& g) {
  const std::vector<double> s2 = variance_path(g, residuals, g.initial_variance);
  std::vector<double> z(residuals.size());
  for (std::size_t t = 0; t < z.size(); ++t) z[t] = residuals[t] / std::sqrt(s2[t]);
  return z;
}

// ---- simulation and forecasting ------------------------------------------------------

ArimaFit white_noise_mean(double intercept) {
  ArimaFit f;
  f.intercept = intercept;
  return f;
}

SimulatedPath simulate_path(const ArimaFit& arima, const GarchFit& g, std::size_t length,
                            std::uint64_t seed) {
  if (length == 0) throw std::invalid_argument("simulate: length must be >= 1");
  if (!(g.omega > 0.0) || !(g.persistence() < 1.0)) throw std::invalid_argument("simulate: invalid GARCH");
  if (arima.ar.size() != arima.order.p || arima.ma.size() != arima.order.q) {
    throw std::invalid_argument("simulate: ARIMA coefficients do not match the order");
  }
  Rng rng(seed);
  const std::size_t total = length + kBurnIn;
  const double uncond = g.unconditional_variance();
  double ar_sum = 0.0;
  for (double a : arima.ar) ar_sum += a;
  const double mean_w = arima.intercept / (1.0 - ar_sum);

  std::vector<double> eps(total), s2(total), w(total);
  for (std::size_t t = 0; t < total; ++t) {
    double v = g.omega;
    for (std::size_t i = 0; i < g.q; ++i) v += g.alpha[i] * (t > i ? eps[t - 1 - i] * eps[t - 1 - i] : uncond);
    for (std::size_t j = 0; j < g.p; ++j) v += g.beta[j] * (t > j ? s2[t - 1 - j] : uncond);
    s2[t] = v;
    eps[t] = std::sqrt(v) * draw_innovation(rng, g);
    double m = arima.intercept;
    for (std::size_t i = 0; i < arima.ar.size(); ++i) m += arima.ar[i] * (t > i ? w[t - 1 - i] : mean_w);
    for (std::size_t j = 0; j < arima.ma.size(); ++j) m += arima.ma[j] * (t > j ? eps[t - 1 - j] : 0.0);
    w[t] = m + eps[t];
  }

  SimulatedPath out;
  const auto first = static_cast<std::ptrdiff_t>(kBurnIn);
  out.variance.assign(s2.begin() + first, s2.end());
  out.innovations.assign(eps.begin() + first, eps.end());
  out.returns.assign(w.begin() + first, w.end());
  if (arima.order.d == 1) {
    double level = arima.anchor;
    for (double& r : out.returns) r = (level += r);
  }
  return out;
}

ReturnSeries simulate(const ArimaFit& arima, const GarchFit& garch, std::size_t length,
                      std::uint64_t seed) {
  return {{}, simulate_path(arima, garch, length, seed).returns, std::nullopt};
}

std::vector<double> forecast_variance(const GarchFit& g, std::span<const double> history,
                                      std::size_t horizon, double seed_variance) {
  if (horizon < 1) throw std::invalid_argument("forecast_variance: horizon must be >= 1");
  if (history.empty()) throw std::invalid_argument("forecast_variance: empty history");
  const double seed = seed_variance > 0.0 ? seed_variance : g.unconditional_variance();
  const std::vector<double> path = variance_path(g, history, seed, horizon);
  return {path.end() - static_cast<std::ptrdiff_t>(horizon), path.end()};
}

std::vector<double> rolling_variance(const GarchFit& g, std::span<const double> series,
                                     double seed_variance) {
  const double seed = seed_variance > 0.0 ? seed_variance : g.unconditional_variance();
  return variance_path(g, series, seed);
}

// ---- serialization -----------------------------------------------------------------

void to_json(nlohmann::json& j, const ArimaFit& f) {
  j = {{"order", {f.order.p, f.order.d, f.order.q}},
       {"ar", f.ar},
       {"ma", f.ma},
       {"intercept", f.intercept},
       {"sigma2", f.sigma2},
       {"log_likelihood", f.log_likelihood},
       {"aic", f.aic},
       {"anchor", f.anchor}};
}

void from_json(const nlohmann::json& j, ArimaFit& f) {
  const auto o = j.at("order").get<std::vector<std::size_t>>();
  if (o.size() != 3) throw std::invalid_argument("arima checkpoint: order must have 3 entries");
  f.order = {o[0], o[1], o[2]};
  j.at("ar").get_to(f.ar);
  j.at("ma").get_to(f.ma);
  j.at("intercept").get_to(f.intercept);
  j.at("sigma2").get_to(f.sigma2);
  j.at("log_likelihood").get_to(f.log_likelihood);
  j.at("aic").get_to(f.aic);
  j.at("anchor").get_to(f.anchor);
}

void to_json(nlohmann::json& j, const GarchFit& g) {
  j = {{"p", g.p},
       {"q", g.q},
       {"omega", g.omega},
       {"alpha", g.alpha},
       {"beta", g.beta},
       {"innovation", to_string(g.innovation)},
       {"nu", g.nu},
       {"initial_variance", g.initial_variance},
       {"log_likelihood", g.log_likelihood},
       {"homoskedastic", g.homoskedastic}};
}

void from_json(const nlohmann::json& j, GarchFit& g) {
  GarchFit v = make_garch(j.at("omega").get<double>(), j.at("alpha").get<std::vector<double>>(),
                          j.at("beta").get<std::vector<double>>(),
                          innovation_from_string(j.at("innovation").get<std::string>()),
                          j.at("nu").get<double>());
  v.initial_variance = j.at("initial_variance").get<double>();
  v.log_likelihood = j.at("log_likelihood").get<double>();
  v.homoskedastic = j.value("homoskedastic", false);
  g = std::move(v);
}

}  // namespace synfin::ts

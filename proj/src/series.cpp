#include "synfin/series.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <boost/math/distributions/normal.hpp>

namespace synfin {
namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

bool parse_double(std::string_view text, double& out) {
  text = trim(text);
  if (text.empty()) return false;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, out);
  return ec == std::errc{} && ptr == end;
}

struct OlsFit {
  Vector coef;
  double ssr = 0.0;
  double se_of(Eigen::Index j) const { return std::sqrt(cov_diag(j)); }
  Vector cov_diag;
};

OlsFit ols(const Matrix& x, const Vector& y) {
  const Eigen::MatrixXd xtx = x.transpose() * x;
  const Eigen::LDLT<Eigen::MatrixXd> ldlt(xtx);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
    throw std::runtime_error("adf_test: singular regression design");
  }
  OlsFit fit;
  fit.coef = ldlt.solve(x.transpose() * y);
  const Vector resid = y - x * fit.coef;
  fit.ssr = resid.squaredNorm();
  const auto n = static_cast<double>(x.rows());
  const auto k = static_cast<double>(x.cols());
  const double s2 = fit.ssr / (n - k);
  const Eigen::MatrixXd inv = ldlt.solve(Eigen::MatrixXd::Identity(x.cols(), x.cols()));
  fit.cov_diag = s2 * inv.diagonal();
  return fit;
}

// Design for the ADF regression using rows whose dependent variable is
// dy[first..], with `lags` lagged differences.
void adf_design(std::span<const double> y, std::size_t lags, std::size_t first_row,
                Matrix& x, Vector& dep) {
  const std::size_t n_diff = y.size() - 1;
  const std::size_t nobs = n_diff - first_row;
  x.resize(static_cast<Eigen::Index>(nobs), static_cast<Eigen::Index>(3 + lags));
  dep.resize(static_cast<Eigen::Index>(nobs));
  for (std::size_t r = 0; r < nobs; ++r) {
    const std::size_t t = first_row + r;  // index into dy; dy[t] = y[t+1] - y[t]
    const auto row = static_cast<Eigen::Index>(r);
    dep(row) = y[t + 1] - y[t];
    x(row, 0) = 1.0;
    x(row, 1) = static_cast<double>(r + 1);
    x(row, 2) = y[t];
    for (std::size_t k = 1; k <= lags; ++k) {
      x(row, static_cast<Eigen::Index>(2 + k)) = y[t + 1 - k] - y[t - k];
    }
  }
}

}  // namespace

std::optional<Date> parse_iso_date(std::string_view text) {
  text = trim(text);
  if (text.size() != 10 || text[4] != '-' || text[7] != '-') return std::nullopt;
  int y = 0;
  unsigned m = 0, d = 0;
  auto num = [&](std::size_t pos, std::size_t len, auto& out) {
    const auto* b = text.data() + pos;
    const auto [ptr, ec] = std::from_chars(b, b + len, out);
    return ec == std::errc{} && ptr == b + len;
  };
  if (!num(0, 4, y) || !num(5, 2, m) || !num(8, 2, d)) return std::nullopt;
  const Date date{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
  if (!date.ok()) return std::nullopt;
  return date;
}

std::string format_iso_date(const Date& date) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(date.year()),
                static_cast<unsigned>(date.month()), static_cast<unsigned>(date.day()));
  return buf;
}

PriceSeries make_price_series(std::vector<Date> dates, std::vector<double> prices) {
  if (dates.size() != prices.size()) {
    throw std::invalid_argument("price series: dates and prices differ in length");
  }
  if (prices.size() < 2) throw std::invalid_argument("price series: need at least 2 prices");
  for (std::size_t i = 0; i < prices.size(); ++i) {
    if (!(prices[i] > 0.0) || !std::isfinite(prices[i])) {
      throw std::invalid_argument("price series: non-positive price at index " + std::to_string(i));
    }
    if (i > 0 && !(dates[i - 1] < dates[i])) {
      throw std::invalid_argument("price series: dates not strictly increasing");
    }
  }
  return {std::move(dates), std::move(prices)};
}

std::string Provenance::label() const {
  if (kind == Kind::real) return "real";
  return "synthetic(" + model + "," + std::to_string(seed) + ")";
}

PriceSeries read_price_csv(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw std::runtime_error("price csv: empty input");
  ++line_no;
  if (trim(line) != "date,close") {
    throw std::runtime_error("price csv: expected header 'date,close' at line 1");
  }
  std::vector<Date> dates;
  std::vector<double> prices;
  while (std::getline(in, line)) {
    ++line_no;
    const auto row = trim(line);
    if (row.empty()) continue;
    const auto comma = row.find(',');
    const auto where = " at line " + std::to_string(line_no);
    if (comma == std::string_view::npos || row.find(',', comma + 1) != std::string_view::npos) {
      throw std::runtime_error("price csv: malformed row" + where);
    }
    const auto date = parse_iso_date(row.substr(0, comma));
    double price = 0.0;
    if (!date || !parse_double(row.substr(comma + 1), price)) {
      throw std::runtime_error("price csv: malformed row" + where);
    }
    if (!(price > 0.0) || !std::isfinite(price)) {
      throw std::runtime_error("price csv: non-positive price" + where);
    }
    if (!dates.empty() && *date == dates.back()) {
      throw std::runtime_error("price csv: duplicate date" + where);
    }
    if (!dates.empty() && *date < dates.back()) {
      throw std::runtime_error("price csv: dates not strictly increasing" + where);
    }
    dates.push_back(*date);
    prices.push_back(price);
  }
  return make_price_series(std::move(dates), std::move(prices));
}

PriceSeries load_price_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("price csv: cannot open " + path.string());
  return read_price_csv(in);
}

ReturnSeries log_returns(const PriceSeries& p) {
  if (p.size() < 2) throw std::invalid_argument("log_returns: need at least 2 prices");
  ReturnSeries out;
  out.values.reserve(p.size() - 1);
  for (std::size_t t = 0; t + 1 < p.size(); ++t) {
    out.values.push_back(std::log(p.prices[t + 1] / p.prices[t]));
  }
  if (!p.dates.empty()) out.dates.assign(p.dates.begin() + 1, p.dates.end());
  return out;
}

std::vector<double> prices_from_returns(double initial_price, std::span<const double> returns) {
  std::vector<double> prices;
  prices.reserve(returns.size() + 1);
  prices.push_back(initial_price);
  double log_level = std::log(initial_price);
  for (double r : returns) {
    log_level += r;
    prices.push_back(std::exp(log_level));
  }
  return prices;
}

double adf_pvalue_ct(double statistic) {
  constexpr double tau_max = 0.7;
  constexpr double tau_min = -16.18;
  constexpr double tau_star = -2.89;
  constexpr double small[] = {3.2512, 1.6047, 4.9588e-2};
  constexpr double large[] = {2.5261, 6.1654e-1, -3.7956e-1, -6.0285e-2};
  if (statistic > tau_max) return 1.0;
  if (statistic < tau_min) return 0.0;
  const double s = statistic;
  const double z = s <= tau_star ? small[0] + s * (small[1] + s * small[2])
                                 : large[0] + s * (large[1] + s * (large[2] + s * large[3]));
  return boost::math::cdf(boost::math::normal_distribution<>{}, z);
}

AdfResult adf_test(std::span<const double> y, std::size_t max_lag) {
  if (y.size() <= max_lag + 10) throw std::invalid_argument("adf_test: series too short");
  if (sample_variance(y) == 0.0) throw std::invalid_argument("adf_test: degenerate series");

  // Lag selection on the common sample that the largest lag allows.
  std::size_t best_lag = 0;
  double best_aic = std::numeric_limits<double>::infinity();
  Matrix x;
  Vector dep;
  for (std::size_t lag = 0; lag <= max_lag; ++lag) {
    adf_design(y, lag, max_lag, x, dep);
    const auto fit = ols(x, dep);
    const auto n = static_cast<double>(x.rows());
    if (fit.ssr <= 0.0) throw std::invalid_argument("adf_test: degenerate series");
    const double aic = n * std::log(fit.ssr / n) + 2.0 * static_cast<double>(x.cols());
    if (aic < best_aic) {
      best_aic = aic;
      best_lag = lag;
    }
  }

  adf_design(y, best_lag, best_lag, x, dep);
  const auto fit = ols(x, dep);
  if (fit.ssr <= 0.0) throw std::invalid_argument("adf_test: degenerate series");
  AdfResult res;
  res.statistic = fit.coef(2) / fit.se_of(2);
  res.p_value = adf_pvalue_ct(res.statistic);
  res.chosen_lag = best_lag;
  res.reject_unit_root = res.p_value < 0.05;
  return res;
}

double sample_mean(std::span<const double> v) {
  if (v.empty()) throw std::invalid_argument("sample_mean: empty input");
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sample_variance(std::span<const double> v) {
  if (v.size() < 2) throw std::invalid_argument("sample_variance: need at least 2 values");
  const double m = sample_mean(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return ss / static_cast<double>(v.size() - 1);
}

NormStats fit_norm_stats(std::span<const double> values) {
  NormStats s;
  s.mean = sample_mean(values);
  s.stddev = std::sqrt(sample_variance(values));
  if (!(s.stddev > 0.0)) throw std::invalid_argument("normalize: zero variance");
  return s;
}

ReturnSeries apply_normalization(const ReturnSeries& series, const NormStats& stats) {
  if (!(stats.stddev > 0.0)) throw std::invalid_argument("normalize: zero variance");
  ReturnSeries out{series.dates, {}, stats};
  out.values.reserve(series.size());
  for (double x : series.values) out.values.push_back((x - stats.mean) / stats.stddev);
  return out;
}

ReturnSeries zscore_normalize(const ReturnSeries& series) {
  return apply_normalization(series, fit_norm_stats(series.values));
}

std::vector<double> denormalize_values(std::span<const double> values, const NormStats& stats) {
  std::vector<double> out;
  out.reserve(values.size());
  for (double x : values) out.push_back(x * stats.stddev + stats.mean);
  return out;
}

ReturnSeries denormalize(const ReturnSeries& series) {
  if (!series.norm_stats) throw std::invalid_argument("denormalize: series is not normalized");
  return {series.dates, denormalize_values(series.values, *series.norm_stats), std::nullopt};
}

SplitSeries temporal_split(const ReturnSeries& series, const SplitFractions& f,
                           std::size_t min_segment) {
  if (f.train <= 0 || f.validation <= 0 || f.test <= 0 ||
      std::abs(f.train + f.validation + f.test - 1.0) > 1e-9) {
    throw std::invalid_argument("temporal_split: fractions must be positive and sum to 1");
  }
  const std::size_t n = series.size();
  // Nudge so that products like 0.85 * 1000 land on the intended integer.
  const auto boundary = [n](double c) {
    return std::min(n, static_cast<std::size_t>(std::floor(c * static_cast<double>(n) + 1e-9)));
  };
  const std::size_t b1 = boundary(f.train);
  const std::size_t b2 = boundary(f.train + f.validation);
  if (b1 < min_segment || b2 - b1 < min_segment || n - b2 < min_segment) {
    throw std::invalid_argument("temporal_split: segment too short");
  }
  const auto slice = [&](std::size_t lo, std::size_t hi) {
    ReturnSeries s;
    s.values.assign(series.values.begin() + lo, series.values.begin() + hi);
    if (!series.dates.empty()) s.dates.assign(series.dates.begin() + lo, series.dates.begin() + hi);
    s.norm_stats = series.norm_stats;
    return s;
  };
  return {slice(0, b1), slice(b1, b2), slice(b2, n), f};
}

WindowSet make_windows(std::span<const double> values, std::size_t length, std::size_t stride,
                       Provenance provenance) {
  if (length == 0 || stride == 0) throw std::invalid_argument("make_windows: zero length or stride");
  if (values.size() < length) throw std::invalid_argument("make_windows: series shorter than window");
  const std::size_t count = window_count(values.size(), length, stride);
  WindowSet w;
  w.stride = stride;
  w.provenance = std::move(provenance);
  w.data.resize(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(length));
  for (std::size_t i = 0; i < count; ++i) {
    for (std::size_t j = 0; j < length; ++j) {
      w.data(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = values[i * stride + j];
    }
  }
  return w;
}

std::vector<double> concatenate_windows(const WindowSet& windows) {
  return {windows.data.data(), windows.data.data() + windows.data.size()};
}

void write_series_csv(const std::filesystem::path& path, const ReturnSeries& series) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.precision(17);
  const bool dated = series.dates.size() == series.size();
  out << (dated ? "date,value\n" : "index,value\n");
  for (std::size_t i = 0; i < series.size(); ++i) {
    if (dated) {
      out << format_iso_date(series.dates[i]);
    } else {
      out << i;
    }
    out << ',' << series.values[i] << '\n';
  }
}

void to_json(nlohmann::json& j, const NormStats& s) { j = {{"mean", s.mean}, {"stddev", s.stddev}}; }

void from_json(const nlohmann::json& j, NormStats& s) {
  s.mean = j.at("mean").get<double>();
  s.stddev = j.at("stddev").get<double>();
}

}  // namespace synfin

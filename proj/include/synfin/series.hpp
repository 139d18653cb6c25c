#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "synfin/types.hpp"

namespace synfin {

using Date = std::chrono::year_month_day;

/// Parses an ISO `YYYY-MM-DD` date; returns nullopt on malformed input.
std::optional<Date> parse_iso_date(std::string_view text);
std::string format_iso_date(const Date& date);

/// Daily closing prices. Construct through `make_price_series` or the CSV loader.
struct PriceSeries {
  std::vector<Date> dates;
  std::vector<double> prices;

  std::size_t size() const { return prices.size(); }
};

/// Validates length >= 2, strictly increasing dates and positive prices.
PriceSeries make_price_series(std::vector<Date> dates, std::vector<double> prices);

/// Mean and sample standard deviation used for z-scoring.
struct NormStats {
  double mean = 0.0;
  double stddev = 1.0;
};

void to_json(nlohmann::json& j, const NormStats& s);
void from_json(const nlohmann::json& j, NormStats& s);

/// Log-returns with optional date index. Synthetic series carry no dates.
struct ReturnSeries {
  std::vector<Date> dates;  // empty or same length as values
  std::vector<double> values;
  std::optional<NormStats> norm_stats;

  std::size_t size() const { return values.size(); }
  std::span<const double> view() const { return values; }
};

struct SplitFractions {
  double train = 0.70;
  double validation = 0.15;
  double test = 0.15;
};

/// Chronological three-way partition of a return series.
struct SplitSeries {
  ReturnSeries train;
  ReturnSeries validation;
  ReturnSeries test;
  SplitFractions fractions;
};

struct Provenance {
  enum class Kind { real, synthetic };
  Kind kind = Kind::real;
  std::string model;
  std::uint64_t seed = 0;

  static Provenance real() { return {}; }
  static Provenance synthetic(std::string model, std::uint64_t seed) {
    return {Kind::synthetic, std::move(model), seed};
  }
  std::string label() const;
};

/// Fixed-length windows, one per row.
struct WindowSet {
  Matrix data;
  std::size_t stride = 1;
  Provenance provenance;

  std::size_t size() const { return static_cast<std::size_t>(data.rows()); }
  std::size_t length() const { return static_cast<std::size_t>(data.cols()); }
  std::span<const double> window(std::size_t i) const {
    return {data.data() + i * length(), length()};
  }
};

struct AdfResult {
  double statistic = 0.0;
  double p_value = 1.0;
  std::size_t chosen_lag = 0;
  bool reject_unit_root = false;
};

PriceSeries load_price_csv(const std::filesystem::path& path);
PriceSeries read_price_csv(std::istream& in);

/// values[t] = ln(prices[t+1] / prices[t]); dates are those of prices[1..].
ReturnSeries log_returns(const PriceSeries& prices);

/// Inverse of log_returns given the starting price.
std::vector<double> prices_from_returns(double initial_price, std::span<const double> returns);

/// Augmented Dickey-Fuller regression with constant and linear trend; lag
/// picked by AIC over 0..max_lag on a common sample, MacKinnon p-value.
AdfResult adf_test(std::span<const double> series, std::size_t max_lag);

/// MacKinnon (1994) response-surface p-value for the constant+trend case.
double adf_pvalue_ct(double statistic);

NormStats fit_norm_stats(std::span<const double> values);
/// Z-scores with statistics fitted on the input itself.
ReturnSeries zscore_normalize(const ReturnSeries& series);
/// Z-scores with externally supplied statistics (e.g. fitted on train only).
ReturnSeries apply_normalization(const ReturnSeries& series, const NormStats& stats);
ReturnSeries denormalize(const ReturnSeries& series);
std::vector<double> denormalize_values(std::span<const double> values, const NormStats& stats);

/// Boundaries at floor(cumulative fraction * n); every segment must hold at
/// least min_segment points.
SplitSeries temporal_split(const ReturnSeries& series, const SplitFractions& fractions,
                           std::size_t min_segment);

/// All full windows of length `length` taken every `stride` steps.
WindowSet make_windows(std::span<const double> values, std::size_t length = 30,
                       std::size_t stride = 1, Provenance provenance = Provenance::real());

/// Number of windows make_windows produces.
constexpr std::size_t window_count(std::size_t n, std::size_t length, std::size_t stride) {
  return n < length ? 0 : (n - length) / stride + 1;
}

/// Concatenates window rows into one series.
std::vector<double> concatenate_windows(const WindowSet& windows);

/// Writes `date,value` rows (or `index,value` when no dates are present).
void write_series_csv(const std::filesystem::path& path, const ReturnSeries& series);

double sample_mean(std::span<const double> values);
/// Variance with the 1/(n-1) estimator.
double sample_variance(std::span<const double> values);

}  // namespace synfin

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "synfin/rng.hpp"
#include "synfin/series.hpp"

using namespace synfin;

namespace {

PriceSeries parse(const std::string& text) {
  std::istringstream in(text);
  return read_price_csv(in);
}

std::string error_of(const std::string& text) {
  try {
    parse(text);
  } catch (const std::exception& e) {
    return e.what();
  }
  return {};
}

ReturnSeries returns_of(std::vector<double> v) { return {{}, std::move(v), std::nullopt}; }

}  // namespace

TEST(PriceCsv, ParsesRowsInOrder) {
  const auto p = parse("date,close\n2020-01-02,100.0\n2020-01-03,101.0\n");
  ASSERT_EQ(p.size(), 2u);
  EXPECT_DOUBLE_EQ(p.prices[1], 101.0);
  EXPECT_EQ(format_iso_date(p.dates[0]), "2020-01-02");
}

TEST(PriceCsv, RejectsBadInput) {
  EXPECT_NE(error_of("date,close\n2020-01-02,100.0\n2020-01-03,0.0\n").find("non-positive price at line 3"),
            std::string::npos);
  EXPECT_NE(error_of("date,close\n2020-01-03,100.0\n2020-01-02,101.0\n").find("dates not strictly increasing"),
            std::string::npos);
  EXPECT_NE(error_of("date,close\n2020-01-02,100.0\n2020-01-02,101.0\n").find("duplicate date"),
            std::string::npos);
  EXPECT_NE(error_of("date,close\n2020-01-02,abc\n").find("malformed row at line 2"), std::string::npos);
  EXPECT_NE(error_of("day,price\n").find("header"), std::string::npos);
  EXPECT_THROW(load_price_csv("/nonexistent/prices.csv"), std::runtime_error);
}

TEST(LogReturns, DirectFormula) {
  const auto d1 = *parse_iso_date("2020-01-02");
  const auto d2 = *parse_iso_date("2020-01-03");
  const auto d3 = *parse_iso_date("2020-01-06");
  EXPECT_NEAR(log_returns(make_price_series({d1, d2}, {100, 110})).values[0], 0.0953102, 1e-7);
  EXPECT_NEAR(log_returns(make_price_series({d1, d2}, {100, 90})).values[0], -0.1053605, 1e-7);
  const auto flat = log_returns(make_price_series({d1, d2, d3}, {100, 100, 100}));
  EXPECT_EQ(flat.values, (std::vector<double>{0.0, 0.0}));
  EXPECT_EQ(flat.dates.front(), d2);
}

TEST(LogReturns, CumulativeExpSumIsInverse) {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> r(500);
    for (double& x : r) x = 0.02 * rng.normal();
    const auto prices = prices_from_returns(50.0, r);
    std::vector<Date> dates;
    for (std::size_t i = 0; i < prices.size(); ++i) {
      dates.push_back(std::chrono::sys_days{std::chrono::year{2000} / 1 / 1} + std::chrono::days{i});
    }
    const auto back = log_returns(make_price_series(dates, prices));
    for (std::size_t i = 0; i < r.size(); ++i) ASSERT_NEAR(back.values[i], r[i], 1e-10);
  }
}

TEST(Adf, PValueMatchesMacKinnonSurface) {
  // Reference values from statsmodels.tsa.adfvalues.mackinnonp(stat, "ct", 1).
  EXPECT_NEAR(adf_pvalue_ct(-4.0), 0.008793701231094677, 1e-12);
  EXPECT_NEAR(adf_pvalue_ct(-2.5), 0.32796229628585105, 1e-12);
  EXPECT_NEAR(adf_pvalue_ct(-1.0), 0.9441147109023218, 1e-12);
  EXPECT_NEAR(adf_pvalue_ct(0.5), 0.996851911498776, 1e-12);
  EXPECT_EQ(adf_pvalue_ct(1.0), 1.0);
  EXPECT_EQ(adf_pvalue_ct(-20.0), 0.0);
}

TEST(Adf, StatisticMatchesReferenceTool) {
  // statsmodels adfuller(x, maxlag=4, regression="ct", autolag="AIC") on this
  // deterministic series gives statistic -11.948064062878245 at lag 4.
  std::vector<double> x(200);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double t = static_cast<double>(i);
    x[i] = std::sin(0.3 * t) + 0.01 * t + 0.5 * std::cos(1.7 * std::pow(t, 1.1)) +
           0.2 * std::sin(t * t * 0.013);
  }
  const auto res = adf_test(x, 4);
  EXPECT_EQ(res.chosen_lag, 4u);
  EXPECT_NEAR(res.statistic, -11.948064062878245, 1e-8);
  EXPECT_TRUE(res.reject_unit_root);
}

TEST(Adf, RandomWalkAndWhiteNoiseRates) {
  Rng rng(2024);
  int walk_kept = 0;
  int noise_rejected = 0;
  for (int sim = 0; sim < 200; ++sim) {
    std::vector<double> walk(1000), noise(1000);
    double level = 0.0;
    for (std::size_t i = 0; i < 1000; ++i) {
      noise[i] = rng.normal();
      level += rng.normal();
      walk[i] = level;
    }
    const auto w = adf_test(walk, 10);
    EXPECT_EQ(w.reject_unit_root, w.p_value < 0.05);
    walk_kept += w.reject_unit_root ? 0 : 1;
    noise_rejected += adf_test(noise, 10).reject_unit_root ? 1 : 0;
  }
  EXPECT_GE(walk_kept, 180);
  EXPECT_GE(noise_rejected, 180);
}

TEST(Adf, Preconditions) {
  EXPECT_THROW(adf_test(std::vector<double>(100, 3.0), 5), std::invalid_argument);
  EXPECT_THROW(adf_test(std::vector<double>(12, 1.0), 5), std::invalid_argument);
}

TEST(Normalize, ZeroMeanUnitStdAndRoundTrip) {
  const auto n = zscore_normalize(returns_of({1, 2, 3}));
  EXPECT_NEAR(sample_mean(n.values), 0.0, 1e-12);
  EXPECT_NEAR(std::sqrt(sample_variance(n.values)), 1.0, 1e-12);

  Rng rng(3);
  std::vector<double> v(300);
  for (double& x : v) x = 0.01 * rng.normal() + 0.002;
  const auto once = zscore_normalize(returns_of(v));
  const auto twice = zscore_normalize(returns_of(once.values));
  for (std::size_t i = 0; i < v.size(); ++i) EXPECT_NEAR(twice.values[i], once.values[i], 1e-12);
  const auto back = denormalize(once);
  for (std::size_t i = 0; i < v.size(); ++i) EXPECT_NEAR(back.values[i], v[i], 1e-12);

  EXPECT_THROW(zscore_normalize(returns_of({2, 2, 2})), std::invalid_argument);
}

TEST(Split, ChronologicalPartition) {
  std::vector<double> v(1000);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<double>(i);
  const auto s = temporal_split(returns_of(v), {}, 31);
  EXPECT_EQ(s.train.size(), 700u);
  EXPECT_EQ(s.validation.size(), 150u);
  EXPECT_EQ(s.test.size(), 150u);
  std::vector<double> joined = s.train.values;
  joined.insert(joined.end(), s.validation.values.begin(), s.validation.values.end());
  joined.insert(joined.end(), s.test.values.begin(), s.test.values.end());
  EXPECT_EQ(joined, v);
  EXPECT_LT(s.train.values.back(), s.validation.values.front());
  EXPECT_LT(s.validation.values.back(), s.test.values.front());

  EXPECT_THROW(temporal_split(returns_of(std::vector<double>(10, 1.0)), {}, 31), std::invalid_argument);
  EXPECT_THROW(temporal_split(returns_of(v), {0.5, 0.2, 0.2}, 31), std::invalid_argument);
}

TEST(Split, NeverLeaksAcrossBoundaryForAnyLength) {
  for (std::size_t n = 300; n < 700; n += 37) {
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = static_cast<double>(i);
    const auto s = temporal_split(returns_of(v), {}, 31);
    EXPECT_EQ(s.train.size() + s.validation.size() + s.test.size(), n);
    EXPECT_LT(s.train.values.back(), s.validation.values.front());
  }
}

TEST(Windows, CountsAndContents) {
  std::vector<double> v(32);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<double>(i);
  const auto w = make_windows(v, 30, 1);
  EXPECT_EQ(w.size(), 3u);
  EXPECT_EQ(w.window(2)[0], 2.0);
  const auto one = make_windows(std::span(v).first(30), 30, 1);
  ASSERT_EQ(one.size(), 1u);
  EXPECT_EQ(concatenate_windows(one), std::vector<double>(v.begin(), v.begin() + 30));
  EXPECT_THROW(make_windows(std::span(v).first(29), 30, 1), std::invalid_argument);
}

TEST(Windows, CountMatchesClosedFormAndStride) {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t len = 1 + rng.index(40);
    const std::size_t n = len + rng.index(100);
    const std::size_t stride = 1 + rng.index(7);
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = static_cast<double>(i);
    const auto w = make_windows(v, len, stride);
    ASSERT_EQ(w.size(), (n - len) / stride + 1);
    for (std::size_t i = 0; i < w.size(); ++i) ASSERT_EQ(w.window(i)[0], static_cast<double>(i * stride));
  }
}

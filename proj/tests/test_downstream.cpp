#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "synfin/arima_garch.hpp"
#include "synfin/downstream.hpp"
#include "synfin/rng.hpp"

using namespace synfin;
using namespace synfin::downstream;

namespace {

Matrix random_psd(std::size_t n, Rng& rng, bool full_rank) {
  Matrix a(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(full_rank ? n + 2 : std::max<std::size_t>(1, n / 2)));
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = rng.normal();
  return a * a.transpose() / static_cast<double>(a.cols());
}

// Two-asset minimum variance on the simplex: unconstrained optimum clipped to [0, 1].
double two_asset_weight(const Matrix& s) {
  const double denom = s(0, 0) + s(1, 1) - 2.0 * s(0, 1);
  if (denom <= 0.0) return 0.5;
  return std::clamp((s(1, 1) - s(0, 1)) / denom, 0.0, 1.0);
}

double plain_sharpe(const std::vector<double>& r) {
  double m = 0.0;
  for (double v : r) m += v;
  m /= static_cast<double>(r.size());
  double ss = 0.0;
  for (double v : r) ss += (v - m) * (v - m);
  return m / std::sqrt(ss / static_cast<double>(r.size() - 1)) * std::sqrt(252.0);
}

}  // namespace

TEST(Simplex, ProjectionMatchesKnownCases) {
  EXPECT_TRUE(project_to_simplex(Vector::Constant(3, 1.0)).isApprox(Vector::Constant(3, 1.0 / 3.0)));
  Vector v(3);
  v << 2.0, 0.0, -1.0;
  Vector expect(3);
  expect << 1.0, 0.0, 0.0;
  EXPECT_TRUE(project_to_simplex(v).isApprox(expect));
  v << 0.6, 0.5, -3.0;
  expect << 0.55, 0.45, 0.0;
  EXPECT_TRUE(project_to_simplex(v).isApprox(expect, 1e-12));
}

TEST(Portfolio, DiagonalCovarianceClosedForm) {
  Matrix s = Matrix::Zero(2, 2);
  s(0, 0) = 1.0;
  s(1, 1) = 4.0;
  const auto sol = mean_variance_optimize(Vector::Zero(2), s);
  EXPECT_NEAR(sol.weights(0), 0.8, 1e-8);
  EXPECT_NEAR(sol.weights(1), 0.2, 1e-8);

  Matrix d = Matrix::Zero(4, 4);
  d.diagonal() << 0.5, 1.0, 2.0, 8.0;
  const auto w = mean_variance_optimize(Vector::Zero(4), d).weights;
  const double z = 1 / 0.5 + 1 / 1.0 + 1 / 2.0 + 1 / 8.0;
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(w(i), 1.0 / d(i, i) / z, 1e-8);
}

TEST(Portfolio, SingleAssetAndEqualAssets) {
  EXPECT_DOUBLE_EQ(mean_variance_optimize(Vector::Zero(1), Matrix::Constant(1, 1, 2.0)).weights(0), 1.0);
  const auto w = mean_variance_optimize(Vector::Zero(2), Matrix::Identity(2, 2)).weights;
  EXPECT_NEAR(w(0), 0.5, 1e-12);
  EXPECT_NEAR(w(1), 0.5, 1e-12);
}

TEST(Portfolio, TwoAssetClosedFormIncludingCorners) {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const Matrix s = random_psd(2, rng, true);
    const auto w = mean_variance_optimize(Vector::Zero(2), s).weights;
    EXPECT_NEAR(w(0), two_asset_weight(s), 1e-6) << s;
  }
}

TEST(Portfolio, SimplexAndOptimalityOverRandomCovariances) {
  Rng rng(6);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 2 + rng.index(7);
    const Matrix s = random_psd(n, rng, trial % 3 != 0);
    const auto sol = mean_variance_optimize(Vector::Zero(static_cast<Eigen::Index>(n)), s);
    ASSERT_GE(sol.weights.minCoeff(), 0.0);
    ASSERT_NEAR(sol.weights.sum(), 1.0, 1e-12);
    const Vector u = Vector::Constant(static_cast<Eigen::Index>(n), 1.0 / static_cast<double>(n));
    ASSERT_LE(sol.objective, u.dot(s * u) + 1e-12);
    const Vector g = s * sol.weights;
    const double floor = g.minCoeff();
    if (trial % 3 != 0) {
      // Full rank: converged, and assets held share the smallest marginal variance.
      ASSERT_LT(sol.kkt_residual, 1e-9);
      for (Eigen::Index i = 0; i < g.size(); ++i) {
        if (sol.weights(i) > 1e-6) ASSERT_NEAR(g(i), floor, 1e-6 * std::max(1.0, s.norm()));
      }
    } else {
      // Singular: the Frank-Wolfe gap bounds the distance to the optimal objective.
      ASSERT_LT(2.0 * (sol.weights.dot(g) - floor), 1e-4 * s.trace());
    }
  }
}

TEST(Portfolio, RejectsIndefiniteAndMismatchedInputs) {
  Matrix s(2, 2);
  s << 1.0, 2.0, 2.0, 1.0;
  EXPECT_THROW(mean_variance_optimize(Vector::Zero(2), s), std::invalid_argument);
  EXPECT_THROW(mean_variance_optimize(Vector::Zero(3), Matrix::Identity(2, 2)), std::invalid_argument);
  Matrix tiny = Matrix::Identity(2, 2);
  tiny(1, 1) = -1e-12;
  EXPECT_NO_THROW(mean_variance_optimize(Vector::Zero(2), tiny));
}

TEST(Sharpe, MatchesDirectComputationAndIsScaleInvariant) {
  const std::vector<double> a{0.01, 0.02, -0.005, 0.015, 0.003};
  const std::vector<double> b{0.002, -0.01, 0.007, 0.004, 0.012};
  const auto panel = make_panel({a, b});
  Vector w(2);
  w << 0.3, 0.7;
  std::vector<double> port(a.size());
  for (std::size_t t = 0; t < a.size(); ++t) port[t] = 0.3 * a[t] + 0.7 * b[t];
  EXPECT_NEAR(sharpe_ratio(panel, w), plain_sharpe(port), 1e-12);
  EXPECT_NEAR(plain_sharpe({0.01, 0.02, -0.005, 0.015}), 14.6969, 1e-3);

  auto scaled = panel;
  scaled.returns *= 7.0;
  EXPECT_NEAR(sharpe_ratio(scaled, w), sharpe_ratio(panel, w), 1e-12);
  EXPECT_THROW(sharpe_ratio(make_panel({{0.01, 0.01, 0.01}}), Vector::Ones(1)), std::invalid_argument);
}

TEST(Cosine, KnownValues) {
  Vector a(2), b(2);
  a << 1.0, 0.0;
  b << 0.0, 1.0;
  EXPECT_NEAR(cosine_similarity(a, b), 0.0, 1e-15);
  EXPECT_NEAR(cosine_similarity(a, a), 1.0, 1e-15);
  b << 1.0, 1.0;
  EXPECT_NEAR(cosine_similarity(a, b), 1.0 / std::sqrt(2.0), 1e-15);
  EXPECT_THROW(cosine_similarity(a, Vector::Zero(2)), std::invalid_argument);
}

TEST(PortfolioTask, IdenticalPanelsAgreeAndNoiseDoesNot) {
  Rng rng(8);
  std::vector<std::vector<double>> cols(5, std::vector<double>(400));
  for (std::size_t a = 0; a < cols.size(); ++a) {
    for (double& v : cols[a]) v = 0.0005 + 0.01 * (1.0 + static_cast<double>(a)) * rng.normal();
  }
  const auto real = make_panel(cols);
  const auto same = portfolio_task(real, real);
  EXPECT_NEAR(same.sharpe_diff, 0.0, 1e-12);
  EXPECT_NEAR(same.risk_deviation, 0.0, 1e-15);
  EXPECT_NEAR(same.weight_cosine, 1.0, 1e-12);

  // Reversed volatility ordering pushes weight to the other end.
  std::vector<std::vector<double>> rev(cols.rbegin(), cols.rend());
  const auto other = portfolio_task(real, make_panel(rev));
  EXPECT_LT(other.weight_cosine, 0.5);
  EXPECT_GT(other.risk_deviation, 0.0);
  EXPECT_THROW(portfolio_task(real, make_panel({cols[0]})), std::invalid_argument);
}

TEST(Panels, BootstrapAndReplicaShapes) {
  std::vector<double> s(500);
  std::iota(s.begin(), s.end(), 0.0);
  const auto p = bootstrap_panel(s, 4, 100, 3);
  EXPECT_EQ(p.assets(), 4u);
  EXPECT_EQ(p.periods(), 100u);
  for (Eigen::Index c = 0; c < 4; ++c) {
    for (Eigen::Index t = 1; t < 100; ++t) EXPECT_EQ(p.returns(t, c), p.returns(t - 1, c) + 1.0);
  }
  EXPECT_EQ(bootstrap_panel(s, 4, 100, 3).returns, p.returns);
  const auto r = replica_panel({s, s}, 50);
  EXPECT_EQ(r.periods(), 50u);
  EXPECT_THROW(replica_panel({s}, 600), std::invalid_argument);
  EXPECT_THROW(make_panel({{1.0, 2.0}, {1.0}}), std::invalid_argument);
  EXPECT_THROW(make_panel({{1.0, std::nan("")}}), std::invalid_argument);
}

TEST(Forecast, ScoresByHand) {
  const auto s = score_forecast({1.0, 2.0, 1.5, 1.5}, {1.0, 1.0, 2.0, 1.0});
  EXPECT_NEAR(s.rmse, std::sqrt((0.0 + 1.0 + 0.25 + 0.25) / 4.0), 1e-15);
  EXPECT_NEAR(s.mae, (0.0 + 1.0 + 0.5 + 0.5) / 4.0, 1e-15);
  // changes: (+,0) (-,+) (0,-): no hits
  EXPECT_NEAR(s.directional_accuracy, 0.0, 1e-15);
  EXPECT_THROW(score_forecast({1.0}, {1.0}), std::invalid_argument);
}

TEST(Forecast, CorrectModelBeatsMisscaledModel) {
  const auto g = ts::make_garch(0.02, {0.1}, {0.85});
  const auto synth = ts::simulate_path(ts::white_noise_mean(), g, 3000, 21).returns;
  const auto test = ts::simulate_path(ts::white_noise_mean(), g, 600, 22).returns;
  const auto good = volatility_forecast_task(synth, test);
  EXPECT_NEAR(good.garch.alpha[0] + good.garch.beta[0], 0.95, 0.05);
  EXPECT_EQ(good.forecast.size(), test.size());

  std::vector<double> wide(synth);
  for (double& v : wide) v *= 5.0;
  const auto bad = volatility_forecast_task(wide, test);
  EXPECT_LT(good.rmse, bad.rmse);
  EXPECT_GE(good.directional_accuracy, 0.0);
  EXPECT_LE(good.directional_accuracy, 1.0);
  EXPECT_THROW(volatility_forecast_task(std::vector<double>(100, 0.1), test), std::invalid_argument);
}

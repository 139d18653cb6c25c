#include <gtest/gtest.h>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>
#include <limits>
#include <numbers>

#include "gradcheck.hpp"
#include "synfin/arima_garch.hpp"
#include "synfin/vae.hpp"

using namespace synfin;
using namespace synfin::vae;

namespace {

// 500 windows of length 30 from a GARCH(1,1) path.
WindowSet toy_windows(std::uint64_t seed, std::size_t count = 500) {
  const auto g = ts::make_garch(0.05, {0.1}, {0.85});
  const auto path = ts::simulate_path(ts::white_noise_mean(), g, count + 29, seed);
  return make_windows(path.returns, 30, 1);
}

VaeConfig small_config(std::size_t epochs) {
  VaeConfig c;
  c.epochs = epochs;
  c.patience = epochs;
  return c;
}

}  // namespace

TEST(VaeKl, ClosedFormTrivialCases) {
  EXPECT_EQ(gaussian_kl(Vector::Zero(4), Vector::Zero(4)), 0.0);
  Vector mu = Vector::Zero(3);
  mu(0) = 1.0;
  EXPECT_DOUBLE_EQ(gaussian_kl(mu, Vector::Zero(3)), 0.5);
}

TEST(VaeKl, MatchesQuadrature) {
  const double m = 0.7, var = 2.0;
  auto log_q = [&](double z) { return -0.5 * std::log(2 * std::numbers::pi * var) - (z - m) * (z - m) / (2 * var); };
  auto log_p = [](double z) { return -0.5 * std::log(2 * std::numbers::pi) - z * z / 2; };
  const double inf = std::numeric_limits<double>::infinity();
  const double integral = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
      [&](double z) { return std::exp(log_q(z)) * (log_q(z) - log_p(z)); }, -inf, inf, 15, 1e-14);
  EXPECT_NEAR(gaussian_kl(Vector::Constant(1, m), Vector::Constant(1, std::log(var))), integral, 1e-6);
}

TEST(VaeModelShape, EncoderAndDecoderDimensions) {
  Rng rng(1);
  VaeConfig c;
  const VaeModel m(c, rng);
  EXPECT_EQ(m.encoder().output_size(), 2 * c.latent_dim);
  EXPECT_EQ(m.decoder().output_size(), c.window);
  EXPECT_EQ(m.encoder().layers().size(), 3u);
  EXPECT_EQ(m.encoder().layers()[0].output_size(), 64u);
  EXPECT_EQ(m.decoder().layers()[0].output_size(), 32u);
  const auto p = encode(m, std::vector<double>(30, 0.01));
  EXPECT_EQ(p.mu.cols(), 16);
  EXPECT_EQ(p.logvar.cols(), 16);
  EXPECT_THROW(encode(m, std::vector<double>(29, 0.0)), std::invalid_argument);
  EXPECT_EQ(latent10_preset().latent_dim, 10u);
}

TEST(VaeElbo, GradientMatchesFiniteDifferences) {
  Rng rng(2);
  VaeModel m(small_config(1), rng);
  const Matrix x = toy_windows(3, 40).data;
  Matrix eta(x.rows(), 16);
  for (Eigen::Index i = 0; i < eta.size(); ++i) eta.data()[i] = rng.normal();
  nn::zero_grad(m.params());
  elbo_with_noise(m, x, 1.3, eta, true);
  const auto res = oracle::check_gradients(
      m.params(), [&] { return -elbo_with_noise(m, x, 1.3, eta).total; }, rng, 200);
  EXPECT_LT(res.max_rel_error, 1e-4);
}

TEST(VaeElbo, SignConventionAndSeeding) {
  Rng rng(4);
  VaeModel m(small_config(1), rng);
  const Matrix x = toy_windows(5, 50).data;
  const auto a = elbo(m, x, 2.0, 9);
  EXPECT_NEAR(a.total, a.reconstruction - 2.0 * a.kl, 1e-12);
  EXPECT_LE(a.reconstruction, 0.0);
  EXPECT_GE(a.kl, 0.0);
  EXPECT_EQ(elbo(m, x, 2.0, 9).total, a.total);
}

TEST(VaeTrain, ElboImprovesAndKlStaysNonNegative) {
  const auto w = toy_windows(6);
  const auto val = toy_windows(7, 120);
  const auto res = train_vae(w, val, small_config(50));
  ASSERT_EQ(res.history.size(), 50u);
  EXPECT_GE(res.history.back().train.total, res.history.front().train.total);
  for (const auto& r : res.history) {
    ASSERT_GE(r.min_batch_kl, 0.0);
    ASSERT_TRUE(std::isfinite(r.validation.total));
  }
  EXPECT_GE(res.best_epoch, 1u);
}

TEST(VaeTrain, BetaZeroReducesReconstructionError) {
  const auto w = toy_windows(8);
  auto c = small_config(10);
  c.beta = 0.0;
  const auto res = train_vae(w, toy_windows(9, 120), c);
  for (std::size_t e = 1; e < res.history.size(); ++e) {
    EXPECT_GT(res.history[e].train.reconstruction, res.history[e - 1].train.reconstruction) << "epoch " << e + 1;
  }
}

TEST(VaeTrain, DeterministicForSeed) {
  const auto w = toy_windows(10, 150);
  const auto v = toy_windows(11, 60);
  const auto a = train_vae(w, v, small_config(5));
  const auto b = train_vae(w, v, small_config(5));
  EXPECT_EQ(nlohmann::json(a.model).dump(), nlohmann::json(b.model).dump());
  EXPECT_THROW(train_vae(toy_windows(12, 50), v, small_config(1)), std::invalid_argument);
}

TEST(VaeTrain, TrainedReconstructionBeatsUntrained) {
  const auto w = toy_windows(13);
  auto c = small_config(60);
  const auto trained = train_vae(w, toy_windows(14, 120), c);

  Rng rng(15);
  VaeModel untrained(c, rng);
  untrained.norm_stats = trained.model.norm_stats;
  const Matrix base = reconstruct(untrained, w.data);
  std::vector<double> base_mse;
  for (Eigen::Index i = 0; i < w.data.rows(); ++i) {
    base_mse.push_back((base.row(i) - w.data.row(i)).squaredNorm() / 30.0);
  }
  std::sort(base_mse.begin(), base_mse.end());
  const double p90 = base_mse[base_mse.size() * 9 / 10];
  const Matrix rec = reconstruct(trained.model, w.data.topRows(1));
  EXPECT_LT((rec.row(0) - w.data.row(0)).squaredNorm() / 30.0, p90);
}

TEST(VaeSample, DeterministicShapeAndZeroDecoder) {
  Rng rng(16);
  VaeModel m(small_config(1), rng);
  m.norm_stats = {0.001, 0.02};
  EXPECT_THROW(sample(m, 0, 1), std::invalid_argument);
  const auto a = sample(m, 7, 3);
  EXPECT_EQ(a.data, sample(m, 7, 3).data);
  EXPECT_EQ(a.size(), 7u);
  EXPECT_EQ(a.length(), 30u);
  EXPECT_EQ(a.provenance.model, "vae");
  for (nn::Param* p : m.decoder().params()) p->value.setZero();
  const auto flat = sample(m, 4, 5);
  for (Eigen::Index i = 0; i < flat.data.size(); ++i) EXPECT_DOUBLE_EQ(flat.data.data()[i], 0.001);
}

TEST(VaeCheckpoint, RoundTrip) {
  Rng rng(17);
  VaeModel m(small_config(1), rng);
  m.norm_stats = {0.5, 2.0};
  const auto restored = nlohmann::json::parse(nlohmann::json(m).dump()).get<VaeModel>();
  EXPECT_EQ(sample(m, 3, 8).data, sample(restored, 3, 8).data);
}

// Acceptance suite: one PASS/FAIL line per criterion. Pass criterion numbers
// as arguments to run a subset. Exit status is 0 only when every selected
// criterion passes.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "brute_force.hpp"
#include "gradcheck.hpp"
#include "synfin/arima_garch.hpp"
#include "synfin/downstream.hpp"
#include "synfin/harness.hpp"
#include "synfin/metrics.hpp"
#include "synfin/nn.hpp"
#include "synfin/privacy.hpp"
#include "synfin/rng.hpp"
#include "synfin/timegan.hpp"
#include "synfin/vae.hpp"

#ifndef SYNFIN_CONFIG_DIR
#define SYNFIN_CONFIG_DIR "configs"
#endif

using namespace synfin;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances and limits.
constexpr double kOracleTol = 1e-12;
constexpr double kHandTol = 1e-9;
constexpr double kGarchTol = 0.05;
constexpr double kAicSlack = 2.0;
constexpr double kGradTol = 1e-4;
constexpr std::size_t kGradPoints = 100;
constexpr double kKlTol = 1e-6;
constexpr double kPersistenceFloor = 0.9;
constexpr double kDiagonalTol = 1e-6;
constexpr double kSimplexTol = 1e-8;
constexpr double kNoiseMiaLow = 0.45, kNoiseMiaHigh = 0.55;
constexpr double kMemorizerMia = 0.9;

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  std::string name;
  double limit_seconds;
  std::function<Outcome()> run;
};

std::string fmt(double v, int precision = 6) {
  std::ostringstream s;
  s.precision(precision);
  s << v;
  return s.str();
}

std::vector<double> normals(std::size_t n, Rng& rng, double mean = 0.0, double sd = 1.0) {
  std::vector<double> v(n);
  for (double& x : v) x = mean + sd * rng.normal();
  return v;
}

Matrix normal_rows(std::size_t n, std::size_t t, std::uint64_t seed) {
  Rng rng(seed);
  Matrix m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(t));
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

WindowSet garch_windows(std::uint64_t seed, std::size_t count, std::size_t window) {
  const auto g = ts::make_garch(0.05, {0.1}, {0.85});
  const auto path = ts::simulate_path(ts::white_noise_mean(), g, count + window - 1, seed);
  return make_windows(path.returns, window, 1);
}

bool has_null(const json& j) {
  if (j.is_null()) return true;
  if (j.is_structured()) {
    for (const auto& v : j) {
      if (has_null(v)) return true;
    }
  }
  return false;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// ---- 1 ---------------------------------------------------------------------------

Outcome metric_oracles() {
  Rng rng(101);
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + rng.index(10), m = 1 + rng.index(10);
    const auto x = normals(n, rng);
    const auto y = normals(m, rng, 0.3, 1.5);
    const double sigma = 0.2 + 2.0 * rng.uniform();
    worst = std::max({worst, std::abs(metrics::mmd_rbf(x, y, sigma) - oracle::brute_mmd2(x, y, sigma)),
                      std::abs(metrics::energy_distance(x, y) - std::max(0.0, oracle::brute_energy(x, y))),
                      std::abs(metrics::wasserstein1(x, y) - oracle::brute_wasserstein1(x, y)),
                      std::abs(metrics::ks_test(x, y).statistic - oracle::brute_ks(x, y))});
  }
  return {worst <= kOracleTol, "50 samples, max |diff| " + fmt(worst)};
}

// ---- 2 ---------------------------------------------------------------------------

Outcome hand_values() {
  const double mmd = metrics::mmd_rbf(std::vector<double>{0.0}, std::vector<double>{1.0}, 1.0);
  const double ks = metrics::ks_test(std::vector<double>{1, 2, 3}, std::vector<double>{1.5, 2.5, 3.5}).statistic;
  double energy_err = 0.0;
  for (double c : {0.5, 1.0, 3.0, 10.0}) {
    energy_err = std::max(energy_err, std::abs(metrics::energy_distance(std::vector<double>{0.0}, std::vector<double>{c}) - 2.0 * c));
  }
  const double e1 = std::abs(mmd - (2.0 - 2.0 * std::exp(-0.5)));
  const double e2 = std::abs(ks - 1.0 / 3.0);
  return {e1 <= kHandTol && e2 <= kHandTol && energy_err <= kHandTol,
          "MMD2 " + fmt(mmd, 8) + ", KS " + fmt(ks, 8) + ", energy max err " + fmt(energy_err)};
}

// ---- 3 ---------------------------------------------------------------------------

Outcome garch_recovery() {
  const auto truth = ts::make_garch(0.05, {0.1}, {0.85});
  int ok = 0;
  std::string detail;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto path = ts::simulate_path(ts::white_noise_mean(), truth, 10000, 3000 + seed);
    const auto fit = ts::fit_garch(path.returns);
    const bool good = !fit.homoskedastic && std::abs(fit.omega - 0.05) <= kGarchTol &&
                      std::abs(fit.alpha[0] - 0.1) <= kGarchTol && std::abs(fit.beta[0] - 0.85) <= kGarchTol;
    ok += good ? 1 : 0;
    detail += " (" + fmt(fit.omega, 3) + "," + fmt(fit.alpha[0], 3) + "," + fmt(fit.beta[0], 3) + ")";
  }
  return {ok >= 4, std::to_string(ok) + "/5 seeds within 0.05:" + detail};
}

// ---- 4 ---------------------------------------------------------------------------

Outcome arima_white_noise() {
  const ts::ArimaGrid grid;
  int ok = 0;
  for (std::uint64_t s = 0; s < 50; ++s) {
    Rng rng(7000 + s);
    const auto y = normals(2000, rng);
    const auto best = ts::fit_arima(y, grid);
    const auto null = ts::fit_arima_order(y, {0, 0, 0}, grid.p_max + grid.d_max);
    if (best.order == ts::ArimaOrder{0, 0, 0} || null.aic - best.aic <= kAicSlack) ++ok;
  }
  return {ok >= 45, std::to_string(ok) + "/50 white-noise series select a null-equivalent order"};
}

// ---- 5 ---------------------------------------------------------------------------

Outcome gradients() {
  Rng rng(501);
  std::vector<std::pair<std::string, double>> errors;
  auto random_tensor = [&](Eigen::Index r, Eigen::Index c) {
    nn::Tensor2 t(r, c);
    for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = rng.normal();
    return t;
  };

  for (nn::Activation act : {nn::Activation::relu, nn::Activation::tanh, nn::Activation::sigmoid}) {
    nn::DenseStack net({6, 9, 4}, act, nn::Activation::linear, rng);
    const auto x = random_tensor(8, 6), target = random_tensor(8, 4);
    nn::DenseStack::Tape tape;
    nn::zero_grad(net.params());
    net.backward(nn::mse_loss(net.forward(x, tape), target).grad, tape);
    const auto r = oracle::check_gradients(net.params(), [&] { return nn::mse_loss(net.forward(x), target).value; }, rng,
                                           kGradPoints);
    errors.emplace_back("dense/" + nn::to_string(act), r.max_rel_error);
  }

  {
    nn::GruStack gru(3, 5, 1, rng);
    const nn::Sequence x{random_tensor(4, 3)};
    const nn::Sequence w{random_tensor(4, 5)};
    nn::ParamList params;
    gru.collect(params);
    auto loss = [&](const nn::Sequence& out) { return out[0].cwiseProduct(w[0]).sum(); };
    nn::GruStack::Tape tape;
    nn::zero_grad(params);
    loss(gru.forward(x, tape));
    gru.backward(w, tape);
    const auto r = oracle::check_gradients(params, [&] { return loss(gru.forward(x)); }, rng, kGradPoints);
    errors.emplace_back("gru step", r.max_rel_error);
  }

  {
    vae::VaeConfig c;
    vae::VaeModel m(c, rng);
    const Matrix x = garch_windows(502, 40, c.window).data;
    Matrix eta(x.rows(), static_cast<Eigen::Index>(c.latent_dim));
    for (Eigen::Index i = 0; i < eta.size(); ++i) eta.data()[i] = rng.normal();
    nn::zero_grad(m.params());
    vae::elbo_with_noise(m, x, 1.3, eta, true);
    const auto r = oracle::check_gradients(m.params(), [&] { return -vae::elbo_with_noise(m, x, 1.3, eta).total; }, rng,
                                           kGradPoints);
    errors.emplace_back("vae", r.max_rel_error);
  }

  {
    timegan::TimeGanConfig c;
    c.window = 6;
    c.hidden = 6;
    c.lambda_sup = 0.7;
    c.lambda_adv = 1.3;
    timegan::TimeGanModel m(c, rng);
    const auto x = timegan::uniform_noise(6, 5, rng);
    const auto z = timegan::uniform_noise(6, 5, rng);
    struct Case {
      const char* name;
      std::function<double(bool)> loss;
      nn::ParamList params;
    };
    const std::vector<Case> cases{
        {"timegan/embedder+recovery", [&](bool g) { return timegan::recon_loss(m, x, g); }, m.autoencoder_params()},
        {"timegan/supervisor", [&](bool g) { return timegan::supervised_loss(m, x, g); }, m.supervisor.params()},
        {"timegan/generator", [&](bool g) { return timegan::generator_loss(m, x, z, g); }, m.generator_params()},
        {"timegan/discriminator", [&](bool g) { return timegan::discriminator_loss(m, x, z, g); }, m.discriminator.params()},
        {"timegan/embedder objective", [&](bool g) { return timegan::embedder_loss(m, x, g); }, m.autoencoder_params()},
    };
    for (const auto& cs : cases) {
      nn::zero_grad(m.all_params());
      cs.loss(true);
      const auto r = oracle::check_gradients(cs.params, [&] { return cs.loss(false); }, rng, kGradPoints);
      errors.emplace_back(cs.name, r.max_rel_error);
    }
  }

  double worst = 0.0;
  std::string worst_name;
  for (const auto& [name, e] : errors) {
    if (e >= worst) {
      worst = e;
      worst_name = name;
    }
  }
  return {worst < kGradTol, std::to_string(errors.size()) + " checks, worst rel err " + fmt(worst) + " (" + worst_name + ")"};
}

// ---- 6 ---------------------------------------------------------------------------

Outcome vae_analytics() {
  const double inf = std::numeric_limits<double>::infinity();
  auto kl_1d = [&](double m, double var) {
    auto log_q = [&](double z) { return -0.5 * std::log(2 * std::numbers::pi * var) - (z - m) * (z - m) / (2 * var); };
    auto log_p = [](double z) { return -0.5 * std::log(2 * std::numbers::pi) - z * z / 2; };
    return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
        [&](double z) {
          const double q = log_q(z);
          return std::exp(q) * (q - log_p(z));
        },
        -inf, inf, 15, 1e-14);
  };
  Rng rng(601);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::Index d = 1 + static_cast<Eigen::Index>(rng.index(4));
    Vector mu(d), logvar(d);
    double oracle_kl = 0.0;
    for (Eigen::Index i = 0; i < d; ++i) {
      mu(i) = 2.0 * rng.normal();
      logvar(i) = -2.0 + 3.0 * rng.uniform();
      oracle_kl += kl_1d(mu(i), std::exp(logvar(i)));
    }
    worst = std::max(worst, std::abs(vae::gaussian_kl(mu, logvar) - oracle_kl));
  }

  vae::VaeConfig c;
  c.epochs = 50;
  c.patience = 50;
  const auto res = vae::train_vae(garch_windows(602, 500, c.window), garch_windows(603, 120, c.window), c);
  double min_kl = inf;
  for (const auto& r : res.history) min_kl = std::min({min_kl, r.min_batch_kl, r.train.kl, r.validation.kl});
  const bool ran = res.history.size() == 50;
  return {worst <= kKlTol && min_kl >= 0.0 && ran,
          "KL vs quadrature max err " + fmt(worst) + "; " + std::to_string(res.history.size()) + " epochs, min KL " + fmt(min_kl)};
}

// ---- 7 ---------------------------------------------------------------------------

Outcome timegan_ordering() {
  const auto c = harness::load_config(fs::path(SYNFIN_CONFIG_DIR) / "desk_ablation.json");
  const auto data = harness::prepare_data(c);
  const auto r = harness::run_ablations(c, data, {"timegan"});
  std::vector<double> full, nosup;
  std::string per_seed;
  for (const auto& row : r.json.at("rows")) {
    const auto variant = row.at("variant").get<std::string>();
    auto& dst = variant == "none" ? full : nosup;
    for (const auto& e : row.at("per_seed")) {
      if (e.at("status") == "ok") dst.push_back(e.at("window_mmd").get<double>());
    }
  }
  if (full.empty() || nosup.empty() || !r.ok()) return {false, "ablation runs failed: " + std::to_string(r.failed_cells)};
  for (std::size_t i = 0; i < std::min(full.size(), nosup.size()); ++i) per_seed += " " + fmt(full[i], 3) + "/" + fmt(nosup[i], 3);
  const double mf = median(full), mn = median(nosup);
  return {mf <= mn, "median window MMD full " + fmt(mf) + " vs no-supervised " + fmt(mn) + "; per seed" + per_seed};
}

// ---- 8 ---------------------------------------------------------------------------

Outcome stylized_facts() {
  int ok = 0;
  std::string detail;
  for (std::uint64_t s = 1; s <= 5; ++s) {
    harness::TrainConfig c = harness::config_from_json(json::object());
    c.benchmark.seed = 8000 + s;
    c.models = {"arima_garch"};
    const auto data = harness::prepare_data(c);
    const json cp = harness::fit_model("arima_garch", s, c, data);
    const auto garch = cp.at("garch").get<ts::GarchFit>();
    const double persistence = garch.homoskedastic ? 0.0 : garch.persistence();
    const auto synth = harness::generate_series(cp, data.returns.size(), derive_seed(s, 1001));
    const auto rho = metrics::acf(synth, 10, true).rho;
    const bool good = persistence >= kPersistenceFloor && rho[1] > rho[10] && rho[10] > 0.0;
    ok += good ? 1 : 0;
    detail += " [a+b " + fmt(persistence, 3) + " rho1 " + fmt(rho[1], 3) + " rho10 " + fmt(rho[10], 3) + "]";
  }
  return {ok >= 4, std::to_string(ok) + "/5 seeds:" + detail};
}

// ---- 9 ---------------------------------------------------------------------------

Outcome portfolio_solver() {
  Rng rng(901);
  double diag_err = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto n = static_cast<Eigen::Index>(2 + rng.index(9));
    Matrix s = Matrix::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) s(i, i) = 0.05 + 2.0 * rng.uniform();
    const Vector w = downstream::mean_variance_optimize(Vector::Zero(n), s).weights;
    const Vector inv = s.diagonal().cwiseInverse();
    diag_err = std::max(diag_err, (w - inv / inv.sum()).cwiseAbs().maxCoeff());
  }
  double simplex_err = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto n = static_cast<Eigen::Index>(2 + rng.index(9));
    const auto k = static_cast<Eigen::Index>(1 + rng.index(static_cast<std::size_t>(n) + 3));
    Matrix a(n, k);
    for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = rng.normal();
    const Matrix s = a * a.transpose() / static_cast<double>(k);
    const Vector w = downstream::mean_variance_optimize(Vector::Zero(n), s).weights;
    simplex_err = std::max({simplex_err, std::abs(w.sum() - 1.0), std::max(0.0, -w.minCoeff())});
  }
  return {diag_err <= kDiagonalTol && simplex_err <= kSimplexTol,
          "diagonal max err " + fmt(diag_err) + "; simplex max violation " + fmt(simplex_err)};
}

// ---- 10 --------------------------------------------------------------------------

Outcome privacy_calibration() {
  const Matrix real = normal_rows(400, 10, 1001);
  const auto copies = privacy::nndt(real, real);
  auto memorizer = [](const Matrix& members, std::span<const std::size_t>, std::uint64_t) {
    return privacy::TrainedGenerator{members, {}};
  };
  double noise_sum = 0.0;
  for (std::uint64_t trial = 0; trial < 10; ++trial) {
    noise_sum += privacy::mia(memorizer, real, {.n_shadow = 2, .noise_features = true, .seed = 1100 + trial}).attack_accuracy;
  }
  const double noise = noise_sum / 10.0;
  const double mem = privacy::mia(memorizer, real, {.n_shadow = 2, .seed = 1200}).attack_accuracy;
  return {copies.pct_below_tau == 100.0 && noise >= kNoiseMiaLow && noise <= kNoiseMiaHigh && mem > kMemorizerMia,
          "NNDT copies " + fmt(copies.pct_below_tau) + "% below tau; noise MIA mean " + fmt(noise, 4) + "; memorizer MIA " + fmt(mem, 4)};
}

// ---- 11, 12 ----------------------------------------------------------------------

struct SmokeRun {
  harness::EvaluationReport report;
  double seconds = 0.0;
};

const std::vector<SmokeRun>& smoke_runs() {
  static std::vector<SmokeRun> runs;
  if (runs.empty()) {
    const auto c = harness::load_config(fs::path(SYNFIN_CONFIG_DIR) / "reduced.json");
    for (int i = 0; i < 2; ++i) {
      const auto t0 = std::chrono::steady_clock::now();
      SmokeRun r{harness::run_protocol(c), 0.0};
      r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      runs.push_back(std::move(r));
    }
  }
  return runs;
}

Outcome determinism() {
  const auto& runs = smoke_runs();
  const std::string a = runs[0].report.json.dump(), b = runs[1].report.json.dump();
  return {a == b, "reports " + std::string(a == b ? "byte-identical" : "differ") + " (" + std::to_string(a.size()) + " bytes), runs " +
                      fmt(runs[0].seconds, 4) + " s and " + fmt(runs[1].seconds, 4) + " s"};
}

Outcome smoke() {
  const auto& run = smoke_runs().front();
  const json& r = run.report.json;
  const std::vector<std::string> sections{"training", "synthetic", "window_mmd", "distances", "descriptive", "acf",
                                          "psd", "stylized", "pca", "downstream", "privacy"};
  std::vector<std::string> problems;
  std::set<std::string> models;
  for (const auto& cell : r.at("cells")) {
    const std::string tag = cell.at("model").get<std::string>() + "/" + cell.at("seed").dump();
    models.insert(cell.at("model").get<std::string>());
    if (cell.at("status") != "ok") problems.push_back(tag + " " + cell.at("errors").dump());
    for (const auto& s : sections) {
      if (!cell.contains(s)) problems.push_back(tag + " missing " + s);
    }
  }
  if (models.size() != 3) problems.push_back("expected three models");
  if (has_null(r)) problems.push_back("report contains null fields");
  const fs::path dir = fs::temp_directory_path() / "synfin_acceptance_plots";
  fs::remove_all(dir);
  const auto files = harness::emit_plots(r, dir);
  if (files.size() != 6) problems.push_back(std::to_string(files.size()) + " of 6 plot files");
  fs::remove_all(dir);
  std::string detail = fmt(run.seconds, 4) + " s";
  for (const auto& p : problems) detail += "; " + p;
  return {problems.empty(), detail};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria{
      {1, "metric oracle equivalence", 10, metric_oracles},
      {2, "hand values", 10, hand_values},
      {3, "GARCH recovery", 120, garch_recovery},
      {4, "ARIMA selection on white noise", 300, arima_white_noise},
      {5, "gradient correctness", 120, gradients},
      {6, "VAE analytics", 300, vae_analytics},
      {7, "TimeGAN supervised-loss ordering", 3600, timegan_ordering},
      {8, "stylized facts of ARIMA-GARCH output", 60, stylized_facts},
      {9, "portfolio solver", 60, portfolio_solver},
      {10, "privacy calibration", 600, privacy_calibration},
      {11, "protocol determinism", 1800, determinism},
      {12, "end-to-end smoke", 900, smoke},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::stoi(argv[i]));

  int failures = 0;
  for (const auto& c : criteria) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    // Both smoke criteria share two runs; each is charged for the runs it needs.
    if (c.id == 11) seconds = smoke_runs()[0].seconds + smoke_runs()[1].seconds;
    if (c.id == 12) seconds = smoke_runs()[0].seconds;
    const bool in_time = seconds < c.limit_seconds;
    const bool pass = o.pass && in_time;
    failures += pass ? 0 : 1;
    std::printf("criterion %2d %s  %s: %s [%.1f s, limit %.0f s%s]\n", c.id, pass ? "PASS" : "FAIL", c.name.c_str(),
                o.detail.c_str(), seconds, c.limit_seconds, in_time ? "" : ", over time");
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}

#include "synfin/harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <set>
#include <sstream>
#include <stdexcept>

#include "synfin/downstream.hpp"
#include "synfin/privacy.hpp"
#include "synfin/rng.hpp"

namespace synfin::harness {

using nlohmann::json;

namespace {

// ---- config parsing --------------------------------------------------------------

void reject_unknown(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw std::invalid_argument("config: '" + where + "' must be an object");
  const std::set<std::string> keys(allowed.begin(), allowed.end());
  for (const auto& [k, v] : j.items()) {
    if (!keys.count(k)) throw std::invalid_argument("config: unknown key '" + where + (where.empty() ? "" : ".") + k + "'");
  }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) j.at(key).get_to(out);
}

std::string estimator_name(metrics::MmdEstimator e) { return e == metrics::MmdEstimator::biased ? "biased" : "unbiased"; }

metrics::MmdEstimator estimator_from(const std::string& s) {
  if (s == "biased") return metrics::MmdEstimator::biased;
  if (s == "unbiased") return metrics::MmdEstimator::unbiased;
  throw std::invalid_argument("config: mmd_estimator must be 'biased' or 'unbiased'");
}

// ---- small numeric helpers -------------------------------------------------------

Matrix zscore(const Matrix& m, const NormStats& s) { return ((m.array() - s.mean) / s.stddev).matrix(); }

WindowSet with_data(Matrix data, std::size_t stride = 1) {
  WindowSet w;
  w.data = std::move(data);
  w.stride = stride;
  return w;
}

std::vector<double> concat_rows(const Matrix& rows, std::size_t count, std::size_t length) {
  std::vector<double> out;
  out.reserve(count * static_cast<std::size_t>(rows.cols()));
  for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(count); ++i) {
    for (Eigen::Index t = 0; t < rows.cols(); ++t) out.push_back(rows(i, t));
  }
  out.resize(length);
  return out;
}

std::size_t ceil_div(std::size_t a, std::size_t b) { return (a + b - 1) / b; }

json matrix_rows(const Matrix& m) {
  json out = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(i, c));
    out.push_back(std::move(row));
  }
  return out;
}

json test_json(const ts::TestResult& t) { return {{"statistic", t.statistic}, {"p_value", t.p_value}, {"lags", t.lags}}; }

// ---- generators ------------------------------------------------------------------

/// A trained model as the harness sees it.
struct Generator {
  json training;
  json checkpoint;
  bool series_native = false;  // ARIMA-GARCH simulates series; deep models emit windows
  std::function<std::vector<double>(std::size_t, std::uint64_t)> series;
  std::function<Matrix(std::size_t, std::uint64_t)> windows;  // return units, one row each
  std::function<Matrix(const Matrix&)> reconstruct;           // empty when undefined
  std::optional<vae::VaeModel> vae_model;
  std::vector<std::string> warnings;
};

Generator arima_generator(const ts::ArimaFit& arima, const ts::GarchFit& garch, std::size_t window) {
  Generator g;
  g.series_native = true;
  g.series = [arima, garch](std::size_t n, std::uint64_t seed) { return ts::simulate(arima, garch, n, seed).values; };
  g.windows = [arima, garch, window](std::size_t n, std::uint64_t seed) {
    const auto s = ts::simulate(arima, garch, n * window, seed).values;
    Matrix m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(window));
    for (std::size_t i = 0; i < n * window; ++i) m.data()[i] = s[i];
    return m;
  };
  g.checkpoint = {{"model", "arima_garch"}, {"window", window}, {"arima", arima}, {"garch", garch}};
  return g;
}

void attach_window_series(Generator& g, std::size_t window) {
  g.series = [w = g.windows, window](std::size_t n, std::uint64_t seed) {
    const std::size_t rows = ceil_div(n, window);
    return concat_rows(w(rows, seed), rows, n);
  };
}

Generator vae_generator(vae::VaeModel model) {
  Generator g;
  g.windows = [model](std::size_t n, std::uint64_t seed) { return vae::sample(model, n, seed).data; };
  g.reconstruct = [model](const Matrix& rows) { return vae::reconstruct(model, rows); };
  attach_window_series(g, model.window());
  g.checkpoint = {{"model", "vae"}, {"window", model.window()}, {"vae", model}};
  g.vae_model = std::move(model);
  return g;
}

Generator timegan_generator(timegan::TimeGanModel model) {
  Generator g;
  g.windows = [model](std::size_t n, std::uint64_t seed) { return timegan::sample(model, n, seed).data; };
  g.reconstruct = [model](const Matrix& rows) { return timegan::reconstruct(model, rows); };
  attach_window_series(g, model.window);
  g.checkpoint = {{"model", "timegan"}, {"window", model.window}, {"timegan", model}};
  return g;
}

ts::ArimaGrid arima_grid(const TrainConfig& c) { return c.arima_garch.grid; }

Generator train_arima_garch(std::span<const double> train, const TrainConfig& c, const ts::ArimaFit* fixed_order = nullptr) {
  const ts::ArimaFit arima = fixed_order ? *fixed_order : ts::fit_arima(train, arima_grid(c));
  const ts::GarchFit garch = ts::fit_garch(arima.residuals, c.arima_garch.garch);
  const auto diag = ts::diagnose(ts::standardized_residuals(arima.residuals, garch), 20);
  Generator g = arima_generator(arima, garch, c.window);
  g.training = {{"arima", arima},
                {"garch", garch},
                {"persistence", garch.persistence()},
                {"diagnostics", {{"ljung_box", test_json(diag.ljung_box)}, {"arch_lm", test_json(diag.arch_lm)}}}};
  return g;
}

Generator train_vae_model(const WindowSet& train, const WindowSet& val, vae::VaeConfig cfg, std::uint64_t seed,
                          const NormStats& stats, std::size_t window) {
  cfg.window = window;
  cfg.seed = seed;
  auto res = vae::train_vae(train, val, cfg, stats);
  json training = {{"epochs_run", res.history.size()},
                   {"best_epoch", res.best_epoch},
                   {"stopped_early", res.stopped_early},
                   {"latent_dim", cfg.latent_dim},
                   {"beta", cfg.beta}};
  if (res.best_epoch > 0) {
    const auto& best = res.history[res.best_epoch - 1];
    training["best_validation"] = {{"elbo", best.validation.total},
                                   {"reconstruction", best.validation.reconstruction},
                                   {"kl", best.validation.kl}};
  }
  Generator g = vae_generator(std::move(res.model));
  g.training = std::move(training);
  return g;
}

Generator train_timegan_model(const WindowSet& train, const WindowSet& val, timegan::TimeGanConfig cfg,
                              std::uint64_t seed, const NormStats& stats, std::size_t window) {
  cfg.window = window;
  cfg.seed = seed;
  auto res = timegan::train_timegan(train, val, cfg, stats);
  const auto effective = timegan::apply_ablation(cfg, cfg.ablation);
  std::size_t pre = 0, joint = 0;
  for (const auto& e : res.history) (e.phase == "pretrain" ? pre : joint) += 1;
  json training = {{"ablation", timegan::to_string(cfg.ablation)},
                   {"lambda_sup", effective.lambda_sup},
                   {"lambda_recon", effective.lambda_recon},
                   {"lambda_adv", effective.lambda_adv},
                   {"hidden", effective.hidden},
                   {"layers", effective.layers},
                   {"pretrain_epochs", pre},
                   {"joint_epochs_run", joint},
                   {"best_epoch", res.best_epoch},
                   {"stopped_early", res.stopped_early}};
  if (!res.history.empty()) {
    const auto& last = res.history.back();
    training["final_losses"] = {{"recon", last.losses.recon},
                                {"supervised", last.losses.supervised},
                                {"generator_adv", last.losses.generator_adv},
                                {"discriminator", last.losses.discriminator},
                                {"discriminator_accuracy", last.discriminator_accuracy}};
  }
  Generator g = timegan_generator(std::move(res.model));
  g.training = std::move(training);
  g.warnings = std::move(res.warnings);
  return g;
}

Generator train_generator(const std::string& model, std::uint64_t seed, const TrainConfig& c, const PreparedData& d) {
  if (model == "arima_garch") return train_arima_garch(d.split.train.values, c);
  if (model == "vae") return train_vae_model(d.train, d.validation, c.vae, seed, d.stats, c.window);
  if (model == "timegan") return train_timegan_model(d.train, d.validation, c.timegan, seed, d.stats, c.window);
  throw std::invalid_argument("unknown model '" + model + "'");
}

// Size matching: same series length as the real return series for every model;
// same number of windows as the real series yields for window models.
struct SyntheticData {
  std::vector<double> series;
  WindowSet windows;
};

SyntheticData size_matched(const Generator& g, const TrainConfig& c, const PreparedData& d, std::uint64_t seed) {
  const std::size_t n = d.returns.size();
  const std::size_t n_windows = window_count(n, c.window, c.stride);
  SyntheticData out;
  if (g.series_native) {
    out.series = g.series(n, seed);
    out.windows = make_windows(out.series, c.window, c.stride);
    return out;
  }
  const std::size_t series_rows = ceil_div(n, c.window);
  const Matrix rows = g.windows(std::max(n_windows, series_rows), seed);
  out.series = concat_rows(rows, series_rows, n);
  out.windows = with_data(rows.topRows(static_cast<Eigen::Index>(n_windows)), c.stride);
  return out;
}

// ---- cell evaluation -------------------------------------------------------------

json window_mmd_json(const Matrix& real_z, const Matrix& synth_z, const MetricConfig& m) {
  const double sigma = metrics::median_heuristic_sigma(real_z, synth_z, m.mmd_max_points);
  return {{"value", metrics::mmd_rbf(real_z, synth_z, sigma, m.mmd_estimator)},
          {"sigma", sigma},
          {"bandwidth", "median heuristic"},
          {"estimator", estimator_name(m.mmd_estimator)},
          {"space", "windows z-scored with training statistics"},
          {"n_real", real_z.rows()},
          {"n_synth", synth_z.rows()}};
}

void metrics_stage(json& cell, json& plots, const SyntheticData& s, const Generator& g, const TrainConfig& c,
                   const PreparedData& d) {
  const auto& m = c.metrics;
  const std::vector<double>& real = d.split.test.values;
  const Matrix real_z = zscore(d.test.data, d.stats);
  const Matrix synth_z = zscore(s.windows.data, d.stats);

  cell["window_mmd"] = window_mmd_json(real_z, synth_z, m);
  json dist = metrics::distances(real, s.series);
  dist["parameters"] = {{"space", "1-D returns"}, {"bandwidth", "median heuristic"}, {"ks_p", "asymptotic Kolmogorov"}};
  cell["distances"] = std::move(dist);
  cell["descriptive"] = {{"real_test", metrics::descriptive(real)}, {"synthetic", metrics::descriptive(s.series)}};

  const auto acf_r = metrics::acf(real, m.acf_lags), acf_s = metrics::acf(s.series, m.acf_lags);
  const auto sq_r = metrics::acf(real, m.acf_lags, true), sq_s = metrics::acf(s.series, m.acf_lags, true);
  cell["acf"] = {{"lags", m.acf_lags},
                 {"returns_real", acf_r.rho},
                 {"returns_synth", acf_s.rho},
                 {"squared_real", sq_r.rho},
                 {"squared_synth", sq_s.rho},
                 {"l1_distance", metrics::acf_l1_distance(real, s.series, m.acf_lags)}};

  const std::size_t seg = std::min({m.psd_segment, real.size(), s.series.size()});
  if (seg != m.psd_segment) cell["warnings"].push_back("psd segment shortened to " + std::to_string(seg));
  const auto psd_r = metrics::welch_psd(real, seg, m.psd_overlap);
  const auto psd_s = metrics::welch_psd(s.series, seg, m.psd_overlap);
  cell["psd"] = {{"segment_length", seg},
                 {"overlap", m.psd_overlap},
                 {"window", "hann"},
                 {"segments_real", psd_r.segments},
                 {"segments_synth", psd_s.segments},
                 {"frequency", psd_r.frequency},
                 {"power_real", psd_r.power},
                 {"power_synth", psd_s.power}};

  const auto rv_r = metrics::rolling_volatility(real, m.rolling_window);
  const auto rv_s = metrics::rolling_volatility(s.series, m.rolling_window);
  cell["stylized"] = {{"leverage_lags", m.leverage_lags},
                      {"leverage_real", metrics::leverage_corr(real, m.leverage_lags)},
                      {"leverage_synth", metrics::leverage_corr(s.series, m.leverage_lags)},
                      {"rolling_window", m.rolling_window},
                      {"rolling_vol_mean_real", sample_mean(rv_r)},
                      {"rolling_vol_mean_synth", sample_mean(rv_s)}};

  const auto pca = metrics::pca_project(d.test, s.windows, 2);
  cell["pca"] = {{"explained_variance_ratio", pca.explained_variance_ratio}, {"basis", "real test windows"}};
  const auto qq = metrics::qq_quantiles(real, s.series, m.qq_points);

  plots["returns"] = {{"real", real}, {"synth", s.series}};
  plots["pca"] = {{"real_scores", matrix_rows(pca.real_scores)}, {"synth_scores", matrix_rows(pca.synth_scores)}};
  plots["qq"] = {{"probability", qq.probability}, {"real", qq.real}, {"synth", qq.synth}};
  plots["acf"] = cell["acf"];
  plots["rolling_volatility"] = {{"window", m.rolling_window}, {"real", rv_r}, {"synth", rv_s}};
  if (g.vae_model) {
    if (g.vae_model->latent_dim() < 2) {
      cell["warnings"].push_back("latent trajectory needs at least 2 latent dimensions");
    } else {
      const auto post = vae::encode(*g.vae_model, d.test.data);
      plots["latent_trajectory"] = matrix_rows(post.mu.leftCols(2));
    }
  }
}

void downstream_stage(json& cell, const Generator& g, const SyntheticData& s, const TrainConfig& c, const PreparedData& d,
                      std::uint64_t seed) {
  const auto& cfg = c.downstream;
  const std::vector<double>& real = d.split.test.values;
  const std::size_t length = std::min(cfg.portfolio_length, real.size());
  const auto real_panel = downstream::bootstrap_panel(real, cfg.portfolio_assets, length, derive_seed(seed, 3000));
  std::vector<std::vector<double>> replicas;
  for (std::size_t k = 0; k < cfg.portfolio_assets; ++k) replicas.push_back(g.series(length, derive_seed(seed, 2000 + k)));
  const auto synth_panel = downstream::replica_panel(replicas, length);
  json portfolio = downstream::portfolio_task(real_panel, synth_panel);
  portfolio["panel"] = {{"assets", cfg.portfolio_assets},
                        {"periods", length},
                        {"real", "contiguous bootstrap blocks of the test split"},
                        {"synthetic", "independent synthetic replicas of the same model"},
                        {"sharpe", "zero risk-free rate, annualized by sqrt(252)"}};
  json vol = downstream::volatility_forecast_task(s.series, real);
  cell["downstream"] = {{"portfolio", std::move(portfolio)}, {"volatility", std::move(vol)}};
}

privacy::TrainFn mia_train_fn(const std::string& model, const TrainConfig& c, const WindowSet& val_z) {
  const NormStats unit{0.0, 1.0};
  const std::size_t window = c.window;
  auto finish = [](const Generator& g, std::size_t n, std::uint64_t seed) {
    privacy::TrainedGenerator t;
    t.synthetic = g.windows(n, derive_seed(seed, 1));
    if (g.reconstruct) {
      t.reconstruction_error = [rec = g.reconstruct](const Matrix& rows) -> Vector {
        return (rows - rec(rows)).rowwise().squaredNorm() / static_cast<double>(rows.cols());
      };
    }
    return t;
  };
  if (model == "arima_garch") {
    return [c, finish](const Matrix& members, std::span<const std::size_t>, std::uint64_t seed) {
      const std::vector<double> series(members.data(), members.data() + members.size());
      return finish(train_arima_garch(series, c), static_cast<std::size_t>(members.rows()), seed);
    };
  }
  if (model == "vae") {
    return [c, val_z, unit, window, finish](const Matrix& members, std::span<const std::size_t>, std::uint64_t seed) {
      return finish(train_vae_model(with_data(members), val_z, c.vae, seed, unit, window),
                    static_cast<std::size_t>(members.rows()), seed);
    };
  }
  return [c, val_z, unit, window, finish](const Matrix& members, std::span<const std::size_t>, std::uint64_t seed) {
    return finish(train_timegan_model(with_data(members), val_z, c.timegan, seed, unit, window),
                  static_cast<std::size_t>(members.rows()), seed);
  };
}

void privacy_stage(json& cell, const std::string& model, const SyntheticData& s, const TrainConfig& c,
                   const PreparedData& d, std::uint64_t seed) {
  const auto& cfg = c.privacy;
  const Matrix train_z = zscore(d.train.data, d.stats);
  json nn = privacy::nndt(train_z, zscore(s.windows.data, d.stats), cfg.tau);
  nn["reference"] = "training windows";

  Matrix dataset = train_z;
  if (cfg.max_windows > 0 && static_cast<std::size_t>(train_z.rows()) > cfg.max_windows) {
    dataset.resize(static_cast<Eigen::Index>(cfg.max_windows), train_z.cols());
    for (std::size_t i = 0; i < cfg.max_windows; ++i) {
      dataset.row(static_cast<Eigen::Index>(i)) = train_z.row(static_cast<Eigen::Index>(i * static_cast<std::size_t>(train_z.rows()) / cfg.max_windows));
    }
  }
  const WindowSet val_z = with_data(zscore(d.validation.data, d.stats));
  privacy::MiaConfig mc;
  mc.n_shadow = cfg.n_shadow;
  mc.k_neighbors = cfg.k_neighbors;
  mc.seed = derive_seed(cfg.seed, seed);
  json mia = privacy::mia(mia_train_fn(model, c, val_z), dataset, mc);
  mia["dataset_windows"] = dataset.rows();
  cell["privacy"] = {{"nndt", std::move(nn)}, {"mia", std::move(mia)}};
}

json run_cell(const std::string& model, std::uint64_t seed, const TrainConfig& c, const PreparedData& d,
              const Stages& stages, bool keep_plots, bool& failed) {
  json cell = {{"model", model}, {"seed", seed}, {"warnings", json::array()}, {"errors", json::object()}};
  json plots = json::object();
  std::optional<Generator> g;
  std::optional<SyntheticData> synth;
  try {
    g = train_generator(model, seed, c, d);
    cell["training"] = g->training;
    for (const auto& w : g->warnings) cell["warnings"].push_back(w);
    synth = size_matched(*g, c, d, derive_seed(seed, 1001));
    cell["synthetic"] = {{"series_length", synth->series.size()}, {"windows", synth->windows.size()}};
  } catch (const std::exception& e) {
    cell["errors"]["training"] = e.what();
  }
  auto stage = [&](const char* name, bool enabled, const std::function<void()>& fn) {
    if (!enabled || !synth) return;
    try {
      fn();
    } catch (const std::exception& e) {
      cell["errors"][name] = e.what();
    }
  };
  stage("metrics", stages.metrics, [&] { metrics_stage(cell, plots, *synth, *g, c, d); });
  stage("downstream", stages.downstream && c.downstream.enabled, [&] { downstream_stage(cell, *g, *synth, c, d, seed); });
  stage("privacy", stages.privacy && c.privacy.enabled, [&] { privacy_stage(cell, model, *synth, c, d, seed); });
  failed = !cell["errors"].empty();
  cell["status"] = failed ? "failed" : "ok";
  if (keep_plots && !plots.empty()) cell["plot_data"] = std::move(plots);
  return cell;
}

const std::vector<std::string> kAggregated{
    "/window_mmd/value",
    "/distances/mmd2",
    "/distances/ks_statistic",
    "/distances/energy",
    "/distances/wasserstein1",
    "/acf/l1_distance",
    "/descriptive/synthetic/variance",
    "/descriptive/synthetic/excess_kurtosis",
    "/downstream/portfolio/synth_sharpe",
    "/downstream/portfolio/sharpe_diff",
    "/downstream/portfolio/risk_deviation",
    "/downstream/portfolio/weight_cosine",
    "/downstream/volatility/rmse",
    "/downstream/volatility/mae",
    "/downstream/volatility/directional_accuracy",
    "/privacy/nndt/avg_nn_distance",
    "/privacy/nndt/pct_below_tau",
    "/privacy/mia/mia_accuracy",
};

json aggregates(const json& cells, const TrainConfig& c) {
  json out = json::object();
  for (const auto& model : c.models) {
    json per = json::object();
    for (const auto& ptr_text : kAggregated) {
      const json::json_pointer ptr(ptr_text);
      std::vector<double> values;
      for (const auto& cell : cells) {
        if (cell.at("model") != model || !cell.contains(ptr) || !cell.at(ptr).is_number()) continue;
        values.push_back(cell.at(ptr).get<double>());
      }
      if (values.empty()) continue;
      const Aggregate a = aggregate(values);
      per[ptr_text.substr(1)] = {{"mean", a.mean}, {"std", a.std}, {"n", a.n}, {"complete", a.n == c.seeds.size()}};
    }
    out[model] = std::move(per);
  }
  return out;
}

json constructions() {
  return {{"synthetic_size",
           "series length equals the real return series; window models emit as many windows as the real series "
           "yields and their series is the concatenation of non-overlapping sampled windows"},
          {"reference", "metrics compare against the test split"},
          {"window_mmd", "each window is one point; feeds the ablation ordering"},
          {"portfolio", "synthetic replicas vs contiguous bootstrap blocks of the real test split"},
          {"volatility", "GARCH(1,1) fitted on synthetic returns, one-step volatility forecasts scored on absolute returns of the test split"},
          {"nndt", "synthetic vs training windows, z-scored, distances divided by sqrt(T)"},
          {"mia", "shadow models on random halves of a shadow pool, logistic attack, balanced accuracy on a disjoint victim pool"},
          {"std", "sample standard deviation 1/(K-1); 0 when K = 1"}};
}

// ---- CSV helpers -----------------------------------------------------------------

std::ofstream open_csv(const std::filesystem::path& p, const std::string& header) {
  std::ofstream out(p);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << std::setprecision(17) << header << '\n';
  return out;
}

std::string label(const json& cell) { return cell.at("model").get<std::string>(); }

}  // namespace

// ---- config ----------------------------------------------------------------------

void TrainConfig::validate() const {
  if (seeds.empty()) throw std::invalid_argument("config: seeds must be non-empty");
  if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size()) throw std::invalid_argument("config: seeds must be unique");
  const double total = splits.train + splits.validation + splits.test;
  if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("config: split fractions must sum to 1");
  if (splits.train <= 0.0 || splits.validation <= 0.0 || splits.test <= 0.0) throw std::invalid_argument("config: split fractions must be positive");
  if (window < 2 || stride == 0) throw std::invalid_argument("config: window must be >= 2 and stride >= 1");
  if (models.empty()) throw std::invalid_argument("config: no models selected");
  for (const auto& m : models) {
    if (std::find(kModels.begin(), kModels.end(), m) == kModels.end()) throw std::invalid_argument("config: unknown model '" + m + "'");
  }
  if (downstream.portfolio_assets < 2) throw std::invalid_argument("config: portfolio needs at least 2 assets");
  if (privacy.n_shadow == 0) throw std::invalid_argument("config: n_shadow must be >= 1");
  if (privacy.max_windows != 0 && privacy.max_windows < 200) throw std::invalid_argument("config: privacy.max_windows must be 0 or >= 200");
  if (benchmark.length < 10 * window) throw std::invalid_argument("config: benchmark too short for the window length");
  for (const auto& v : ablation.timegan_variants) timegan::ablation_from_string(v);
}

TrainConfig config_from_json(const json& j) {
  TrainConfig c;
  reject_unknown(j, {"data", "splits", "window", "stride", "seeds", "models", "arima_garch", "vae", "timegan", "metrics",
                     "downstream", "privacy", "ablation", "output_dir"},
                 "");
  if (j.contains("data")) {
    const auto& d = j.at("data");
    reject_unknown(d, {"path", "benchmark", "adf_max_lag"}, "data");
    read(d, "path", c.data_path);
    read(d, "adf_max_lag", c.adf_max_lag);
    if (d.contains("benchmark")) {
      const auto& b = d.at("benchmark");
      reject_unknown(b, {"length", "omega", "alpha", "beta", "seed", "initial_price"}, "data.benchmark");
      read(b, "length", c.benchmark.length);
      read(b, "omega", c.benchmark.omega);
      read(b, "alpha", c.benchmark.alpha);
      read(b, "beta", c.benchmark.beta);
      read(b, "seed", c.benchmark.seed);
      read(b, "initial_price", c.benchmark.initial_price);
    }
  }
  if (j.contains("splits")) {
    const auto& s = j.at("splits");
    reject_unknown(s, {"train", "validation", "test"}, "splits");
    read(s, "train", c.splits.train);
    read(s, "validation", c.splits.validation);
    read(s, "test", c.splits.test);
  }
  read(j, "window", c.window);
  read(j, "stride", c.stride);
  read(j, "seeds", c.seeds);
  read(j, "models", c.models);
  read(j, "output_dir", c.output_dir);
  if (j.contains("arima_garch")) {
    const auto& a = j.at("arima_garch");
    reject_unknown(a, {"p_max", "d_max", "q_max", "garch_p", "garch_q", "innovation", "nested_test_level"}, "arima_garch");
    read(a, "p_max", c.arima_garch.grid.p_max);
    read(a, "d_max", c.arima_garch.grid.d_max);
    read(a, "q_max", c.arima_garch.grid.q_max);
    read(a, "garch_p", c.arima_garch.garch.p);
    read(a, "garch_q", c.arima_garch.garch.q);
    read(a, "nested_test_level", c.arima_garch.garch.nested_test_level);
    if (a.contains("innovation")) c.arima_garch.garch.innovation = ts::innovation_from_string(a.at("innovation").get<std::string>());
  }
  if (j.contains("vae")) {
    const auto& v = j.at("vae");
    reject_unknown(v, {"latent_dim", "hidden", "beta", "learning_rate", "batch_size", "epochs", "patience"}, "vae");
    read(v, "latent_dim", c.vae.latent_dim);
    read(v, "hidden", c.vae.hidden);
    read(v, "beta", c.vae.beta);
    read(v, "learning_rate", c.vae.learning_rate);
    read(v, "batch_size", c.vae.batch_size);
    read(v, "epochs", c.vae.epochs);
    read(v, "patience", c.vae.patience);
  }
  if (j.contains("timegan")) {
    const auto& t = j.at("timegan");
    reject_unknown(t, {"hidden", "layers", "cell", "learning_rate", "batch_size", "epochs_pretrain", "epochs_joint",
                       "lambda_sup", "lambda_recon", "lambda_adv", "patience", "collapse_epochs", "ablation"},
                   "timegan");
    read(t, "hidden", c.timegan.hidden);
    read(t, "layers", c.timegan.layers);
    read(t, "cell", c.timegan.cell);
    read(t, "learning_rate", c.timegan.learning_rate);
    read(t, "batch_size", c.timegan.batch_size);
    read(t, "epochs_pretrain", c.timegan.epochs_pretrain);
    read(t, "epochs_joint", c.timegan.epochs_joint);
    read(t, "lambda_sup", c.timegan.lambda_sup);
    read(t, "lambda_recon", c.timegan.lambda_recon);
    read(t, "lambda_adv", c.timegan.lambda_adv);
    read(t, "patience", c.timegan.patience);
    read(t, "collapse_epochs", c.timegan.collapse_epochs);
    if (t.contains("ablation")) c.timegan.ablation = timegan::ablation_from_string(t.at("ablation").get<std::string>());
  }
  if (j.contains("metrics")) {
    const auto& m = j.at("metrics");
    reject_unknown(m, {"acf_lags", "psd_segment", "psd_overlap", "rolling_window", "qq_points", "leverage_lags",
                       "mmd_estimator", "mmd_max_points"},
                   "metrics");
    read(m, "acf_lags", c.metrics.acf_lags);
    read(m, "psd_segment", c.metrics.psd_segment);
    read(m, "psd_overlap", c.metrics.psd_overlap);
    read(m, "rolling_window", c.metrics.rolling_window);
    read(m, "qq_points", c.metrics.qq_points);
    read(m, "leverage_lags", c.metrics.leverage_lags);
    read(m, "mmd_max_points", c.metrics.mmd_max_points);
    if (m.contains("mmd_estimator")) c.metrics.mmd_estimator = estimator_from(m.at("mmd_estimator").get<std::string>());
  }
  if (j.contains("downstream")) {
    const auto& d = j.at("downstream");
    reject_unknown(d, {"enabled", "portfolio_assets", "portfolio_length"}, "downstream");
    read(d, "enabled", c.downstream.enabled);
    read(d, "portfolio_assets", c.downstream.portfolio_assets);
    read(d, "portfolio_length", c.downstream.portfolio_length);
  }
  if (j.contains("privacy")) {
    const auto& p = j.at("privacy");
    reject_unknown(p, {"enabled", "tau", "n_shadow", "k_neighbors", "max_windows", "seed"}, "privacy");
    read(p, "enabled", c.privacy.enabled);
    read(p, "tau", c.privacy.tau);
    read(p, "n_shadow", c.privacy.n_shadow);
    read(p, "k_neighbors", c.privacy.k_neighbors);
    read(p, "max_windows", c.privacy.max_windows);
    read(p, "seed", c.privacy.seed);
  }
  if (j.contains("ablation")) {
    const auto& a = j.at("ablation");
    reject_unknown(a, {"seeds", "timegan_variants", "vae_betas", "vae_reduced_latent", "arima_orders"}, "ablation");
    read(a, "seeds", c.ablation.seeds);
    read(a, "timegan_variants", c.ablation.timegan_variants);
    read(a, "vae_betas", c.ablation.vae_betas);
    read(a, "vae_reduced_latent", c.ablation.vae_reduced_latent);
    read(a, "arima_orders", c.ablation.arima_orders);
  }
  c.validate();
  return c;
}

TrainConfig load_config(const std::filesystem::path& path) {
  try {
    return config_from_json(read_json(path));
  } catch (const json::exception& e) {
    throw std::invalid_argument("config " + path.string() + ": " + e.what());
  }
}

json to_json(const TrainConfig& c) {
  return {{"data",
           {{"path", c.data_path},
            {"adf_max_lag", c.adf_max_lag},
            {"benchmark",
             {{"length", c.benchmark.length},
              {"omega", c.benchmark.omega},
              {"alpha", c.benchmark.alpha},
              {"beta", c.benchmark.beta},
              {"seed", c.benchmark.seed},
              {"initial_price", c.benchmark.initial_price}}}}},
          {"splits", {{"train", c.splits.train}, {"validation", c.splits.validation}, {"test", c.splits.test}}},
          {"window", c.window},
          {"stride", c.stride},
          {"seeds", c.seeds},
          {"models", c.models},
          {"arima_garch",
           {{"p_max", c.arima_garch.grid.p_max},
            {"d_max", c.arima_garch.grid.d_max},
            {"q_max", c.arima_garch.grid.q_max},
            {"garch_p", c.arima_garch.garch.p},
            {"garch_q", c.arima_garch.garch.q},
            {"innovation", ts::to_string(c.arima_garch.garch.innovation)},
            {"nested_test_level", c.arima_garch.garch.nested_test_level}}},
          {"vae",
           {{"latent_dim", c.vae.latent_dim},
            {"hidden", c.vae.hidden},
            {"beta", c.vae.beta},
            {"learning_rate", c.vae.learning_rate},
            {"batch_size", c.vae.batch_size},
            {"epochs", c.vae.epochs},
            {"patience", c.vae.patience}}},
          {"timegan",
           {{"hidden", c.timegan.hidden},
            {"layers", c.timegan.layers},
            {"cell", c.timegan.cell},
            {"learning_rate", c.timegan.learning_rate},
            {"batch_size", c.timegan.batch_size},
            {"epochs_pretrain", c.timegan.epochs_pretrain},
            {"epochs_joint", c.timegan.epochs_joint},
            {"lambda_sup", c.timegan.lambda_sup},
            {"lambda_recon", c.timegan.lambda_recon},
            {"lambda_adv", c.timegan.lambda_adv},
            {"patience", c.timegan.patience},
            {"collapse_epochs", c.timegan.collapse_epochs},
            {"ablation", timegan::to_string(c.timegan.ablation)}}},
          {"metrics",
           {{"acf_lags", c.metrics.acf_lags},
            {"psd_segment", c.metrics.psd_segment},
            {"psd_overlap", c.metrics.psd_overlap},
            {"rolling_window", c.metrics.rolling_window},
            {"qq_points", c.metrics.qq_points},
            {"leverage_lags", c.metrics.leverage_lags},
            {"mmd_estimator", estimator_name(c.metrics.mmd_estimator)},
            {"mmd_max_points", c.metrics.mmd_max_points}}},
          {"downstream",
           {{"enabled", c.downstream.enabled},
            {"portfolio_assets", c.downstream.portfolio_assets},
            {"portfolio_length", c.downstream.portfolio_length}}},
          {"privacy",
           {{"enabled", c.privacy.enabled},
            {"tau", c.privacy.tau},
            {"n_shadow", c.privacy.n_shadow},
            {"k_neighbors", c.privacy.k_neighbors},
            {"max_windows", c.privacy.max_windows},
            {"seed", c.privacy.seed}}},
          {"ablation",
           {{"seeds", c.ablation.seeds},
            {"timegan_variants", c.ablation.timegan_variants},
            {"vae_betas", c.ablation.vae_betas},
            {"vae_reduced_latent", c.ablation.vae_reduced_latent},
            {"arima_orders", c.ablation.arima_orders}}},
          {"output_dir", c.output_dir}};
}

// ---- data ------------------------------------------------------------------------

PriceSeries simulate_benchmark_prices(const BenchmarkConfig& b) {
  const auto g = ts::make_garch(b.omega, {b.alpha}, {b.beta});
  // The GARCH scale is in percent; prices use decimal log-returns.
  auto r = ts::simulate_path(ts::white_noise_mean(), g, b.length, b.seed).returns;
  for (double& v : r) v /= 100.0;
  const auto prices = prices_from_returns(b.initial_price, r);
  std::vector<Date> dates;
  std::chrono::sys_days day = std::chrono::sys_days{std::chrono::year{2000} / 1 / 3};
  while (dates.size() < prices.size()) {
    const std::chrono::weekday wd{day};
    if (wd != std::chrono::Saturday && wd != std::chrono::Sunday) dates.emplace_back(day);
    day += std::chrono::days{1};
  }
  return make_price_series(std::move(dates), prices);
}

PreparedData prepare_data(const TrainConfig& c) {
  c.validate();
  PreparedData d;
  if (c.data_path.empty()) {
    d.source = "simulated GARCH(1,1) benchmark";
    d.prices = simulate_benchmark_prices(c.benchmark);
  } else {
    d.source = c.data_path;
    d.prices = load_price_csv(c.data_path);
  }
  d.returns = log_returns(d.prices);
  d.adf = adf_test(d.returns.values, c.adf_max_lag);
  d.split = temporal_split(d.returns, c.splits, 2 * c.window);
  d.stats = fit_norm_stats(d.split.train.values);
  d.train = make_windows(d.split.train.values, c.window, c.stride);
  d.validation = make_windows(d.split.validation.values, c.window, c.stride);
  d.test = make_windows(d.split.test.values, c.window, c.stride);
  return d;
}

json describe(const PreparedData& d) {
  return {{"source", d.source},
          {"prices", d.prices.size()},
          {"returns", d.returns.size()},
          {"adf", {{"statistic", d.adf.statistic}, {"p_value", d.adf.p_value}, {"lag", d.adf.chosen_lag}, {"stationary", d.adf.reject_unit_root}}},
          {"split", {{"train", d.split.train.size()}, {"validation", d.split.validation.size()}, {"test", d.split.test.size()}}},
          {"windows", {{"train", d.train.size()}, {"validation", d.validation.size()}, {"test", d.test.size()}}},
          {"norm_stats", d.stats}};
}

// ---- protocol --------------------------------------------------------------------

Aggregate aggregate(const std::vector<double>& values) {
  if (values.empty()) throw std::invalid_argument("aggregate: no values");
  Aggregate a;
  a.n = values.size();
  a.mean = sample_mean(values);
  a.std = a.n > 1 ? std::sqrt(sample_variance(values)) : 0.0;
  return a;
}

EvaluationReport run_protocol(const TrainConfig& config, const Stages& stages) {
  return run_protocol(config, prepare_data(config), stages);
}

EvaluationReport run_protocol(const TrainConfig& config, const PreparedData& data, const Stages& stages) {
  config.validate();
  EvaluationReport r;
  json cells = json::array();
  for (const auto& model : config.models) {
    for (std::size_t i = 0; i < config.seeds.size(); ++i) {
      bool failed = false;
      cells.push_back(run_cell(model, config.seeds[i], config, data, stages, i == 0, failed));
      r.failed_cells += failed ? 1 : 0;
    }
  }
  r.json = {{"schema", "synfin-report/1"},
            {"config", to_json(config)},
            {"stages", {{"metrics", stages.metrics}, {"downstream", stages.downstream}, {"privacy", stages.privacy}}},
            {"data", describe(data)},
            {"constructions", constructions()},
            {"aggregates", aggregates(cells, config)},
            {"cells", std::move(cells)},
            {"failed_cells", r.failed_cells}};
  return r;
}

// ---- ablations -------------------------------------------------------------------

AblationReport run_ablations(const TrainConfig& config, const std::vector<std::string>& families) {
  return run_ablations(config, prepare_data(config), families);
}

AblationReport run_ablations(const TrainConfig& config, const PreparedData& d, const std::vector<std::string>& families) {
  config.validate();
  const auto& seeds = config.ablation.seeds.empty() ? config.seeds : config.ablation.seeds;
  auto wanted = [&](const std::string& f) { return families.empty() || std::find(families.begin(), families.end(), f) != families.end(); };

  struct Variant {
    std::string family;
    std::string name;
    json settings;
    std::function<Generator(std::uint64_t)> train;
  };
  std::vector<Variant> variants;
  if (wanted("timegan")) {
    for (const auto& v : config.ablation.timegan_variants) {
      timegan::TimeGanConfig cfg = config.timegan;
      cfg.ablation = timegan::ablation_from_string(v);
      const auto eff = timegan::apply_ablation(cfg, cfg.ablation);
      variants.push_back({"timegan", v == "" ? "none" : v,
                          {{"lambda_sup", eff.lambda_sup}, {"hidden", eff.hidden}, {"layers", eff.layers}},
                          [&, cfg](std::uint64_t s) { return train_timegan_model(d.train, d.validation, cfg, s, d.stats, config.window); }});
    }
  }
  if (wanted("vae")) {
    for (double beta : config.ablation.vae_betas) {
      vae::VaeConfig cfg = config.vae;
      cfg.beta = beta;
      std::ostringstream name;
      name << "beta=" << beta;
      variants.push_back({"vae", name.str(), {{"beta", beta}, {"latent_dim", cfg.latent_dim}},
                          [&, cfg](std::uint64_t s) { return train_vae_model(d.train, d.validation, cfg, s, d.stats, config.window); }});
    }
    if (config.ablation.vae_reduced_latent) {
      vae::VaeConfig cfg = config.vae;
      cfg.latent_dim = vae::latent10_preset().latent_dim;
      variants.push_back({"vae", "reduced_latent", {{"beta", cfg.beta}, {"latent_dim", cfg.latent_dim}},
                          [&, cfg](std::uint64_t s) { return train_vae_model(d.train, d.validation, cfg, s, d.stats, config.window); }});
    }
  }
  if (wanted("arima_garch")) {
    std::size_t condition_on = 0;
    for (const auto& [p, q] : config.ablation.arima_orders) condition_on = std::max(condition_on, p);
    for (const auto& [p, q] : config.ablation.arima_orders) {
      const ts::ArimaOrder order{p, 0, q};
      variants.push_back({"arima_garch", "(" + std::to_string(p) + ",0," + std::to_string(q) + ")", {{"p", p}, {"d", 0}, {"q", q}},
                          [&, order, condition_on](std::uint64_t) {
                            const auto fit = ts::fit_arima_order(d.split.train.values, order, condition_on);
                            return train_arima_garch(d.split.train.values, config, &fit);
                          }});
    }
  }

  AblationReport r;
  const Matrix real_z = zscore(d.test.data, d.stats);
  json rows = json::array();
  for (const auto& v : variants) {
    json per_seed = json::array();
    std::vector<double> mmds, ks;
    for (std::uint64_t seed : seeds) {
      json entry = {{"seed", seed}};
      try {
        const Generator g = v.train(seed);
        const SyntheticData s = size_matched(g, config, d, derive_seed(seed, 1001));
        const double mmd = window_mmd_json(real_z, zscore(s.windows.data, d.stats), config.metrics).at("value").get<double>();
        const double k = metrics::ks_test(d.split.test.values, s.series).statistic;
        entry["status"] = "ok";
        entry["window_mmd"] = mmd;
        entry["ks_statistic"] = k;
        if (!g.warnings.empty()) entry["warnings"] = g.warnings;
        mmds.push_back(mmd);
        ks.push_back(k);
      } catch (const std::exception& e) {
        entry["status"] = "failed";
        entry["error"] = e.what();
        ++r.failed_cells;
      }
      per_seed.push_back(std::move(entry));
    }
    json row = {{"family", v.family}, {"variant", v.name}, {"settings", v.settings}, {"per_seed", std::move(per_seed)}};
    if (!mmds.empty()) {
      std::vector<double> sorted = mmds;
      std::sort(sorted.begin(), sorted.end());
      const std::size_t n = sorted.size();
      row["median_window_mmd"] = n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
      const auto am = aggregate(mmds), ak = aggregate(ks);
      row["window_mmd"] = {{"mean", am.mean}, {"std", am.std}, {"n", am.n}};
      row["ks_statistic"] = {{"mean", ak.mean}, {"std", ak.std}, {"n", ak.n}};
    }
    rows.push_back(std::move(row));
  }
  r.json = {{"schema", "synfin-ablation/1"},
            {"config", to_json(config)},
            {"data", describe(d)},
            {"seeds", seeds},
            {"metrics", {{"window_mmd", "median-heuristic RBF on z-scored windows vs test windows"}, {"ks_statistic", "1-D returns vs test split"}}},
            {"rows", std::move(rows)},
            {"failed_cells", r.failed_cells}};
  return r;
}

// ---- plots -----------------------------------------------------------------------

std::vector<std::filesystem::path> emit_plots(const json& report, const std::filesystem::path& dir,
                                              std::vector<std::string>* warnings) {
  std::filesystem::create_directories(dir);
  std::vector<const json*> cells;
  if (report.contains("cells")) {
    for (const auto& c : report.at("cells")) {
      if (c.contains("plot_data")) cells.push_back(&c);
    }
  }
  auto warn = [&](const std::string& w) {
    if (warnings) warnings->push_back(w);
  };
  std::vector<std::filesystem::path> written;
  auto section = [&](const char* key, const std::string& file, const std::string& header,
                     const std::function<void(std::ofstream&, const json&, const json&)>& rows) {
    std::vector<const json*> have;
    for (const json* c : cells) {
      if (c->at("plot_data").contains(key)) have.push_back(c);
    }
    if (have.empty()) {
      warn("plot data '" + std::string(key) + "' missing; " + file + " skipped");
      return;
    }
    const auto path = dir / file;
    auto out = open_csv(path, header);
    for (const json* c : have) rows(out, *c, c->at("plot_data").at(key));
    written.push_back(path);
  };

  bool real_returns_done = false;
  section("returns", "returns_overlay.csv", "series,index,value", [&](std::ofstream& out, const json& cell, const json& p) {
    if (!real_returns_done) {
      const auto r = p.at("real").get<std::vector<double>>();
      for (std::size_t t = 0; t < r.size(); ++t) out << "real," << t << ',' << r[t] << '\n';
      real_returns_done = true;
    }
    const auto s = p.at("synth").get<std::vector<double>>();
    for (std::size_t t = 0; t < s.size(); ++t) out << label(cell) << ',' << t << ',' << s[t] << '\n';
  });
  bool real_pca_done = false;
  section("pca", "pca_scores.csv", "pc1,pc2,provenance", [&](std::ofstream& out, const json& cell, const json& p) {
    auto rows = [&](const json& scores, const std::string& prov) {
      for (const auto& row : scores) out << row.at(0).get<double>() << ',' << (row.size() > 1 ? row.at(1).get<double>() : 0.0) << ',' << prov << '\n';
    };
    if (!real_pca_done) {
      rows(p.at("real_scores"), "real");
      real_pca_done = true;
    }
    rows(p.at("synth_scores"), "synthetic:" + label(cell) + ":" + std::to_string(cell.at("seed").get<std::uint64_t>()));
  });
  section("qq", "qq_pairs.csv", "model,probability,real,synthetic", [&](std::ofstream& out, const json& cell, const json& p) {
    const auto pr = p.at("probability").get<std::vector<double>>();
    const auto r = p.at("real").get<std::vector<double>>(), s = p.at("synth").get<std::vector<double>>();
    for (std::size_t i = 0; i < pr.size(); ++i) out << label(cell) << ',' << pr[i] << ',' << r[i] << ',' << s[i] << '\n';
  });
  section("acf", "acf_profiles.csv", "model,target,lag,real,synthetic", [&](std::ofstream& out, const json& cell, const json& p) {
    for (const char* target : {"returns", "squared"}) {
      const auto r = p.at(std::string(target) + "_real").get<std::vector<double>>();
      const auto s = p.at(std::string(target) + "_synth").get<std::vector<double>>();
      for (std::size_t k = 0; k < r.size(); ++k) out << label(cell) << ',' << target << ',' << k << ',' << r[k] << ',' << s[k] << '\n';
    }
  });
  bool real_vol_done = false;
  section("rolling_volatility", "rolling_volatility.csv", "series,index,volatility", [&](std::ofstream& out, const json& cell, const json& p) {
    if (!real_vol_done) {
      const auto r = p.at("real").get<std::vector<double>>();
      for (std::size_t t = 0; t < r.size(); ++t) out << "real," << t << ',' << r[t] << '\n';
      real_vol_done = true;
    }
    const auto s = p.at("synth").get<std::vector<double>>();
    for (std::size_t t = 0; t < s.size(); ++t) out << label(cell) << ',' << t << ',' << s[t] << '\n';
  });
  section("latent_trajectory", "vae_latent_trajectory.csv", "time_index,z1,z2", [&](std::ofstream& out, const json&, const json& p) {
    std::size_t t = 0;
    for (const auto& row : p) out << t++ << ',' << row.at(0).get<double>() << ',' << row.at(1).get<double>() << '\n';
  });
  return written;
}

// ---- checkpoints -----------------------------------------------------------------

json fit_model(const std::string& model, std::uint64_t seed, const TrainConfig& config, const PreparedData& data) {
  const Generator g = train_generator(model, seed, config, data);
  json cp = g.checkpoint;
  cp["seed"] = seed;
  cp["training"] = g.training;
  cp["warnings"] = g.warnings;
  return cp;
}

std::vector<double> generate_series(const json& cp, std::size_t length, std::uint64_t seed) {
  const std::string model = cp.at("model").get<std::string>();
  Generator g;
  if (model == "arima_garch") {
    g = arima_generator(cp.at("arima").get<ts::ArimaFit>(), cp.at("garch").get<ts::GarchFit>(), cp.at("window").get<std::size_t>());
  } else if (model == "vae") {
    g = vae_generator(cp.at("vae").get<vae::VaeModel>());
  } else if (model == "timegan") {
    g = timegan_generator(cp.at("timegan").get<timegan::TimeGanModel>());
  } else {
    throw std::invalid_argument("checkpoint: unknown model '" + model + "'");
  }
  return g.series(length, seed);
}

void write_json(const std::filesystem::path& path, const json& j) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(1) << '\n';
}

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  return json::parse(in);
}

}  // namespace synfin::harness

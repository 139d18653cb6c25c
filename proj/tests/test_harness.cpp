#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "synfin/harness.hpp"

using namespace synfin;
using namespace synfin::harness;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

TrainConfig small_config() {
  TrainConfig c = config_from_json(json::parse(R"({
    "data": {"benchmark": {"length": 800, "seed": 5}},
    "seeds": [1, 2],
    "models": ["arima_garch", "vae"],
    "vae": {"epochs": 3, "patience": 3},
    "privacy": {"n_shadow": 1}
  })"));
  return c;
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

std::vector<std::string> read_lines(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> lines;
  for (std::string l; std::getline(in, l);) lines.push_back(l);
  return lines;
}

class SmallProtocol : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    config_ = new TrainConfig(small_config());
    data_ = new PreparedData(prepare_data(*config_));
    report_ = new EvaluationReport(run_protocol(*config_, *data_));
  }
  static void TearDownTestSuite() {
    delete report_;
    delete data_;
    delete config_;
  }
  static TrainConfig* config_;
  static PreparedData* data_;
  static EvaluationReport* report_;
};

TrainConfig* SmallProtocol::config_ = nullptr;
PreparedData* SmallProtocol::data_ = nullptr;
EvaluationReport* SmallProtocol::report_ = nullptr;

}  // namespace

TEST(Config, DefaultsAndOverrides) {
  const auto d = config_from_json(json::object());
  EXPECT_EQ(d.window, 30u);
  EXPECT_EQ(d.seeds.size(), 5u);
  EXPECT_EQ(d.models, kModels);
  EXPECT_TRUE(d.data_path.empty());

  const auto c = config_from_json(json::parse(R"({"window": 20, "vae": {"beta": 2.0}, "privacy": {"tau": 0.3}})"));
  EXPECT_EQ(c.window, 20u);
  EXPECT_EQ(c.vae.beta, 2.0);
  EXPECT_EQ(c.privacy.tau, 0.3);
  EXPECT_EQ(c.vae.epochs, d.vae.epochs);
}

TEST(Config, UnknownKeysAreRejected) {
  EXPECT_THROW(config_from_json(json::parse(R"({"windw": 20})")), std::invalid_argument);
  EXPECT_THROW(config_from_json(json::parse(R"({"vae": {"betta": 1.0}})")), std::invalid_argument);
  EXPECT_THROW(config_from_json(json::parse(R"({"data": {"benchmark": {"gamma": 1.0}}})")), std::invalid_argument);
}

TEST(Config, RoundTripsThroughJson) {
  const auto c = small_config();
  const json j = to_json(c);
  EXPECT_EQ(to_json(config_from_json(j)), j);
}

TEST(Config, ValidationRejectsInconsistentSettings) {
  auto bad = [](const char* text) { return config_from_json(json::parse(text)); };
  EXPECT_THROW(bad(R"({"splits": {"train": 0.8, "validation": 0.15, "test": 0.15}})"), std::invalid_argument);
  EXPECT_THROW(bad(R"({"models": ["gan"]})"), std::invalid_argument);
  EXPECT_THROW(bad(R"({"seeds": [1, 1]})"), std::invalid_argument);
  EXPECT_THROW(bad(R"({"seeds": []})"), std::invalid_argument);
  EXPECT_THROW(bad(R"({"privacy": {"max_windows": 50}})"), std::invalid_argument);
  EXPECT_THROW(bad(R"({"ablation": {"timegan_variants": ["no_such_variant"]}})"), std::invalid_argument);
}

TEST(Aggregate, HandValuesAndSingleSeed) {
  const auto a = aggregate({1.0, 2.0, 3.0, 4.0});
  EXPECT_DOUBLE_EQ(a.mean, 2.5);
  EXPECT_NEAR(a.std, std::sqrt(5.0 / 3.0), 1e-15);
  EXPECT_EQ(a.n, 4u);
  const auto one = aggregate({7.5});
  EXPECT_EQ(one.mean, 7.5);
  EXPECT_EQ(one.std, 0.0);
  EXPECT_THROW(aggregate({}), std::invalid_argument);
}

TEST(Aggregate, IdenticalValuesAndPermutationInvariance) {
  EXPECT_EQ(aggregate(std::vector<double>(5, 0.3)).std, 0.0);
  std::vector<double> v{0.4, -1.0, 2.5, 3.25, 0.0};
  const auto a = aggregate(v);
  std::sort(v.begin(), v.end());
  do {
    const auto b = aggregate(v);
    ASSERT_NEAR(a.mean, b.mean, 1e-15);
    ASSERT_NEAR(a.std, b.std, 1e-15);
  } while (std::next_permutation(v.begin(), v.end()));
}

TEST(Benchmark, WeekdayDatesAndDecimalReturns) {
  BenchmarkConfig b;
  b.length = 300;
  const auto p = simulate_benchmark_prices(b);
  ASSERT_EQ(p.size(), 301u);
  EXPECT_EQ(format_iso_date(p.dates.front()), "2000-01-03");
  EXPECT_EQ(p.prices.front(), 100.0);
  for (const auto& d : p.dates) {
    const std::chrono::weekday wd{std::chrono::sys_days{d}};
    ASSERT_NE(wd, std::chrono::Saturday);
    ASSERT_NE(wd, std::chrono::Sunday);
  }
  const auto path = ts::simulate_path(ts::white_noise_mean(), ts::make_garch(b.omega, {b.alpha}, {b.beta}), b.length, b.seed);
  for (std::size_t t = 1; t < p.size(); ++t) {
    ASSERT_NEAR(std::log(p.prices[t] / p.prices[t - 1]), path.returns[t - 1] / 100.0, 1e-12);
  }
  EXPECT_EQ(simulate_benchmark_prices(b).prices, p.prices);
}

TEST(PrepareData, SplitAndWindowCounts) {
  const auto c = small_config();
  const auto d = prepare_data(c);
  const json s = describe(d);
  EXPECT_EQ(s.at("returns").get<std::size_t>(), 800u);
  EXPECT_EQ(s.at("split").at("train").get<std::size_t>(), 560u);
  EXPECT_EQ(s.at("split").at("validation").get<std::size_t>(), 120u);
  EXPECT_EQ(s.at("split").at("test").get<std::size_t>(), 120u);
  EXPECT_EQ(d.train.size(), 560u - 30u + 1u);
  EXPECT_EQ(d.test.size(), 120u - 30u + 1u);
  EXPECT_NEAR(d.stats.mean, sample_mean(d.split.train.values), 1e-15);
}

TEST_F(SmallProtocol, EveryCellCompletesWithAllSections) {
  const json& r = report_->json;
  ASSERT_TRUE(report_->ok()) << r.at("cells").dump();
  EXPECT_EQ(r.at("schema"), "synfin-report/1");
  ASSERT_EQ(r.at("cells").size(), 4u);
  for (const auto& cell : r.at("cells")) {
    EXPECT_EQ(cell.at("status"), "ok");
    for (const char* key : {"training", "synthetic", "window_mmd", "distances", "descriptive", "acf", "psd", "stylized", "pca",
                            "downstream", "privacy"}) {
      EXPECT_TRUE(cell.contains(key)) << key;
    }
    EXPECT_EQ(cell.at("synthetic").at("series_length").get<std::size_t>(), data_->returns.size());
    EXPECT_EQ(cell.at("synthetic").at("windows").get<std::size_t>(), data_->returns.size() - 30 + 1);
  }
  EXPECT_FALSE(has_null(r));
}

TEST_F(SmallProtocol, PlotDataKeptForFirstSeedOnly) {
  for (const auto& cell : report_->json.at("cells")) {
    EXPECT_EQ(cell.contains("plot_data"), cell.at("seed").get<std::uint64_t>() == 1u);
  }
}

TEST_F(SmallProtocol, AggregatesMatchCells) {
  const json& r = report_->json;
  for (const auto& model : config_->models) {
    std::vector<double> v;
    for (const auto& cell : r.at("cells")) {
      if (cell.at("model") == model) v.push_back(cell.at("window_mmd").at("value").get<double>());
    }
    const auto& a = r.at("aggregates").at(model).at("window_mmd/value");
    EXPECT_EQ(a.at("n").get<std::size_t>(), 2u);
    EXPECT_TRUE(a.at("complete").get<bool>());
    EXPECT_NEAR(a.at("mean").get<double>(), 0.5 * (v[0] + v[1]), 1e-15);
    EXPECT_NEAR(a.at("std").get<double>(), std::abs(v[0] - v[1]) / std::sqrt(2.0), 1e-15);
  }
}

TEST_F(SmallProtocol, RerunIsByteIdentical) {
  EXPECT_EQ(run_protocol(*config_, *data_).json.dump(), report_->json.dump());
}

TEST_F(SmallProtocol, PlotFilesAndHeaders) {
  const fs::path dir = fs::temp_directory_path() / "synfin_test_plots";
  fs::remove_all(dir);
  std::vector<std::string> warnings;
  const auto files = emit_plots(report_->json, dir, &warnings);
  EXPECT_EQ(files.size(), 6u);
  EXPECT_TRUE(warnings.empty());
  for (const char* f : {"returns_overlay.csv", "pca_scores.csv", "qq_pairs.csv", "acf_profiles.csv", "rolling_volatility.csv",
                        "vae_latent_trajectory.csv"}) {
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  }
  EXPECT_EQ(read_lines(dir / "pca_scores.csv").front(), "pc1,pc2,provenance");
  const auto latent = read_lines(dir / "vae_latent_trajectory.csv");
  ASSERT_EQ(latent.size(), data_->test.size() + 1);
  for (std::size_t i = 1; i < latent.size(); ++i) {
    ASSERT_EQ(latent[i].substr(0, latent[i].find(',')), std::to_string(i - 1));
  }

  std::vector<std::string> none;
  const auto empty = emit_plots(json::object(), dir / "empty", &none);
  EXPECT_TRUE(empty.empty());
  EXPECT_EQ(none.size(), 6u);
  fs::remove_all(dir);
}

TEST_F(SmallProtocol, FailedTrainingIsIsolatedToItsCells) {
  TrainConfig c = *config_;
  c.vae.epochs = 0;
  const auto r = run_protocol(c, *data_);
  EXPECT_EQ(r.failed_cells, 2u);
  EXPECT_FALSE(r.ok());
  for (const auto& cell : r.json.at("cells")) {
    if (cell.at("model") == "vae") {
      EXPECT_EQ(cell.at("status"), "failed");
      EXPECT_TRUE(cell.at("errors").contains("training"));
      EXPECT_FALSE(cell.contains("window_mmd"));
    } else {
      EXPECT_EQ(cell.at("status"), "ok");
    }
  }
  EXPECT_TRUE(r.json.at("aggregates").at("vae").empty());
}

TEST_F(SmallProtocol, FailedStageLeavesOtherStagesIntact) {
  PreparedData d = *data_;
  d.split.test.values.resize(40);  // too short for the volatility task
  TrainConfig c = *config_;
  c.models = {"arima_garch"};
  c.seeds = {1};
  const auto r = run_protocol(c, d, {true, true, false});
  const auto& cell = r.json.at("cells").at(0);
  EXPECT_EQ(cell.at("status"), "failed");
  EXPECT_TRUE(cell.at("errors").contains("downstream"));
  EXPECT_FALSE(cell.at("errors").contains("metrics"));
  EXPECT_TRUE(cell.contains("window_mmd"));
  EXPECT_FALSE(cell.contains("privacy"));
}

TEST_F(SmallProtocol, CheckpointRegeneratesTheProtocolSeries) {
  const json cp = fit_model("arima_garch", 1, *config_, *data_);
  const auto path = fs::temp_directory_path() / "synfin_test_cp.json";
  write_json(path, cp);
  const auto a = generate_series(read_json(path), 800, 9);
  const auto b = generate_series(cp, 800, 9);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.size(), 800u);
  fs::remove(path);
  json broken = cp;
  broken["model"] = "gan";
  EXPECT_THROW(generate_series(broken, 10, 1), std::invalid_argument);
}

TEST_F(SmallProtocol, AblationGridRecordsEffectiveSettings) {
  TrainConfig c = *config_;
  c.seeds = {1};
  c.timegan.epochs_pretrain = 1;
  c.timegan.epochs_joint = 1;
  c.ablation.timegan_variants = {"none", "drop_supervised"};
  const auto r = run_ablations(c, *data_, {"timegan", "arima_garch"});
  ASSERT_TRUE(r.ok()) << r.json.dump();
  EXPECT_EQ(r.json.at("schema"), "synfin-ablation/1");
  const auto& rows = r.json.at("rows");
  ASSERT_EQ(rows.size(), 2u + c.ablation.arima_orders.size());
  EXPECT_EQ(rows.at(0).at("variant"), "none");
  EXPECT_EQ(rows.at(0).at("settings").at("lambda_sup").get<double>(), c.timegan.lambda_sup);
  EXPECT_EQ(rows.at(1).at("variant"), "drop_supervised");
  EXPECT_EQ(rows.at(1).at("settings").at("lambda_sup").get<double>(), 0.0);
  EXPECT_EQ(rows.at(2).at("variant"), "(0,0,0)");
  for (const auto& row : rows) {
    EXPECT_TRUE(row.contains("median_window_mmd"));
    EXPECT_EQ(row.at("per_seed").size(), 1u);
  }
}

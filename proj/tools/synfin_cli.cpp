#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "synfin/harness.hpp"

namespace fs = std::filesystem;
using namespace synfin;
using nlohmann::json;

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string model;
  std::string positional_model;
};

harness::TrainConfig resolve(const Options& o) {
  harness::TrainConfig c = o.config.empty() ? harness::config_from_json(json::object()) : harness::load_config(o.config);
  if (o.seed) c.seeds = {*o.seed};
  if (!o.out.empty()) c.output_dir = o.out;
  const std::string& m = o.positional_model.empty() ? o.model : o.positional_model;
  if (!m.empty()) c.models = {m};
  c.validate();
  return c;
}

std::string model_of(const Options& o) {
  const std::string& m = o.positional_model.empty() ? o.model : o.positional_model;
  if (m.empty()) throw std::invalid_argument("a model is required (arima_garch, vae or timegan)");
  return m;
}

fs::path checkpoint_path(const harness::TrainConfig& c, const std::string& model, std::uint64_t seed) {
  return fs::path(c.output_dir) / "checkpoints" / (model + "_" + std::to_string(seed) + ".json");
}

void write_prices(const fs::path& path, const PriceSeries& p) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "date,close\n" << std::setprecision(17);
  for (std::size_t i = 0; i < p.size(); ++i) out << format_iso_date(p.dates[i]) << ',' << p.prices[i] << '\n';
}

void write_summary(const fs::path& path, const json& report) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "model,metric,mean,std,n\n" << std::setprecision(10);
  for (const auto& [model, metrics] : report.at("aggregates").items()) {
    for (const auto& [name, a] : metrics.items()) {
      out << model << ',' << name << ',' << a.at("mean").get<double>() << ',' << a.at("std").get<double>() << ','
          << a.at("n").get<std::size_t>() << '\n';
    }
  }
}

int emit_report(const harness::EvaluationReport& r, const fs::path& dir, const std::string& name, bool plots) {
  harness::write_json(dir / name, r.json);
  if (plots) {
    std::vector<std::string> warnings;
    harness::emit_plots(r.json, dir / "plots", &warnings);
    for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
  }
  for (const auto& cell : r.json.at("cells")) {
    std::cout << cell.at("model").get<std::string>() << " seed " << cell.at("seed") << ": " << cell.at("status").get<std::string>();
    if (!cell.at("errors").empty()) std::cout << ' ' << cell.at("errors").dump();
    std::cout << '\n';
  }
  std::cout << "wrote " << (dir / name).string() << '\n';
  return r.ok() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Synthetic financial return generation and evaluation"};
  app.require_subcommand(1);
  Options o;
  auto common = [&](CLI::App* sub, bool positional) {
    sub->add_option("--config", o.config, "JSON config file (defaults when omitted)")->check(CLI::ExistingFile);
    sub->add_option("--seed", o.seed, "Run a single seed instead of the configured list");
    sub->add_option("--out", o.out, "Output directory (overrides output_dir)");
    sub->add_option("--model", o.model, "Restrict to one model: arima_garch, vae, timegan");
    if (positional) sub->add_option("MODEL", o.positional_model, "Model name (same as --model)");
  };
  auto* ingest = app.add_subcommand("ingest", "Load or simulate prices, split and window them, write a data summary");
  auto* fit = app.add_subcommand("fit", "Train one model and write its checkpoint");
  auto* generate = app.add_subcommand("generate", "Sample a size-matched synthetic series from a checkpoint");
  auto* evaluate = app.add_subcommand("evaluate", "Run the full protocol and write report.json plus plot data");
  auto* downstream = app.add_subcommand("downstream", "Portfolio and volatility-forecast tasks only");
  auto* privacy = app.add_subcommand("privacy", "Nearest-neighbour test and membership inference only");
  auto* ablate = app.add_subcommand("ablate", "Run the ablation grid");
  auto* report = app.add_subcommand("report", "Plot data and summary table from an existing report.json");
  auto* simulate = app.add_subcommand("simulate-benchmark", "Write a GARCH(1,1) ground-truth price file");
  for (auto* s : {ingest, evaluate, downstream, privacy, ablate, report, simulate}) common(s, false);
  for (auto* s : {fit, generate}) common(s, true);

  CLI11_PARSE(app, argc, argv);

  try {
    const harness::TrainConfig c = resolve(o);
    const fs::path out = c.output_dir;
    if (ingest->parsed()) {
      const auto d = harness::prepare_data(c);
      harness::write_json(out / "data.json", harness::describe(d));
      write_series_csv(out / "returns.csv", d.returns);
      std::cout << "wrote " << (out / "data.json").string() << '\n';
      return 0;
    }
    if (simulate->parsed()) {
      auto b = c.benchmark;
      if (o.seed) b.seed = *o.seed;
      write_prices(out / "benchmark_prices.csv", harness::simulate_benchmark_prices(b));
      std::cout << "wrote " << (out / "benchmark_prices.csv").string() << '\n';
      return 0;
    }
    if (fit->parsed()) {
      const std::string model = model_of(o);
      const auto d = harness::prepare_data(c);
      int status = 0;
      for (std::uint64_t seed : c.seeds) {
        try {
          const auto path = checkpoint_path(c, model, seed);
          harness::write_json(path, harness::fit_model(model, seed, c, d));
          std::cout << "wrote " << path.string() << '\n';
        } catch (const std::exception& e) {
          std::cerr << model << " seed " << seed << " failed: " << e.what() << '\n';
          status = 1;
        }
      }
      return status;
    }
    if (generate->parsed()) {
      const std::string model = model_of(o);
      const auto d = harness::prepare_data(c);
      int status = 0;
      for (std::uint64_t seed : c.seeds) {
        try {
          const auto cp = harness::read_json(checkpoint_path(c, model, seed));
          ReturnSeries s;
          s.values = harness::generate_series(cp, d.returns.size(), derive_seed(seed, 1001));
          const auto path = out / "synthetic" / (model + "_" + std::to_string(seed) + ".csv");
          fs::create_directories(path.parent_path());
          write_series_csv(path, s);
          std::cout << "wrote " << path.string() << '\n';
        } catch (const std::exception& e) {
          std::cerr << model << " seed " << seed << " failed: " << e.what() << '\n';
          status = 1;
        }
      }
      return status;
    }
    if (evaluate->parsed()) return emit_report(harness::run_protocol(c), out, "report.json", true);
    if (downstream->parsed()) return emit_report(harness::run_protocol(c, {false, true, false}), out, "downstream_report.json", false);
    if (privacy->parsed()) return emit_report(harness::run_protocol(c, {false, false, true}), out, "privacy_report.json", false);
    if (ablate->parsed()) {
      std::vector<std::string> families;
      if (!o.model.empty()) families = {o.model};
      const auto r = harness::run_ablations(c, families);
      harness::write_json(out / "ablation_report.json", r.json);
      for (const auto& row : r.json.at("rows")) {
        std::cout << row.at("family").get<std::string>() << ' ' << row.at("variant").get<std::string>() << " median window MMD "
                  << (row.contains("median_window_mmd") ? row.at("median_window_mmd").dump() : "n/a") << '\n';
      }
      std::cout << "wrote " << (out / "ablation_report.json").string() << '\n';
      return r.ok() ? 0 : 1;
    }
    if (report->parsed()) {
      const auto r = harness::read_json(out / "report.json");
      std::vector<std::string> warnings;
      const auto files = harness::emit_plots(r, out / "plots", &warnings);
      for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
      write_summary(out / "summary.csv", r);
      for (const auto& f : files) std::cout << "wrote " << f.string() << '\n';
      std::cout << "wrote " << (out / "summary.csv").string() << '\n';
      return r.value("failed_cells", 0) == 0 ? 0 : 1;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 2;
}

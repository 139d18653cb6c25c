#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "synfin/series.hpp"
#include "synfin/types.hpp"

namespace synfin::privacy {

struct NndtReport {
  double tau = 0.15;
  double avg_nn_distance = 0.0;
  double pct_below_tau = 0.0;
  std::vector<double> d_min;  // one per synthetic window
};

/// Distances between rows scaled by 1/sqrt(T). Both sets must already be on
/// the normalized scale.
double window_distance(std::span<const double> a, std::span<const double> b);

/// Exact nearest real window for every synthetic window.
NndtReport nndt(const Matrix& real, const Matrix& synth, double tau = 0.15);
/// Z-scores both sets with `stats` first.
NndtReport nndt(const WindowSet& real, const WindowSet& synth, const NormStats& stats, double tau = 0.15);

/// Output of one generator training run as seen by the attacker.
struct TrainedGenerator {
  Matrix synthetic;  // normalized windows
  /// Per-row reconstruction error of the given windows; empty when the model has none.
  std::function<Vector(const Matrix&)> reconstruction_error;
};

/// Trains a generator on the member rows; `member_rows` index the attacked dataset.
using TrainFn = std::function<TrainedGenerator(const Matrix& members, std::span<const std::size_t> member_rows,
                                               std::uint64_t seed)>;

struct MiaConfig {
  std::size_t n_shadow = 8;
  std::size_t k_neighbors = 5;
  bool noise_features = false;  // calibration mode: features replaced by N(0, 1) draws
  std::uint64_t seed = 2024;
};

struct MiaReport {
  double attack_accuracy = 0.0;  // balanced, on the victim's records
  std::size_t n_shadow = 0;
  std::size_t shadow_records = 0;
  std::size_t victim_members = 0;
  std::size_t victim_non_members = 0;
  std::string features;
  std::vector<double> coefficients;  // on standardized features, intercept last
};

/// Features per record: distance to the nearest synthetic window, mean distance
/// to the k nearest, reconstruction error (0 when undefined).
Matrix attack_features(const Matrix& records, const TrainedGenerator& gen, std::size_t k);

/// Logistic regression by Newton iterations with a small ridge.
struct LogisticModel {
  Vector mean;
  Vector scale;
  Vector weights;  // last entry is the intercept
  double probability(const Vector& features) const;
};
LogisticModel fit_logistic(const Matrix& features, const std::vector<int>& labels, double ridge = 1e-6);

/// Shadow-model attack. The dataset is shuffled and halved into a shadow pool
/// and a disjoint victim pool. Each shadow trains on a fresh random half of the
/// shadow pool (members) with the other half as non-members; the classifier fit
/// on those records is scored on a victim trained on half of the victim pool.
MiaReport mia(const TrainFn& train, const Matrix& dataset, const MiaConfig& config = {});

void to_json(nlohmann::json& j, const NndtReport& r);
void to_json(nlohmann::json& j, const MiaReport& r);

}  // namespace synfin::privacy

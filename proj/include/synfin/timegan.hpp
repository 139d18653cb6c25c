#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "synfin/nn.hpp"
#include "synfin/series.hpp"

namespace synfin::timegan {

enum class Ablation { none, drop_supervised, reduced_embedding, shallow_1layer };

std::string to_string(Ablation a);
/// Accepts "none" or "" as well as the three variant names; throws otherwise.
Ablation ablation_from_string(std::string_view name);

struct TimeGanConfig {
  std::size_t window = 30;
  std::size_t hidden = 24;
  std::size_t layers = 2;
  std::string cell = "gru";
  double learning_rate = 5e-4;
  std::size_t batch_size = 128;
  std::size_t epochs_pretrain = 100;
  std::size_t epochs_joint = 300;
  double lambda_sup = 1.0;
  double lambda_recon = 1.0;
  double lambda_adv = 1.0;
  std::size_t patience = 20;
  std::size_t collapse_epochs = 20;
  std::uint64_t seed = 123;
  Ablation ablation = Ablation::none;
};

/// Config for the given variant: lambda_sup = 0, hidden halved, or one GRU layer.
TimeGanConfig apply_ablation(TimeGanConfig config, Ablation ablation);

/// Return units -> z-score -> [0, 1].
struct FeatureScaling {
  NormStats norm;
  double min = 0.0;
  double max = 1.0;

  double scale(double raw) const;
  double unscale(double unit) const;
};

/// Embedder X -> H, recovery H -> X, generator Z -> H, supervisor H -> H and
/// discriminator H -> logit. Each is a GRU stack with a dense head.
struct TimeGanModel {
  TimeGanModel() = default;
  TimeGanModel(const TimeGanConfig& config, Rng& rng);

  nn::RecurrentNet embedder;
  nn::RecurrentNet recovery;
  nn::RecurrentNet generator;
  nn::RecurrentNet supervisor;
  nn::RecurrentNet discriminator;
  std::size_t window = 30;
  std::size_t hidden = 24;
  std::size_t layers = 2;
  double lambda_sup = 1.0;
  double lambda_recon = 1.0;
  double lambda_adv = 1.0;
  FeatureScaling scaling;

  nn::ParamList autoencoder_params();
  nn::ParamList generator_params();  // generator and supervisor
  nn::ParamList all_params();
};

/// Time-major sequences (T steps of batch x 1) from rows of scaled windows, and back.
nn::Sequence to_sequence(const Matrix& windows);
Matrix from_sequence(const nn::Sequence& seq);

/// Uniform [0, 1) noise of shape T x (n x 1).
nn::Sequence uniform_noise(std::size_t steps, std::size_t n, Rng& rng);

// Training losses on scaled windows. With `grads` set, gradients are added to
// the parameters of every network the loss depends on; callers step only the
// relevant optimizer.
double recon_loss(TimeGanModel& m, const nn::Sequence& x, bool grads = false);
double supervised_loss(TimeGanModel& m, const nn::Sequence& x, bool grads = false);
/// lambda_recon * L_recon + lambda_sup * L_sup.
double embedder_loss(TimeGanModel& m, const nn::Sequence& x, bool grads = false);
/// lambda_adv * (BCE(D(S(G(z))), 1) + BCE(D(G(z)), 1)) + lambda_sup * L_sup.
double generator_loss(TimeGanModel& m, const nn::Sequence& x, const nn::Sequence& z, bool grads = false,
                      double* adversarial_part = nullptr);
/// BCE(D(E(x)), 1) + BCE(D(S(G(z))), 0) + BCE(D(G(z)), 0).
double discriminator_loss(TimeGanModel& m, const nn::Sequence& x, const nn::Sequence& z, bool grads = false);

/// Fraction of per-step discriminator decisions that are correct on real
/// embeddings (label 1) and supervised generator latents (label 0).
double discriminator_accuracy(const TimeGanModel& m, const nn::Sequence& x, const nn::Sequence& z);

struct TimeGanLosses {
  double recon = 0.0;
  double supervised = 0.0;
  double generator_adv = 0.0;
  double discriminator = 0.0;
};

struct EpochLog {
  std::string phase;  // "pretrain" or "joint"
  std::size_t epoch = 0;
  TimeGanLosses losses;
  double discriminator_accuracy = 0.0;
  double validation_composite = 0.0;
};

struct TrainResult {
  TimeGanModel model;  // best-validation snapshot of the joint phase
  std::vector<EpochLog> history;
  std::size_t best_epoch = 0;
  bool stopped_early = false;
  std::vector<std::string> warnings;
};

/// Fits the scaling on the training windows (z-scored with `stats`, or with
/// statistics of the windows themselves) and returns the model ready to train.
TimeGanModel init_model(const WindowSet& train, const TimeGanConfig& config,
                        std::optional<NormStats> stats = std::nullopt);
Matrix scale_windows(const TimeGanModel& m, const Matrix& raw);

/// Autoencoder and supervisor pretraining on scaled windows.
std::vector<EpochLog> pretrain_autoencoder(TimeGanModel& m, const Matrix& scaled, const TimeGanConfig& config);

/// Joint phase with early stopping on validation recon + sup + window MMD.
TrainResult train_joint(TimeGanModel m, const Matrix& scaled_train, const Matrix& scaled_val,
                        const TimeGanConfig& config);

/// Full two-phase training from raw windows.
TrainResult train_timegan(const WindowSet& train, const WindowSet& validation, const TimeGanConfig& config,
                          std::optional<NormStats> stats = std::nullopt);

/// Scaled [0, 1] windows straight from the generator path.
Matrix sample_scaled(const TimeGanModel& m, std::size_t n, std::uint64_t seed);
/// Generator -> supervisor -> recovery, then inverse scaling to return units.
WindowSet sample(const TimeGanModel& m, std::size_t n, std::uint64_t seed);
/// Recovery of the embedding, in return units.
Matrix reconstruct(const TimeGanModel& m, const Matrix& raw_windows);

void to_json(nlohmann::json& j, const TimeGanModel& m);
void from_json(const nlohmann::json& j, TimeGanModel& m);

}  // namespace synfin::timegan

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include <json.hpp>

#include "synfin/nn.hpp"
#include "synfin/series.hpp"

namespace synfin::vae {

struct VaeConfig {
  std::size_t window = 30;
  std::size_t latent_dim = 16;
  std::vector<std::size_t> hidden{64, 32};
  double beta = 1.0;
  double learning_rate = 1e-3;
  std::size_t batch_size = 64;
  std::size_t epochs = 200;
  std::size_t patience = 20;
  std::uint64_t seed = 123;
};

/// Same as the defaults but with a 10-dimensional latent space.
VaeConfig latent10_preset();

/// Encoder T -> hidden... -> 2 d_z (mean, log-variance), decoder d_z -> reversed hidden -> T.
/// Both work on z-scored windows; norm_stats maps back to return units.
class VaeModel {
 public:
  VaeModel() = default;
  VaeModel(const VaeConfig& config, Rng& rng);

  std::size_t window() const { return decoder_.output_size(); }
  std::size_t latent_dim() const { return decoder_.input_size(); }

  nn::DenseStack& encoder() { return encoder_; }
  nn::DenseStack& decoder() { return decoder_; }
  const nn::DenseStack& encoder() const { return encoder_; }
  const nn::DenseStack& decoder() const { return decoder_; }
  nn::ParamList params();

  double beta = 1.0;
  NormStats norm_stats;

  friend void to_json(nlohmann::json& j, const VaeModel& m);
  friend void from_json(const nlohmann::json& j, VaeModel& m);

 private:
  nn::DenseStack encoder_;
  nn::DenseStack decoder_;
};

/// Per-window means. total = reconstruction - beta * kl is the ELBO (maximized).
struct ElboBreakdown {
  double total = 0.0;
  double reconstruction = 0.0;
  double kl = 0.0;
};

/// KL(N(mu, diag exp(logvar)) || N(0, I)) in closed form.
double gaussian_kl(const Vector& mu, const Vector& logvar);

/// ELBO on model-space (z-scored) windows, one reparameterized draw per window
/// with eta from Rng(seed). When `accumulate_grads` is set, gradients of the
/// negative ELBO are added to the parameters.
ElboBreakdown elbo(VaeModel& model, const Matrix& batch, double beta, std::uint64_t seed,
                   bool accumulate_grads = false);
/// Same with caller-supplied noise (rows = windows, cols = d_z).
ElboBreakdown elbo_with_noise(VaeModel& model, const Matrix& batch, double beta, const Matrix& eta,
                              bool accumulate_grads = false);

struct EpochRecord {
  std::size_t epoch = 0;
  ElboBreakdown train;
  ElboBreakdown validation;
  double min_batch_kl = 0.0;
};

struct TrainResult {
  VaeModel model;  // best-validation snapshot
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  bool stopped_early = false;
};

/// Minibatch Adam on the negative ELBO with early stopping on validation ELBO.
/// Windows are in return units; they are z-scored with `stats` (fitted on the
/// training windows when absent).
TrainResult train_vae(const WindowSet& train, const WindowSet& validation, const VaeConfig& config,
                      std::optional<NormStats> stats = std::nullopt);

/// Z-scores raw windows with the model's stored statistics.
Matrix to_model_space(const VaeModel& model, const Matrix& windows);

struct Posterior {
  Matrix mu;
  Matrix logvar;
};

/// Posterior parameters for raw windows (one row each).
Posterior encode(const VaeModel& model, const Matrix& windows);
Posterior encode(const VaeModel& model, std::span<const double> window);

/// Decodes the posterior mean, in return units.
Matrix reconstruct(const VaeModel& model, const Matrix& windows);

/// z ~ N(0, I) from Rng(seed), decoded and denormalized.
WindowSet sample(const VaeModel& model, std::size_t n, std::uint64_t seed);

}  // namespace synfin::vae

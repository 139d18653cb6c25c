#include "synfin/vae.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace synfin::vae {

namespace {

Matrix gaussian_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

bool all_finite(const Matrix& m) { return m.allFinite(); }

Matrix gather_rows(const Matrix& src, std::span<const std::size_t> idx) {
  Matrix out(static_cast<Eigen::Index>(idx.size()), src.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = src.row(static_cast<Eigen::Index>(idx[i]));
  return out;
}

}  // namespace

VaeConfig latent10_preset() {
  VaeConfig c;
  c.latent_dim = 10;
  return c;
}

VaeModel::VaeModel(const VaeConfig& config, Rng& rng) : beta(config.beta) {
  if (config.window == 0 || config.latent_dim == 0) throw std::invalid_argument("VaeModel: window and latent_dim must be positive");
  std::vector<std::size_t> enc{config.window};
  enc.insert(enc.end(), config.hidden.begin(), config.hidden.end());
  enc.push_back(2 * config.latent_dim);
  std::vector<std::size_t> dec{config.latent_dim};
  dec.insert(dec.end(), config.hidden.rbegin(), config.hidden.rend());
  dec.push_back(config.window);
  encoder_ = nn::DenseStack(enc, nn::Activation::relu, nn::Activation::linear, rng);
  decoder_ = nn::DenseStack(dec, nn::Activation::relu, nn::Activation::linear, rng);
}

nn::ParamList VaeModel::params() {
  nn::ParamList out = encoder_.params();
  const nn::ParamList d = decoder_.params();
  out.insert(out.end(), d.begin(), d.end());
  return out;
}

double gaussian_kl(const Vector& mu, const Vector& logvar) {
  double kl = 0.0;
  for (Eigen::Index i = 0; i < mu.size(); ++i) {
    // expm1(lv) - lv is the non-negative part exp(lv) - 1 - lv without cancellation.
    kl += mu(i) * mu(i) + (std::expm1(logvar(i)) - logvar(i));
  }
  return 0.5 * kl;
}

ElboBreakdown elbo_with_noise(VaeModel& model, const Matrix& batch, double beta, const Matrix& eta,
                              bool accumulate_grads) {
  const auto dz = static_cast<Eigen::Index>(model.latent_dim());
  if (batch.cols() != static_cast<Eigen::Index>(model.window())) throw std::invalid_argument("elbo: window length mismatch");
  if (batch.rows() == 0) throw std::invalid_argument("elbo: empty batch");
  if (eta.rows() != batch.rows() || eta.cols() != dz) throw std::invalid_argument("elbo: noise shape mismatch");
  const double n = static_cast<double>(batch.rows());

  nn::DenseStack::Tape enc_tape, dec_tape;
  const Matrix enc_out = model.encoder().forward(batch, enc_tape);
  const Matrix mu = enc_out.leftCols(dz);
  const Matrix logvar = enc_out.rightCols(dz);
  const Matrix sd = (0.5 * logvar.array()).exp().matrix();
  const Matrix z = mu + sd.cwiseProduct(eta);
  const Matrix recon = model.decoder().forward(z, dec_tape);
  if (!all_finite(enc_out) || !all_finite(recon)) throw std::runtime_error("elbo: non-finite activations");

  ElboBreakdown out;
  const Matrix diff = recon - batch;
  out.reconstruction = -0.5 * diff.squaredNorm() / n;
  for (Eigen::Index i = 0; i < batch.rows(); ++i) {
    out.kl += gaussian_kl(mu.row(i).transpose(), logvar.row(i).transpose());
  }
  out.kl /= n;
  out.total = out.reconstruction - beta * out.kl;

  if (accumulate_grads) {
    // Gradient of the negative ELBO averaged over windows.
    const Matrix d_recon = diff / n;
    const Matrix d_z = model.decoder().backward(d_recon, dec_tape);
    Matrix d_enc(batch.rows(), 2 * dz);
    d_enc.leftCols(dz) = d_z + (beta / n) * mu;
    const Matrix var = logvar.array().exp().matrix();
    d_enc.rightCols(dz) = (0.5 * d_z.cwiseProduct(eta).cwiseProduct(sd).array() +
                           (0.5 * beta / n) * (var.array() - 1.0))
                              .matrix();
    model.encoder().backward(d_enc, enc_tape);
  }
  return out;
}

ElboBreakdown elbo(VaeModel& model, const Matrix& batch, double beta, std::uint64_t seed,
                   bool accumulate_grads) {
  Rng rng(seed);
  const Matrix eta = gaussian_matrix(batch.rows(), static_cast<Eigen::Index>(model.latent_dim()), rng);
  return elbo_with_noise(model, batch, beta, eta, accumulate_grads);
}

Matrix to_model_space(const VaeModel& model, const Matrix& windows) {
  return ((windows.array() - model.norm_stats.mean) / model.norm_stats.stddev).matrix();
}

TrainResult train_vae(const WindowSet& train, const WindowSet& validation, const VaeConfig& config,
                      std::optional<NormStats> stats) {
  if (train.size() < 100) throw std::invalid_argument("train_vae: need at least 100 training windows");
  if (validation.size() == 0) throw std::invalid_argument("train_vae: empty validation set");
  if (train.length() != config.window || validation.length() != config.window) {
    throw std::invalid_argument("train_vae: window length does not match config");
  }
  if (config.batch_size == 0 || config.epochs == 0) throw std::invalid_argument("train_vae: batch_size and epochs must be positive");

  Rng init_rng(derive_seed(config.seed, 0));
  TrainResult result;
  VaeModel model(config, init_rng);
  model.norm_stats = stats ? *stats : fit_norm_stats(std::span<const double>(train.data.data(), static_cast<std::size_t>(train.data.size())));
  const Matrix x_train = to_model_space(model, train.data);
  const Matrix x_val = to_model_space(model, validation.data);

  nn::ParamList params = model.params();
  nn::Adam adam(params, {.learning_rate = config.learning_rate});
  Rng shuffle_rng(derive_seed(config.seed, 1));
  Rng noise_rng(derive_seed(config.seed, 2));
  const std::uint64_t val_seed = derive_seed(config.seed, 3);

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  double best = -std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;
  result.model = model;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    shuffle_rng.shuffle(std::span<std::size_t>(order));
    EpochRecord rec;
    rec.epoch = epoch;
    rec.min_batch_kl = std::numeric_limits<double>::infinity();
    double weight_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t stop = std::min(order.size(), start + config.batch_size);
      const Matrix batch = gather_rows(x_train, std::span(order).subspan(start, stop - start));
      adam.zero_grad();
      const ElboBreakdown b = elbo(model, batch, model.beta, noise_rng.next(), true);
      if (!std::isfinite(b.total)) throw std::runtime_error("train_vae: non-finite loss");
      if (b.kl < 0.0) throw std::runtime_error("train_vae: negative KL");
      adam.step();
      const double w = static_cast<double>(stop - start);
      rec.train.total += w * b.total;
      rec.train.reconstruction += w * b.reconstruction;
      rec.train.kl += w * b.kl;
      rec.min_batch_kl = std::min(rec.min_batch_kl, b.kl);
      weight_sum += w;
    }
    rec.train.total /= weight_sum;
    rec.train.reconstruction /= weight_sum;
    rec.train.kl /= weight_sum;
    rec.validation = elbo(model, x_val, model.beta, val_seed);
    if (!std::isfinite(rec.validation.total)) throw std::runtime_error("train_vae: non-finite validation loss");
    result.history.push_back(rec);

    if (rec.validation.total > best) {
      best = rec.validation.total;
      result.model = model;
      result.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= config.patience) {
      result.stopped_early = true;
      break;
    }
  }
  return result;
}

Posterior encode(const VaeModel& model, const Matrix& windows) {
  if (windows.cols() != static_cast<Eigen::Index>(model.window())) throw std::invalid_argument("encode: window length mismatch");
  const auto dz = static_cast<Eigen::Index>(model.latent_dim());
  const Matrix out = model.encoder().forward(to_model_space(model, windows));
  return {out.leftCols(dz), out.rightCols(dz)};
}

Posterior encode(const VaeModel& model, std::span<const double> window) {
  Matrix row(1, static_cast<Eigen::Index>(window.size()));
  for (std::size_t i = 0; i < window.size(); ++i) row(0, static_cast<Eigen::Index>(i)) = window[i];
  return encode(model, row);
}

Matrix reconstruct(const VaeModel& model, const Matrix& windows) {
  const Matrix decoded = model.decoder().forward(encode(model, windows).mu);
  return (decoded.array() * model.norm_stats.stddev + model.norm_stats.mean).matrix();
}

WindowSet sample(const VaeModel& model, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw std::invalid_argument("vae::sample: n must be at least 1");
  Rng rng(seed);
  const Matrix z = gaussian_matrix(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(model.latent_dim()), rng);
  WindowSet out;
  out.data = (model.decoder().forward(z).array() * model.norm_stats.stddev + model.norm_stats.mean).matrix();
  out.stride = model.window();
  out.provenance = Provenance::synthetic("vae", seed);
  return out;
}

void to_json(nlohmann::json& j, const VaeModel& m) {
  j = {{"type", "vae"},
       {"beta", m.beta},
       {"norm_stats", m.norm_stats},
       {"encoder", m.encoder_},
       {"decoder", m.decoder_}};
}

void from_json(const nlohmann::json& j, VaeModel& m) {
  if (j.at("type").get<std::string>() != "vae") throw std::invalid_argument("VaeModel: checkpoint type mismatch");
  VaeModel v;
  v.beta = j.at("beta").get<double>();
  v.norm_stats = j.at("norm_stats").get<NormStats>();
  v.encoder_ = j.at("encoder").get<nn::DenseStack>();
  v.decoder_ = j.at("decoder").get<nn::DenseStack>();
  if (v.encoder_.output_size() != 2 * v.decoder_.input_size() || v.encoder_.input_size() != v.decoder_.output_size()) {
    throw std::invalid_argument("VaeModel: inconsistent encoder/decoder shapes");
  }
  m = std::move(v);
}

}  // namespace synfin::vae

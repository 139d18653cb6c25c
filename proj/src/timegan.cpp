#include "synfin/timegan.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "synfin/metrics.hpp"

namespace synfin::timegan {

using nn::Sequence;

namespace {

constexpr double kScaleEps = 1e-7;

Sequence slice(const Sequence& s, std::size_t begin, std::size_t end) {
  return Sequence(s.begin() + static_cast<std::ptrdiff_t>(begin), s.begin() + static_cast<std::ptrdiff_t>(end));
}

void add_into(Sequence& acc, const Sequence& g, std::size_t offset = 0) {
  for (std::size_t t = 0; t < g.size(); ++t) acc[t + offset] += g[t];
}

Sequence zeros_like(const Sequence& s) {
  Sequence out;
  for (const auto& step : s) out.push_back(nn::Tensor2::Zero(step.rows(), step.cols()));
  return out;
}

struct LogitLoss {
  double value;
  Sequence grad;
};

LogitLoss bce_sequence(const Sequence& logits, double label) {
  const nn::Loss l = nn::bce_with_logits(nn::stack_steps(logits), label);
  return {l.value, nn::unstack_steps(l.grad, static_cast<std::size_t>(logits.front().rows()))};
}

Sequence scaled_seq(const Sequence& s, double factor) {
  Sequence out = s;
  for (auto& step : out) step *= factor;
  return out;
}

Matrix gather_rows(const Matrix& src, std::span<const std::size_t> idx) {
  Matrix out(static_cast<Eigen::Index>(idx.size()), src.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = src.row(static_cast<Eigen::Index>(idx[i]));
  return out;
}

// L_sup = mean |H_{t+1} - S(H)_t|^2 with gradient w.r.t. H (both paths) when requested.
double supervised_from_h(TimeGanModel& m, const Sequence& h, Sequence* grad_h, double weight) {
  const std::size_t steps = h.size();
  if (steps < 2) throw std::invalid_argument("supervised loss needs at least 2 steps");
  nn::RecurrentNet::Tape tape;
  const Sequence s = m.supervisor.forward(h, tape);
  Sequence g_pred;
  const double value = nn::sequence_mse(slice(s, 0, steps - 1), slice(h, 1, steps), grad_h ? &g_pred : nullptr);
  if (grad_h) {
    Sequence g_s = zeros_like(s);
    for (std::size_t t = 0; t + 1 < steps; ++t) g_s[t] = weight * g_pred[t];
    Sequence g_in = m.supervisor.backward(g_s, tape);
    for (std::size_t t = 0; t + 1 < steps; ++t) g_in[t + 1] -= weight * g_pred[t];
    *grad_h = std::move(g_in);
  }
  return value;
}

}  // namespace

std::string to_string(Ablation a) {
  switch (a) {
    case Ablation::none: return "none";
    case Ablation::drop_supervised: return "drop_supervised";
    case Ablation::reduced_embedding: return "reduced_embedding";
    case Ablation::shallow_1layer: return "shallow_1layer";
  }
  return "none";
}

Ablation ablation_from_string(std::string_view name) {
  if (name.empty() || name == "none") return Ablation::none;
  if (name == "drop_supervised") return Ablation::drop_supervised;
  if (name == "reduced_embedding") return Ablation::reduced_embedding;
  if (name == "shallow_1layer") return Ablation::shallow_1layer;
  throw std::invalid_argument("unknown TimeGAN ablation: " + std::string(name));
}

TimeGanConfig apply_ablation(TimeGanConfig config, Ablation ablation) {
  config.ablation = ablation;
  switch (ablation) {
    case Ablation::none: break;
    case Ablation::drop_supervised: config.lambda_sup = 0.0; break;
    case Ablation::reduced_embedding: config.hidden = std::max<std::size_t>(1, config.hidden / 2); break;
    case Ablation::shallow_1layer: config.layers = 1; break;
  }
  return config;
}

double FeatureScaling::scale(double raw) const {
  return ((raw - norm.mean) / norm.stddev - min) / (max - min + kScaleEps);
}

double FeatureScaling::unscale(double unit) const {
  return (unit * (max - min + kScaleEps) + min) * norm.stddev + norm.mean;
}

TimeGanModel::TimeGanModel(const TimeGanConfig& c, Rng& rng)
    : window(c.window), hidden(c.hidden), layers(c.layers), lambda_sup(c.lambda_sup),
      lambda_recon(c.lambda_recon), lambda_adv(c.lambda_adv) {
  if (c.cell != "gru") throw std::invalid_argument("TimeGAN: unsupported cell type '" + c.cell + "' (only gru)");
  if (c.window < 2 || c.hidden == 0 || c.layers == 0) throw std::invalid_argument("TimeGAN: invalid shape config");
  using nn::Activation;
  embedder = nn::RecurrentNet(1, c.hidden, c.layers, c.hidden, Activation::sigmoid, rng);
  recovery = nn::RecurrentNet(c.hidden, c.hidden, c.layers, 1, Activation::sigmoid, rng);
  generator = nn::RecurrentNet(1, c.hidden, c.layers, c.hidden, Activation::sigmoid, rng);
  supervisor = nn::RecurrentNet(c.hidden, c.hidden, c.layers, c.hidden, Activation::sigmoid, rng);
  discriminator = nn::RecurrentNet(c.hidden, c.hidden, c.layers, 1, Activation::linear, rng);
}

nn::ParamList TimeGanModel::autoencoder_params() {
  nn::ParamList out = embedder.params();
  const auto r = recovery.params();
  out.insert(out.end(), r.begin(), r.end());
  return out;
}

nn::ParamList TimeGanModel::generator_params() {
  nn::ParamList out = generator.params();
  const auto s = supervisor.params();
  out.insert(out.end(), s.begin(), s.end());
  return out;
}

nn::ParamList TimeGanModel::all_params() {
  nn::ParamList out = autoencoder_params();
  for (auto* net : {&generator, &supervisor, &discriminator}) {
    const auto p = net->params();
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

Sequence to_sequence(const Matrix& windows) {
  Sequence s(static_cast<std::size_t>(windows.cols()));
  for (std::size_t t = 0; t < s.size(); ++t) s[t] = windows.col(static_cast<Eigen::Index>(t));
  return s;
}

Matrix from_sequence(const Sequence& seq) {
  if (seq.empty()) return {};
  Matrix out(seq.front().rows(), static_cast<Eigen::Index>(seq.size()));
  for (std::size_t t = 0; t < seq.size(); ++t) out.col(static_cast<Eigen::Index>(t)) = seq[t].col(0);
  return out;
}

Sequence uniform_noise(std::size_t steps, std::size_t n, Rng& rng) {
  Sequence z(steps, nn::Tensor2(static_cast<Eigen::Index>(n), 1));
  for (auto& step : z) {
    for (Eigen::Index i = 0; i < step.size(); ++i) step.data()[i] = rng.uniform();
  }
  return z;
}

double recon_loss(TimeGanModel& m, const Sequence& x, bool grads) {
  nn::RecurrentNet::Tape te, tr;
  const Sequence h = m.embedder.forward(x, te);
  const Sequence x_tilde = m.recovery.forward(h, tr);
  Sequence g;
  const double value = nn::sequence_mse(x_tilde, x, grads ? &g : nullptr);
  if (grads) m.embedder.backward(m.recovery.backward(g, tr), te);
  return value;
}

double supervised_loss(TimeGanModel& m, const Sequence& x, bool grads) {
  nn::RecurrentNet::Tape te;
  const Sequence h = m.embedder.forward(x, te);
  Sequence gh;
  const double value = supervised_from_h(m, h, grads ? &gh : nullptr, 1.0);
  if (grads) m.embedder.backward(gh, te);
  return value;
}

double embedder_loss(TimeGanModel& m, const Sequence& x, bool grads) {
  nn::RecurrentNet::Tape te, tr;
  const Sequence h = m.embedder.forward(x, te);
  const Sequence x_tilde = m.recovery.forward(h, tr);
  Sequence g;
  const double recon = nn::sequence_mse(x_tilde, x, grads ? &g : nullptr);
  double sup = 0.0;
  Sequence gh;
  if (m.lambda_sup != 0.0) sup = supervised_from_h(m, h, grads ? &gh : nullptr, m.lambda_sup);
  if (grads) {
    Sequence total = m.recovery.backward(scaled_seq(g, m.lambda_recon), tr);
    if (m.lambda_sup != 0.0) add_into(total, gh);
    m.embedder.backward(total, te);
  }
  return m.lambda_recon * recon + m.lambda_sup * sup;
}

double generator_loss(TimeGanModel& m, const Sequence& x, const Sequence& z, bool grads, double* adversarial_part) {
  nn::RecurrentNet::Tape tg, ts, td_h, td_e;
  const Sequence e_hat = m.generator.forward(z, tg);
  const Sequence h_hat = m.supervisor.forward(e_hat, ts);
  const LogitLoss fake = bce_sequence(m.discriminator.forward(h_hat, td_h), 1.0);
  const LogitLoss fake_e = bce_sequence(m.discriminator.forward(e_hat, td_e), 1.0);
  const double adv = fake.value + fake_e.value;
  if (adversarial_part) *adversarial_part = adv;

  double sup = 0.0;
  if (m.lambda_sup != 0.0) {
    // Supervisor on real embeddings; the embedder is held fixed in this step.
    const Sequence h = m.embedder.forward(x);
    Sequence unused;
    sup = supervised_from_h(m, h, grads ? &unused : nullptr, m.lambda_sup);
  }
  if (grads) {
    const Sequence d_hhat = m.discriminator.backward(scaled_seq(fake.grad, m.lambda_adv), td_h);
    Sequence d_ehat = m.supervisor.backward(d_hhat, ts);
    add_into(d_ehat, m.discriminator.backward(scaled_seq(fake_e.grad, m.lambda_adv), td_e));
    m.generator.backward(d_ehat, tg);
  }
  return m.lambda_adv * adv + m.lambda_sup * sup;
}

double discriminator_loss(TimeGanModel& m, const Sequence& x, const Sequence& z, bool grads) {
  const Sequence h = m.embedder.forward(x);
  const Sequence e_hat = m.generator.forward(z);
  const Sequence h_hat = m.supervisor.forward(e_hat);
  nn::RecurrentNet::Tape tr, tf, te;
  const LogitLoss real = bce_sequence(m.discriminator.forward(h, tr), 1.0);
  const LogitLoss fake = bce_sequence(m.discriminator.forward(h_hat, tf), 0.0);
  const LogitLoss fake_e = bce_sequence(m.discriminator.forward(e_hat, te), 0.0);
  if (grads) {
    m.discriminator.backward(real.grad, tr);
    m.discriminator.backward(fake.grad, tf);
    m.discriminator.backward(fake_e.grad, te);
  }
  return real.value + fake.value + fake_e.value;
}

double discriminator_accuracy(const TimeGanModel& m, const Sequence& x, const Sequence& z) {
  const Sequence real = m.discriminator.forward(m.embedder.forward(x));
  const Sequence fake = m.discriminator.forward(m.supervisor.forward(m.generator.forward(z)));
  double correct = 0.0, total = 0.0;
  for (const auto& step : real) {
    correct += static_cast<double>((step.array() > 0.0).count());
    total += static_cast<double>(step.size());
  }
  for (const auto& step : fake) {
    correct += static_cast<double>((step.array() <= 0.0).count());
    total += static_cast<double>(step.size());
  }
  return correct / total;
}

TimeGanModel init_model(const WindowSet& train, const TimeGanConfig& config, std::optional<NormStats> stats) {
  if (train.size() < 100) throw std::invalid_argument("TimeGAN: need at least 100 training windows");
  if (train.length() != config.window) throw std::invalid_argument("TimeGAN: window length does not match config");
  Rng rng(derive_seed(config.seed, 0));
  TimeGanModel m(config, rng);
  const std::span<const double> all(train.data.data(), static_cast<std::size_t>(train.data.size()));
  m.scaling.norm = stats ? *stats : fit_norm_stats(all);
  const Matrix z = ((train.data.array() - m.scaling.norm.mean) / m.scaling.norm.stddev).matrix();
  m.scaling.min = z.minCoeff();
  m.scaling.max = z.maxCoeff();
  return m;
}

Matrix scale_windows(const TimeGanModel& m, const Matrix& raw) {
  return raw.unaryExpr([&](double v) { return m.scaling.scale(v); });
}

std::vector<EpochLog> pretrain_autoencoder(TimeGanModel& m, const Matrix& scaled, const TimeGanConfig& config) {
  if (scaled.rows() < 100) throw std::invalid_argument("pretrain_autoencoder: need at least 100 windows");
  nn::Adam ae(m.autoencoder_params(), {.learning_rate = config.learning_rate});
  nn::Adam sup(m.supervisor.params(), {.learning_rate = config.learning_rate});
  const bool train_supervisor = m.lambda_sup != 0.0;
  nn::ParamList all = m.all_params();
  Rng shuffle_rng(derive_seed(config.seed, 1));
  std::vector<std::size_t> order(static_cast<std::size_t>(scaled.rows()));
  std::iota(order.begin(), order.end(), 0);

  std::vector<EpochLog> log;
  for (std::size_t epoch = 1; epoch <= config.epochs_pretrain; ++epoch) {
    shuffle_rng.shuffle(std::span<std::size_t>(order));
    EpochLog rec{"pretrain", epoch, {}, 0.0, 0.0};
    double batches = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t stop = std::min(order.size(), start + config.batch_size);
      const Sequence x = to_sequence(gather_rows(scaled, std::span(order).subspan(start, stop - start)));
      nn::zero_grad(all);
      rec.losses.recon += recon_loss(m, x, true);
      ae.step();
      if (train_supervisor) {
        nn::zero_grad(all);
        rec.losses.supervised += supervised_loss(m, x, true);
        sup.step();
      }
      batches += 1.0;
    }
    rec.losses.recon /= batches;
    rec.losses.supervised /= batches;
    if (!std::isfinite(rec.losses.recon) || !std::isfinite(rec.losses.supervised)) {
      throw std::runtime_error("TimeGAN pretraining diverged");
    }
    log.push_back(rec);
  }
  return log;
}

TrainResult train_joint(TimeGanModel m, const Matrix& scaled_train, const Matrix& scaled_val, const TimeGanConfig& config) {
  if (scaled_val.rows() < 2) throw std::invalid_argument("train_joint: need at least 2 validation windows");
  nn::Adam gen(m.generator_params(), {.learning_rate = config.learning_rate});
  nn::Adam emb(m.autoencoder_params(), {.learning_rate = config.learning_rate});
  nn::Adam disc(m.discriminator.params(), {.learning_rate = config.learning_rate});
  nn::ParamList all = m.all_params();
  Rng shuffle_rng(derive_seed(config.seed, 2));
  Rng noise_rng(derive_seed(config.seed, 3));
  const std::uint64_t val_seed = derive_seed(config.seed, 4);
  const auto n_val = static_cast<std::size_t>(scaled_val.rows());
  const Sequence x_val = to_sequence(scaled_val);
  Sequence z_val;
  {
    Rng r(val_seed);
    z_val = uniform_noise(m.window, n_val, r);
  }

  std::vector<std::size_t> order(static_cast<std::size_t>(scaled_train.rows()));
  std::iota(order.begin(), order.end(), 0);
  TrainResult result;
  result.model = m;
  double best = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0, pinned = 0;
  bool collapse_reported = false;

  for (std::size_t epoch = 1; epoch <= config.epochs_joint; ++epoch) {
    shuffle_rng.shuffle(std::span<std::size_t>(order));
    EpochLog rec{"joint", epoch, {}, 0.0, 0.0};
    double batches = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t stop = std::min(order.size(), start + config.batch_size);
      const Sequence x = to_sequence(gather_rows(scaled_train, std::span(order).subspan(start, stop - start)));

      Sequence z = uniform_noise(m.window, stop - start, noise_rng);
      nn::zero_grad(all);
      double adv = 0.0;
      generator_loss(m, x, z, true, &adv);
      gen.step();
      rec.losses.generator_adv += adv;

      nn::zero_grad(all);
      embedder_loss(m, x, true);
      emb.step();

      z = uniform_noise(m.window, stop - start, noise_rng);
      nn::zero_grad(all);
      rec.losses.discriminator += discriminator_loss(m, x, z, true);
      disc.step();
      batches += 1.0;
    }
    rec.losses.generator_adv /= batches;
    rec.losses.discriminator /= batches;
    rec.losses.recon = recon_loss(m, x_val);
    rec.losses.supervised = supervised_loss(m, x_val);
    rec.discriminator_accuracy = discriminator_accuracy(m, x_val, z_val);

    const Matrix synth = from_sequence(m.recovery.forward(m.supervisor.forward(m.generator.forward(z_val))));
    const double mmd = metrics::mmd_rbf(scaled_val, synth);
    rec.validation_composite = rec.losses.recon + m.lambda_sup * rec.losses.supervised + m.lambda_adv * mmd;
    if (!std::isfinite(rec.validation_composite) || !std::isfinite(rec.losses.generator_adv) ||
        !std::isfinite(rec.losses.discriminator)) {
      throw std::runtime_error("TimeGAN joint training diverged");
    }
    result.history.push_back(rec);

    pinned = rec.discriminator_accuracy >= 1.0 ? pinned + 1 : 0;
    if (pinned >= config.collapse_epochs && !collapse_reported) {
      result.warnings.push_back("discriminator accuracy pinned at 1.0 for " + std::to_string(pinned) +
                                " consecutive epochs (ending at joint epoch " + std::to_string(epoch) + ")");
      collapse_reported = true;
    }

    if (rec.validation_composite < best) {
      best = rec.validation_composite;
      result.model = m;
      result.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= config.patience) {
      result.stopped_early = true;
      break;
    }
  }
  return result;
}

TrainResult train_timegan(const WindowSet& train, const WindowSet& validation, const TimeGanConfig& config,
                          std::optional<NormStats> stats) {
  const TimeGanConfig c = apply_ablation(config, config.ablation);
  TimeGanModel m = init_model(train, c, stats);
  const Matrix x_train = scale_windows(m, train.data);
  const Matrix x_val = scale_windows(m, validation.data);
  std::vector<EpochLog> pre = pretrain_autoencoder(m, x_train, c);
  TrainResult result = train_joint(std::move(m), x_train, x_val, c);
  result.history.insert(result.history.begin(), pre.begin(), pre.end());
  return result;
}

Matrix sample_scaled(const TimeGanModel& m, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw std::invalid_argument("timegan::sample: n must be at least 1");
  Rng rng(seed);
  const Sequence z = uniform_noise(m.window, n, rng);
  return from_sequence(m.recovery.forward(m.supervisor.forward(m.generator.forward(z))));
}

WindowSet sample(const TimeGanModel& m, std::size_t n, std::uint64_t seed) {
  WindowSet out;
  out.data = sample_scaled(m, n, seed).unaryExpr([&](double v) { return m.scaling.unscale(v); });
  out.stride = m.window;
  out.provenance = Provenance::synthetic("timegan", seed);
  return out;
}

Matrix reconstruct(const TimeGanModel& m, const Matrix& raw_windows) {
  const Sequence x = to_sequence(scale_windows(m, raw_windows));
  return from_sequence(m.recovery.forward(m.embedder.forward(x))).unaryExpr([&](double v) { return m.scaling.unscale(v); });
}

void to_json(nlohmann::json& j, const TimeGanModel& m) {
  j = {{"type", "timegan"},
       {"window", m.window},
       {"hidden", m.hidden},
       {"layers", m.layers},
       {"lambda_sup", m.lambda_sup},
       {"lambda_recon", m.lambda_recon},
       {"lambda_adv", m.lambda_adv},
       {"scaling", {{"norm_stats", m.scaling.norm}, {"min", m.scaling.min}, {"max", m.scaling.max}}},
       {"embedder", m.embedder},
       {"recovery", m.recovery},
       {"generator", m.generator},
       {"supervisor", m.supervisor},
       {"discriminator", m.discriminator}};
}

void from_json(const nlohmann::json& j, TimeGanModel& m) {
  if (j.at("type").get<std::string>() != "timegan") throw std::invalid_argument("TimeGanModel: checkpoint type mismatch");
  TimeGanModel v;
  v.window = j.at("window").get<std::size_t>();
  v.hidden = j.at("hidden").get<std::size_t>();
  v.layers = j.at("layers").get<std::size_t>();
  v.lambda_sup = j.at("lambda_sup").get<double>();
  v.lambda_recon = j.at("lambda_recon").get<double>();
  v.lambda_adv = j.at("lambda_adv").get<double>();
  const auto& s = j.at("scaling");
  v.scaling.norm = s.at("norm_stats").get<NormStats>();
  v.scaling.min = s.at("min").get<double>();
  v.scaling.max = s.at("max").get<double>();
  v.embedder = j.at("embedder").get<nn::RecurrentNet>();
  v.recovery = j.at("recovery").get<nn::RecurrentNet>();
  v.generator = j.at("generator").get<nn::RecurrentNet>();
  v.supervisor = j.at("supervisor").get<nn::RecurrentNet>();
  v.discriminator = j.at("discriminator").get<nn::RecurrentNet>();
  m = std::move(v);
}

}  // namespace synfin::timegan

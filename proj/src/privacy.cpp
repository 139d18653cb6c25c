#include "synfin/privacy.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "synfin/rng.hpp"

namespace synfin::privacy {

namespace {

std::span<const double> row_span(const Matrix& m, Eigen::Index r) {
  return {m.data() + r * m.cols(), static_cast<std::size_t>(m.cols())};
}

Matrix gather_rows(const Matrix& src, std::span<const std::size_t> idx) {
  Matrix out(static_cast<Eigen::Index>(idx.size()), src.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = src.row(static_cast<Eigen::Index>(idx[i]));
  return out;
}

struct Split {
  std::vector<std::size_t> members;
  std::vector<std::size_t> non_members;
};

// Equal-sized random halves of `pool`; an odd leftover is dropped.
Split random_halves(std::vector<std::size_t> pool, Rng& rng) {
  rng.shuffle(std::span<std::size_t>(pool));
  const std::size_t half = pool.size() / 2;
  Split s;
  s.members.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(half));
  s.non_members.assign(pool.begin() + static_cast<std::ptrdiff_t>(half), pool.begin() + static_cast<std::ptrdiff_t>(2 * half));
  std::sort(s.members.begin(), s.members.end());
  std::sort(s.non_members.begin(), s.non_members.end());
  return s;
}

struct Labelled {
  Matrix features;
  std::vector<int> labels;
};

Labelled run_split(const TrainFn& train, const Matrix& dataset, const Split& split, std::uint64_t seed,
                   const MiaConfig& config, Rng& noise_rng, const std::string& context) {
  const Matrix members = gather_rows(dataset, split.members);
  TrainedGenerator gen;
  try {
    gen = train(members, split.members, seed);
  } catch (const std::exception& e) {
    throw std::runtime_error("mia: generator training failed in " + context + ": " + e.what());
  }
  Matrix records(members.rows() + static_cast<Eigen::Index>(split.non_members.size()), dataset.cols());
  records << members, gather_rows(dataset, split.non_members);
  Labelled out;
  out.features = attack_features(records, gen, config.k_neighbors);
  if (config.noise_features) {
    for (Eigen::Index i = 0; i < out.features.size(); ++i) out.features.data()[i] = noise_rng.normal();
  }
  out.labels.assign(split.members.size(), 1);
  out.labels.insert(out.labels.end(), split.non_members.size(), 0);
  return out;
}

}  // namespace

double window_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.empty()) throw std::invalid_argument("window_distance: dimension mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s / static_cast<double>(a.size()));
}

NndtReport nndt(const Matrix& real, const Matrix& synth, double tau) {
  if (real.rows() == 0 || synth.rows() == 0) throw std::invalid_argument("nndt: empty window set");
  if (real.cols() != synth.cols()) throw std::invalid_argument("nndt: window length mismatch");
  NndtReport r;
  r.tau = tau;
  r.d_min.resize(static_cast<std::size_t>(synth.rows()));
  std::size_t below = 0;
  for (Eigen::Index i = 0; i < synth.rows(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < real.rows(); ++j) best = std::min(best, window_distance(row_span(synth, i), row_span(real, j)));
    r.d_min[static_cast<std::size_t>(i)] = best;
    r.avg_nn_distance += best;
    below += best < tau ? 1 : 0;
  }
  r.avg_nn_distance /= static_cast<double>(synth.rows());
  r.pct_below_tau = 100.0 * static_cast<double>(below) / static_cast<double>(synth.rows());
  return r;
}

NndtReport nndt(const WindowSet& real, const WindowSet& synth, const NormStats& stats, double tau) {
  auto z = [&](const Matrix& m) { return ((m.array() - stats.mean) / stats.stddev).matrix(); };
  return nndt(Matrix(z(real.data)), Matrix(z(synth.data)), tau);
}

Matrix attack_features(const Matrix& records, const TrainedGenerator& gen, std::size_t k) {
  if (gen.synthetic.rows() == 0) throw std::invalid_argument("attack_features: generator produced no windows");
  if (gen.synthetic.cols() != records.cols()) throw std::invalid_argument("attack_features: window length mismatch");
  const std::size_t kk = std::min<std::size_t>(k, static_cast<std::size_t>(gen.synthetic.rows()));
  Matrix f(records.rows(), 3);
  std::vector<double> d(static_cast<std::size_t>(gen.synthetic.rows()));
  for (Eigen::Index i = 0; i < records.rows(); ++i) {
    for (Eigen::Index j = 0; j < gen.synthetic.rows(); ++j) d[static_cast<std::size_t>(j)] = window_distance(row_span(records, i), row_span(gen.synthetic, j));
    std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(kk), d.end());
    f(i, 0) = d[0];
    f(i, 1) = std::accumulate(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(kk), 0.0) / static_cast<double>(kk);
    f(i, 2) = 0.0;
  }
  if (gen.reconstruction_error) {
    const Vector e = gen.reconstruction_error(records);
    if (e.size() != records.rows()) throw std::runtime_error("attack_features: reconstruction error size mismatch");
    f.col(2) = e;
  }
  return f;
}

double LogisticModel::probability(const Vector& features) const {
  double s = weights(weights.size() - 1);
  for (Eigen::Index i = 0; i < features.size(); ++i) s += weights(i) * (features(i) - mean(i)) / scale(i);
  return 1.0 / (1.0 + std::exp(-s));
}

LogisticModel fit_logistic(const Matrix& x, const std::vector<int>& labels, double ridge) {
  if (x.rows() != static_cast<Eigen::Index>(labels.size()) || x.rows() < 2) throw std::invalid_argument("fit_logistic: bad shapes");
  const Eigen::Index n = x.rows(), p = x.cols();
  LogisticModel m;
  m.mean = x.colwise().mean().transpose();
  m.scale = Vector::Ones(p);
  for (Eigen::Index c = 0; c < p; ++c) {
    const double sd = std::sqrt((x.col(c).array() - m.mean(c)).square().sum() / static_cast<double>(n - 1));
    if (sd > 0.0) m.scale(c) = sd;
  }
  Eigen::MatrixXd a(n, p + 1);
  for (Eigen::Index c = 0; c < p; ++c) a.col(c) = (x.col(c).array() - m.mean(c)) / m.scale(c);
  a.col(p).setOnes();
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) y(i) = labels[static_cast<std::size_t>(i)];

  Eigen::VectorXd w = Eigen::VectorXd::Zero(p + 1);
  for (int iter = 0; iter < 100; ++iter) {
    const Eigen::VectorXd prob = (-(a * w).array()).exp().unaryExpr([](double e) { return 1.0 / (1.0 + e); }).matrix();
    const Eigen::VectorXd grad = a.transpose() * (prob - y) + ridge * w;
    const Eigen::VectorXd s = (prob.array() * (1.0 - prob.array())).matrix();
    Eigen::MatrixXd h = a.transpose() * s.asDiagonal() * a;
    h.diagonal().array() += ridge;
    const Eigen::VectorXd step = h.ldlt().solve(grad);
    // Damped Newton keeps separable data from diverging in one jump.
    const double norm = step.norm();
    w -= norm > 10.0 ? (10.0 / norm) * step : step;
    if (norm < 1e-10) break;
  }
  m.weights = w;
  return m;
}

MiaReport mia(const TrainFn& train, const Matrix& dataset, const MiaConfig& config) {
  if (dataset.rows() < 200) throw std::invalid_argument("mia: need at least 200 windows");
  if (config.n_shadow == 0) throw std::invalid_argument("mia: need at least one shadow model");
  Rng rng(derive_seed(config.seed, 0));
  Rng noise_rng(derive_seed(config.seed, 1));
  std::vector<std::size_t> order(static_cast<std::size_t>(dataset.rows()));
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(std::span<std::size_t>(order));
  const std::size_t half = order.size() / 2;
  const std::vector<std::size_t> shadow_pool(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(half));
  const std::vector<std::size_t> victim_pool(order.begin() + static_cast<std::ptrdiff_t>(half), order.end());

  Matrix shadow_x(0, 3);
  std::vector<int> shadow_y;
  for (std::size_t s = 0; s < config.n_shadow; ++s) {
    const Split split = random_halves(shadow_pool, rng);
    const Labelled l = run_split(train, dataset, split, derive_seed(config.seed, 100 + s), config, noise_rng,
                                 "shadow " + std::to_string(s));
    Matrix grown(shadow_x.rows() + l.features.rows(), 3);
    grown << shadow_x, l.features;
    shadow_x = std::move(grown);
    shadow_y.insert(shadow_y.end(), l.labels.begin(), l.labels.end());
  }
  const LogisticModel attack = fit_logistic(shadow_x, shadow_y);

  const Split victim = random_halves(victim_pool, rng);
  const Labelled v = run_split(train, dataset, victim, derive_seed(config.seed, 99), config, noise_rng, "victim");
  double tp = 0.0, tn = 0.0;
  for (Eigen::Index i = 0; i < v.features.rows(); ++i) {
    const bool predicted_member = attack.probability(v.features.row(i).transpose()) > 0.5;
    if (v.labels[static_cast<std::size_t>(i)] == 1) {
      tp += predicted_member ? 1.0 : 0.0;
    } else {
      tn += predicted_member ? 0.0 : 1.0;
    }
  }
  MiaReport r;
  r.n_shadow = config.n_shadow;
  r.shadow_records = shadow_y.size();
  r.victim_members = victim.members.size();
  r.victim_non_members = victim.non_members.size();
  r.attack_accuracy = 0.5 * (tp / static_cast<double>(r.victim_members) + tn / static_cast<double>(r.victim_non_members));
  r.features = config.noise_features ? "noise(3)" : "nn_distance,mean_knn_distance(k=" + std::to_string(config.k_neighbors) + "),reconstruction_error";
  r.coefficients.assign(attack.weights.data(), attack.weights.data() + attack.weights.size());
  return r;
}

void to_json(nlohmann::json& j, const NndtReport& r) {
  j = {{"tau", r.tau}, {"avg_nn_distance", r.avg_nn_distance}, {"pct_below_tau", r.pct_below_tau}, {"distance_scale", "zscore/sqrt(T)"}};
}

void to_json(nlohmann::json& j, const MiaReport& r) {
  j = {{"mia_accuracy", r.attack_accuracy},
       {"n_shadow", r.n_shadow},
       {"shadow_records", r.shadow_records},
       {"victim_members", r.victim_members},
       {"victim_non_members", r.victim_non_members},
       {"features", r.features},
       {"classifier", "logistic regression on standardized features"},
       {"coefficients", r.coefficients}};
}

}  // namespace synfin::privacy

#include "synfin/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace synfin::nn {
namespace {

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Tensor2 uniform_tensor(Eigen::Index rows, Eigen::Index cols, double bound, Rng& rng) {
  Tensor2 t(rows, cols);
  for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = rng.uniform(-bound, bound);
  return t;
}

Tensor2 hcat(const Tensor2& a, const Tensor2& b) {
  Tensor2 out(a.rows(), a.cols() + b.cols());
  out.leftCols(a.cols()) = a;
  out.rightCols(b.cols()) = b;
  return out;
}

void require_shape(const Tensor2& t, Eigen::Index cols, const char* what) {
  if (t.cols() != cols) throw std::invalid_argument(std::string(what) + ": shape mismatch");
}

void assign_param(Param& p, const nlohmann::json& j, const char* name) {
  p = Param(name, tensor_from_json(j.at(name)));
}

}  // namespace

std::string to_string(Activation a) {
  switch (a) {
    case Activation::linear: return "linear";
    case Activation::relu: return "relu";
    case Activation::sigmoid: return "sigmoid";
    case Activation::tanh: return "tanh";
  }
  return "linear";
}

Activation activation_from_string(std::string_view name) {
  if (name == "linear") return Activation::linear;
  if (name == "relu") return Activation::relu;
  if (name == "sigmoid") return Activation::sigmoid;
  if (name == "tanh") return Activation::tanh;
  throw std::invalid_argument("unknown activation: " + std::string(name));
}

Tensor2 activate(const Tensor2& pre, Activation a) {
  switch (a) {
    case Activation::linear: return pre;
    case Activation::relu: return pre.cwiseMax(0.0);
    case Activation::sigmoid: return pre.unaryExpr([](double x) { return sigmoid(x); });
    case Activation::tanh: return pre.array().tanh().matrix();
  }
  return pre;
}

Tensor2 activation_backward(const Tensor2& g, const Tensor2& out, Activation a) {
  switch (a) {
    case Activation::linear: return g;
    case Activation::relu: return (out.array() > 0.0).select(g, 0.0);
    case Activation::sigmoid: return (g.array() * out.array() * (1.0 - out.array())).matrix();
    case Activation::tanh: return (g.array() * (1.0 - out.array().square())).matrix();
  }
  return g;
}

void zero_grad(const ParamList& params) {
  for (Param* p : params) p->grad.setZero();
}

std::size_t parameter_count(const ParamList& params) {
  std::size_t n = 0;
  for (const Param* p : params) n += static_cast<std::size_t>(p->value.size());
  return n;
}

// ---- DenseLayer ----------------------------------------------------------

DenseLayer::DenseLayer(std::size_t in, std::size_t out, Activation act, Rng& rng) : act_(act) {
  const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
  weight_ = Param("weight", uniform_tensor(static_cast<Eigen::Index>(out),
                                           static_cast<Eigen::Index>(in), bound, rng));
  bias_ = Param("bias", Tensor2::Zero(1, static_cast<Eigen::Index>(out)));
}

DenseLayer::DenseLayer(Tensor2 weight, Tensor2 bias, Activation act) : act_(act) {
  if (bias.rows() != 1 || bias.cols() != weight.rows()) {
    throw std::invalid_argument("DenseLayer: bias must be 1 x out");
  }
  weight_ = Param("weight", std::move(weight));
  bias_ = Param("bias", std::move(bias));
}

Tensor2 DenseLayer::forward(const Tensor2& batch) const {
  require_shape(batch, weight_.value.cols(), "dense_forward");
  Tensor2 pre = batch * weight_.value.transpose();
  pre.rowwise() += bias_.value.row(0);
  return activate(pre, act_);
}

Tensor2 DenseLayer::forward(const Tensor2& batch, Tape& tape) const {
  tape.input = batch;
  tape.output = forward(batch);
  return tape.output;
}

Tensor2 DenseLayer::backward(const Tensor2& grad_output, const Tape& tape) {
  const Tensor2 g = activation_backward(grad_output, tape.output, act_);
  weight_.grad.noalias() += g.transpose() * tape.input;
  bias_.grad.row(0) += g.colwise().sum();
  return g * weight_.value;
}

void DenseLayer::collect(ParamList& out) {
  out.push_back(&weight_);
  out.push_back(&bias_);
}

// ---- GruCell -------------------------------------------------------------

GruCell::GruCell(std::size_t input, std::size_t hidden, Rng& rng) : input_(input), hidden_(hidden) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  const auto h = static_cast<Eigen::Index>(hidden);
  const auto cols = static_cast<Eigen::Index>(input + hidden);
  wz_ = Param("update_weight", uniform_tensor(h, cols, bound, rng));
  wr_ = Param("reset_weight", uniform_tensor(h, cols, bound, rng));
  wc_ = Param("candidate_weight", uniform_tensor(h, cols, bound, rng));
  bz_ = Param("update_bias", Tensor2::Zero(1, h));
  br_ = Param("reset_bias", Tensor2::Zero(1, h));
  bc_ = Param("candidate_bias", Tensor2::Zero(1, h));
}

Tensor2 GruCell::step(const Tensor2& x, const Tensor2& h_prev) const {
  StepTape tape;
  return step(x, h_prev, tape);
}

Tensor2 GruCell::step(const Tensor2& x, const Tensor2& h_prev, StepTape& tape) const {
  require_shape(x, static_cast<Eigen::Index>(input_), "gru_step input");
  require_shape(h_prev, static_cast<Eigen::Index>(hidden_), "gru_step state");
  if (x.rows() != h_prev.rows()) throw std::invalid_argument("gru_step: batch mismatch");
  tape.h_prev = h_prev;
  tape.xh = hcat(x, h_prev);
  Tensor2 az = tape.xh * wz_.value.transpose();
  az.rowwise() += bz_.value.row(0);
  Tensor2 ar = tape.xh * wr_.value.transpose();
  ar.rowwise() += br_.value.row(0);
  tape.z = activate(az, Activation::sigmoid);
  tape.r = activate(ar, Activation::sigmoid);
  tape.xrh = hcat(x, tape.r.cwiseProduct(h_prev));
  Tensor2 ac = tape.xrh * wc_.value.transpose();
  ac.rowwise() += bc_.value.row(0);
  tape.c = ac.array().tanh().matrix();
  return ((1.0 - tape.z.array()) * tape.c.array() + tape.z.array() * h_prev.array()).matrix();
}

Tensor2 GruCell::backward_step(const Tensor2& dh, const StepTape& t, Tensor2& dh_prev) {
  const auto in = static_cast<Eigen::Index>(input_);
  const auto hid = static_cast<Eigen::Index>(hidden_);

  const Tensor2 dz = (dh.array() * (t.h_prev.array() - t.c.array())).matrix();
  const Tensor2 dc = (dh.array() * (1.0 - t.z.array())).matrix();
  dh_prev = (dh.array() * t.z.array()).matrix();

  const Tensor2 dac = activation_backward(dc, t.c, Activation::tanh);
  wc_.grad.noalias() += dac.transpose() * t.xrh;
  bc_.grad.row(0) += dac.colwise().sum();
  const Tensor2 dxrh = dac * wc_.value;
  Tensor2 dx = dxrh.leftCols(in);
  const Tensor2 drh = dxrh.rightCols(hid);
  const Tensor2 dr = drh.cwiseProduct(t.h_prev);
  dh_prev += drh.cwiseProduct(t.r);

  const Tensor2 daz = activation_backward(dz, t.z, Activation::sigmoid);
  const Tensor2 dar = activation_backward(dr, t.r, Activation::sigmoid);
  wz_.grad.noalias() += daz.transpose() * t.xh;
  bz_.grad.row(0) += daz.colwise().sum();
  wr_.grad.noalias() += dar.transpose() * t.xh;
  br_.grad.row(0) += dar.colwise().sum();
  const Tensor2 dxh = daz * wz_.value + dar * wr_.value;
  dx += dxh.leftCols(in);
  dh_prev += dxh.rightCols(hid);
  return dx;
}

void GruCell::collect(ParamList& out) {
  for (Param* p : {&wz_, &bz_, &wr_, &br_, &wc_, &bc_}) out.push_back(p);
}

void to_json(nlohmann::json& j, const GruCell& cell) {
  j = {{"type", "gru"},
       {"input", cell.input_},
       {"hidden", cell.hidden_},
       {"update_weight", tensor_to_json(cell.wz_.value)},
       {"update_bias", tensor_to_json(cell.bz_.value)},
       {"reset_weight", tensor_to_json(cell.wr_.value)},
       {"reset_bias", tensor_to_json(cell.br_.value)},
       {"candidate_weight", tensor_to_json(cell.wc_.value)},
       {"candidate_bias", tensor_to_json(cell.bc_.value)}};
}

void from_json(const nlohmann::json& j, GruCell& cell) {
  cell.input_ = j.at("input").get<std::size_t>();
  cell.hidden_ = j.at("hidden").get<std::size_t>();
  assign_param(cell.wz_, j, "update_weight");
  assign_param(cell.bz_, j, "update_bias");
  assign_param(cell.wr_, j, "reset_weight");
  assign_param(cell.br_, j, "reset_bias");
  assign_param(cell.wc_, j, "candidate_weight");
  assign_param(cell.bc_, j, "candidate_bias");
  const auto h = static_cast<Eigen::Index>(cell.hidden_);
  const auto cols = static_cast<Eigen::Index>(cell.input_ + cell.hidden_);
  for (const Param* p : {&cell.wz_, &cell.wr_, &cell.wc_}) {
    if (p->value.rows() != h || p->value.cols() != cols) {
      throw std::invalid_argument("gru checkpoint: gate matrix shape mismatch");
    }
  }
}

Vector gru_step(const GruCell& cell, const Vector& x, const Vector& h_prev) {
  const Tensor2 out = cell.step(x.transpose(), h_prev.transpose());
  return out.row(0).transpose();
}

// ---- GruStack ------------------------------------------------------------

GruStack::GruStack(std::size_t input, std::size_t hidden, std::size_t layers, Rng& rng) {
  if (layers == 0) throw std::invalid_argument("GruStack: need at least one layer");
  for (std::size_t l = 0; l < layers; ++l) cells_.emplace_back(l == 0 ? input : hidden, hidden, rng);
}

Sequence GruStack::forward(const Sequence& inputs) const {
  Tape tape;
  return forward(inputs, tape);
}

Sequence GruStack::forward(const Sequence& inputs, Tape& tape) const {
  if (inputs.empty()) throw std::invalid_argument("GruStack: empty sequence");
  tape.steps.assign(cells_.size(), {});
  Sequence current = inputs;
  for (std::size_t l = 0; l < cells_.size(); ++l) {
    auto& steps = tape.steps[l];
    steps.resize(current.size());
    Tensor2 h = Tensor2::Zero(current.front().rows(),
                              static_cast<Eigen::Index>(cells_[l].hidden_size()));
    for (std::size_t t = 0; t < current.size(); ++t) {
      h = cells_[l].step(current[t], h, steps[t]);
      current[t] = h;
    }
  }
  return current;
}

Sequence GruStack::backward(const Sequence& grad_outputs, const Tape& tape) {
  Sequence grad = grad_outputs;
  for (std::size_t l = cells_.size(); l-- > 0;) {
    const auto& steps = tape.steps[l];
    Tensor2 carry = Tensor2::Zero(grad.front().rows(), grad.front().cols());
    Tensor2 dh_prev;
    for (std::size_t t = grad.size(); t-- > 0;) {
      const Tensor2 dh = grad[t] + carry;
      grad[t] = cells_[l].backward_step(dh, steps[t], dh_prev);
      carry = dh_prev;
    }
  }
  return grad;
}

void GruStack::collect(ParamList& out) {
  for (auto& c : cells_) c.collect(out);
}

void to_json(nlohmann::json& j, const GruStack& s) {
  j = nlohmann::json::array();
  for (const auto& c : s.cells_) j.push_back(c);
}

void from_json(const nlohmann::json& j, GruStack& s) {
  s.cells_.clear();
  for (const auto& c : j) s.cells_.push_back(c.get<GruCell>());
}

// ---- RecurrentNet --------------------------------------------------------

RecurrentNet::RecurrentNet(std::size_t input, std::size_t hidden, std::size_t layers,
                           std::size_t output, Activation head_activation, Rng& rng)
    : rnn_(input, hidden, layers, rng), head_(hidden, output, head_activation, rng) {}

Sequence RecurrentNet::forward(const Sequence& inputs) const {
  const Sequence hs = rnn_.forward(inputs);
  return unstack_steps(head_.forward(stack_steps(hs)), static_cast<std::size_t>(hs.front().rows()));
}

Sequence RecurrentNet::forward(const Sequence& inputs, Tape& tape) const {
  const Sequence hs = rnn_.forward(inputs, tape.rnn);
  tape.batch = static_cast<std::size_t>(hs.front().rows());
  return unstack_steps(head_.forward(stack_steps(hs), tape.head), tape.batch);
}

Sequence RecurrentNet::backward(const Sequence& grad_outputs, const Tape& tape) {
  const Tensor2 g = head_.backward(stack_steps(grad_outputs), tape.head);
  return rnn_.backward(unstack_steps(g, tape.batch), tape.rnn);
}

ParamList RecurrentNet::params() {
  ParamList out;
  rnn_.collect(out);
  head_.collect(out);
  return out;
}

void to_json(nlohmann::json& j, const RecurrentNet& n) {
  j = {{"rnn", n.rnn_}, {"head", n.head_}};
}

void from_json(const nlohmann::json& j, RecurrentNet& n) {
  j.at("rnn").get_to(n.rnn_);
  j.at("head").get_to(n.head_);
}

// ---- DenseStack ----------------------------------------------------------

DenseStack::DenseStack(const std::vector<std::size_t>& sizes, Activation hidden, Activation output,
                       Rng& rng) {
  if (sizes.size() < 2) throw std::invalid_argument("DenseStack: need at least in and out sizes");
  for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
    layers_.emplace_back(sizes[i], sizes[i + 1], i + 2 == sizes.size() ? output : hidden, rng);
  }
}

DenseStack::DenseStack(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
  if (layers_.empty()) throw std::invalid_argument("DenseStack: no layers");
}

Tensor2 DenseStack::forward(const Tensor2& batch) const {
  Tensor2 x = batch;
  for (const auto& l : layers_) x = l.forward(x);
  return x;
}

Tensor2 DenseStack::forward(const Tensor2& batch, Tape& tape) const {
  tape.layers.resize(layers_.size());
  Tensor2 x = batch;
  for (std::size_t i = 0; i < layers_.size(); ++i) x = layers_[i].forward(x, tape.layers[i]);
  return x;
}

Tensor2 DenseStack::backward(const Tensor2& grad_output, const Tape& tape) {
  Tensor2 g = grad_output;
  for (std::size_t i = layers_.size(); i-- > 0;) g = layers_[i].backward(g, tape.layers[i]);
  return g;
}

ParamList DenseStack::params() {
  ParamList out;
  for (auto& l : layers_) l.collect(out);
  return out;
}

// ---- losses ----------------------------------------------------------------

Loss mse_loss(const Tensor2& pred, const Tensor2& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols()) {
    throw std::invalid_argument("mse_loss: shape mismatch");
  }
  const Tensor2 diff = pred - target;
  const auto n = static_cast<double>(diff.size());
  Loss l{diff.squaredNorm() / n, (2.0 / n) * diff};
  if (!std::isfinite(l.value)) throw std::runtime_error("mse_loss: non-finite loss");
  return l;
}

Loss bce_with_logits(const Tensor2& logits, double label) {
  const auto n = static_cast<double>(logits.size());
  double total = 0.0;
  Tensor2 grad(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    const double x = logits.data()[i];
    // log(1 + exp(-|x|)) + max(x, 0) - x * label
    total += std::max(x, 0.0) - x * label + std::log1p(std::exp(-std::abs(x)));
    grad.data()[i] = (sigmoid(x) - label) / n;
  }
  Loss l{total / n, std::move(grad)};
  if (!std::isfinite(l.value)) throw std::runtime_error("bce_with_logits: non-finite loss");
  return l;
}

double sequence_mse(const Sequence& pred, const Sequence& target, Sequence* grad) {
  if (pred.size() != target.size()) throw std::invalid_argument("sequence_mse: length mismatch");
  double count = 0.0;
  double total = 0.0;
  for (std::size_t t = 0; t < pred.size(); ++t) {
    count += static_cast<double>(pred[t].size());
    total += (pred[t] - target[t]).squaredNorm();
  }
  if (grad) {
    grad->resize(pred.size());
    for (std::size_t t = 0; t < pred.size(); ++t) (*grad)[t] = (2.0 / count) * (pred[t] - target[t]);
  }
  const double value = total / count;
  if (!std::isfinite(value)) throw std::runtime_error("sequence_mse: non-finite loss");
  return value;
}

Tensor2 stack_steps(const Sequence& seq) {
  const Eigen::Index b = seq.front().rows();
  Tensor2 out(b * static_cast<Eigen::Index>(seq.size()), seq.front().cols());
  for (std::size_t t = 0; t < seq.size(); ++t) out.middleRows(static_cast<Eigen::Index>(t) * b, b) = seq[t];
  return out;
}

Sequence unstack_steps(const Tensor2& stacked, std::size_t batch) {
  const auto b = static_cast<Eigen::Index>(batch);
  Sequence out(static_cast<std::size_t>(stacked.rows() / b));
  for (std::size_t t = 0; t < out.size(); ++t) out[t] = stacked.middleRows(static_cast<Eigen::Index>(t) * b, b);
  return out;
}

// ---- Adam ------------------------------------------------------------------

void adam_update(Tensor2& param, const Tensor2& grad, AdamMoments& mom, std::size_t step,
                 const AdamConfig& c) {
  if (grad.rows() != param.rows() || grad.cols() != param.cols()) {
    throw std::invalid_argument("adam_update: shape mismatch");
  }
  if (!grad.allFinite()) throw std::runtime_error("adam_update: non-finite gradient");
  if (mom.m.size() == 0) {
    mom.m = Tensor2::Zero(param.rows(), param.cols());
    mom.v = Tensor2::Zero(param.rows(), param.cols());
  }
  mom.m = c.beta1 * mom.m + (1.0 - c.beta1) * grad;
  mom.v = c.beta2 * mom.v + (1.0 - c.beta2) * grad.cwiseProduct(grad);
  const double t = static_cast<double>(step);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  param.array() -= c.learning_rate * (mom.m.array() / bc1) /
                   ((mom.v.array() / bc2).sqrt() + c.epsilon);
}

Adam::Adam(ParamList params, AdamConfig config)
    : params_(std::move(params)), moments_(params_.size()), config_(config) {}

void Adam::step() {
  for (const Param* p : params_) {
    if (!p->grad.allFinite()) throw std::runtime_error("adam: non-finite gradient in " + p->name);
  }
  ++step_;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    adam_update(params_[i]->value, params_[i]->grad, moments_[i], step_, config_);
  }
}

void Adam::zero_grad() { nn::zero_grad(params_); }

// ---- serialization ---------------------------------------------------------

nlohmann::json tensor_to_json(const Tensor2& t) {
  return {{"rows", t.rows()},
          {"cols", t.cols()},
          {"data", std::vector<double>(t.data(), t.data() + t.size())}};
}

Tensor2 tensor_from_json(const nlohmann::json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(data.size()) != rows * cols) {
    throw std::invalid_argument("checkpoint: tensor data length mismatch");
  }
  Tensor2 t(rows, cols);
  std::copy(data.begin(), data.end(), t.data());
  return t;
}

void to_json(nlohmann::json& j, const DenseLayer& layer) {
  j = {{"type", "dense"},
       {"in", layer.input_size()},
       {"out", layer.output_size()},
       {"activation", to_string(layer.activation())},
       {"weight", tensor_to_json(layer.weight().value)},
       {"bias", tensor_to_json(layer.bias().value)}};
}

void from_json(const nlohmann::json& j, DenseLayer& layer) {
  layer = DenseLayer(tensor_from_json(j.at("weight")), tensor_from_json(j.at("bias")),
                     activation_from_string(j.at("activation").get<std::string>()));
}

void to_json(nlohmann::json& j, const DenseStack& stack) {
  j = nlohmann::json::array();
  for (const auto& l : stack.layers()) j.push_back(l);
}

void from_json(const nlohmann::json& j, DenseStack& stack) {
  std::vector<DenseLayer> layers;
  for (const auto& l : j) layers.push_back(l.get<DenseLayer>());
  stack = DenseStack(std::move(layers));
}

}  // namespace synfin::nn

#include "floco/model.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace floco {

namespace {

using ConstRowMap = Eigen::Map<const RowMatrixXd>;
using RowMap = Eigen::Map<RowMatrixXd>;

void check_params(const Architecture& arch, const NetParams& params) {
  if (params.backbone.size() != arch.backbone_size() || params.head.size() != arch.head_size()) {
    throw std::invalid_argument("network parameters do not match the architecture");
  }
}

void check_inputs(const Architecture& arch, const Eigen::MatrixXd& inputs) {
  if (inputs.cols() != arch.input_dim) {
    throw std::invalid_argument("input width " + std::to_string(inputs.cols()) +
                                " != configured input_dim " + std::to_string(arch.input_dim));
  }
}

struct Activations {
  Eigen::MatrixXd pre;     // B x hidden, before relu
  Eigen::MatrixXd hidden;  // B x hidden
  Eigen::MatrixXd logits;  // B x classes
};

Activations run_layers(const Architecture& arch, const NetParams& params,
                       const Eigen::MatrixXd& inputs) {
  const ConstRowMap W1(params.backbone.data(), arch.hidden_dim, arch.input_dim);
  const auto b1 = params.backbone.tail(arch.hidden_dim);
  const ConstRowMap W2(params.head.data(), arch.classes, arch.hidden_dim);
  const auto b2 = params.head.tail(arch.classes);

  Activations a;
  a.pre = inputs * W1.transpose();
  a.pre.rowwise() += b1.transpose();
  a.hidden = a.pre.cwiseMax(0.0);
  a.logits = a.hidden * W2.transpose();
  a.logits.rowwise() += b2.transpose();
  return a;
}

// Softmax in place; returns per-row log-sum-exp.
Eigen::VectorXd softmax_rows(Eigen::MatrixXd& logits) {
  Eigen::VectorXd lse(logits.rows());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double mx = logits.row(i).maxCoeff();
    logits.row(i).array() = (logits.row(i).array() - mx).exp();
    const double s = logits.row(i).sum();
    logits.row(i) /= s;
    lse[i] = mx + std::log(s);
  }
  return lse;
}

void check_batch(const Architecture& arch, const Batch& batch) {
  if (batch.labels.empty() || batch.inputs.rows() == 0) {
    throw std::invalid_argument("loss_and_grads: empty batch");
  }
  if (static_cast<Eigen::Index>(batch.labels.size()) != batch.inputs.rows()) {
    throw std::invalid_argument("batch: label count does not match row count");
  }
  check_inputs(arch, batch.inputs);
  for (int y : batch.labels) {
    if (y < 0 || y >= arch.classes) throw std::invalid_argument("batch: label out of range");
  }
}

}  // namespace

Predictor::Predictor(Architecture arch, NetParams params)
    : arch_(arch), params_(std::move(params)) {
  check_params(arch_, params_);
}

Eigen::MatrixXd Predictor::probabilities(const Eigen::MatrixXd& inputs) const {
  return net_forward(arch_, params_, inputs);
}

Eigen::MatrixXd net_forward(const Architecture& arch, const NetParams& params,
                            const Eigen::MatrixXd& inputs) {
  check_params(arch, params);
  check_inputs(arch, inputs);
  Activations a = run_layers(arch, params, inputs);
  softmax_rows(a.logits);
  return a.logits;
}

double net_loss(const Architecture& arch, const NetParams& params, const Batch& batch) {
  check_params(arch, params);
  check_batch(arch, batch);
  Activations a = run_layers(arch, params, batch.inputs);
  Eigen::MatrixXd logits = a.logits;
  const Eigen::VectorXd lse = softmax_rows(logits);
  double loss = 0.0;
  for (std::size_t i = 0; i < batch.labels.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    loss += lse[r] - a.logits(r, batch.labels[i]);
  }
  return loss / static_cast<double>(batch.labels.size());
}

NetGradients net_loss_and_grads(const Architecture& arch, const NetParams& params,
                                const Batch& batch) {
  check_params(arch, params);
  check_batch(arch, batch);
  const Eigen::Index B = batch.inputs.rows();
  Activations a = run_layers(arch, params, batch.inputs);

  Eigen::MatrixXd probs = a.logits;
  const Eigen::VectorXd lse = softmax_rows(probs);

  NetGradients g;
  double loss = 0.0;
  for (Eigen::Index i = 0; i < B; ++i) {
    const int y = batch.labels[static_cast<std::size_t>(i)];
    loss += lse[i] - a.logits(i, y);
    probs(i, y) -= 1.0;
  }
  g.loss = loss / static_cast<double>(B);
  // probs now holds dL/dlogits scaled by B.
  const Eigen::MatrixXd dlogits = probs / static_cast<double>(B);

  g.head.resize(arch.head_size());
  RowMap dW2(g.head.data(), arch.classes, arch.hidden_dim);
  dW2.noalias() = dlogits.transpose() * a.hidden;
  g.head.tail(arch.classes) = dlogits.colwise().sum().transpose();

  const ConstRowMap W2(params.head.data(), arch.classes, arch.hidden_dim);
  Eigen::MatrixXd dpre = dlogits * W2;
  dpre.array() *= (a.pre.array() > 0.0).cast<double>();

  g.backbone.resize(arch.backbone_size());
  RowMap dW1(g.backbone.data(), arch.hidden_dim, arch.input_dim);
  dW1.noalias() = dpre.transpose() * batch.inputs;
  g.backbone.tail(arch.hidden_dim) = dpre.colwise().sum().transpose();
  return g;
}

Eigen::VectorXd combine_head(const HeadEndpoints& head, const SimplexPoint& alpha) {
  if (head.endpoints.empty()) throw std::invalid_argument("combine_head: no endpoints");
  if (alpha.size() != static_cast<Eigen::Index>(head.size())) {
    throw std::invalid_argument("combine_head: alpha has " + std::to_string(alpha.size()) +
                                " entries for " + std::to_string(head.size()) + " endpoints");
  }
  Eigen::VectorXd w = Eigen::VectorXd::Zero(head.length());
  for (std::size_t m = 0; m < head.size(); ++m) {
    if (head.endpoints[m].size() != w.size()) {
      throw std::invalid_argument("combine_head: endpoints have different lengths");
    }
    const double a = alpha[static_cast<Eigen::Index>(m)];
    if (a != 0.0) w.noalias() += a * head.endpoints[m];
  }
  return w;
}

NetParams params_at(const ModelState& model, const HeadEndpoints& head,
                    const SimplexPoint& alpha) {
  Eigen::VectorXd w = combine_head(head, alpha);
  if (model.scope == SimplexScope::last_layer) {
    return NetParams{model.backbone, std::move(w)};
  }
  const Eigen::Index bs = model.arch.backbone_size();
  if (w.size() != model.arch.full_size()) {
    throw std::invalid_argument("all-layers endpoints must hold the full parameter vector");
  }
  return NetParams{w.head(bs), w.tail(model.arch.head_size())};
}

Eigen::MatrixXd forward(const ModelState& model, const SimplexPoint& alpha,
                        const Eigen::MatrixXd& inputs) {
  return net_forward(model.arch, params_at(model, alpha), inputs);
}

LossAndGrads loss_and_grads(const ModelState& model, const SimplexPoint& alpha,
                            const Batch& batch) {
  NetGradients g = net_loss_and_grads(model.arch, params_at(model, alpha), batch);
  LossAndGrads out;
  out.loss = g.loss;
  if (model.scope == SimplexScope::last_layer) {
    out.backbone_grad = std::move(g.backbone);
    out.combined_grad = std::move(g.head);
  } else {
    out.combined_grad.resize(model.arch.full_size());
    out.combined_grad << g.backbone, g.head;
  }
  out.endpoint_grads.reserve(model.head.size());
  for (Eigen::Index m = 0; m < alpha.size(); ++m) {
    out.endpoint_grads.emplace_back(alpha[m] * out.combined_grad);
  }
  return out;
}

Eigen::VectorXd sgd_step(const Eigen::VectorXd& params, const Eigen::VectorXd& grad,
                         double gamma) {
  if (params.size() != grad.size()) throw std::invalid_argument("sgd_step: length mismatch");
  if (!(gamma >= 0.0)) throw std::invalid_argument("sgd_step: negative step size");
  return params - gamma * grad;
}

namespace {

void fill_layer(Eigen::Ref<Eigen::VectorXd> out, Eigen::Index fan_in, RngStream& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (Eigen::Index i = 0; i < out.size(); ++i) out[i] = (2.0 * rng.uniform() - 1.0) * bound;
}

Eigen::VectorXd random_backbone(const Architecture& arch, RngStream& rng) {
  Eigen::VectorXd v(arch.backbone_size());
  fill_layer(v, arch.input_dim, rng);
  return v;
}

Eigen::VectorXd random_head(const Architecture& arch, RngStream& rng) {
  Eigen::VectorXd v(arch.head_size());
  fill_layer(v, arch.hidden_dim, rng);
  return v;
}

}  // namespace

ModelState init_model(const Architecture& arch, Eigen::Index M, SimplexScope scope,
                      RngStream& rng) {
  if (M < 0) throw std::invalid_argument("init_model: negative simplex dimension");
  if (arch.input_dim <= 0 || arch.hidden_dim <= 0 || arch.classes < 2) {
    throw std::invalid_argument("init_model: invalid architecture");
  }
  ModelState model;
  model.arch = arch;
  model.scope = scope;
  if (scope == SimplexScope::last_layer) {
    model.backbone = random_backbone(arch, rng);
    for (Eigen::Index m = 0; m <= M; ++m) model.head.endpoints.push_back(random_head(arch, rng));
  } else {
    for (Eigen::Index m = 0; m <= M; ++m) {
      Eigen::VectorXd full(arch.full_size());
      full << random_backbone(arch, rng), random_head(arch, rng);
      model.head.endpoints.push_back(std::move(full));
    }
  }
  return model;
}

}  // namespace floco

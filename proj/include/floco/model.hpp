#pragma once

#include "floco/numerics.hpp"
#include "floco/simplex_point.hpp"

#include <Eigen/Dense>

#include <vector>

namespace floco {

using RowMatrixXd = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// input -> dense(hidden) -> relu -> dense(classes) -> softmax
///
/// Flattened layouts (row-major weights, then bias):
///   backbone = [W1 (hidden x input), b1 (hidden)]
///   head     = [W2 (classes x hidden), b2 (classes)]
struct Architecture {
  Eigen::Index input_dim = 0;
  Eigen::Index hidden_dim = 0;
  Eigen::Index classes = 0;

  Eigen::Index backbone_size() const { return hidden_dim * input_dim + hidden_dim; }
  Eigen::Index head_size() const { return classes * hidden_dim + classes; }
  Eigen::Index full_size() const { return backbone_size() + head_size(); }
};

enum class SimplexScope { last_layer, all_layers };

/// Endpoint parameter vectors of the solution simplex.
struct HeadEndpoints {
  std::vector<Eigen::VectorXd> endpoints;

  Eigen::Index M() const { return static_cast<Eigen::Index>(endpoints.size()) - 1; }
  Eigen::Index length() const { return endpoints.empty() ? 0 : endpoints.front().size(); }
  std::size_t size() const { return endpoints.size(); }
};

/// In last_layer scope `backbone` holds the shared feature extractor and each
/// endpoint is a head vector. In all_layers scope each endpoint is a full
/// [backbone, head] vector and `backbone` is empty.
struct ModelState {
  Architecture arch;
  Eigen::VectorXd backbone;
  HeadEndpoints head;
  SimplexScope scope = SimplexScope::last_layer;

  Eigen::Index M() const { return head.M(); }
};

struct Batch {
  Eigen::MatrixXd inputs;
  std::vector<int> labels;
};

/// Parameters of one concrete network (a single point of the simplex).
struct NetParams {
  Eigen::VectorXd backbone;
  Eigen::VectorXd head;
};

/// A fixed network usable for prediction.
class Predictor {
 public:
  Predictor(Architecture arch, NetParams params);

  Eigen::MatrixXd probabilities(const Eigen::MatrixXd& inputs) const;
  const Architecture& arch() const { return arch_; }
  const NetParams& params() const { return params_; }

 private:
  Architecture arch_;
  NetParams params_;
};

struct NetGradients {
  double loss = 0.0;
  Eigen::VectorXd backbone;
  Eigen::VectorXd head;
};

/// Mean cross-entropy and exact gradients of one concrete network.
NetGradients net_loss_and_grads(const Architecture& arch, const NetParams& params,
                                const Batch& batch);

Eigen::MatrixXd net_forward(const Architecture& arch, const NetParams& params,
                            const Eigen::MatrixXd& inputs);

double net_loss(const Architecture& arch, const NetParams& params, const Batch& batch);

/// w_alpha = sum_m alpha_m * theta_m
Eigen::VectorXd combine_head(const HeadEndpoints& head, const SimplexPoint& alpha);

/// Concrete network at simplex point alpha, over the given endpoints.
NetParams params_at(const ModelState& model, const HeadEndpoints& head,
                    const SimplexPoint& alpha);
inline NetParams params_at(const ModelState& model, const SimplexPoint& alpha) {
  return params_at(model, model.head, alpha);
}

/// Row-wise class probabilities at alpha.
Eigen::MatrixXd forward(const ModelState& model, const SimplexPoint& alpha,
                        const Eigen::MatrixXd& inputs);

struct LossAndGrads {
  double loss = 0.0;
  /// Gradient w.r.t. the flattened backbone (empty in all_layers scope).
  Eigen::VectorXd backbone_grad;
  /// Gradient w.r.t. the combined vector w_alpha.
  Eigen::VectorXd combined_grad;
  /// endpoint_grads[m] = alpha_m * combined_grad
  std::vector<Eigen::VectorXd> endpoint_grads;
};

LossAndGrads loss_and_grads(const ModelState& model, const SimplexPoint& alpha,
                            const Batch& batch);

Eigen::VectorXd sgd_step(const Eigen::VectorXd& params, const Eigen::VectorXd& grad,
                         double gamma);

/// Backbone and every endpoint drawn independently and uniformly in
/// [-1/sqrt(fan_in), 1/sqrt(fan_in)].
ModelState init_model(const Architecture& arch, Eigen::Index M, SimplexScope scope,
                      RngStream& rng);

}  // namespace floco

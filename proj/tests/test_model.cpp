#include "floco/model.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <cmath>

using namespace floco;
using testing::random_batch;
using testing::random_vector;

namespace {

// Reference loss written with plain loops, independent of the library forward pass.
double reference_loss(const Architecture& a, const Eigen::VectorXd& backbone, const Eigen::VectorXd& head,
                      const Batch& batch) {
  double total = 0.0;
  for (Eigen::Index n = 0; n < batch.inputs.rows(); ++n) {
    std::vector<double> hidden(static_cast<std::size_t>(a.hidden_dim));
    for (Eigen::Index j = 0; j < a.hidden_dim; ++j) {
      double s = backbone[a.hidden_dim * a.input_dim + j];
      for (Eigen::Index i = 0; i < a.input_dim; ++i) s += backbone[j * a.input_dim + i] * batch.inputs(n, i);
      hidden[static_cast<std::size_t>(j)] = s > 0.0 ? s : 0.0;
    }
    std::vector<double> logits(static_cast<std::size_t>(a.classes));
    double mx = -1e300;
    for (Eigen::Index c = 0; c < a.classes; ++c) {
      double s = head[a.classes * a.hidden_dim + c];
      for (Eigen::Index j = 0; j < a.hidden_dim; ++j) s += head[c * a.hidden_dim + j] * hidden[static_cast<std::size_t>(j)];
      logits[static_cast<std::size_t>(c)] = s;
      mx = std::max(mx, s);
    }
    double z = 0.0;
    for (double l : logits) z += std::exp(l - mx);
    total += -(logits[static_cast<std::size_t>(batch.labels[static_cast<std::size_t>(n)])] - mx - std::log(z));
  }
  return total / static_cast<double>(batch.inputs.rows());
}

HeadEndpoints two_endpoints() {
  HeadEndpoints h;
  h.endpoints = {(Eigen::VectorXd(2) << 1.0, 0.0).finished(), (Eigen::VectorXd(2) << 0.0, 1.0).finished()};
  return h;
}

}  // namespace

TEST_CASE("combine_head examples") {
  const HeadEndpoints h = two_endpoints();
  const Eigen::VectorXd mid = combine_head(h, SimplexPoint((Eigen::VectorXd(2) << 0.5, 0.5).finished()));
  CHECK(mid[0] == 0.5);
  CHECK(mid[1] == 0.5);
  CHECK(combine_head(h, SimplexPoint::vertex(1, 1)) == h.endpoints[1]);

  HeadEndpoints one;
  one.endpoints = {(Eigen::VectorXd(3) << 0.1, -2.0, 7.25).finished()};
  CHECK(combine_head(one, SimplexPoint::uniform(0)) == one.endpoints[0]);

  CHECK_THROWS_AS(combine_head(h, SimplexPoint::uniform(2)), std::invalid_argument);
}

TEST_CASE("combine_head is linear in alpha") {
  RngStream rng(2);
  HeadEndpoints h;
  for (int m = 0; m < 4; ++m) h.endpoints.push_back(random_vector(15, rng));
  for (int trial = 0; trial < 50; ++trial) {
    const SimplexPoint a = sample_uniform_simplex(3, rng);
    const SimplexPoint b = sample_uniform_simplex(3, rng);
    const double t = rng.uniform();
    const SimplexPoint mix(t * a.coords() + (1.0 - t) * b.coords());
    const Eigen::VectorXd lhs = combine_head(h, mix);
    const Eigen::VectorXd rhs = t * combine_head(h, a) + (1.0 - t) * combine_head(h, b);
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("forward produces probability rows") {
  RngStream rng(3);
  const Architecture arch{4, 6, 3};
  const ModelState model = init_model(arch, 2, SimplexScope::last_layer, rng);
  const Batch batch = random_batch(arch, 9, rng);
  const Eigen::MatrixXd p = forward(model, sample_uniform_simplex(2, rng), batch.inputs);
  REQUIRE(p.rows() == 9);
  REQUIRE(p.cols() == 3);
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    CHECK(std::abs(p.row(i).sum() - 1.0) < 1e-12);
    CHECK(p.row(i).minCoeff() >= 0.0);
  }
}

TEST_CASE("forward with zero parameters is uniform") {
  const Architecture arch{3, 4, 5};
  ModelState model;
  model.arch = arch;
  model.backbone = Eigen::VectorXd::Zero(arch.backbone_size());
  model.head.endpoints = {Eigen::VectorXd::Zero(arch.head_size()), Eigen::VectorXd::Zero(arch.head_size())};
  const Eigen::MatrixXd x = Eigen::MatrixXd::Random(4, 3);
  const Eigen::MatrixXd p = forward(model, SimplexPoint::uniform(1), x);
  CHECK((p.array() - 0.2).abs().maxCoeff() < 1e-15);

  Batch batch{x, {0, 1, 2, 4}};
  CHECK(net_loss(arch, params_at(model, SimplexPoint::uniform(1)), batch) == doctest::Approx(std::log(5.0)).epsilon(1e-12));
}

TEST_CASE("forward matches a hand-computed two-class network") {
  // h = relu(x), logits = (h, -h): p0 = 1 / (1 + exp(-2x)).
  const Architecture arch{1, 1, 2};
  NetParams p;
  p.backbone = (Eigen::VectorXd(2) << 1.0, 0.0).finished();
  p.head = (Eigen::VectorXd(4) << 1.0, -1.0, 0.0, 0.0).finished();
  const Eigen::MatrixXd x = (Eigen::MatrixXd(2, 1) << 0.5, -3.0).finished();
  const Eigen::MatrixXd prob = net_forward(arch, p, x);
  CHECK(prob(0, 0) == doctest::Approx(0.7310585786300049).epsilon(1e-14));
  CHECK(prob(1, 0) == doctest::Approx(0.5).epsilon(1e-14));
}

TEST_CASE("forward rejects mismatched shapes") {
  RngStream rng(4);
  const Architecture arch{3, 2, 2};
  const ModelState model = init_model(arch, 1, SimplexScope::last_layer, rng);
  CHECK_THROWS_AS(forward(model, SimplexPoint::uniform(1), Eigen::MatrixXd::Zero(2, 4)), std::invalid_argument);
  CHECK_THROWS_AS(forward(model, SimplexPoint::uniform(2), Eigen::MatrixXd::Zero(2, 3)), std::invalid_argument);
  Batch empty{Eigen::MatrixXd(0, 3), {}};
  CHECK_THROWS_AS(loss_and_grads(model, SimplexPoint::uniform(1), empty), std::invalid_argument);
  Batch bad{Eigen::MatrixXd::Zero(1, 3), {2}};
  CHECK_THROWS_AS(loss_and_grads(model, SimplexPoint::uniform(1), bad), std::invalid_argument);
}

TEST_CASE("loss matches an independent reference implementation") {
  RngStream rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const Architecture arch{3 + trial % 3, 2 + trial % 4, 2 + trial % 3};
    const ModelState model = init_model(arch, 2, SimplexScope::last_layer, rng);
    const SimplexPoint alpha = sample_uniform_simplex(2, rng);
    const Batch batch = random_batch(arch, 7, rng);
    const LossAndGrads g = loss_and_grads(model, alpha, batch);
    CHECK(g.loss == doctest::Approx(reference_loss(arch, model.backbone, combine_head(model.head, alpha), batch)).epsilon(1e-12));
  }
}

TEST_CASE("analytic gradients match finite differences") {
  RngStream rng(6);
  const double h = 1e-6;
  int checked = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const Architecture arch{2 + trial % 4, 2 + trial % 5, 2 + trial % 4};
    const Eigen::Index M = trial % 4;
    const auto scope = trial % 5 == 4 ? SimplexScope::all_layers : SimplexScope::last_layer;
    const ModelState model = init_model(arch, M, scope, rng);
    const SimplexPoint alpha = sample_uniform_simplex(M, rng);
    const Batch batch = random_batch(arch, 1 + trial % 6, rng);
    const LossAndGrads g = loss_and_grads(model, alpha, batch);

    auto loss_with = [&](const ModelState& m) {
      const NetParams p = params_at(m, alpha);
      return reference_loss(arch, p.backbone, p.head, batch);
    };
    if (scope == SimplexScope::last_layer) {
      const Eigen::VectorXd fd = finite_diff_gradient(
          [&](const Eigen::VectorXd& v) {
            ModelState m = model;
            m.backbone = v;
            return loss_with(m);
          },
          model.backbone, h);
      CHECK(testing::all_close_rel(g.backbone_grad, fd, 1e-4, 1e-7));
    }
    for (Eigen::Index e = 0; e <= M; ++e) {
      const auto ue = static_cast<std::size_t>(e);
      const Eigen::VectorXd fd = finite_diff_gradient(
          [&](const Eigen::VectorXd& v) {
            ModelState m = model;
            m.head.endpoints[ue] = v;
            return loss_with(m);
          },
          model.head.endpoints[ue], h);
      CHECK(testing::all_close_rel(g.endpoint_grads[ue], fd, 1e-4, 1e-7));
      ++checked;
    }
  }
  CHECK(checked > 100);
}

TEST_CASE("endpoint gradients sum to the combined gradient") {
  RngStream rng(7);
  const Architecture arch{5, 4, 3};
  for (int trial = 0; trial < 20; ++trial) {
    const ModelState model = init_model(arch, 4, SimplexScope::last_layer, rng);
    const LossAndGrads g = loss_and_grads(model, sample_uniform_simplex(4, rng), random_batch(arch, 8, rng));
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(g.combined_grad.size());
    for (const auto& e : g.endpoint_grads) sum += e;
    CHECK((sum - g.combined_grad).norm() <= 1e-12 * std::max(1.0, g.combined_grad.norm()));
  }
}

TEST_CASE("single-endpoint simplex reduces to a plain network") {
  RngStream rng(8);
  const Architecture arch{4, 5, 3};
  const ModelState model = init_model(arch, 0, SimplexScope::last_layer, rng);
  const Batch batch = random_batch(arch, 6, rng);
  const LossAndGrads g = loss_and_grads(model, SimplexPoint::uniform(0), batch);
  const NetGradients ref = net_loss_and_grads(arch, NetParams{model.backbone, model.head.endpoints[0]}, batch);
  CHECK(g.loss == ref.loss);
  CHECK(g.backbone_grad == ref.backbone);
  CHECK(g.endpoint_grads[0] == ref.head);
}

TEST_CASE("sgd_step") {
  const Eigen::VectorXd p = (Eigen::VectorXd(2) << 1.0, 2.0).finished();
  const Eigen::VectorXd g = (Eigen::VectorXd(2) << 0.5, -1.0).finished();
  CHECK(sgd_step(p, g, 0.0) == p);
  const Eigen::VectorXd s = sgd_step(p, g, 0.1);
  CHECK(s[0] == doctest::Approx(0.95));
  CHECK(s[1] == doctest::Approx(2.1));
  CHECK(sgd_step(p, Eigen::VectorXd::Zero(2), 3.0) == p);
  CHECK_THROWS_AS(sgd_step(p, Eigen::VectorXd::Zero(3), 0.1), std::invalid_argument);
  CHECK_THROWS_AS(sgd_step(p, g, -0.1), std::invalid_argument);
}

TEST_CASE("init_model shapes and ranges") {
  RngStream rng(9);
  const Architecture arch{16, 8, 10};
  const ModelState last = init_model(arch, 3, SimplexScope::last_layer, rng);
  CHECK(last.backbone.size() == arch.backbone_size());
  CHECK(last.head.size() == 4);
  CHECK(last.head.length() == arch.head_size());
  CHECK(last.backbone.cwiseAbs().maxCoeff() <= 0.25);
  CHECK(last.head.endpoints[0].cwiseAbs().maxCoeff() <= 1.0 / std::sqrt(8.0));
  CHECK(last.head.endpoints[0] != last.head.endpoints[1]);

  const ModelState all = init_model(arch, 2, SimplexScope::all_layers, rng);
  CHECK(all.backbone.size() == 0);
  CHECK(all.head.length() == arch.full_size());

  CHECK_THROWS_AS(init_model(arch, -1, SimplexScope::last_layer, rng), std::invalid_argument);
  CHECK_THROWS_AS(init_model(Architecture{0, 2, 2}, 1, SimplexScope::last_layer, rng), std::invalid_argument);
}

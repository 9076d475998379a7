#include "floco/simplex.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <algorithm>
#include <numeric>

using namespace floco;
using testing::random_vector;

namespace {

// Projection oracle: enumerate every support set and keep the one that
// satisfies the KKT conditions.
Eigen::VectorXd projection_by_support_enumeration(const Eigen::VectorXd& k, double z) {
  const auto n = static_cast<unsigned>(k.size());
  for (unsigned mask = 1; mask < (1u << n); ++mask) {
    double sum = 0.0;
    int count = 0;
    for (unsigned i = 0; i < n; ++i) {
      if (mask & (1u << i)) {
        sum += k[i];
        ++count;
      }
    }
    const double lambda = (sum - z) / count;
    bool ok = true;
    for (unsigned i = 0; i < n && ok; ++i) {
      const bool in = mask & (1u << i);
      ok = in ? k[i] - lambda > 0.0 : k[i] <= lambda;
    }
    if (ok) {
      Eigen::VectorXd out = Eigen::VectorXd::Zero(k.size());
      for (unsigned i = 0; i < n; ++i) {
        if (mask & (1u << i)) out[i] = k[i] - lambda;
      }
      return out;
    }
  }
  throw std::logic_error("no feasible support");
}

// Plain double sum over ordered pairs.
double reference_energy(const std::vector<Eigen::VectorXd>& pts) {
  double e = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    for (std::size_t j = 0; j < pts.size(); ++j) {
      if (i != j) e += 1.0 / ((pts[i] - pts[j]).squaredNorm() + 1e-12);
    }
  }
  return e;
}

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

}  // namespace

TEST_CASE("projection examples") {
  CHECK((project_to_scaled_simplex(vec({0.5, 0.5}), 1.0) - vec({0.5, 0.5})).norm() < 1e-12);
  CHECK((project_to_scaled_simplex(vec({2.0, 0.0}), 1.0) - vec({1.0, 0.0})).norm() < 1e-12);
  CHECK((project_to_scaled_simplex(vec({1.0, 1.0, 1.0}), 0.3) - vec({0.1, 0.1, 0.1})).norm() < 1e-12);
  CHECK((project_to_scaled_simplex(vec({-1.0, -1.0}), 1.0) - vec({0.5, 0.5})).norm() < 1e-12);
  CHECK((project_to_scaled_simplex(vec({0.3}), 0.7) - vec({0.7})).norm() < 1e-12);
}

TEST_CASE("projection rejects bad input") {
  CHECK_THROWS_AS(project_to_scaled_simplex(vec({1.0, 2.0}), 0.0), std::invalid_argument);
  CHECK_THROWS_AS(project_to_scaled_simplex(vec({1.0, 2.0}), -1.0), std::invalid_argument);
  CHECK_THROWS_AS(project_to_scaled_simplex(Eigen::VectorXd(0), 1.0), std::invalid_argument);
  CHECK_THROWS_AS(project_to_scaled_simplex(vec({1.0, std::nan("")}), 1.0), std::invalid_argument);
}

TEST_CASE("projection matches support enumeration") {
  RngStream rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const Eigen::Index n = 1 + static_cast<Eigen::Index>(rng.uniform_index(8));
    const double z = std::array<double, 4>{0.05, 0.3, 1.0, 2.5}[rng.uniform_index(4)];
    const Eigen::VectorXd k = random_vector(n, rng, 3.0);
    const Eigen::VectorXd got = project_to_scaled_simplex(k, z);
    const Eigen::VectorXd want = projection_by_support_enumeration(k, z);
    CHECK((got - want).cwiseAbs().maxCoeff() < 1e-9);
    CHECK(got.minCoeff() >= 0.0);
    CHECK(std::abs(got.sum() - z) < 1e-9);
  }
}

TEST_CASE("projection properties") {
  RngStream rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::Index n = 2 + static_cast<Eigen::Index>(rng.uniform_index(10));
    const double z = 0.1 + rng.uniform();
    const Eigen::VectorXd k = random_vector(n, rng, 2.0);
    const Eigen::VectorXd p = project_to_scaled_simplex(k, z);
    // Idempotent.
    CHECK((project_to_scaled_simplex(p, z) - p).cwiseAbs().maxCoeff() < 1e-10);
    // Order preserving.
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) {
        if (k[i] > k[j]) CHECK(p[i] >= p[j]);
      }
    }
    // proj(c k, c z) = c proj(k, z).
    const double c = 0.5 + 3.0 * rng.uniform();
    CHECK((project_to_scaled_simplex(Eigen::VectorXd(c * k), c * z) - c * p).cwiseAbs().maxCoeff() < 1e-9);
    // Shift invariance.
    CHECK((project_to_scaled_simplex(Eigen::VectorXd(k.array() + 4.0), z) - p).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("projection works in single precision") {
  const Eigen::VectorXf k = (Eigen::VectorXf(3) << 0.9f, 0.2f, -0.4f).finished();
  const Eigen::VectorXf p = project_to_scaled_simplex(k, 1.0f);
  CHECK(std::abs(p.sum() - 1.0f) < 1e-5f);
  CHECK(p[2] == 0.0f);
}

TEST_CASE("riesz energy examples") {
  std::vector<Eigen::VectorXd> two = {vec({0.0, 0.0}), vec({1.0, 0.0})};
  CHECK(riesz_energy(two) == doctest::Approx(2.0 / (1.0 + 1e-12)).epsilon(1e-15));

  const double s = std::sqrt(3.0) / 2.0;
  std::vector<Eigen::VectorXd> tri = {vec({0.0, 0.0}), vec({1.0, 0.0}), vec({0.5, s})};
  CHECK(riesz_energy(tri) == doctest::Approx(6.0).epsilon(1e-9));

  std::vector<Eigen::VectorXd> same = {vec({0.3}), vec({0.3})};
  CHECK(riesz_energy(same) == doctest::Approx(2e12));

  std::vector<Eigen::VectorXd> one = {vec({0.0})};
  CHECK_THROWS_AS(riesz_energy(one), std::invalid_argument);
}

TEST_CASE("riesz energy matches the ordered-pair sum and ignores point order") {
  RngStream rng(3);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<Eigen::VectorXd> pts;
    for (int i = 0; i < 7; ++i) pts.push_back(random_vector(3, rng));
    const double e = riesz_energy(pts);
    CHECK(e == doctest::Approx(reference_energy(pts)).epsilon(1e-12));
    auto shuffled = pts;
    shuffle(shuffled, rng);
    CHECK(riesz_energy(shuffled) == e);

    // Pushing one point away lowers the energy.
    auto farther = pts;
    farther[0] = pts[0] + 10.0 * (pts[0] - pts[1]);
    CHECK(riesz_energy(farther) < e);
  }
}

TEST_CASE("two opposite clients land on the vertices") {
  const ClientAssignment a = assign_client_representations({vec({10.0, 0.0}), vec({0.0, 10.0})});
  CHECK(a.z_hat == 1.0);
  CHECK((a.alphas[0].coords() - vec({1.0, 0.0})).norm() < 1e-12);
  CHECK((a.alphas[1].coords() - vec({0.0, 1.0})).norm() < 1e-12);
  CHECK_FALSE(a.degenerate);
}

TEST_CASE("assignment picks the grid minimum") {
  RngStream rng(4);
  for (int trial = 0; trial < 3; ++trial) {
    std::vector<Eigen::VectorXd> kappas;
    for (int k = 0; k < 6; ++k) kappas.push_back(random_vector(4, rng, 0.4));
    const ClientAssignment a = assign_client_representations(kappas);

    std::vector<double> energies;
    for (int i = 1; i <= 1000; ++i) {
      std::vector<Eigen::VectorXd> betas;
      for (const auto& k : kappas) betas.push_back(projection_by_support_enumeration(k, 0.001 * i));
      energies.push_back(reference_energy(betas));
    }
    const double lowest = *std::min_element(energies.begin(), energies.end());
    std::size_t first = 0;
    while (energies[first] > lowest * (1.0 + 1e-12)) ++first;
    const double best = energies[first];
    const double best_z = 0.001 * static_cast<double>(first + 1);
    CHECK(a.z_hat == doctest::Approx(best_z).epsilon(1e-12));
    CHECK(a.energy == doctest::Approx(best).epsilon(1e-9));
    for (std::size_t k = 0; k < kappas.size(); ++k) {
      const Eigen::VectorXd want = projection_by_support_enumeration(kappas[k], a.z_hat) / a.z_hat;
      CHECK((a.alphas[k].coords() - want).cwiseAbs().maxCoeff() < 1e-9);
      CHECK(std::abs(a.alphas[k].coords().sum() - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("assignment is permutation equivariant") {
  RngStream rng(5);
  std::vector<Eigen::VectorXd> kappas;
  for (int k = 0; k < 8; ++k) kappas.push_back(random_vector(3, rng));
  const ClientAssignment a = assign_client_representations(kappas);
  std::vector<std::size_t> perm(kappas.size());
  std::iota(perm.begin(), perm.end(), 0);
  shuffle(perm, rng);
  std::vector<Eigen::VectorXd> permuted;
  for (std::size_t p : perm) permuted.push_back(kappas[p]);
  const ClientAssignment b = assign_client_representations(permuted);
  CHECK(b.z_hat == a.z_hat);
  for (std::size_t i = 0; i < perm.size(); ++i) {
    CHECK((b.alphas[i].coords() - a.alphas[perm[i]].coords()).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("identical clients are placed at the center") {
  const ClientAssignment a = assign_client_representations({vec({0.2, 0.1, 0.3}), vec({0.2, 0.1, 0.3})});
  CHECK(a.degenerate);
  for (const auto& alpha : a.alphas) CHECK((alpha.coords().array() - 1.0 / 3.0).abs().maxCoeff() < 1e-15);
}

TEST_CASE("assignment rejects bad input") {
  CHECK_THROWS_AS(assign_client_representations({}), std::invalid_argument);
  CHECK_THROWS_AS(assign_client_representations({vec({1.0, 0.0})}), std::invalid_argument);
  CHECK_THROWS_AS(assign_client_representations({vec({1.0, 0.0}), vec({1.0})}), std::invalid_argument);
}

TEST_CASE("subregion construction") {
  const Subregion r = make_subregion(SimplexPoint::uniform(2), 0.1);
  CHECK(r.radius == 0.1);
  CHECK(r.contains(SimplexPoint::uniform(2)));
  CHECK_FALSE(r.contains(SimplexPoint::vertex(2, 0)));
  CHECK(make_subregion(SimplexPoint::uniform(2), 5.0).radius == 2.0);
  CHECK(whole_simplex(3).is_whole_simplex());
  CHECK_THROWS_AS(make_subregion(SimplexPoint::uniform(2), 0.0), std::invalid_argument);
  CHECK_THROWS_AS(make_subregion(SimplexPoint::uniform(2), -0.5), std::invalid_argument);
}

TEST_CASE("subregion samples stay in the region") {
  RngStream rng(6);
  for (int trial = 0; trial < 40; ++trial) {
    const Eigen::Index M = 1 + static_cast<Eigen::Index>(rng.uniform_index(6));
    const SimplexPoint center = trial % 3 == 0 ? SimplexPoint::vertex(M, trial % (M + 1)) : sample_uniform_simplex(M, rng);
    const double rho = std::array<double, 4>{1e-3, 0.05, 0.3, 1.2}[rng.uniform_index(4)];
    SubregionSampler sampler(make_subregion(center, rho));
    for (int i = 0; i < 200; ++i) {
      const SimplexPoint a = sampler.draw(rng);
      REQUIRE(a.coords().minCoeff() >= 0.0);
      REQUIRE(std::abs(a.coords().sum() - 1.0) < 1e-12);
      REQUIRE(center.l1_distance(a) <= rho + 1e-9);
    }
    CHECK_FALSE(sampler.approximate());
  }
}

TEST_CASE("tiny radius samples collapse onto the center") {
  RngStream rng(7);
  const SimplexPoint center((Eigen::VectorXd(4) << 0.1, 0.2, 0.3, 0.4).finished());
  for (int i = 0; i < 50; ++i) {
    CHECK(center.l1_distance(sample_uniform_subregion(make_subregion(center, 1e-6), rng)) <= 1e-6 + 1e-12);
  }
  CHECK(sample_uniform_subregion(make_subregion(SimplexPoint::uniform(0), 0.1), rng)[0] == 1.0);
}

TEST_CASE("whole-simplex subregion matches uniform simplex sampling") {
  RngStream a(108), b(109);
  const int n = 20000;
  std::vector<std::vector<double>> xs(4), ys(4);
  for (int i = 0; i < n; ++i) {
    const SimplexPoint p = sample_uniform_subregion(make_subregion(SimplexPoint::vertex(3, 1), 2.0), a);
    const SimplexPoint q = sample_uniform_simplex(3, b);
    for (int j = 0; j < 4; ++j) {
      xs[static_cast<std::size_t>(j)].push_back(p[j]);
      ys[static_cast<std::size_t>(j)].push_back(q[j]);
    }
  }
  for (int j = 0; j < 4; ++j) CHECK(testing::ks_two_sample_pvalue(xs[static_cast<std::size_t>(j)], ys[static_cast<std::size_t>(j)]) > 0.01);
}

TEST_CASE("L1-ball proposals are uniform over the region") {
  // Reference: uniform simplex draws filtered by rejection.
  struct Case {
    SimplexPoint center;
    double rho;
  };
  const std::vector<Case> cases = {
      {SimplexPoint((Eigen::VectorXd(4) << 0.4, 0.3, 0.2, 0.1).finished()), 0.35},
      {SimplexPoint::vertex(3, 2), 0.8},
      {SimplexPoint((Eigen::VectorXd(4) << 0.5, 0.5, 0.0, 0.0).finished()), 0.6},
  };
  RngStream rng(10), ref_rng(11);
  for (const Case& c : cases) {
    const Subregion region = make_subregion(c.center, c.rho);
    SubregionSampler ball(region, SubregionSampler::Mode::ball_rejection);
    const int n = 6000;
    std::vector<std::vector<double>> xs(4), ys(4);
    while (ys[0].size() < static_cast<std::size_t>(n)) {
      const SimplexPoint q = sample_uniform_simplex(3, ref_rng);
      if (!region.contains(q, 0.0)) continue;
      for (std::size_t j = 0; j < 4; ++j) ys[j].push_back(q[static_cast<Eigen::Index>(j)]);
    }
    for (int i = 0; i < n; ++i) {
      const SimplexPoint p = ball.draw(rng);
      REQUIRE(region.contains(p));
      for (std::size_t j = 0; j < 4; ++j) xs[j].push_back(p[static_cast<Eigen::Index>(j)]);
    }
    CHECK(ball.mode() == SubregionSampler::Mode::ball_rejection);
    for (std::size_t j = 0; j < 4; ++j) CHECK(testing::ks_two_sample_pvalue(xs[j], ys[j]) > 0.001);
  }
}

TEST_CASE("segment subregion is uniform on its interval") {
  RngStream rng(12);
  const Subregion region = make_subregion(SimplexPoint::uniform(1), 0.2);
  std::vector<double> xs, ref;
  for (int i = 0; i < 5000; ++i) {
    xs.push_back(sample_uniform_subregion(region, rng)[0]);
    ref.push_back(0.4 + 0.2 * rng.uniform());
  }
  CHECK(*std::min_element(xs.begin(), xs.end()) >= 0.4 - 1e-12);
  CHECK(*std::max_element(xs.begin(), xs.end()) <= 0.6 + 1e-12);
  CHECK(testing::ks_two_sample_pvalue(xs, ref) > 0.001);
}

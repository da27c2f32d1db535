#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "oracles.hpp"
#include "trajattr/data_embedding.hpp"
#include "trajattr/error.hpp"

using namespace trajattr;
using oracle::vec;

namespace {

Eigen::VectorXd random_simplex(Rng& rng, int dim) {
  Eigen::VectorXd p(dim);
  for (int i = 0; i < dim; ++i) p[i] = rng.uniform() + 1e-3;
  return p / p.sum();
}

std::array<double, 3> random_grid_simplex(Rng& rng) {
  const int a = static_cast<int>(rng.below(21));
  const int b = static_cast<int>(rng.below(static_cast<std::uint64_t>(21 - a)));
  return {a / 20.0, b / 20.0, (20 - a - b) / 20.0};
}

}  // namespace

TEST_SUITE("data_embedding") {
  TEST_CASE("softmax of a single embedding") {
    const auto e = data_embedding(std::vector<Eigen::VectorXd>{vec({2, 0})}, 1.0, 1.0);
    const double e2 = std::exp(2.0);
    CHECK(e.probs[0] == doctest::Approx(e2 / (e2 + 1)).epsilon(1e-14));
    CHECK(e.probs[1] == doctest::Approx(1 / (e2 + 1)).epsilon(1e-14));
    CHECK(e.probs[0] == doctest::Approx(0.8808).epsilon(1e-4));
    CHECK(e.probs[1] == doctest::Approx(0.1192).epsilon(1e-3));
  }

  TEST_CASE("zero sum is uniform") {
    const auto e = data_embedding(std::vector<Eigen::VectorXd>{vec({1, 0}), vec({0, 1})}, 2.0, 1.0);
    CHECK(e.probs[0] == doctest::Approx(0.5));
    CHECK(e.probs[1] == doctest::Approx(0.5));
    const auto z = data_embedding(std::vector<Eigen::VectorXd>{vec({0, 0, 0, 0})}, 1.0, 1.0);
    for (int i = 0; i < 4; ++i) CHECK(z.probs[i] == 0.25);
  }

  TEST_CASE("matches the test-side softmax oracle") {
    Rng rng(4);
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<Eigen::VectorXd> embs;
      for (int i = 0; i < 7; ++i) embs.push_back(Eigen::VectorXd::NullaryExpr(5, [&] { return rng.uniform(-3, 3); }));
      const double m = 1 + rng.below(10);
      const double t = rng.uniform(0.2, 3.0);
      const auto got = data_embedding(embs, m, t);
      const auto want = oracle::softmax_embedding(embs, m, t);
      CHECK((got.probs - want).cwiseAbs().maxCoeff() < 1e-15);
    }
  }

  TEST_CASE("invalid arguments") {
    const std::vector<Eigen::VectorXd> one{vec({1, 2})};
    CHECK_THROWS_AS(data_embedding(one, 0.0, 1.0), ContractViolation);
    CHECK_THROWS_AS(data_embedding(one, -1.0, 1.0), ContractViolation);
    CHECK_THROWS_AS(data_embedding(one, 1.0, 0.0), ContractViolation);
    CHECK_THROWS_AS(data_embedding(std::vector<Eigen::VectorXd>{}, 1.0, 1.0), ContractViolation);
    CHECK_THROWS_AS(wasserstein_simplex(vec({1}), vec({0.5, 0.5})), ContractViolation);
  }

  TEST_CASE("output lies on the simplex") {
    Rng rng(9);
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<Eigen::VectorXd> embs;
      for (int i = 0; i < 10; ++i) embs.push_back(Eigen::VectorXd::NullaryExpr(16, [&] { return rng.uniform(-5, 5); }));
      const auto e = data_embedding(embs, 10, 1);
      CHECK(std::abs(e.probs.sum() - 1.0) < 1e-9);
      CHECK(e.probs.minCoeff() > 0.0);
    }
  }

  TEST_CASE("permutation invariance is exact") {
    Rng rng(11);
    std::vector<Eigen::VectorXd> embs;
    for (int i = 0; i < 25; ++i) embs.push_back(Eigen::VectorXd::NullaryExpr(8, [&] { return rng.uniform(-1, 1) * 1e3; }));
    const auto base = data_embedding(embs, 25, 1).probs;
    std::mt19937 shuffle_rng(3);
    for (int trial = 0; trial < 20; ++trial) {
      std::shuffle(embs.begin(), embs.end(), shuffle_rng);
      CHECK((data_embedding(embs, 25, 1).probs.array() == base.array()).all());
    }
  }

  TEST_CASE("large temperature flattens the distribution") {
    const std::vector<Eigen::VectorXd> embs{vec({3, -2, 0.5, 1})};
    const auto e = data_embedding(embs, 1, 1e6);
    for (int i = 0; i < 4; ++i) CHECK(std::abs(e.probs[i] - 0.25) < 1e-4);
  }

  TEST_CASE("Wasserstein closed-form examples") {
    CHECK(wasserstein_simplex(vec({0.2, 0.3, 0.5}), vec({0.2, 0.3, 0.5})) == 0.0);
    CHECK(std::abs(wasserstein_simplex(vec({1, 0}), vec({0, 1})) - 1.0) < 1e-9);
    CHECK(std::abs(wasserstein_simplex(vec({0.5, 0.5, 0}), vec({0, 0.5, 0.5})) - 1.0) < 1e-9);
    CHECK(std::abs(oracle::brute_force_w1_3pt({0.5, 0.5, 0}, {0, 0.5, 0.5}) - 1.0) < 1e-12);
  }

  TEST_CASE("Wasserstein agrees with brute-force transport on three points") {
    Rng rng(12);
    for (int trial = 0; trial < 200; ++trial) {
      const auto p = random_grid_simplex(rng);
      const auto q = random_grid_simplex(rng);
      const double got = wasserstein_simplex(vec({p[0], p[1], p[2]}), vec({q[0], q[1], q[2]}));
      CHECK(std::abs(got - oracle::brute_force_w1_3pt(p, q)) < 1e-9);
    }
  }

  TEST_CASE("metric axioms on random triples") {
    Rng rng(13);
    for (int trial = 0; trial < 100; ++trial) {
      const auto p = random_simplex(rng, 6);
      const auto q = random_simplex(rng, 6);
      const auto r = random_simplex(rng, 6);
      const double pq = wasserstein_simplex(p, q);
      CHECK(pq >= 0.0);
      CHECK(pq == wasserstein_simplex(q, p));
      CHECK(wasserstein_simplex(p, p) == 0.0);
      CHECK(wasserstein_simplex(p, r) <= pq + wasserstein_simplex(q, r) + 1e-12);
      CHECK(std::abs(pq - oracle::cdf_w1(p, q)) < 1e-12);
    }
  }

  TEST_CASE("total variation") {
    CHECK(total_variation(vec({1, 0}), vec({0, 1})) == 1.0);
    CHECK(total_variation(vec({0.5, 0.5, 0}), vec({0, 0.5, 0.5})) == 0.5);
    CHECK(simplex_distance(vec({1, 0, 0}), vec({0, 0, 1}), SimplexDistance::Wasserstein) == 2.0);
    CHECK(simplex_distance(vec({1, 0, 0}), vec({0, 0, 1}), SimplexDistance::TotalVariation) == 1.0);
  }

  TEST_CASE("normalize distances") {
    auto n = normalize_distances({{0, 2.0}, {1, 1.0}, {2, 0.5}});
    CHECK_FALSE(n.all_zero);
    CHECK(n.values[0].second == 1.0);
    CHECK(n.values[1].second == 0.5);
    CHECK(n.values[2].second == 0.25);
    CHECK(normalize_distances({{4, 3.7}}).values[0].second == 1.0);
    const auto z = normalize_distances({{0, 0.0}, {1, 0.0}});
    CHECK(z.all_zero);
    CHECK(z.values[1].second == 0.0);
    CHECK_THROWS_AS(normalize_distances({{0, -1.0}}), ContractViolation);
  }

  TEST_CASE("CSV round trip") {
    const auto dir = oracle::temp_dir("data_emb_csv");
    DataEmbedding a{vec({0.25, 0.75}), std::nullopt};
    DataEmbedding b{vec({0.1, 0.9}), 3};
    write_data_embeddings_csv({a, b}, (dir / "d.csv").string());
    const auto back = read_data_embeddings_csv((dir / "d.csv").string());
    REQUIRE(back.size() == 2);
    CHECK(back[0].probs == a.probs);
    CHECK_FALSE(back[0].complement_of.has_value());
    CHECK(back[1].probs == b.probs);
    CHECK(back[1].complement_of == 3);
    CHECK(back[1].label() == "complement:3");
  }
}

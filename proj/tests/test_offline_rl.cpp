#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "trajattr/error.hpp"
#include "trajattr/offline_rl.hpp"

using namespace trajattr;

namespace {

Dataset with_layout(const GridLayout& g, std::vector<Trajectory> trajs) {
  Dataset d;
  d.meta.layout_hash = g.hash();
  d.meta.width = g.width();
  d.meta.height = g.height();
  d.meta.max_len = 30;
  d.trajectories = std::move(trajs);
  return d;
}

TabularMDP one_state(double reward, bool self_loop) {
  TabularMDP m;
  m.n_states = self_loop ? 1 : 2;
  m.sink = m.n_states - 1;
  m.terminal = self_loop ? std::vector<bool>{false} : std::vector<bool>{false, true};
  const int rows = m.n_states * m.n_actions;
  m.transition.assign(rows, {});
  m.reward.assign(rows, 0.0);
  m.support.assign(rows, 1);
  for (int a = 0; a < m.n_actions; ++a) {
    m.transition[m.row(0, a)] = {{self_loop ? 0 : 1, 1.0}};
    m.reward[m.row(0, a)] = reward;
  }
  return m;
}

}  // namespace

TEST_SUITE("offline_rl") {
  TEST_CASE("fit_model on a single trajectory") {
    const auto g = GridLayout::parse("S.G");
    const auto d = with_layout(g, {{0, {{0, 3, -0.1}, {1, 3, 1.0}}}});
    const auto m = fit_model(d, g);
    CHECK(m.n_states == 4);
    CHECK(m.sink == 3);
    REQUIRE(m.transition[m.row(0, 3)].size() == 1);
    CHECK(m.transition[m.row(0, 3)][0].next_state == 1);
    CHECK(m.transition[m.row(0, 3)][0].prob == 1.0);
    CHECK(m.reward[m.row(0, 3)] == -0.1);
    CHECK(m.transition[m.row(1, 3)][0].next_state == 2);
    CHECK(m.reward[m.row(1, 3)] == 1.0);
    CHECK(m.total_support() == 2);
  }

  TEST_CASE("fit_model counts outcomes") {
    const auto g = GridLayout::parse("S..G");
    // Hand-made records: two of three (0, Right) steps are followed by cell 1.
    const auto d = with_layout(g, {{0, {{0, 3, -0.1}, {1, 3, -0.1}}},
                                   {1, {{0, 3, -0.1}, {1, 2, -0.1}}},
                                   {2, {{0, 3, -0.1}, {2, 3, -0.1}}}});
    const auto m = fit_model(d, g);
    const auto& out = m.transition[m.row(0, 3)];
    REQUIRE(out.size() == 2);
    CHECK(out[0].next_state == 1);
    CHECK(out[0].prob == doctest::Approx(2.0 / 3.0));
    CHECK(out[1].next_state == 2);
    CHECK(out[1].prob == doctest::Approx(1.0 / 3.0));
    CHECK(m.support[m.row(0, 3)] == 3);
  }

  TEST_CASE("unobserved pairs lead to the pessimistic sink") {
    const auto g = GridLayout::parse("S.G");
    const auto d = with_layout(g, {{0, {{0, 3, -0.1}, {1, 3, 1.0}}}});
    const auto m = fit_model(d, g, -1.0);
    CHECK_FALSE(m.observed(0, 0));
    REQUIRE(m.transition[m.row(0, 0)].size() == 1);
    CHECK(m.transition[m.row(0, 0)][0].next_state == m.sink);
    CHECK(m.reward[m.row(0, 0)] == -1.0);
    const auto pol = value_iteration(m, 0.95, 1e-8);
    CHECK(pol.v[m.sink] == doctest::Approx(-20.0).epsilon(1e-6));
    CHECK(pol.action[0] == 3);
  }

  TEST_CASE("fit_model rejects actions taken in terminal cells") {
    const auto g = GridLayout::parse("S.G");
    const auto d = with_layout(g, {{0, {{2, 0, -0.1}}}});
    CHECK_THROWS_AS(fit_model(d, g), ContractViolation);
  }

  TEST_CASE("single decision into a rewarding terminal") {
    const auto pol = value_iteration(one_state(1.0, false), 0.95, 1e-8);
    CHECK(pol.v[0] == 1.0);
    CHECK(pol.action[0] == 0);
    CHECK(pol.action[1] == -1);
  }

  TEST_CASE("deterministic cycle") {
    const auto pol = value_iteration(one_state(-0.1, true), 0.95, 1e-8);
    CHECK(std::abs(pol.v[0] - (-2.0)) < 1e-6);
  }

  TEST_CASE("corridor with full support") {
    const auto g = GridLayout::parse("S.G");
    const auto d = oracle::full_support_dataset(g);
    const auto m = fit_model(d, g);
    const auto pol = value_iteration(m, 0.95, 1e-8);
    CHECK(pol.v[0] == 0.85);
    CHECK(pol.action[0] == static_cast<int>(Action::Right));
    const auto best = oracle::optimal_values_by_enumeration(m, 0.95);
    CHECK(std::abs(best[0] - 0.85) < 1e-12);
  }

  TEST_CASE("value iteration matches policy enumeration on small layouts") {
    double worst = 0.0;
    int n = 0;
    for (auto [h, w] : {std::pair{1, 2}, {1, 3}, {1, 4}, {2, 2}}) {
      for (const auto& g : oracle::enumerate_layouts(h, w)) {
        worst = std::max(worst, oracle::value_iteration_gap(g, oracle::full_support_dataset(g)));
        ++n;
      }
    }
    CHECK(n > 100);
    CHECK(worst < 1e-6);
  }

  TEST_CASE("value iteration matches policy enumeration with partial support") {
    Rng rng(5);
    for (int trial = 0; trial < 30; ++trial) {
      const auto g = oracle::random_layout(3, 3, rng);
      const auto d = generate_offline_dataset(g, BehaviorMix::parse("uniform:1"), 4, 6, trial);
      CHECK(oracle::value_iteration_gap(g, d) < 1e-6);
    }
  }

  TEST_CASE("Bellman residual and greedy consistency") {
    const auto g = GridLayout::default_layout();
    const auto d = generate_offline_dataset(g, BehaviorMix::default_mix(), 60, 30, 7);
    const auto m = fit_model(d, g);
    const auto pol = value_iteration(m, 0.95, 1e-8);
    for (int s = 0; s < m.n_states; ++s) {
      if (m.terminal[s]) {
        CHECK(pol.action[s] == -1);
        continue;
      }
      const double best = pol.q.row(s).maxCoeff();
      CHECK(pol.q(s, pol.action[s]) == best);
      for (int a = 0; a < pol.action[s]; ++a) CHECK(pol.q(s, a) < best);
      for (int a = 0; a < m.n_actions; ++a) {
        double backup = m.reward[m.row(s, a)];
        for (const auto& o : m.transition[m.row(s, a)]) backup += 0.95 * o.prob * pol.v[o.next_state];
        CHECK(std::abs(backup - pol.q(s, a)) < 1e-6);
      }
    }
  }

  TEST_CASE("ties go to the lowest action") {
    const auto pol = value_iteration(one_state(-0.1, true), 0.95, 1e-8);
    CHECK(pol.action[0] == 0);
  }

  TEST_CASE("adding data never decreases support") {
    const auto g = GridLayout::default_layout();
    const auto d = generate_offline_dataset(g, BehaviorMix::default_mix(), 40, 30, 3);
    Dataset partial = d;
    partial.trajectories.clear();
    long last = 0;
    std::vector<int> last_rows(fit_model(partial, g).support.size(), 0);
    for (const auto& t : d.trajectories) {
      partial.trajectories.push_back(t);
      const auto m = fit_model(partial, g);
      CHECK(m.total_support() >= last);
      last = m.total_support();
      for (std::size_t r = 0; r < m.support.size(); ++r) CHECK(m.support[r] >= last_rows[r]);
      last_rows = m.support;
    }
  }

  TEST_CASE("convergence failure reports the residual") {
    try {
      value_iteration(one_state(-0.1, true), 0.9999, 1e-12);
      FAIL("expected ConvergenceError");
    } catch (const ConvergenceError& e) {
      CHECK(e.residual() > 1e-12);
    }
    CHECK_THROWS_AS(value_iteration(one_state(1, false), 1.0, 1e-8), ContractViolation);
    CHECK_THROWS_AS(value_iteration(one_state(1, false), 0.9, 0.0), ContractViolation);
  }

  TEST_CASE("initial state value") {
    TabularPolicy pol;
    pol.v = oracle::vec({0.85, 0.2, 0.4});
    CHECK(initial_state_value(pol, oracle::vec({1, 0, 0})) == 0.85);
    CHECK(initial_state_value(pol, oracle::vec({0, 0.5, 0.5})) == doctest::Approx(0.3));
    CHECK_THROWS_AS(initial_state_value(pol, oracle::vec({0.5, 0.2, 0.2})), ContractViolation);
    CHECK_THROWS_AS(initial_state_value(pol, oracle::vec({1, 0})), ContractViolation);
  }

  TEST_CASE("start distribution is uniform over starts") {
    const auto g = GridLayout::default_layout();
    const auto dist = start_distribution(g);
    CHECK(dist.size() == g.num_cells() + 1);
    CHECK(dist.sum() == doctest::Approx(1.0));
    for (const auto& c : g.start_states()) CHECK(dist[g.index(c.row, c.col)] == doctest::Approx(1.0 / g.start_states().size()));
  }

  TEST_CASE("policy JSON round trip is bit exact") {
    const auto g = GridLayout::default_layout();
    const auto d = generate_offline_dataset(g, BehaviorMix::default_mix(), 20, 30, 4);
    RlConfig cfg;
    const auto pol = train_policy(d, g, cfg);
    CHECK(pol.config_fingerprint == cfg.fingerprint());
    const auto back = policy_from_json(policy_to_json(pol));
    CHECK(back == pol);
    CHECK_THROWS_AS(policy_from_json("{\"gamma\": 0.9}"), SchemaError);
  }

  TEST_CASE("RL config validation and fingerprint") {
    RlConfig a;
    RlConfig b;
    CHECK(a.fingerprint() == b.fingerprint());
    b.gamma = 0.9;
    CHECK(a.fingerprint() != b.fingerprint());
    b.gamma = 1.5;
    CHECK_THROWS_AS(b.validate(), ContractViolation);
  }
}

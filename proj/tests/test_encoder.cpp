#include <doctest.h>

#include <cmath>
#include <fstream>

#include "oracles.hpp"
#include "trajattr/encoder.hpp"
#include "trajattr/error.hpp"

using namespace trajattr;

namespace {

Dataset small_dataset(int n, std::uint64_t seed) {
  return generate_offline_dataset(GridLayout::default_layout(), BehaviorMix::default_mix(), n, 30,
                                  seed);
}

EncoderConfig tiny(int epochs) {
  EncoderConfig c;
  c.d_model = 8;
  c.epochs = epochs;
  return c;
}

}  // namespace

TEST_SUITE("encoder") {
  TEST_CASE("vocabulary layout") {
    const TokenVocab v(49);
    CHECK(v.size() == 49 + 4 + 3);
    CHECK(v.obs_token(0) == 0);
    CHECK(v.obs_token(48) == 48);
    CHECK(v.action_token(0) == 49);
    CHECK(v.reward_token(1.0) == 53);
    CHECK(v.reward_token(-1.0) == 54);
    CHECK(v.reward_token(-0.1) == 55);
    CHECK_THROWS_AS(v.reward_token(0.5), TokenizationError);
    CHECK_THROWS_AS(v.obs_token(49), TokenizationError);
    CHECK_THROWS_AS(v.action_token(4), TokenizationError);
  }

  TEST_CASE("tokenize interleaves observation, action, reward") {
    const TokenVocab v(49);
    Trajectory one{0, {{10, 3, 1.0}}};
    CHECK(tokenize(one, v) == std::vector<int>{10, 49 + 3, 53});
    Trajectory long_traj{1, {}};
    for (int i = 0; i < 30; ++i) long_traj.steps.push_back({i, i % 4, -0.1});
    CHECK(tokenize(long_traj, v).size() == 90);
  }

  TEST_CASE("zero epochs returns the seeded initialization") {
    const auto d = small_dataset(6, 1);
    const auto cfg = tiny(0);
    const auto trained = train_encoder(d, cfg);
    const auto init = initialize_encoder(TokenVocab(49), cfg);
    CHECK(trained.params == init.params);
    REQUIRE(trained.loss_history.size() == 1);
  }

  TEST_CASE("training is deterministic") {
    const auto d = small_dataset(8, 2);
    const auto a = train_encoder(d, tiny(4));
    const auto b = train_encoder(d, tiny(4));
    CHECK(a.params == b.params);
    CHECK(a.loss_history == b.loss_history);
    auto other = tiny(4);
    other.seed = 99;
    CHECK_FALSE(train_encoder(d, other).params == a.params);
  }

  TEST_CASE("analytic gradient matches central finite differences") {
    const auto d = small_dataset(3, 4);
    const TokenVocab v(49);
    std::vector<std::vector<int>> seqs;
    for (const auto& t : d.trajectories) seqs.push_back(tokenize(t, v));
    const auto enc = initialize_encoder(v, tiny(0));
    const auto check = oracle::finite_difference_check(enc.params, seqs, 40, 17);
    CHECK(check.checked == 40);
    CHECK(check.max_rel_error < 1e-4);
  }

  TEST_CASE("gradient check after some training") {
    const auto d = small_dataset(3, 5);
    const TokenVocab v(49);
    std::vector<std::vector<int>> seqs;
    for (const auto& t : d.trajectories) seqs.push_back(tokenize(t, v));
    const auto enc = train_encoder(d, tiny(10));
    CHECK(oracle::finite_difference_check(enc.params, seqs, 30, 23).max_rel_error < 1e-4);
  }

  TEST_CASE("default training lowers the loss") {
    const auto d = small_dataset(60, 7);
    EncoderConfig cfg;
    const auto enc = train_encoder(d, cfg);
    REQUIRE(enc.loss_history.size() == static_cast<std::size_t>(cfg.epochs) + 1);
    CHECK(enc.loss_history.back() < enc.loss_history.front());
  }

  TEST_CASE("embedding is the mean of the per-token outputs") {
    const auto d = small_dataset(4, 8);
    const auto enc = train_encoder(d, tiny(3));
    Trajectory one{0, {d.trajectories[0].steps[0]}};
    const auto h = hidden_outputs(enc, one);
    REQUIRE(h.cols() == 3);
    const Eigen::VectorXd mean = (h.col(0) + h.col(1) + h.col(2)) / 3.0;
    const auto e = encode_trajectory(enc, one);
    CHECK((e.vector - mean).cwiseAbs().maxCoeff() < 1e-12);
    for (const auto& t : d.trajectories) {
      CHECK(encode_trajectory(enc, t).vector.size() == 8);
    }
  }

  TEST_CASE("distinct behaviors give distinct embeddings") {
    const auto d = small_dataset(60, 7);
    const auto enc = train_encoder(d, EncoderConfig{});
    const auto embs = encode_all(enc, d);
    REQUIRE(embs.size() == 60);
    int a = -1, b = -1;
    for (std::size_t i = 0; i < d.size(); ++i) {
      if (d.meta.behaviors[i] == 0 && a < 0) a = static_cast<int>(i);
      if (d.meta.behaviors[i] == 1 && b < 0) b = static_cast<int>(i);
    }
    REQUIRE(a >= 0);
    REQUIRE(b >= 0);
    CHECK((embs[a].vector - embs[b].vector).cwiseAbs().maxCoeff() > 1e-9);
    for (std::size_t i = 0; i < embs.size(); ++i) CHECK(embs[i].traj_id == static_cast<int>(i));
  }

  TEST_CASE("encode_all names the offending trajectory") {
    auto d = small_dataset(3, 9);
    const auto enc = train_encoder(d, tiny(0));
    d.trajectories[2].steps[0].reward = 0.25;
    CHECK_THROWS_WITH_AS(encode_all(enc, d), doctest::Contains("trajectory 2"), TokenizationError);
  }

  TEST_CASE("huge learning rate is reported") {
    const auto d = small_dataset(4, 10);
    auto cfg = tiny(5);
    cfg.learning_rate = 1e300;
    CHECK_THROWS_WITH_AS(train_encoder(d, cfg), doctest::Contains("learning rate"), TrainingError);
  }

  TEST_CASE("invalid configs") {
    const auto d = small_dataset(2, 11);
    auto cfg = tiny(1);
    cfg.d_model = 1;
    CHECK_THROWS_AS(train_encoder(d, cfg), ContractViolation);
    cfg = tiny(-1);
    CHECK_THROWS_AS(train_encoder(d, cfg), ContractViolation);
    cfg = tiny(1);
    cfg.learning_rate = 0;
    CHECK_THROWS_AS(train_encoder(d, cfg), ContractViolation);
  }

  TEST_CASE("checkpoint round trip is bit exact") {
    const auto dir = oracle::temp_dir("encoder_ckpt");
    const auto enc = train_encoder(small_dataset(5, 12), tiny(3));
    save_encoder(enc, (dir / "e.ckpt").string());
    const auto back = load_encoder((dir / "e.ckpt").string());
    CHECK(back == enc);
    std::ofstream((dir / "bad.ckpt").string()) << "not a checkpoint";
    CHECK_THROWS_AS(load_encoder((dir / "bad.ckpt").string()), SchemaError);
  }
}

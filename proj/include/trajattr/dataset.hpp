#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "trajattr/gridworld.hpp"

namespace trajattr {

struct Step {
  int obs = 0;  // flattened cell index row * width + col
  int action = 0;
  double reward = 0.0;

  friend bool operator==(const Step&, const Step&) = default;
};

struct Trajectory {
  int id = 0;
  std::vector<Step> steps;

  std::size_t length() const noexcept { return steps.size(); }
  friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

/// One observed (s, a, r, s') transition.
struct Transition {
  int state = 0;
  int action = 0;
  double reward = 0.0;
  int next_state = 0;
};

enum class BehaviorKind { UniformRandom, EpsilonGreedy, NoisyGoalSeeking };

struct BehaviorComponent {
  BehaviorKind kind = BehaviorKind::UniformRandom;
  double weight = 0.0;
  /// Exploration rate for EpsilonGreedy, action-noise rate for NoisyGoalSeeking.
  double param = 0.0;

  friend bool operator==(const BehaviorComponent&, const BehaviorComponent&) = default;
};

/// Weighted mixture of behavior policies used to collect the offline data.
/// Text form: "uniform:0.4,egreedy(0.2):0.4,noisy(0.3):0.2".
struct BehaviorMix {
  std::vector<BehaviorComponent> components;

  static BehaviorMix default_mix();
  static BehaviorMix parse(std::string_view text);
  std::string to_string() const;
  /// Throws ContractViolation when empty, negative, or not summing to 1.
  void validate() const;

  friend bool operator==(const BehaviorMix&, const BehaviorMix&) = default;
};

struct DatasetMetadata {
  std::uint64_t seed = 0;
  std::string mix;
  std::string layout_hash;
  int width = 0;
  int height = 0;
  int max_len = 0;
  /// "generated", or "complement:<cluster id>" for derived datasets.
  std::string source = "generated";
  /// Id of each trajectory in the dataset it was derived from.
  std::vector<int> original_ids;
  /// Behavior component index that produced each trajectory (-1 if unknown).
  std::vector<int> behaviors;

  friend bool operator==(const DatasetMetadata&, const DatasetMetadata&) = default;
};

struct Dataset {
  DatasetMetadata meta;
  std::vector<Trajectory> trajectories;

  std::size_t size() const noexcept { return trajectories.size(); }
  friend bool operator==(const Dataset&, const Dataset&) = default;
};

inline constexpr int kDefaultMaxLen = 30;

/// Rolls out `n_traj` episodes, each under one behavior drawn from `mix`,
/// starting from a uniformly drawn start state. Fully determined by `seed`.
Dataset generate_offline_dataset(const GridLayout& layout, const BehaviorMix& mix, int n_traj,
                                 int max_len, std::uint64_t seed);

void write_dataset(const Dataset& d, const std::string& path);
std::string dataset_to_jsonl(const Dataset& d);
Dataset read_dataset(const std::string& path);
Dataset dataset_from_jsonl(std::string_view text);

/// Transitions of a trajectory. The successor of the last step is not stored,
/// so it is recovered from the deterministic environment.
std::vector<Transition> transitions(const Trajectory& traj, const GridLayout& layout);

/// Re-simulates every trajectory and reports mismatches with the stored data.
std::vector<std::string> replay_errors(const Dataset& d, const GridLayout& layout);

}  // namespace trajattr

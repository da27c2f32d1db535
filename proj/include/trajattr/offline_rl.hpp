#pragma once

#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "trajattr/dataset.hpp"
#include "trajattr/error.hpp"
#include "trajattr/gridworld.hpp"

namespace trajattr {

struct RlConfig {
  double gamma = 0.95;
  double tol = 1e-8;
  /// Per-step reward of the absorbing sink that unobserved (s, a) pairs lead to.
  double r_pess = -1.0;

  void validate() const;
  std::string fingerprint() const;
  friend bool operator==(const RlConfig&, const RlConfig&) = default;
};

inline constexpr int kMaxValueIterationSweeps = 10'000;

/// Maximum-likelihood tabular model. States are the grid cells followed by
/// one extra absorbing sink state.
struct TabularMDP {
  struct Outcome {
    int next_state = 0;
    double prob = 0.0;
  };

  int n_states = 0;
  int n_actions = kNumActions;
  int sink = 0;
  double r_pess = -1.0;
  std::vector<bool> terminal;
  /// Indexed [s * n_actions + a].
  std::vector<std::vector<Outcome>> transition;
  std::vector<double> reward;
  std::vector<int> support;

  int row(int s, int a) const noexcept { return s * n_actions + a; }
  bool observed(int s, int a) const { return support[row(s, a)] > 0; }
  /// Sum of observation counts; grows monotonically as data is added.
  long total_support() const;
};

TabularMDP fit_model(const Dataset& data, const GridLayout& layout, double r_pess = -1.0);

struct TabularPolicy {
  double gamma = 0.95;
  std::vector<int> action;        // -1 for terminal states
  Eigen::MatrixXd q;              // n_states x n_actions, zero rows for terminal states
  Eigen::VectorXd v;
  std::vector<bool> terminal;
  std::string config_fingerprint;

  int n_states() const noexcept { return static_cast<int>(action.size()); }
  friend bool operator==(const TabularPolicy& a, const TabularPolicy& b);
};

class ConvergenceError : public TrainingError {
 public:
  ConvergenceError(const std::string& what, double residual)
      : TrainingError(what), residual_(residual) {}
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

/// Synchronous Bellman-optimality sweeps until max |dV| < tol. Ties between
/// actions go to the lowest action id.
TabularPolicy value_iteration(const TabularMDP& mdp, double gamma, double tol);

/// fit_model followed by value_iteration under one config.
TabularPolicy train_policy(const Dataset& data, const GridLayout& layout, const RlConfig& cfg);

/// Uniform distribution over the layout's start cells, sized for the MDP.
Eigen::VectorXd start_distribution(const GridLayout& layout);

/// E_{s0 ~ start_dist}[V(s0)].
double initial_state_value(const TabularPolicy& pol, const Eigen::VectorXd& start_dist);

std::string policy_to_json(const TabularPolicy& pol);
TabularPolicy policy_from_json(const std::string& text);
void write_policy(const TabularPolicy& pol, const std::string& path);
TabularPolicy read_policy(const std::string& path);

}  // namespace trajattr

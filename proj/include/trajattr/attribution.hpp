#pragma once

#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "trajattr/clustering.hpp"
#include "trajattr/data_embedding.hpp"
#include "trajattr/dataset.hpp"
#include "trajattr/encoder.hpp"
#include "trajattr/offline_rl.hpp"

namespace trajattr {

/// For cluster j, the dataset with every trajectory of c_j removed. Ids are
/// renumbered densely; the originals are kept in meta.original_ids.
std::vector<std::pair<int, Dataset>> complementary_datasets(const Dataset& data,
                                                            const ClusterSet& cs);

struct ExplanationEntry {
  int cluster_id = 0;
  std::size_t complement_size = 0;
  TabularPolicy policy;
  DataEmbedding complement_embedding;
};

struct ExplanationSuite {
  TabularPolicy original;
  DataEmbedding original_embedding;
  std::vector<ExplanationEntry> entries;  // ordered by cluster id
  std::string config_fingerprint;
  SimplexDistance distance = SimplexDistance::Wasserstein;

  int n_clusters() const noexcept { return static_cast<int>(entries.size()); }
};

struct SuiteOptions {
  RlConfig rl;
  double normalizer = 0.0;  // M; 0 selects the full dataset size
  double temperature = 1.0;
  SimplexDistance distance = SimplexDistance::Wasserstein;
  bool parallel = true;
};

/// Trains the original policy on all data and one explanation policy per
/// cluster on its complement, all under the same RL config, and computes
/// the matching data embeddings.
ExplanationSuite train_explanation_suite(const Dataset& data, const GridLayout& layout,
                                         const ClusterSet& cs,
                                         const std::vector<TrajectoryEmbedding>& embeddings,
                                         const SuiteOptions& options);

/// Throws ContractViolation unless every policy in the suite was trained
/// under the original policy's config fingerprint.
void check_suite(const ExplanationSuite& suite);

enum class ActionSpace { Discrete, Continuous };
using PolicyAction = std::variant<int, std::vector<double>>;

/// Indicator of disagreement for discrete actions, squared Euclidean distance
/// for continuous ones.
double action_distance(const PolicyAction& a, const PolicyAction& b, ActionSpace space);

struct RankedTrajectory {
  int traj_id = 0;
  /// 0: contains the exact (state, action) pair; 1: visits the state; 2: neither.
  int tier = 2;
  int manhattan = 0;
};

struct AttributionResult {
  int state = 0;
  int a_orig = 0;
  std::vector<double> action_distances;  // one per cluster, by cluster id
  std::vector<int> candidates;           // K, the argmax set
  std::vector<std::pair<int, double>> data_distances;  // w_k for k in K
  std::optional<int> c_final;
  std::vector<RankedTrajectory> exemplars;
};

/// Attributes the original policy's action at `state` (a cell index) to a cluster.
AttributionResult attribute(int state, const ExplanationSuite& suite);

/// Ranks the trajectories of one cluster by how well they match the context
/// of (state, action) and returns the first `n`.
std::vector<RankedTrajectory> select_top_trajectories(const std::vector<int>& cluster_traj_ids,
                                                      const Dataset& data,
                                                      const GridLayout& layout, int state,
                                                      int action, int n);

struct MetricsRow {
  std::string policy;  // "orig" or the cluster id
  double initial_value = 0.0;
  std::optional<double> mean_abs_dq;
  std::optional<double> action_contrast;
  std::optional<double> wdist;
  std::optional<double> frequency;
};

struct MetricsReport {
  std::vector<MetricsRow> rows;  // orig first, then clusters by id
  std::size_t n_eval = 0;
  std::size_t n_attributed = 0;
  /// Share of evaluation states where no cluster changes the decision.
  double none_fraction = 0.0;
  bool wdist_all_zero = false;
  /// Evaluations where contrast was 0 but |dQ| was not (expected to stay 0).
  std::size_t coupling_violations = 0;
};

MetricsReport metrics_report(const ExplanationSuite& suite, const std::vector<int>& eval_states,
                             const Eigen::VectorXd& start_dist);

std::string metrics_csv(const MetricsReport& report);
std::string metrics_text(const MetricsReport& report);

/// Pearson correlation; NaN when either input has zero variance.
double pearson_correlation(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace trajattr

#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "trajattr/encoder.hpp"

namespace trajattr {

/// Permutation-invariant summary of a set of trajectories: a point on the
/// probability simplex over embedding features.
struct DataEmbedding {
  Eigen::VectorXd probs;
  /// Cluster whose trajectories were removed; empty for the full dataset.
  std::optional<int> complement_of;

  std::string label() const;
};

/// Sum the trajectory embeddings, divide by `normalizer`, softmax at `temperature`.
DataEmbedding data_embedding(const std::vector<TrajectoryEmbedding>& embs, double normalizer,
                             double temperature);
DataEmbedding data_embedding(const std::vector<Eigen::VectorXd>& embs, double normalizer,
                             double temperature);

enum class SimplexDistance { Wasserstein, TotalVariation };

/// Wasserstein-1 between two distributions on the ordered support
/// {0, 1, ..., d-1} with unit spacing: sum of absolute CDF differences.
double wasserstein_simplex(const DataEmbedding& p, const DataEmbedding& q);
double wasserstein_simplex(const Eigen::VectorXd& p, const Eigen::VectorXd& q);
double total_variation(const Eigen::VectorXd& p, const Eigen::VectorXd& q);
double simplex_distance(const Eigen::VectorXd& p, const Eigen::VectorXd& q, SimplexDistance kind);

struct NormalizedDistances {
  std::vector<std::pair<int, double>> values;
  /// Set when every input distance was zero; all outputs are then 0.
  bool all_zero = false;
};

/// Divides every distance by the maximum so the largest maps to exactly 1.
NormalizedDistances normalize_distances(const std::vector<std::pair<int, double>>& distances);

void write_data_embeddings_csv(const std::vector<DataEmbedding>& embs, const std::string& path);
std::vector<DataEmbedding> read_data_embeddings_csv(const std::string& path);

}  // namespace trajattr

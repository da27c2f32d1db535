#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace trajattr {

using PointSet = std::vector<Eigen::VectorXd>;

/// Partition of point indices into dense, non-empty clusters.
struct ClusterSet {
  std::vector<int> assignments;  // point index -> cluster id
  PointSet centroids;

  int n_clusters() const noexcept { return static_cast<int>(centroids.size()); }
  std::vector<std::vector<int>> members() const;
};

inline constexpr int kMaxLloydIterations = 200;
inline constexpr double kVarianceFloor = 1e-12;
/// k-means++ restarts per X-means split; the lowest-inertia result is kept.
inline constexpr int kKmeansRestarts = 10;

/// Sum of squared distances of points to their assigned centroids.
double inertia(const PointSet& points, const ClusterSet& cs);

/// k-means++ seeding followed by Lloyd iterations.
ClusterSet kmeans(const PointSet& points, int k, std::uint64_t seed);

/// Lloyd iterations from the given centroids until the assignment is stable.
/// `inertia_trace`, when given, receives the inertia after each assignment step.
ClusterSet lloyd(const PointSet& points, PointSet centroids,
                 std::vector<double>* inertia_trace = nullptr);

/// Spherical-Gaussian BIC with one shared variance; higher is better.
double bic_score(const PointSet& points, const ClusterSet& cs);

/// X-means: grows the cluster count from k_min by BIC-accepted 2-splits.
ClusterSet xmeans(const PointSet& points, int k_min, int k_max, std::uint64_t seed);

/// Throws ContractViolation unless `cs` is a partition of `n_points` points.
void check_partition(const ClusterSet& cs, std::size_t n_points);

void write_clusters_csv(const ClusterSet& cs, const std::vector<int>& point_ids,
                        const std::string& path);
void write_centroids_csv(const ClusterSet& cs, const std::string& path);
/// Reads the assignment CSV back; centroids are loaded from the sidecar.
ClusterSet read_clusters(const std::string& assignments_path, const std::string& centroids_path);

}  // namespace trajattr

#include "trajattr/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <sstream>

#include <fmt/format.h>

#include "trajattr/error.hpp"
#include "trajattr/random.hpp"

namespace trajattr {

namespace {

void check_points(const PointSet& points, int k) {
  if (k <= 0) throw ContractViolation("k must be at least 1");
  if (points.empty()) throw ContractViolation("cannot cluster an empty point set");
  if (static_cast<std::size_t>(k) > points.size()) {
    throw ContractViolation(fmt::format("k={} exceeds the number of points {}", k, points.size()));
  }
  const auto dim = points.front().size();
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (points[i].size() != dim) {
      throw ContractViolation(fmt::format("point {} has dimension {}, expected {}", i,
                                          points[i].size(), dim));
    }
    if (!points[i].allFinite()) throw ContractViolation(fmt::format("point {} is not finite", i));
  }
}

int nearest(const Eigen::VectorXd& x, const PointSet& centroids, double* best_dist = nullptr) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centroids.size(); ++c) {
    const double d = (x - centroids[c]).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(c);
    }
  }
  if (best_dist) *best_dist = best_d;
  return best;
}

PointSet kmeanspp_seeds(const PointSet& points, int k, Rng& rng) {
  PointSet seeds;
  seeds.push_back(points[rng.below(points.size())]);
  std::vector<double> d2(points.size());
  while (static_cast<int>(seeds.size()) < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      nearest(points[i], seeds, &d2[i]);
      total += d2[i];
    }
    std::size_t pick = 0;
    if (total <= 0.0) {
      pick = rng.below(points.size());
    } else {
      const double u = rng.uniform() * total;
      double acc = 0.0;
      pick = points.size() - 1;
      for (std::size_t i = 0; i < points.size(); ++i) {
        acc += d2[i];
        if (u < acc && d2[i] > 0.0) {
          pick = i;
          break;
        }
      }
    }
    seeds.push_back(points[pick]);
  }
  return seeds;
}

PointSet recompute_centroids(const PointSet& points, const std::vector<int>& assign, int k) {
  PointSet c(k, Eigen::VectorXd::Zero(points.front().size()));
  std::vector<int> count(k, 0);
  for (std::size_t i = 0; i < points.size(); ++i) {
    c[assign[i]] += points[i];
    ++count[assign[i]];
  }
  for (int j = 0; j < k; ++j) {
    if (count[j] > 0) c[j] /= count[j];
  }
  return c;
}

// Moves the point farthest from its centroid into each empty cluster.
void repair_empty(const PointSet& points, std::vector<int>& assign, PointSet& centroids) {
  const int k = static_cast<int>(centroids.size());
  for (int j = 0; j < k; ++j) {
    std::vector<int> count(k, 0);
    for (int a : assign) ++count[a];
    if (count[j] > 0) continue;
    std::size_t far = points.size();
    double far_d = -1.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      if (count[assign[i]] <= 1) continue;  // never empty another cluster
      const double d = (points[i] - centroids[assign[i]]).squaredNorm();
      if (d > far_d) {
        far_d = d;
        far = i;
      }
    }
    if (far == points.size()) throw ContractViolation("cannot repair empty cluster");
    assign[far] = j;
    centroids = recompute_centroids(points, assign, k);
  }
}

// Local log-likelihood and parameter count for a spherical Gaussian mixture
// with shared variance, evaluated on exactly the points given.
double log_likelihood(const PointSet& points, const std::vector<int>& assign, const PointSet& cent) {
  const auto n = static_cast<double>(points.size());
  const auto k = static_cast<double>(cent.size());
  const auto dim = static_cast<double>(points.front().size());
  std::vector<double> sizes(cent.size(), 0.0);
  double sse = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    sse += (points[i] - cent[assign[i]]).squaredNorm();
    sizes[assign[i]] += 1.0;
  }
  double variance = n > k ? sse / (dim * (n - k)) : 0.0;
  variance = std::max(variance, kVarianceFloor);
  double ll = -0.5 * n * dim * std::log(2.0 * std::numbers::pi * variance) - sse / (2.0 * variance);
  for (double s : sizes) {
    if (s > 0.0) ll += s * std::log(s / n);
  }
  return ll;
}

double bic(const PointSet& points, const std::vector<int>& assign, const PointSet& cent) {
  const auto n = static_cast<double>(points.size());
  const auto dim = static_cast<double>(points.front().size());
  const double params = static_cast<double>(cent.size()) * (dim + 1.0) + 1.0;
  return log_likelihood(points, assign, cent) - 0.5 * params * std::log(n);
}

}  // namespace

std::vector<std::vector<int>> ClusterSet::members() const {
  std::vector<std::vector<int>> out(centroids.size());
  for (std::size_t i = 0; i < assignments.size(); ++i) {
    out.at(assignments[i]).push_back(static_cast<int>(i));
  }
  return out;
}

double inertia(const PointSet& points, const ClusterSet& cs) {
  double total = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    total += (points[i] - cs.centroids[cs.assignments[i]]).squaredNorm();
  }
  return total;
}

ClusterSet lloyd(const PointSet& points, PointSet centroids, std::vector<double>* inertia_trace) {
  const int k = static_cast<int>(centroids.size());
  check_points(points, k);
  std::vector<int> assign(points.size(), -1);
  for (int iter = 0; iter < kMaxLloydIterations; ++iter) {
    bool changed = false;
    for (std::size_t i = 0; i < points.size(); ++i) {
      const int c = nearest(points[i], centroids);
      if (c != assign[i]) {
        assign[i] = c;
        changed = true;
      }
    }
    repair_empty(points, assign, centroids);
    if (inertia_trace) inertia_trace->push_back(inertia(points, {assign, centroids}));
    centroids = recompute_centroids(points, assign, k);
    if (!changed) break;
  }
  return {std::move(assign), std::move(centroids)};
}

ClusterSet kmeans(const PointSet& points, int k, std::uint64_t seed) {
  check_points(points, k);
  Rng rng(seed);
  return lloyd(points, kmeanspp_seeds(points, k, rng));
}

double bic_score(const PointSet& points, const ClusterSet& cs) {
  check_partition(cs, points.size());
  return bic(points, cs.assignments, cs.centroids);
}

namespace {

// Lowest-inertia result over several k-means++ restarts.
ClusterSet best_kmeans(const PointSet& points, int k, std::uint64_t seed) {
  ClusterSet best;
  double best_inertia = std::numeric_limits<double>::infinity();
  for (int r = 0; r < kKmeansRestarts; ++r) {
    ClusterSet cs = kmeans(points, k, derive_seed(seed, static_cast<std::uint64_t>(r)));
    const double e = inertia(points, cs);
    if (e < best_inertia) {
      best_inertia = e;
      best = std::move(cs);
    }
  }
  return best;
}

}  // namespace

ClusterSet xmeans(const PointSet& points, int k_min, int k_max, std::uint64_t seed) {
  check_points(points, std::max(k_min, 1));
  if (k_min < 1 || k_min > k_max || static_cast<std::size_t>(k_max) > points.size()) {
    throw ContractViolation(fmt::format("need 1 <= k_min ({}) <= k_max ({}) <= |points| ({})",
                                        k_min, k_max, points.size()));
  }
  ClusterSet cs = best_kmeans(points, k_min, derive_seed(seed, 0));
  for (std::uint64_t round = 1;; ++round) {
    const int k = cs.n_clusters();
    if (k >= k_max) break;
    const auto groups = cs.members();
    PointSet next_centroids;
    bool split_any = false;
    int budget = k_max - k;
    for (int j = 0; j < k; ++j) {
      const auto& idx = groups[j];
      bool split = false;
      if (budget > 0 && idx.size() >= 2) {
        PointSet local;
        local.reserve(idx.size());
        for (int i : idx) local.push_back(points[i]);
        const std::vector<int> parent_assign(local.size(), 0);
        const double parent = bic(local, parent_assign, {cs.centroids[j]});
        const ClusterSet children = best_kmeans(
            local, 2, derive_seed(seed, round * 1'000'003ULL + static_cast<std::uint64_t>(j)));
        if (bic(local, children.assignments, children.centroids) > parent) {
          next_centroids.push_back(children.centroids[0]);
          next_centroids.push_back(children.centroids[1]);
          split = true;
          split_any = true;
          --budget;
        }
      }
      if (!split) next_centroids.push_back(cs.centroids[j]);
    }
    if (!split_any) break;
    cs = lloyd(points, std::move(next_centroids));
  }
  // Final global refinement.
  return lloyd(points, cs.centroids);
}

void check_partition(const ClusterSet& cs, std::size_t n_points) {
  if (cs.assignments.size() != n_points) {
    throw ContractViolation(fmt::format("cluster set covers {} points, expected {}",
                                        cs.assignments.size(), n_points));
  }
  const int k = cs.n_clusters();
  if (k == 0) throw ContractViolation("cluster set has no clusters");
  std::vector<int> count(k, 0);
  for (std::size_t i = 0; i < n_points; ++i) {
    const int a = cs.assignments[i];
    if (a < 0 || a >= k) {
      throw ContractViolation(fmt::format("point {} assigned to unknown cluster {}", i, a));
    }
    ++count[a];
  }
  for (int j = 0; j < k; ++j) {
    if (count[j] == 0) throw ContractViolation(fmt::format("cluster {} is empty", j));
  }
}

void write_clusters_csv(const ClusterSet& cs, const std::vector<int>& point_ids,
                        const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  out << "traj_id,cluster_id\n";
  for (std::size_t i = 0; i < cs.assignments.size(); ++i) {
    out << point_ids.at(i) << ',' << cs.assignments[i] << '\n';
  }
}

void write_centroids_csv(const ClusterSet& cs, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  const auto dim = cs.centroids.empty() ? 0 : cs.centroids.front().size();
  out << "cluster_id";
  for (Eigen::Index j = 0; j < dim; ++j) out << ",c" << j;
  out << '\n';
  for (std::size_t c = 0; c < cs.centroids.size(); ++c) {
    out << c;
    for (Eigen::Index j = 0; j < dim; ++j) out << fmt::format(",{}", cs.centroids[c][j]);
    out << '\n';
  }
}

ClusterSet read_clusters(const std::string& assignments_path, const std::string& centroids_path) {
  ClusterSet cs;
  {
    std::ifstream in(assignments_path);
    if (!in) throw Error("cannot open " + assignments_path);
    std::string line;
    std::getline(in, line);
    if (line != "traj_id,cluster_id") throw SchemaError(assignments_path + ": bad header");
    std::map<int, int> rows;
    int lineno = 1;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      int id = 0, cluster = 0;
      char comma = 0;
      std::istringstream ss(line);
      if (!(ss >> id >> comma >> cluster) || comma != ',') {
        throw SchemaError(fmt::format("{} line {}: malformed row", assignments_path, lineno));
      }
      if (!rows.emplace(id, cluster).second) {
        throw SchemaError(fmt::format("{} line {}: duplicate traj_id {}", assignments_path, lineno, id));
      }
    }
    int expect = 0;
    for (const auto& [id, cluster] : rows) {
      if (id != expect++) throw SchemaError(assignments_path + ": traj ids are not dense");
      cs.assignments.push_back(cluster);
    }
  }
  {
    std::ifstream in(centroids_path);
    if (!in) throw Error("cannot open " + centroids_path);
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      std::vector<double> vals;
      std::istringstream ss(line);
      std::string cell;
      std::getline(ss, cell, ',');
      while (std::getline(ss, cell, ',')) vals.push_back(std::stod(cell));
      cs.centroids.push_back(Eigen::Map<Eigen::VectorXd>(vals.data(), static_cast<Eigen::Index>(vals.size())));
    }
  }
  return cs;
}

}  // namespace trajattr

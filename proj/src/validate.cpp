#include "trajattr/validate.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

#include "trajattr/attribution.hpp"
#include "trajattr/clustering.hpp"
#include "trajattr/dataset.hpp"
#include "trajattr/encoder.hpp"
#include "trajattr/offline_rl.hpp"
#include "trajattr/pipeline.hpp"
#include "trajattr/render.hpp"

namespace trajattr {

namespace fs = std::filesystem;

bool ValidationSummary::ok() const {
  for (const auto& c : checks) {
    if (!c.passed) return false;
  }
  return true;
}

std::string ValidationSummary::text() const {
  std::string out;
  int failed = 0;
  for (const auto& c : checks) {
    out += fmt::format("[{}] {}{}\n", c.passed ? "PASS" : "FAIL", c.name,
                       c.detail.empty() ? "" : ": " + c.detail);
    failed += c.passed ? 0 : 1;
  }
  out += fmt::format("{} checks, {} failed\n", checks.size(), failed);
  return out;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

}  // namespace

ValidationSummary validate_run(const fs::path& run_dir) {
  const RunPaths paths{run_dir};
  for (Stage s : kAllStages) {
    for (const auto& p : paths.outputs(s)) {
      if (!fs::exists(p)) throw IncompleteRunError("incomplete run: missing " + p.string());
    }
  }

  ValidationSummary summary;
  // Each check runs independently; an exception inside one is a failure of that check.
  auto check = [&](const std::string& name, const std::function<std::string()>& body) {
    try {
      const std::string problem = body();
      summary.checks.push_back({name, problem.empty(), problem});
    } catch (const std::exception& e) {
      summary.checks.push_back({name, false, e.what()});
    }
  };

  std::optional<GridLayout> layout;
  std::optional<Dataset> data;
  std::optional<ClusterSet> clusters;
  std::vector<TrajectoryEmbedding> embeddings;

  check("layout parses", [&] {
    layout = GridLayout::load(paths.layout().string());
    return std::string();
  });
  check("dataset schema", [&] {
    data = read_dataset(paths.dataset().string());
    if (layout && data->meta.layout_hash != layout->hash()) return std::string("layout hash mismatch");
    return std::string();
  });
  check("dataset replays through the environment", [&] {
    if (!layout || !data) return std::string("prerequisites failed");
    const auto errors = replay_errors(*data, *layout);
    return errors.empty() ? std::string()
                          : fmt::format("{} mismatches, first: {}", errors.size(), errors.front());
  });
  check("encoder checkpoint is finite", [&] {
    const Encoder enc = load_encoder(paths.encoder().string());
    if (!enc.params.flat().allFinite()) return std::string("non-finite parameters");
    if (layout && enc.vocab.n_cells() != layout->num_cells()) return std::string("vocabulary size mismatch");
    return std::string();
  });
  check("trajectory embeddings", [&] {
    embeddings = read_embeddings_csv(paths.embeddings().string());
    if (data && embeddings.size() != data->size()) {
      return fmt::format("{} embeddings for {} trajectories", embeddings.size(), data->size());
    }
    for (std::size_t i = 0; i < embeddings.size(); ++i) {
      if (embeddings[i].traj_id != static_cast<int>(i)) return fmt::format("row {} out of order", i);
      if (!embeddings[i].vector.allFinite()) return fmt::format("embedding {} not finite", i);
      if (embeddings[i].vector.size() != embeddings.front().vector.size()) {
        return fmt::format("embedding {} has a different dimension", i);
      }
    }
    return std::string();
  });
  check("cluster partition", [&] {
    clusters = read_clusters(paths.clusters().string(), paths.centroids().string());
    check_partition(*clusters, data ? data->size() : clusters->assignments.size());
    return std::string();
  });
  check("data embeddings lie on the simplex", [&] {
    const auto rows = read_data_embeddings_csv(paths.data_embeddings().string());
    std::size_t originals = 0;
    for (const auto& e : rows) {
      if (!e.complement_of) ++originals;
      if ((e.probs.array() < 0.0).any() || !e.probs.allFinite()) {
        return fmt::format("{} has a negative or non-finite entry", e.label());
      }
      if (std::abs(e.probs.sum() - 1.0) > 1e-9) {
        return fmt::format("{} sums to {:.12f}", e.label(), e.probs.sum());
      }
    }
    if (originals != 1) return fmt::format("{} original rows", originals);
    if (clusters && rows.size() != static_cast<std::size_t>(clusters->n_clusters()) + 1) {
      return fmt::format("{} rows for {} clusters", rows.size(), clusters->n_clusters());
    }
    return std::string();
  });

  std::optional<ExplanationSuite> suite;
  check("policies are greedy and share one training config", [&] {
    suite = load_suite(paths, SimplexDistance::Wasserstein);
    std::vector<const TabularPolicy*> all{&suite->original};
    for (const auto& e : suite->entries) all.push_back(&e.policy);
    for (const TabularPolicy* p : all) {
      if (p->config_fingerprint != suite->original.config_fingerprint) {
        return std::string("config fingerprint mismatch");
      }
      for (int s = 0; s < p->n_states(); ++s) {
        if (p->terminal[s]) continue;
        const int a = p->action[s];
        if (a < 0 || a >= p->q.cols()) return fmt::format("state {} has no action", s);
        if (p->q(s, a) != p->q.row(s).maxCoeff()) return fmt::format("state {} action not greedy", s);
        if (std::abs(p->v[s] - p->q(s, a)) > 1e-9) return fmt::format("state {} V != Q(s, pi(s))", s);
      }
    }
    if (clusters && suite->n_clusters() != clusters->n_clusters()) {
      return std::string("policy count does not match cluster count");
    }
    return std::string();
  });
  check("attributions respect argmax/argmin rules", [&] {
    std::ifstream in(paths.attributions());
    const auto doc = nlohmann::json::parse(in);
    const auto members = clusters ? clusters->members() : std::vector<std::vector<int>>{};
    for (const auto& s : doc.at("states")) {
      const auto d = s.at("distances").get<std::vector<double>>();
      const auto k = s.at("K").get<std::vector<int>>();
      const double max = d.empty() ? 0.0 : *std::max_element(d.begin(), d.end());
      std::vector<int> argmax;
      for (std::size_t j = 0; j < d.size(); ++j) {
        if (d[j] == max) argmax.push_back(static_cast<int>(j));
      }
      if (argmax != k) return fmt::format("state {}: K is not the argmax set", s.at("state").dump());
      if (s.at("c_final").is_null()) {
        if (max > 0.0) return fmt::format("state {}: missing attribution", s.at("state").dump());
        continue;
      }
      const int c = s.at("c_final").get<int>();
      if (std::find(k.begin(), k.end(), c) == k.end()) {
        return fmt::format("state {}: c_final not in K", s.at("state").dump());
      }
      if (!members.empty()) {
        std::set<int> in_cluster(members.at(c).begin(), members.at(c).end());
        for (const auto& e : s.at("exemplars")) {
          if (!in_cluster.count(e.at("traj_id").get<int>())) {
            return fmt::format("state {}: exemplar outside cluster {}", s.at("state").dump(), c);
          }
        }
      }
    }
    const auto freq = doc.at("summary").at("frequencies").get<std::vector<double>>();
    double total = 0.0;
    for (double f : freq) {
      if (f < 0.0 || f > 1.0) return std::string("frequency outside [0, 1]");
      total += f;
    }
    if (total > 1.0 + 1e-9) return fmt::format("frequencies sum to {}", total);
    return std::string();
  });
  check("metrics table shape", [&] {
    std::ifstream in(paths.metrics());
    std::string line;
    std::getline(in, line);
    if (split_csv_line(line).size() != 6) return std::string("header does not have 6 columns");
    std::vector<std::vector<std::string>> rows;
    while (std::getline(in, line)) {
      if (!line.empty()) rows.push_back(split_csv_line(line));
    }
    if (clusters && rows.size() != static_cast<std::size_t>(clusters->n_clusters()) + 1) {
      return fmt::format("{} rows for {} clusters", rows.size(), clusters->n_clusters());
    }
    if (rows.empty() || rows.front().at(0) != "orig") return std::string("first row is not orig");
    int ones = 0;
    bool any_positive = false;
    for (std::size_t r = 1; r < rows.size(); ++r) {
      const double w = std::stod(rows[r].at(4));
      if (w < 0.0 || w > 1.0) return fmt::format("W_dist {} outside [0, 1]", w);
      ones += w == 1.0 ? 1 : 0;
      any_positive = any_positive || w > 0.0;
    }
    if (any_positive && ones != 1) return fmt::format("{} clusters have W_dist = 1", ones);
    return std::string();
  });
  return summary;
}

}  // namespace trajattr

#include "trajattr/attribution.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>
#include <numeric>
#include <set>

#include <fmt/format.h>

#include "trajattr/error.hpp"

namespace trajattr {

std::vector<std::pair<int, Dataset>> complementary_datasets(const Dataset& data,
                                                            const ClusterSet& cs) {
  check_partition(cs, data.size());
  std::vector<std::pair<int, Dataset>> out;
  for (int j = 0; j < cs.n_clusters(); ++j) {
    Dataset comp;
    comp.meta = data.meta;
    comp.meta.source = fmt::format("complement:{}", j);
    comp.meta.original_ids.clear();
    comp.meta.behaviors.clear();
    for (std::size_t i = 0; i < data.size(); ++i) {
      if (cs.assignments[i] == j) continue;
      Trajectory t = data.trajectories[i];
      t.id = static_cast<int>(comp.trajectories.size());
      comp.trajectories.push_back(std::move(t));
      comp.meta.original_ids.push_back(
          i < data.meta.original_ids.size() ? data.meta.original_ids[i] : data.trajectories[i].id);
      comp.meta.behaviors.push_back(i < data.meta.behaviors.size() ? data.meta.behaviors[i] : -1);
    }
    if (comp.trajectories.empty()) {
      throw ContractViolation(fmt::format("cluster {} covers the whole dataset; its complement is empty", j));
    }
    out.emplace_back(j, std::move(comp));
  }
  return out;
}

ExplanationSuite train_explanation_suite(const Dataset& data, const GridLayout& layout,
                                         const ClusterSet& cs,
                                         const std::vector<TrajectoryEmbedding>& embeddings,
                                         const SuiteOptions& options) {
  if (embeddings.size() != data.size()) {
    throw ContractViolation(fmt::format("{} embeddings for {} trajectories", embeddings.size(),
                                        data.size()));
  }
  if (data.meta.layout_hash != layout.hash()) {
    throw ContractViolation("dataset was generated on a different layout");
  }
  options.rl.validate();
  const double normalizer =
      options.normalizer > 0.0 ? options.normalizer : static_cast<double>(data.size());

  ExplanationSuite suite;
  suite.distance = options.distance;
  suite.config_fingerprint = options.rl.fingerprint();
  const auto complements = complementary_datasets(data, cs);

  auto train_one = [&](const Dataset& d) { return train_policy(d, layout, options.rl); };
  const auto policy_mode = options.parallel ? std::launch::async : std::launch::deferred;
  std::vector<std::future<TabularPolicy>> jobs;
  jobs.reserve(complements.size());
  for (const auto& [j, comp] : complements) {
    jobs.push_back(std::async(policy_mode, train_one, std::cref(comp)));
  }
  suite.original = train_one(data);
  suite.original_embedding = data_embedding(embeddings, normalizer, options.temperature);

  for (std::size_t k = 0; k < complements.size(); ++k) {
    const auto& [j, comp] = complements[k];
    ExplanationEntry e;
    e.cluster_id = j;
    e.complement_size = comp.size();
    e.policy = jobs[k].get();
    std::vector<Eigen::VectorXd> kept;
    kept.reserve(comp.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
      if (cs.assignments[i] != j) kept.push_back(embeddings[i].vector);
    }
    e.complement_embedding = data_embedding(kept, normalizer, options.temperature);
    e.complement_embedding.complement_of = j;
    suite.entries.push_back(std::move(e));
  }

  check_suite(suite);
  return suite;
}

void check_suite(const ExplanationSuite& suite) {
  for (const auto& e : suite.entries) {
    if (e.policy.config_fingerprint != suite.original.config_fingerprint) {
      throw ContractViolation(fmt::format(
          "explanation policy for cluster {} was trained with config {} but the original used {}",
          e.cluster_id, e.policy.config_fingerprint, suite.original.config_fingerprint));
    }
    if (e.policy.n_states() != suite.original.n_states()) {
      throw ContractViolation(fmt::format("explanation policy for cluster {} has a different state space",
                                          e.cluster_id));
    }
  }
}

double action_distance(const PolicyAction& a, const PolicyAction& b, ActionSpace space) {
  const bool discrete = space == ActionSpace::Discrete;
  const auto expected = discrete ? std::size_t{0} : std::size_t{1};
  if (a.index() != expected || b.index() != expected) {
    throw ContractViolation("action does not belong to the declared action space");
  }
  if (discrete) return std::get<int>(a) == std::get<int>(b) ? 0.0 : 1.0;
  const auto& x = std::get<std::vector<double>>(a);
  const auto& y = std::get<std::vector<double>>(b);
  if (x.size() != y.size()) throw ContractViolation("continuous actions differ in dimension");
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) total += (x[i] - y[i]) * (x[i] - y[i]);
  return total;
}

AttributionResult attribute(int state, const ExplanationSuite& suite) {
  const TabularPolicy& orig = suite.original;
  if (state < 0 || state >= orig.n_states()) {
    throw ContractViolation(fmt::format("state {} is outside the policy's state space", state));
  }
  if (orig.terminal[state]) {
    throw ContractViolation(fmt::format("state {} is terminal; there is no decision to attribute", state));
  }
  AttributionResult r;
  r.state = state;
  r.a_orig = orig.action[state];
  double max_distance = 0.0;
  for (const auto& e : suite.entries) {
    const double d = action_distance(r.a_orig, e.policy.action[state], ActionSpace::Discrete);
    r.action_distances.push_back(d);
    max_distance = std::max(max_distance, d);
  }
  for (std::size_t k = 0; k < suite.entries.size(); ++k) {
    if (r.action_distances[k] == max_distance) r.candidates.push_back(suite.entries[k].cluster_id);
  }
  if (max_distance <= 0.0) return r;

  double best = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < suite.entries.size(); ++k) {
    const auto& e = suite.entries[k];
    if (r.action_distances[k] != max_distance) continue;
    const double w = simplex_distance(suite.original_embedding.probs, e.complement_embedding.probs,
                                      suite.distance);
    r.data_distances.emplace_back(e.cluster_id, w);
    if (w < best) {  // strict: ties keep the lowest cluster id
      best = w;
      r.c_final = e.cluster_id;
    }
  }
  return r;
}

std::vector<RankedTrajectory> select_top_trajectories(const std::vector<int>& cluster_traj_ids,
                                                      const Dataset& data,
                                                      const GridLayout& layout, int state,
                                                      int action, int n) {
  if (n < 1) throw ContractViolation("N must be at least 1");
  const Cell target = layout.cell_of(state);
  std::vector<RankedTrajectory> ranked;
  for (int id : cluster_traj_ids) {
    const Trajectory& t = data.trajectories.at(static_cast<std::size_t>(id));
    RankedTrajectory r{t.id, 2, std::numeric_limits<int>::max()};
    for (const Step& s : t.steps) {
      const Cell c = layout.cell_of(s.obs);
      r.manhattan = std::min(r.manhattan, std::abs(c.row - target.row) + std::abs(c.col - target.col));
      if (s.obs == state) r.tier = std::min(r.tier, s.action == action ? 0 : 1);
    }
    ranked.push_back(r);
  }
  std::sort(ranked.begin(), ranked.end(), [](const RankedTrajectory& a, const RankedTrajectory& b) {
    return std::tie(a.tier, a.manhattan, a.traj_id) < std::tie(b.tier, b.manhattan, b.traj_id);
  });
  if (ranked.size() > static_cast<std::size_t>(n)) ranked.resize(n);
  return ranked;
}

MetricsReport metrics_report(const ExplanationSuite& suite, const std::vector<int>& eval_states,
                             const Eigen::VectorXd& start_dist) {
  if (eval_states.empty()) throw ContractViolation("metrics need at least one evaluation state");
  const int nc = suite.n_clusters();
  const TabularPolicy& orig = suite.original;
  MetricsReport rep;
  rep.n_eval = eval_states.size();

  std::vector<double> dq(nc, 0.0), contrast(nc, 0.0), hits(nc, 0.0);
  std::size_t none = 0;
  for (int s : eval_states) {
    const AttributionResult a = attribute(s, suite);
    if (a.c_final) {
      ++rep.n_attributed;
      ++hits[*a.c_final];
    } else {
      ++none;
    }
    for (int j = 0; j < nc; ++j) {
      const int aj = suite.entries[j].policy.action[s];
      const double gap = std::abs(orig.q(s, a.a_orig) - orig.q(s, aj));
      const double c = action_distance(a.a_orig, aj, ActionSpace::Discrete);
      if (c == 0.0 && gap != 0.0) ++rep.coupling_violations;
      dq[j] += gap;
      contrast[j] += c;
    }
  }
  const double n = static_cast<double>(eval_states.size());
  rep.none_fraction = static_cast<double>(none) / n;

  std::vector<std::pair<int, double>> w;
  for (const auto& e : suite.entries) {
    w.emplace_back(e.cluster_id, simplex_distance(suite.original_embedding.probs,
                                                  e.complement_embedding.probs, suite.distance));
  }
  const NormalizedDistances wn = normalize_distances(w);
  rep.wdist_all_zero = wn.all_zero;

  rep.rows.push_back({"orig", initial_state_value(orig, start_dist), {}, {}, {}, {}});
  for (int j = 0; j < nc; ++j) {
    const auto& e = suite.entries[j];
    const double freq = rep.n_attributed ? hits[j] / static_cast<double>(rep.n_attributed) : 0.0;
    rep.rows.push_back({std::to_string(e.cluster_id), initial_state_value(e.policy, start_dist),
                        dq[j] / n, contrast[j] / n, wn.values[j].second, freq});
  }
  return rep;
}

namespace {

std::string cell(const std::optional<double>& v) { return v ? fmt::format("{:.6f}", *v) : "-"; }

}  // namespace

std::string metrics_csv(const MetricsReport& report) {
  std::string out = "policy,E[V(s0)],E|dQ_orig|,E[1(a_orig!=a_j)],W_dist,P(c_final=c_j)\n";
  for (const auto& r : report.rows) {
    out += fmt::format("{},{:.6f},{},{},{},{}\n", r.policy, r.initial_value, cell(r.mean_abs_dq),
                       cell(r.action_contrast), cell(r.wdist), cell(r.frequency));
  }
  return out;
}

std::string metrics_text(const MetricsReport& report) {
  std::string out = fmt::format("{:>6} | {:>10} {:>10} {:>10} {:>10} {:>10}\n", "pi", "E[V(s0)]",
                                "E|dQ|", "contrast", "W_dist", "P(c_j)");
  out += std::string(66, '-') + "\n";
  for (const auto& r : report.rows) {
    out += fmt::format("{:>6} | {:>10.4f} {:>10} {:>10} {:>10} {:>10}\n", r.policy, r.initial_value,
                       r.mean_abs_dq ? fmt::format("{:.4f}", *r.mean_abs_dq) : "-",
                       r.action_contrast ? fmt::format("{:.4f}", *r.action_contrast) : "-",
                       r.wdist ? fmt::format("{:.4f}", *r.wdist) : "-",
                       r.frequency ? fmt::format("{:.4f}", *r.frequency) : "-");
  }
  out += fmt::format("evaluated {} states, {} attributed, no-attribution share {:.4f}\n",
                     report.n_eval, report.n_attributed, report.none_fraction);
  return out;
}

double pearson_correlation(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx <= 0.0 || syy <= 0.0) return std::numeric_limits<double>::quiet_NaN();
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace trajattr

#include "trajattr/offline_rl.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

#include "trajattr/error.hpp"
#include "trajattr/hash.hpp"

namespace trajattr {

void RlConfig::validate() const {
  if (!(gamma > 0.0 && gamma < 1.0)) throw ContractViolation("gamma must lie in (0, 1)");
  if (!(tol > 0.0)) throw ContractViolation("tol must be positive");
  if (!std::isfinite(r_pess)) throw ContractViolation("r_pess must be finite");
}

std::string RlConfig::fingerprint() const {
  return Fingerprint().add("tabular-vi").add(gamma).add(tol).add(r_pess).hex();
}

long TabularMDP::total_support() const {
  long total = 0;
  for (int c : support) total += c;
  return total;
}

TabularMDP fit_model(const Dataset& data, const GridLayout& layout, double r_pess) {
  TabularMDP m;
  const int n_cells = layout.num_cells();
  m.n_states = n_cells + 1;
  m.sink = n_cells;
  m.r_pess = r_pess;
  m.terminal.assign(m.n_states, false);
  for (int i = 0; i < n_cells; ++i) m.terminal[i] = layout.is_terminal_cell(i);

  const std::size_t rows = static_cast<std::size_t>(m.n_states) * m.n_actions;
  std::vector<std::map<int, int>> counts(rows);
  std::vector<double> reward_sum(rows, 0.0);
  m.support.assign(rows, 0);
  for (const Trajectory& t : data.trajectories) {
    for (const Transition& tr : transitions(t, layout)) {
      if (tr.next_state < 0 || tr.next_state >= n_cells) {
        throw ContractViolation(fmt::format("trajectory {}: next state {} outside the layout", t.id,
                                            tr.next_state));
      }
      if (m.terminal[tr.state]) {
        throw ContractViolation(fmt::format("trajectory {}: action taken in terminal state {}",
                                            t.id, tr.state));
      }
      const int r = m.row(tr.state, tr.action);
      ++counts[r][tr.next_state];
      reward_sum[r] += tr.reward;
      ++m.support[r];
    }
  }

  m.transition.resize(rows);
  m.reward.assign(rows, 0.0);
  for (int s = 0; s < m.n_states; ++s) {
    if (m.terminal[s]) continue;
    for (int a = 0; a < m.n_actions; ++a) {
      const int r = m.row(s, a);
      if (m.support[r] == 0) {
        m.transition[r] = {{m.sink, 1.0}};
        m.reward[r] = r_pess;
        continue;
      }
      const double n = m.support[r];
      for (const auto& [next, c] : counts[r]) m.transition[r].push_back({next, c / n});
      m.reward[r] = reward_sum[r] / n;
    }
  }
  return m;
}

bool operator==(const TabularPolicy& a, const TabularPolicy& b) {
  return a.gamma == b.gamma && a.action == b.action && a.terminal == b.terminal &&
         a.config_fingerprint == b.config_fingerprint && a.q.rows() == b.q.rows() &&
         a.q.cols() == b.q.cols() && (a.q.array() == b.q.array()).all() &&
         a.v.size() == b.v.size() && (a.v.array() == b.v.array()).all();
}

TabularPolicy value_iteration(const TabularMDP& mdp, double gamma, double tol) {
  if (!(gamma > 0.0 && gamma < 1.0)) throw ContractViolation("gamma must lie in (0, 1)");
  if (!(tol > 0.0)) throw ContractViolation("tol must be positive");
  const int n = mdp.n_states;
  const int na = mdp.n_actions;
  Eigen::VectorXd v = Eigen::VectorXd::Zero(n);
  Eigen::MatrixXd q = Eigen::MatrixXd::Zero(n, na);
  double residual = 0.0;
  bool converged = false;
  for (int sweep = 0; sweep < kMaxValueIterationSweeps; ++sweep) {
    for (int s = 0; s < n; ++s) {
      if (mdp.terminal[s]) continue;
      for (int a = 0; a < na; ++a) {
        const int r = mdp.row(s, a);
        double expected = 0.0;
        for (const auto& o : mdp.transition[r]) expected += o.prob * v[o.next_state];
        q(s, a) = mdp.reward[r] + gamma * expected;
      }
    }
    residual = 0.0;
    for (int s = 0; s < n; ++s) {
      if (mdp.terminal[s]) continue;
      const double best = q.row(s).maxCoeff();
      residual = std::max(residual, std::abs(best - v[s]));
      v[s] = best;
    }
    if (residual < tol) {
      converged = true;
      break;
    }
  }
  if (!converged) {
    throw ConvergenceError(fmt::format("value iteration did not converge within {} sweeps "
                                       "(residual {})",
                                       kMaxValueIterationSweeps, residual),
                           residual);
  }

  TabularPolicy pol;
  pol.gamma = gamma;
  pol.q = std::move(q);
  pol.v = std::move(v);
  pol.terminal = mdp.terminal;
  pol.action.assign(n, -1);
  for (int s = 0; s < n; ++s) {
    if (mdp.terminal[s]) continue;
    int best = 0;
    for (int a = 1; a < na; ++a) {
      if (pol.q(s, a) > pol.q(s, best)) best = a;
    }
    pol.action[s] = best;
  }
  return pol;
}

TabularPolicy train_policy(const Dataset& data, const GridLayout& layout, const RlConfig& cfg) {
  cfg.validate();
  TabularPolicy pol = value_iteration(fit_model(data, layout, cfg.r_pess), cfg.gamma, cfg.tol);
  pol.config_fingerprint = cfg.fingerprint();
  return pol;
}

Eigen::VectorXd start_distribution(const GridLayout& layout) {
  Eigen::VectorXd dist = Eigen::VectorXd::Zero(layout.num_cells() + 1);
  const auto& starts = layout.start_states();
  for (const Cell& c : starts) dist[layout.index(c.row, c.col)] += 1.0 / starts.size();
  return dist;
}

double initial_state_value(const TabularPolicy& pol, const Eigen::VectorXd& start_dist) {
  if (start_dist.size() != pol.v.size()) {
    throw ContractViolation("start distribution size does not match the number of states");
  }
  if ((start_dist.array() < 0.0).any() || std::abs(start_dist.sum() - 1.0) > 1e-9) {
    throw ContractViolation("start distribution must be non-negative and sum to 1");
  }
  return start_dist.dot(pol.v);
}

std::string policy_to_json(const TabularPolicy& pol) {
  nlohmann::json j;
  j["gamma"] = pol.gamma;
  j["config_fingerprint"] = pol.config_fingerprint;
  j["n_states"] = pol.n_states();
  j["action"] = pol.action;
  j["terminal"] = pol.terminal;
  j["V"] = std::vector<double>(pol.v.begin(), pol.v.end());
  nlohmann::json q = nlohmann::json::array();
  for (Eigen::Index s = 0; s < pol.q.rows(); ++s) {
    std::vector<double> row(pol.q.cols());
    for (Eigen::Index a = 0; a < pol.q.cols(); ++a) row[a] = pol.q(s, a);
    q.push_back(row);
  }
  j["Q"] = std::move(q);
  return j.dump(1) + "\n";
}

TabularPolicy policy_from_json(const std::string& text) {
  TabularPolicy pol;
  try {
    const auto j = nlohmann::json::parse(text);
    pol.gamma = j.at("gamma").get<double>();
    pol.config_fingerprint = j.at("config_fingerprint").get<std::string>();
    const int n = j.at("n_states").get<int>();
    pol.action = j.at("action").get<std::vector<int>>();
    pol.terminal = j.at("terminal").get<std::vector<bool>>();
    const auto v = j.at("V").get<std::vector<double>>();
    const auto q = j.at("Q").get<std::vector<std::vector<double>>>();
    if (static_cast<int>(pol.action.size()) != n || static_cast<int>(pol.terminal.size()) != n ||
        static_cast<int>(v.size()) != n || static_cast<int>(q.size()) != n) {
      throw SchemaError("policy table sizes disagree with n_states");
    }
    pol.v = Eigen::Map<const Eigen::VectorXd>(v.data(), n);
    pol.q.resize(n, kNumActions);
    for (int s = 0; s < n; ++s) {
      if (q[s].size() != static_cast<std::size_t>(kNumActions)) {
        throw SchemaError(fmt::format("policy Q row {} has {} entries", s, q[s].size()));
      }
      for (int a = 0; a < kNumActions; ++a) pol.q(s, a) = q[s][a];
    }
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("malformed policy file: ") + e.what());
  }
  return pol;
}

void write_policy(const TabularPolicy& pol, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  out << policy_to_json(pol);
}

TabularPolicy read_policy(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return policy_from_json(buf.str());
}

}  // namespace trajattr

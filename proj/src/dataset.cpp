#include "trajattr/dataset.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

#include "trajattr/error.hpp"
#include "trajattr/random.hpp"

namespace trajattr {

using nlohmann::json;

namespace {

constexpr std::string_view kFormatTag = "trajattr-dataset";
constexpr int kFormatVersion = 1;

Action uniform_action(Rng& rng) { return static_cast<Action>(rng.below(kNumActions)); }

Action shortest_path_action(const GridLayout& layout, const std::vector<int>& dist,
                            const GridState& s) {
  Action best = Action::Up;
  int best_dist = -1;
  for (Action a : kAllActions) {
    const StepResult r = step(layout, s, a);
    const int d = dist[layout.index(r.state)];
    if (d < 0) continue;  // lava or unreachable
    if (best_dist < 0 || d < best_dist) {
      best = a;
      best_dist = d;
    }
  }
  return best;
}

// Heads for a fixed goal along the larger coordinate gap, ignoring obstacles.
Action goal_seeking_action(const GridState& s, const Cell& goal) {
  const int dr = goal.row - s.row;
  const int dc = goal.col - s.col;
  if (std::abs(dr) >= std::abs(dc) && dr != 0) return dr < 0 ? Action::Up : Action::Down;
  if (dc != 0) return dc < 0 ? Action::Left : Action::Right;
  return Action::Up;
}

std::string_view kind_name(BehaviorKind k) {
  switch (k) {
    case BehaviorKind::UniformRandom: return "uniform";
    case BehaviorKind::EpsilonGreedy: return "egreedy";
    case BehaviorKind::NoisyGoalSeeking: return "noisy";
  }
  return "?";
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

double parse_double(std::string_view s, std::string_view what) {
  const std::string str(trim(s));
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(str, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != str.size()) {
    throw ConfigError(fmt::format("invalid {} '{}' in behavior mix", what, str));
  }
  return v;
}

std::string format_number(double v) { return fmt::format("{}", v); }

}  // namespace

BehaviorMix BehaviorMix::default_mix() {
  return {{{BehaviorKind::UniformRandom, 0.4, 0.0},
           {BehaviorKind::EpsilonGreedy, 0.4, 0.2},
           {BehaviorKind::NoisyGoalSeeking, 0.2, 0.3}}};
}

BehaviorMix BehaviorMix::parse(std::string_view text) {
  BehaviorMix mix;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find(',', pos);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view item = trim(text.substr(pos, end - pos));
    pos = end + 1;
    if (item.empty()) {
      if (end == text.size()) break;
      throw ConfigError("empty entry in behavior mix");
    }
    const std::size_t colon = item.rfind(':');
    if (colon == std::string_view::npos) {
      throw ConfigError(fmt::format("behavior mix entry '{}' lacks ':weight'", item));
    }
    std::string_view name = trim(item.substr(0, colon));
    BehaviorComponent c;
    c.weight = parse_double(item.substr(colon + 1), "weight");
    if (const std::size_t open = name.find('('); open != std::string_view::npos) {
      if (name.back() != ')') throw ConfigError(fmt::format("unbalanced '(' in '{}'", name));
      c.param = parse_double(name.substr(open + 1, name.size() - open - 2), "parameter");
      name = trim(name.substr(0, open));
    }
    if (name == "uniform") {
      c.kind = BehaviorKind::UniformRandom;
    } else if (name == "egreedy") {
      c.kind = BehaviorKind::EpsilonGreedy;
    } else if (name == "noisy") {
      c.kind = BehaviorKind::NoisyGoalSeeking;
    } else {
      throw ConfigError(fmt::format("unknown behavior policy '{}'", name));
    }
    mix.components.push_back(c);
    if (end == text.size()) break;
  }
  return mix;
}

std::string BehaviorMix::to_string() const {
  std::string out;
  for (const auto& c : components) {
    if (!out.empty()) out += ',';
    out += kind_name(c.kind);
    if (c.kind != BehaviorKind::UniformRandom) out += "(" + format_number(c.param) + ")";
    out += ":" + format_number(c.weight);
  }
  return out;
}

void BehaviorMix::validate() const {
  if (components.empty()) throw ContractViolation("behavior mix is empty");
  double total = 0.0;
  for (const auto& c : components) {
    if (!(c.weight >= 0.0) || !std::isfinite(c.weight)) {
      throw ContractViolation("behavior weights must be finite and non-negative");
    }
    if (!(c.param >= 0.0 && c.param <= 1.0)) {
      throw ContractViolation("behavior parameters must lie in [0, 1]");
    }
    total += c.weight;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw ContractViolation(fmt::format("behavior weights sum to {}, expected 1", total));
  }
}

Dataset generate_offline_dataset(const GridLayout& layout, const BehaviorMix& mix, int n_traj,
                                 int max_len, std::uint64_t seed) {
  mix.validate();
  if (n_traj <= 0) throw ContractViolation("n_traj must be at least 1");
  if (max_len <= 0) throw ContractViolation("max_len must be at least 1");

  std::vector<Cell> goals;
  for (int i = 0; i < layout.num_cells(); ++i) {
    if (layout.at(i) == CellKind::Goal) goals.push_back(layout.cell_of(i));
  }
  const std::vector<int> dist = goal_distances(layout);
  const std::vector<GridState> starts = layout.initial_states();

  Dataset d;
  d.meta.seed = seed;
  d.meta.mix = mix.to_string();
  d.meta.layout_hash = layout.hash();
  d.meta.width = layout.width();
  d.meta.height = layout.height();
  d.meta.max_len = max_len;

  Rng rng(seed);
  for (int id = 0; id < n_traj; ++id) {
    // Pick the behavior by inverse CDF over the weights.
    const double u = rng.uniform();
    std::size_t which = mix.components.size() - 1;
    double acc = 0.0;
    for (std::size_t k = 0; k < mix.components.size(); ++k) {
      acc += mix.components[k].weight;
      if (u < acc) {
        which = k;
        break;
      }
    }
    const BehaviorComponent& behavior = mix.components[which];
    const Cell target = goals[rng.below(goals.size())];

    Trajectory traj{id, {}};
    GridState s = starts[rng.below(starts.size())];
    for (int t = 0; t < max_len; ++t) {
      Action a = Action::Up;
      switch (behavior.kind) {
        case BehaviorKind::UniformRandom:
          a = uniform_action(rng);
          break;
        case BehaviorKind::EpsilonGreedy:
          a = rng.uniform() < behavior.param ? uniform_action(rng)
                                             : shortest_path_action(layout, dist, s);
          break;
        case BehaviorKind::NoisyGoalSeeking:
          a = rng.uniform() < behavior.param ? uniform_action(rng)
                                             : goal_seeking_action(s, target);
          break;
      }
      const StepResult r = step(layout, s, a);
      traj.steps.push_back({layout.index(s), static_cast<int>(a), r.reward});
      s = r.state;
      if (r.done) break;
    }
    d.trajectories.push_back(std::move(traj));
    d.meta.original_ids.push_back(id);
    d.meta.behaviors.push_back(static_cast<int>(which));
  }
  return d;
}

std::string dataset_to_jsonl(const Dataset& d) {
  json header = {{"format", kFormatTag},
                 {"version", kFormatVersion},
                 {"n_traj", d.size()},
                 {"seed", d.meta.seed},
                 {"mix", d.meta.mix},
                 {"layout_hash", d.meta.layout_hash},
                 {"width", d.meta.width},
                 {"height", d.meta.height},
                 {"max_len", d.meta.max_len},
                 {"source", d.meta.source},
                 {"original_ids", d.meta.original_ids},
                 {"behaviors", d.meta.behaviors}};
  std::string out = header.dump() + "\n";
  for (const Trajectory& t : d.trajectories) {
    json rec;
    rec["id"] = t.id;
    json obs = json::array(), act = json::array(), rew = json::array();
    for (const Step& s : t.steps) {
      obs.push_back(s.obs);
      act.push_back(s.action);
      rew.push_back(s.reward);
    }
    rec["obs"] = std::move(obs);
    rec["act"] = std::move(act);
    rec["rew"] = std::move(rew);
    out += rec.dump() + "\n";
  }
  return out;
}

void write_dataset(const Dataset& d, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write dataset to " + path);
  out << dataset_to_jsonl(d);
  if (!out) throw Error("failed writing dataset to " + path);
}

Dataset dataset_from_jsonl(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    lines.push_back(text.substr(pos, end - pos));
    pos = end + 1;
  }
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  if (lines.empty()) throw SchemaError("dataset file is empty (n_traj must be at least 1)");

  auto fail = [](std::size_t line, const std::string& msg) -> SchemaError {
    return SchemaError(fmt::format("dataset line {}: {}", line + 1, msg));
  };

  Dataset d;
  std::size_t n_traj = 0;
  try {
    const json h = json::parse(lines[0]);
    if (h.value("format", "") != kFormatTag) throw fail(0, "missing dataset header");
    if (h.at("version").get<int>() != kFormatVersion) throw fail(0, "unsupported version");
    n_traj = h.at("n_traj").get<std::size_t>();
    d.meta.seed = h.at("seed").get<std::uint64_t>();
    d.meta.mix = h.at("mix").get<std::string>();
    d.meta.layout_hash = h.at("layout_hash").get<std::string>();
    d.meta.width = h.at("width").get<int>();
    d.meta.height = h.at("height").get<int>();
    d.meta.max_len = h.at("max_len").get<int>();
    d.meta.source = h.at("source").get<std::string>();
    d.meta.original_ids = h.at("original_ids").get<std::vector<int>>();
    d.meta.behaviors = h.at("behaviors").get<std::vector<int>>();
  } catch (const json::exception& e) {
    throw fail(0, std::string("malformed header: ") + e.what());
  }
  if (n_traj == 0) throw fail(0, "n_traj must be at least 1");

  const int n_cells = d.meta.width * d.meta.height;
  std::set<int> ids;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    Trajectory t;
    try {
      const json rec = json::parse(lines[i]);
      t.id = rec.at("id").get<int>();
      const json& obs = rec.at("obs");
      const json& act = rec.at("act");
      const json& rew = rec.at("rew");
      if (!obs.is_array() || !act.is_array() || !rew.is_array()) {
        throw fail(i, "obs, act and rew must be arrays");
      }
      if (obs.size() != act.size() || obs.size() != rew.size()) {
        throw fail(i, "obs, act and rew lengths differ");
      }
      if (obs.empty()) throw fail(i, "trajectory has no steps");
      if (d.meta.max_len > 0 && obs.size() > static_cast<std::size_t>(d.meta.max_len)) {
        throw fail(i, "trajectory longer than max_len");
      }
      for (std::size_t k = 0; k < obs.size(); ++k) {
        if (!rew[k].is_number() || !std::isfinite(rew[k].get<double>())) {
          throw fail(i, fmt::format("non-finite reward at step {}", k));
        }
        Step s{obs[k].get<int>(), act[k].get<int>(), rew[k].get<double>()};
        if (s.obs < 0 || s.obs >= n_cells) throw fail(i, "observation outside the layout");
        if (s.action < 0 || s.action >= kNumActions) throw fail(i, "unknown action id");
        t.steps.push_back(s);
      }
    } catch (const json::exception& e) {
      throw fail(i, std::string("malformed record: ") + e.what());
    }
    if (!ids.insert(t.id).second) throw fail(i, fmt::format("id collision on id {}", t.id));
    d.trajectories.push_back(std::move(t));
  }
  if (d.size() != n_traj) {
    throw SchemaError(fmt::format("header declares {} trajectories, found {}", n_traj, d.size()));
  }
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (d.trajectories[i].id != static_cast<int>(i)) {
      throw fail(i + 1, "ids must be dense and ordered 0..n_traj-1");
    }
  }
  if (d.meta.original_ids.size() != n_traj || d.meta.behaviors.size() != n_traj) {
    throw fail(0, "original_ids/behaviors length does not match n_traj");
  }
  return d;
}

Dataset read_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open dataset " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return dataset_from_jsonl(buf.str());
}

std::vector<Transition> transitions(const Trajectory& traj, const GridLayout& layout) {
  std::vector<Transition> out;
  out.reserve(traj.steps.size());
  for (std::size_t k = 0; k < traj.steps.size(); ++k) {
    const Step& s = traj.steps[k];
    if (s.obs < 0 || s.obs >= layout.num_cells()) {
      throw ContractViolation(fmt::format("trajectory {} observation {} outside the layout",
                                          traj.id, s.obs));
    }
    int next = 0;
    if (k + 1 < traj.steps.size()) {
      next = traj.steps[k + 1].obs;
    } else {
      next = layout.index(step(layout, layout.state_at(s.obs), static_cast<Action>(s.action)).state);
    }
    out.push_back({s.obs, s.action, s.reward, next});
  }
  return out;
}

std::vector<std::string> replay_errors(const Dataset& d, const GridLayout& layout) {
  std::vector<std::string> errors;
  for (const Trajectory& t : d.trajectories) {
    if (t.steps.empty()) {
      errors.push_back(fmt::format("trajectory {}: empty", t.id));
      continue;
    }
    for (std::size_t k = 0; k < t.steps.size(); ++k) {
      const Step& s = t.steps[k];
      if (s.obs < 0 || s.obs >= layout.num_cells() || layout.is_terminal_cell(s.obs) ||
          layout.at(s.obs) == CellKind::Wall) {
        errors.push_back(fmt::format("trajectory {} step {}: invalid observation {}", t.id, k, s.obs));
        break;
      }
      const StepResult r = step(layout, layout.state_at(s.obs), static_cast<Action>(s.action));
      if (r.reward != s.reward) {
        errors.push_back(fmt::format("trajectory {} step {}: reward {} != simulated {}", t.id, k,
                                     s.reward, r.reward));
      }
      const bool last = k + 1 == t.steps.size();
      if (!last && layout.index(r.state) != t.steps[k + 1].obs) {
        errors.push_back(fmt::format("trajectory {} step {}: next observation mismatch", t.id, k));
      }
      if (!last && r.done) {
        errors.push_back(fmt::format("trajectory {} step {}: continues after termination", t.id, k));
      }
    }
  }
  return errors;
}

}  // namespace trajattr

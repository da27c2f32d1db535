#include "trajattr/render.hpp"

#include <fstream>
#include <map>
#include <sstream>

#include <fmt/format.h>
#include <fmt/ranges.h>
#include <json.hpp>

#include "trajattr/error.hpp"

namespace trajattr {

namespace fs = std::filesystem;

namespace {

// First visit of each cell: (action, step).
std::map<int, std::pair<Action, std::size_t>> first_moves(const Trajectory& traj) {
  std::map<int, std::pair<Action, std::size_t>> out;
  for (std::size_t k = 0; k < traj.steps.size(); ++k) {
    out.emplace(traj.steps[k].obs, std::make_pair(static_cast<Action>(traj.steps[k].action), k));
  }
  return out;
}

char layout_char(CellKind k) {
  switch (k) {
    case CellKind::Wall: return '#';
    case CellKind::Goal: return 'G';
    case CellKind::Lava: return 'L';
    default: return '.';
  }
}

const char* fill_colour(CellKind k) {
  switch (k) {
    case CellKind::Wall: return "#9e9e9e";
    case CellKind::Goal: return "#4caf50";
    case CellKind::Lava: return "#e53935";
    default: return "#ffffff";
  }
}

}  // namespace

std::string render_trajectory_ascii(const GridLayout& layout, const Trajectory& traj,
                                    std::optional<int> highlight_state) {
  const auto moves = first_moves(traj);
  std::string out;
  for (int r = 0; r < layout.height(); ++r) {
    for (int c = 0; c < layout.width(); ++c) {
      const int i = layout.index(r, c);
      std::string cell;
      if (const auto it = moves.find(i); it != moves.end()) {
        cell = fmt::format("{}{}", action_arrow(it->second.first), it->second.second);
      } else {
        cell = std::string(1, layout_char(layout.at(i)));
      }
      if (highlight_state && *highlight_state == i) cell = "[" + cell + "]";
      out += fmt::format("{:^6}", cell);
    }
    out += '\n';
  }
  return out;
}

std::string render_trajectory_svg(const GridLayout& layout, const Trajectory& traj,
                                  std::optional<int> highlight_state) {
  constexpr int kCell = 48;
  const auto moves = first_moves(traj);
  std::string out = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" "
      "font-family=\"monospace\" font-size=\"14\">\n",
      layout.width() * kCell, layout.height() * kCell);
  for (int r = 0; r < layout.height(); ++r) {
    for (int c = 0; c < layout.width(); ++c) {
      const int i = layout.index(r, c);
      const bool hl = highlight_state && *highlight_state == i;
      out += fmt::format(
          "  <rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"{}\" stroke=\"{}\" "
          "stroke-width=\"{}\"/>\n",
          c * kCell, r * kCell, kCell, kCell, fill_colour(layout.at(i)), hl ? "#1e88e5" : "#424242",
          hl ? 3 : 1);
      if (const auto it = moves.find(i); it != moves.end()) {
        const char arrow = action_arrow(it->second.first);
        const std::string glyph = arrow == '<' ? "&lt;" : arrow == '>' ? "&gt;" : std::string(1, arrow);
        out += fmt::format(
            "  <text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}{}</text>\n", c * kCell + kCell / 2,
            r * kCell + kCell / 2 + 5, glyph, it->second.second);
      }
    }
  }
  out += "</svg>\n";
  return out;
}

std::optional<Cell> parse_cell(std::string_view text) {
  std::string s;
  for (char ch : text) {
    if (ch != '(' && ch != ')' && ch != ' ') s += ch;
  }
  const auto comma = s.find(',');
  if (comma == std::string::npos) return std::nullopt;
  try {
    std::size_t used_r = 0, used_c = 0;
    const int r = std::stoi(s.substr(0, comma), &used_r);
    const std::string col = s.substr(comma + 1);
    const int c = std::stoi(col, &used_c);
    if (used_r != comma || used_c != col.size()) return std::nullopt;
    return Cell{r, c};
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

Explanation load_explanation(const RunPaths& paths, const GridLayout& layout, Cell cell) {
  if (!layout.in_bounds(cell.row, cell.col)) {
    throw ContractViolation(fmt::format("unknown state ({},{}): outside the {}x{} grid", cell.row,
                                        cell.col, layout.height(), layout.width()));
  }
  const int idx = layout.index(cell.row, cell.col);
  if (layout.is_terminal_cell(idx)) {
    throw ContractViolation(fmt::format("state ({},{}) is terminal; there is no decision to explain",
                                        cell.row, cell.col));
  }
  if (!fs::exists(paths.attributions())) {
    throw IncompleteRunError("incomplete run: missing " + paths.attributions().string());
  }
  std::ifstream in(paths.attributions());
  const auto doc = nlohmann::json::parse(in);
  for (const auto& s : doc.at("states")) {
    if (s.at("state_index").get<int>() != idx) continue;
    Explanation ex;
    ex.cell = cell;
    ex.state = idx;
    ex.a_orig = *parse_action(s.at("a_orig").get<std::string>());
    ex.candidates = s.at("K").get<std::vector<int>>();
    if (!s.at("c_final").is_null()) ex.c_final = s.at("c_final").get<int>();
    for (const auto& e : s.at("exemplars")) {
      ex.exemplars.push_back(
          {e.at("traj_id").get<int>(), e.at("tier").get<int>(), e.at("manhattan").get<int>()});
    }
    return ex;
  }
  throw ContractViolation(fmt::format("unknown state ({},{}): not among the evaluated states",
                                      cell.row, cell.col));
}

std::string render_explanation_text(const Explanation& ex, const GridLayout& layout,
                                    const Dataset& data) {
  std::string out = fmt::format("state ({},{})\naction: {}\n", ex.cell.row, ex.cell.col,
                                action_name(ex.a_orig));
  if (!ex.c_final) {
    out += "attributed cluster: none (no explanation policy changes this decision)\n";
    return out;
  }
  out += fmt::format("attributed cluster: {}\ncandidate clusters: {}\n", *ex.c_final,
                     fmt::join(ex.candidates, ", "));
  static constexpr const char* kTierNames[] = {"takes the same action here", "visits this state",
                                               "passes nearby"};
  for (std::size_t k = 0; k < ex.exemplars.size(); ++k) {
    const auto& e = ex.exemplars[k];
    const Trajectory& t = data.trajectories.at(static_cast<std::size_t>(e.traj_id));
    out += fmt::format("\n({}) trajectory {} - {} (distance {}), {} steps\n", k + 1, e.traj_id,
                       kTierNames[e.tier], e.manhattan, t.length());
    out += render_trajectory_ascii(layout, t, ex.state);
  }
  return out;
}

std::vector<fs::path> write_explanation_svgs(const Explanation& ex, const GridLayout& layout,
                                             const Dataset& data, const fs::path& dir) {
  fs::create_directories(dir);
  std::vector<fs::path> out;
  for (const auto& e : ex.exemplars) {
    const fs::path p =
        dir / fmt::format("state_{}_{}_traj_{}.svg", ex.cell.row, ex.cell.col, e.traj_id);
    std::ofstream f(p, std::ios::binary);
    if (!f) throw Error("cannot write " + p.string());
    f << render_trajectory_svg(layout, data.trajectories.at(static_cast<std::size_t>(e.traj_id)),
                               ex.state);
    out.push_back(p);
  }
  return out;
}

}  // namespace trajattr

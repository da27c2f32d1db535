#include "trajattr/gridworld.hpp"

#include <algorithm>
#include <deque>
#include <fstream>
#include <sstream>

#include "trajattr/error.hpp"
#include "trajattr/hash.hpp"

namespace trajattr {

namespace {

constexpr std::string_view kDefaultLayout =
    "......G\n"
    ".S.#...\n"
    "...#...\n"
    "...#...\n"
    ".###.L.\n"
    ".....S.\n"
    "G......\n";

constexpr std::array<int, kNumActions> kRowDelta = {-1, 1, 0, 0};
constexpr std::array<int, kNumActions> kColDelta = {0, 0, -1, 1};

char cell_char(CellKind kind) {
  switch (kind) {
    case CellKind::Empty: return '.';
    case CellKind::Wall: return '#';
    case CellKind::Goal: return 'G';
    case CellKind::Lava: return 'L';
  }
  return '?';
}

}  // namespace

char action_arrow(Action a) {
  switch (a) {
    case Action::Up: return '^';
    case Action::Down: return 'v';
    case Action::Left: return '<';
    case Action::Right: return '>';
  }
  return '?';
}

std::string_view action_name(Action a) {
  switch (a) {
    case Action::Up: return "up";
    case Action::Down: return "down";
    case Action::Left: return "left";
    case Action::Right: return "right";
  }
  return "?";
}

std::optional<Action> parse_action(std::string_view name) {
  for (Action a : kAllActions) {
    if (action_name(a) == name) return a;
  }
  return std::nullopt;
}

GridLayout::GridLayout(int width, int height, std::vector<CellKind> cells,
                       std::vector<Cell> start_states)
    : width_(width), height_(height), cells_(std::move(cells)), starts_(std::move(start_states)) {
  if (width_ <= 0 || height_ <= 0) throw ContractViolation("layout dimensions must be positive");
  if (static_cast<long>(width_) * height_ > kMaxCells) {
    throw ContractViolation("layout exceeds " + std::to_string(kMaxCells) + " cells");
  }
  if (cells_.size() != static_cast<std::size_t>(width_ * height_)) {
    throw ContractViolation("cell count does not match width * height");
  }
  if (count(CellKind::Goal) == 0) throw ContractViolation("layout has no goal cell");
  if (starts_.empty()) throw ContractViolation("layout has no start state");
  for (const Cell& s : starts_) {
    if (!in_bounds(s.row, s.col) || at(s.row, s.col) != CellKind::Empty) {
      throw ContractViolation("start state must be an empty cell inside the grid");
    }
  }
  std::sort(starts_.begin(), starts_.end());
  starts_.erase(std::unique(starts_.begin(), starts_.end()), starts_.end());
}

GridLayout GridLayout::parse(std::string_view text) {
  std::vector<std::string_view> rows;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view row = text.substr(pos, end - pos);
    if (!row.empty() && row.back() == '\r') row.remove_suffix(1);
    rows.push_back(row);
    pos = end + 1;
  }
  // A single trailing newline is allowed; blank lines inside are not.
  while (!rows.empty() && rows.back().empty()) rows.pop_back();
  if (rows.empty()) throw ParseError("empty layout", 1);

  const int width = static_cast<int>(rows.front().size());
  if (width == 0) throw ParseError("empty row", 1);
  std::vector<CellKind> cells;
  std::vector<Cell> starts;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const int line = static_cast<int>(r) + 1;
    if (static_cast<int>(rows[r].size()) != width) {
      throw ParseError("ragged row: expected " + std::to_string(width) + " cells, got " +
                           std::to_string(rows[r].size()),
                       line);
    }
    for (int c = 0; c < width; ++c) {
      switch (rows[r][c]) {
        case '.': cells.push_back(CellKind::Empty); break;
        case '#': cells.push_back(CellKind::Wall); break;
        case 'G': cells.push_back(CellKind::Goal); break;
        case 'L': cells.push_back(CellKind::Lava); break;
        case 'S':
          cells.push_back(CellKind::Empty);
          starts.push_back({static_cast<int>(r), c});
          break;
        default:
          throw ParseError(std::string("unknown cell character '") + rows[r][c] + "'", line, c + 1);
      }
    }
  }
  const int height = static_cast<int>(rows.size());
  if (static_cast<long>(width) * height > kMaxCells) {
    throw ParseError("layout exceeds " + std::to_string(kMaxCells) + " cells", height);
  }
  if (std::none_of(cells.begin(), cells.end(), [](CellKind k) { return k == CellKind::Goal; })) {
    throw ParseError("layout has no goal cell ('G')", height);
  }
  if (starts.empty()) throw ParseError("layout has no start cell ('S')", height);
  return GridLayout(width, height, std::move(cells), std::move(starts));
}

GridLayout GridLayout::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open layout file " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

GridLayout GridLayout::default_layout() { return parse(kDefaultLayout); }

bool GridLayout::is_terminal_cell(int index) const {
  const CellKind k = at(index);
  return k == CellKind::Goal || k == CellKind::Lava;
}

GridState GridLayout::state_at(int index) const {
  const Cell c = cell_of(index);
  return {c.row, c.col, is_terminal_cell(index)};
}

std::vector<GridState> GridLayout::initial_states() const {
  std::vector<GridState> out;
  for (const Cell& c : starts_) out.push_back(state_at(c.row, c.col));
  return out;
}

int GridLayout::count(CellKind kind) const {
  return static_cast<int>(std::count(cells_.begin(), cells_.end(), kind));
}

std::string GridLayout::to_text() const {
  std::string out;
  for (int r = 0; r < height_; ++r) {
    for (int c = 0; c < width_; ++c) {
      const bool start = std::binary_search(starts_.begin(), starts_.end(), Cell{r, c});
      out += start ? 'S' : cell_char(at(r, c));
    }
    out += '\n';
  }
  return out;
}

std::string GridLayout::hash() const { return Fingerprint().add(to_text()).hex(); }

StepResult step(const GridLayout& layout, const GridState& s, Action a) {
  if (!layout.in_bounds(s.row, s.col)) throw ContractViolation("state outside the layout");
  if (s.terminal || layout.is_terminal_cell(layout.index(s))) {
    throw ContractViolation("step called from a terminal state");
  }
  const auto i = static_cast<std::size_t>(a);
  int row = s.row + kRowDelta[i];
  int col = s.col + kColDelta[i];
  if (!layout.in_bounds(row, col) || layout.at(row, col) == CellKind::Wall) {
    row = s.row;
    col = s.col;
  }
  switch (layout.at(row, col)) {
    case CellKind::Goal: return {{row, col, true}, kGoalReward, true};
    case CellKind::Lava: return {{row, col, true}, kLavaReward, true};
    default: return {{row, col, false}, kStepReward, false};
  }
}

std::vector<GridState> reachable_nonterminal_states(const GridLayout& layout) {
  std::vector<bool> seen(layout.num_cells(), false);
  std::deque<int> frontier;
  for (const Cell& c : layout.start_states()) {
    const int i = layout.index(c.row, c.col);
    if (!seen[i]) {
      seen[i] = true;
      frontier.push_back(i);
    }
  }
  while (!frontier.empty()) {
    const int i = frontier.front();
    frontier.pop_front();
    if (layout.is_terminal_cell(i)) continue;
    for (Action a : kAllActions) {
      const int j = layout.index(step(layout, layout.state_at(i), a).state);
      if (!seen[j]) {
        seen[j] = true;
        frontier.push_back(j);
      }
    }
  }
  std::vector<GridState> out;
  for (int i = 0; i < layout.num_cells(); ++i) {
    if (seen[i] && !layout.is_terminal_cell(i)) out.push_back(layout.state_at(i));
  }
  return out;
}

std::vector<int> goal_distances(const GridLayout& layout) {
  std::vector<int> dist(layout.num_cells(), -1);
  std::deque<int> frontier;
  for (int i = 0; i < layout.num_cells(); ++i) {
    if (layout.at(i) == CellKind::Goal) {
      dist[i] = 0;
      frontier.push_back(i);
    }
  }
  // Moves are reversible between non-wall cells, so a reverse BFS over
  // neighbours gives forward distances.
  while (!frontier.empty()) {
    const int i = frontier.front();
    frontier.pop_front();
    const Cell c = layout.cell_of(i);
    for (std::size_t a = 0; a < kNumActions; ++a) {
      const int r = c.row + kRowDelta[a];
      const int col = c.col + kColDelta[a];
      if (!layout.in_bounds(r, col)) continue;
      const int j = layout.index(r, col);
      const CellKind k = layout.at(j);
      if (k != CellKind::Empty || dist[j] >= 0) continue;
      dist[j] = dist[i] + 1;
      frontier.push_back(j);
    }
  }
  return dist;
}

}  // namespace trajattr

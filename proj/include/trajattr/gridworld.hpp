#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace trajattr {

enum class CellKind : std::uint8_t { Empty, Wall, Goal, Lava };

/// Movement directions, encoded 0-3 in this order.
enum class Action : std::uint8_t { Up = 0, Down = 1, Left = 2, Right = 3 };

inline constexpr int kNumActions = 4;
inline constexpr std::array<Action, kNumActions> kAllActions = {Action::Up, Action::Down,
                                                                Action::Left, Action::Right};

inline constexpr double kGoalReward = 1.0;
inline constexpr double kLavaReward = -1.0;
inline constexpr double kStepReward = -0.1;

/// Largest number of cells a layout may have.
inline constexpr int kMaxCells = 10'000;

struct Cell {
  int row = 0;
  int col = 0;

  friend bool operator==(const Cell&, const Cell&) = default;
  friend auto operator<=>(const Cell&, const Cell&) = default;
};

struct GridState {
  int row = 0;
  int col = 0;
  bool terminal = false;

  Cell cell() const { return {row, col}; }
  friend bool operator==(const GridState&, const GridState&) = default;
};

struct StepResult {
  GridState state;
  double reward = 0.0;
  bool done = false;
};

char action_arrow(Action a);
std::string_view action_name(Action a);
std::optional<Action> parse_action(std::string_view name);

/// Immutable rectangular grid. Cells are addressed by (row, col) or by the
/// flattened index row * width + col.
class GridLayout {
 public:
  GridLayout(int width, int height, std::vector<CellKind> cells, std::vector<Cell> start_states);

  /// Parses the one-character-per-cell text format ('.', '#', 'G', 'L', 'S').
  static GridLayout parse(std::string_view text);
  static GridLayout load(const std::string& path);
  /// The bundled 7x7 layout with two goals, one lava cell and interior walls.
  static GridLayout default_layout();

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  int num_cells() const noexcept { return width_ * height_; }
  const std::vector<Cell>& start_states() const noexcept { return starts_; }

  bool in_bounds(int row, int col) const noexcept {
    return row >= 0 && row < height_ && col >= 0 && col < width_;
  }
  CellKind at(int row, int col) const { return cells_.at(index(row, col)); }
  CellKind at(int index) const { return cells_.at(index); }
  int index(int row, int col) const noexcept { return row * width_ + col; }
  int index(const GridState& s) const noexcept { return index(s.row, s.col); }
  Cell cell_of(int index) const noexcept { return {index / width_, index % width_}; }

  bool is_terminal_cell(int index) const;
  GridState state_at(int index) const;
  GridState state_at(int row, int col) const { return state_at(index(row, col)); }
  std::vector<GridState> initial_states() const;
  int count(CellKind kind) const;

  /// Canonical text form; parse(to_text()) reproduces the layout.
  std::string to_text() const;
  /// Stable hash of the canonical text form.
  std::string hash() const;

 private:
  int width_;
  int height_;
  std::vector<CellKind> cells_;
  std::vector<Cell> starts_;
};

/// Deterministic transition. Moves into walls or off the grid leave the
/// agent in place. Throws ContractViolation when stepping a terminal state.
StepResult step(const GridLayout& layout, const GridState& s, Action a);

/// Non-terminal states reachable from any start state.
std::vector<GridState> reachable_nonterminal_states(const GridLayout& layout);

/// Shortest-path distance (in moves) from each cell to the nearest goal,
/// never entering lava. Unreachable cells hold -1.
std::vector<int> goal_distances(const GridLayout& layout);

}  // namespace trajattr

#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "trajattr/attribution.hpp"
#include "trajattr/dataset.hpp"
#include "trajattr/gridworld.hpp"
#include "trajattr/pipeline.hpp"

namespace trajattr {

/// A run directory is missing artifacts needed by a read-only command.
class IncompleteRunError : public Error {
 public:
  using Error::Error;
};

/// Grid with ^ v < > arrows on visited cells, each followed by the 0-indexed
/// step at which the cell was first left. The query state is bracketed.
std::string render_trajectory_ascii(const GridLayout& layout, const Trajectory& traj,
                                    std::optional<int> highlight_state = std::nullopt);
std::string render_trajectory_svg(const GridLayout& layout, const Trajectory& traj,
                                  std::optional<int> highlight_state = std::nullopt);

struct Explanation {
  Cell cell;
  int state = 0;
  Action a_orig = Action::Up;
  std::vector<int> candidates;
  std::optional<int> c_final;
  std::vector<RankedTrajectory> exemplars;
};

/// Parses "(r,c)" or "r,c".
std::optional<Cell> parse_cell(std::string_view text);

/// Reads the stored attribution for `cell` from a completed run.
Explanation load_explanation(const RunPaths& paths, const GridLayout& layout, Cell cell);

std::string render_explanation_text(const Explanation& ex, const GridLayout& layout,
                                    const Dataset& data);
/// Writes one SVG per exemplar into `dir` and returns the paths.
std::vector<std::filesystem::path> write_explanation_svgs(const Explanation& ex,
                                                          const GridLayout& layout,
                                                          const Dataset& data,
                                                          const std::filesystem::path& dir);

}  // namespace trajattr

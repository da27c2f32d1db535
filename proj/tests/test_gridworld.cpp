#include <doctest.h>

#include <set>
#include <string>

#include "trajattr/error.hpp"
#include "trajattr/gridworld.hpp"

using namespace trajattr;

TEST_SUITE("gridworld") {
  TEST_CASE("minimal two-cell layout") {
    const auto g = GridLayout::parse("SG");
    CHECK(g.width() == 2);
    CHECK(g.height() == 1);
    REQUIRE(g.start_states().size() == 1);
    CHECK(g.start_states()[0] == Cell{0, 0});
    CHECK(g.at(0, 1) == CellKind::Goal);
    CHECK(g.is_terminal_cell(1));
    CHECK_FALSE(g.is_terminal_cell(0));
  }

  TEST_CASE("wall between start and goal") {
    const auto g = GridLayout::parse("S#G");
    CHECK(g.at(0, 1) == CellKind::Wall);
    const auto r = step(g, g.state_at(0, 0), Action::Right);
    CHECK(r.state.cell() == Cell{0, 0});
    CHECK(r.reward == kStepReward);
    CHECK_FALSE(r.done);
  }

  TEST_CASE("default layout") {
    const auto g = GridLayout::default_layout();
    CHECK(g.width() == 7);
    CHECK(g.height() == 7);
    CHECK(g.count(CellKind::Goal) == 2);
    CHECK(g.count(CellKind::Lava) == 1);
    CHECK(g.count(CellKind::Wall) > 0);
    const auto again = GridLayout::parse(g.to_text());
    CHECK(again.to_text() == g.to_text());
    CHECK(again.hash() == g.hash());
    CHECK(again.count(CellKind::Goal) == 2);
    CHECK(g.at(1, 1) == CellKind::Empty);
  }

  TEST_CASE("shipped asset matches the built-in layout") {
    const auto g = GridLayout::load(std::string(TRAJATTR_SOURCE_DIR) + "/assets/default_layout.txt");
    CHECK(g.hash() == GridLayout::default_layout().hash());
  }

  TEST_CASE("parse errors carry positions") {
    SUBCASE("ragged rows") {
      try {
        GridLayout::parse("S.G\n..");
        FAIL("expected ParseError");
      } catch (const ParseError& e) {
        CHECK(e.line() == 2);
      }
    }
    SUBCASE("unknown character") {
      try {
        GridLayout::parse("S.G\n.x.");
        FAIL("expected ParseError");
      } catch (const ParseError& e) {
        CHECK(e.line() == 2);
        CHECK(e.column() == 2);
        CHECK(std::string(e.what()).find("'x'") != std::string::npos);
      }
    }
    SUBCASE("no goal") { CHECK_THROWS_AS(GridLayout::parse("S.."), ParseError); }
    SUBCASE("no start") { CHECK_THROWS_AS(GridLayout::parse("..G"), ParseError); }
    SUBCASE("empty text") { CHECK_THROWS_AS(GridLayout::parse(""), ParseError); }
    SUBCASE("too many cells") {
      std::string row(101, '.');
      row[0] = 'S';
      row[1] = 'G';
      std::string text;
      for (int i = 0; i < 100; ++i) text += row + "\n";
      CHECK_THROWS_AS(GridLayout::parse(text), ParseError);
    }
  }

  TEST_CASE("step examples") {
    const auto g = GridLayout::default_layout();
    SUBCASE("adjacent left of goal moving right") {
      const auto r = step(g, g.state_at(0, 5), Action::Right);
      CHECK(r.state.cell() == Cell{0, 6});
      CHECK(r.reward == 1.0);
      CHECK(r.done);
      CHECK(r.state.terminal);
    }
    SUBCASE("into the top wall of the grid") {
      const auto r = step(g, g.state_at(0, 0), Action::Up);
      CHECK(r.state.cell() == Cell{0, 0});
      CHECK(r.reward == kStepReward);
      CHECK_FALSE(r.done);
    }
    SUBCASE("above lava moving down") {
      const auto r = step(g, g.state_at(3, 5), Action::Down);
      CHECK(r.state.cell() == Cell{4, 5});
      CHECK(r.reward == -1.0);
      CHECK(r.done);
    }
    SUBCASE("stepping a terminal state") {
      CHECK_THROWS_AS(step(g, g.state_at(0, 6), Action::Left), ContractViolation);
    }
  }

  TEST_CASE("step properties over every state and action") {
    const auto g = GridLayout::default_layout();
    for (int i = 0; i < g.num_cells(); ++i) {
      if (g.is_terminal_cell(i) || g.at(i) == CellKind::Wall) continue;
      for (auto a : kAllActions) {
        const auto s = g.state_at(i);
        const auto r1 = step(g, s, a);
        const auto r2 = step(g, s, a);
        CHECK(r1.state == r2.state);
        CHECK(r1.reward == r2.reward);
        CHECK(std::set<double>{kGoalReward, kLavaReward, kStepReward}.count(r1.reward) == 1);
        const int next = g.index(r1.state);
        CHECK(r1.done == g.is_terminal_cell(next));
        const int dr = std::abs(r1.state.row - s.row);
        const int dc = std::abs(r1.state.col - s.col);
        CHECK(dr + dc <= 1);
        CHECK(g.at(next) != CellKind::Wall);
      }
    }
  }

  TEST_CASE("goal distances avoid lava") {
    const auto g = GridLayout::parse("SLG\n...");
    const auto d = goal_distances(g);
    CHECK(d[g.index(0, 2)] == 0);
    CHECK(d[g.index(0, 0)] == 4);
    const auto w = GridLayout::parse("S#G");
    CHECK(goal_distances(w)[0] == -1);
  }

  TEST_CASE("reachable states exclude walls and terminals") {
    const auto g = GridLayout::parse("S#G\n...");
    const auto states = reachable_nonterminal_states(g);
    CHECK(states.size() == 4);
    for (const auto& s : states) {
      CHECK_FALSE(s.terminal);
      CHECK(g.at(s.row, s.col) != CellKind::Wall);
    }
  }

  TEST_CASE("action names round trip") {
    for (auto a : kAllActions) CHECK(parse_action(action_name(a)) == a);
    CHECK(action_arrow(Action::Up) == '^');
    CHECK(action_arrow(Action::Down) == 'v');
    CHECK(action_arrow(Action::Left) == '<');
    CHECK(action_arrow(Action::Right) == '>');
    CHECK_FALSE(parse_action("jump").has_value());
  }
}

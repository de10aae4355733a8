#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace repcon {

// Thrown on malformed scenarios / schema violations. CLI exit code 2.
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
// Thrown on numerical solver failures. CLI exit code 4.
struct SolverError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Action : int { Up = 0, Down = 1, Left = 2, Right = 3 };
inline constexpr int kNumActions = 4;
inline constexpr std::array<char, kNumActions> kActionLetter{'U', 'D', 'L', 'R'};
inline constexpr std::array<int, kNumActions> kActionDx{0, 0, -1, 1};
inline constexpr std::array<int, kNumActions> kActionDy{-1, 1, 0, 0};

std::optional<Action> action_from_letter(char c);

struct Cell {
  int x = 0;
  int y = 0;
  bool operator==(const Cell&) const = default;
};

struct GridSpec {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> blocked;  // row-major, permanent walls
  std::vector<uint8_t> goal;
  Cell start{};

  int num_cells() const { return width * height; }
  int cell_index(Cell c) const { return c.y * width + c.x; }
  Cell cell_at(int idx) const { return Cell{idx % width, idx / width}; }
  bool in_bounds(Cell c) const {
    return c.x >= 0 && c.x < width && c.y >= 0 && c.y < height;
  }
  bool is_blocked(Cell c) const { return blocked[cell_index(c)] != 0; }
  bool is_goal(Cell c) const { return goal[cell_index(c)] != 0; }
};

struct BarrierConfig {
  std::string id;
  std::vector<Cell> blocked;
};

// Partition of the free cells into superstates; the resolution at which the
// attacker's action distributions are constant.
struct Representation {
  std::string name;
  std::vector<std::vector<Cell>> superstates;
  std::vector<int> cell_to_superstate;  // -1 on permanently blocked cells

  int num_superstates() const { return static_cast<int>(superstates.size()); }
};

struct ValidationReport {
  std::vector<std::string> problems;
  bool ok() const { return problems.empty(); }
};

struct RewardSpec {
  double step = -0.1;
  double goal = 1.0;
};

struct Scenario {
  GridSpec grid;
  std::vector<BarrierConfig> barriers;
  std::vector<Representation> representations;
  std::vector<double> prior;
  int horizon = 1;
  double discount = 0.95;
  RewardSpec reward;

  int num_types() const { return static_cast<int>(representations.size()); }
  int num_barriers() const { return static_cast<int>(barriers.size()); }
};

// States are the non-permanently-blocked cells (row-major order) plus one
// absorbing sink at index num_states-1. Moves into walls, out of bounds, or
// into barrier cells keep the attacker in place; goal cells feed the sink.
struct TransitionKernel {
  int num_states = 0;
  int sink = -1;
  std::vector<int> state_cell;                // state -> cell index (sink: -1)
  std::vector<int> cell_state;                // cell index -> state, -1 if blocked
  std::vector<std::array<int, kNumActions>> succ;

  int next(int s, Action a) const { return succ[s][static_cast<int>(a)]; }
};

Scenario load_scenario(const std::string& json_text);
Scenario load_scenario_file(const std::string& path);
ValidationReport validate_scenario(const Scenario& sc);

ValidationReport validate_representation(const GridSpec& grid,
                                         const Representation& rep);
int superstate_of(const Representation& rep, int cell_index);

// barrier = index into scenario.barriers; nullopt gives the barrier-free
// Phase-I kernel.
TransitionKernel build_transition(const Scenario& sc,
                                  std::optional<int> barrier = std::nullopt);

double reward(const Scenario& sc, const TransitionKernel& k, int state,
              Action a);
std::vector<double> reward_vector(const Scenario& sc,
                                  const TransitionKernel& k);

// States (kernel indices) reachable from the start within max_steps moves,
// in increasing state order. Includes the start itself; excludes the sink.
std::vector<int> reachable_states(const TransitionKernel& k, int start_state,
                                  int max_steps);

// Convenience for scenario construction in tests: expand an axis-aligned
// rectangle (inclusive corners) into its cells.
std::vector<Cell> rect_cells(int x0, int y0, int x1, int y1);

}  // namespace repcon

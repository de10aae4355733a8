#include "repcon/env.hpp"

#include <algorithm>
#include <deque>
#include <fstream>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

namespace repcon {

namespace {

using nlohmann::json;

Cell parse_cell(const json& j, const std::string& where,
                ValidationReport* report) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number_integer() ||
      !j[1].is_number_integer()) {
    report->problems.push_back(
        fmt::format("{}: expected a cell as [x, y], got {}", where, j.dump()));
    return {0, 0};
  }
  return {j[0].get<int>(), j[1].get<int>()};
}

std::vector<Cell> parse_cell_list(const json& j, const std::string& where,
                                  ValidationReport* report) {
  std::vector<Cell> out;
  if (!j.is_array()) {
    report->problems.push_back(fmt::format("{}: expected a list", where));
    return out;
  }
  for (size_t i = 0; i < j.size(); ++i) {
    out.push_back(parse_cell(j[i], fmt::format("{}[{}]", where, i), report));
  }
  return out;
}

}  // namespace

std::optional<Action> action_from_letter(char c) {
  for (int a = 0; a < kNumActions; ++a) {
    if (kActionLetter[a] == c) return static_cast<Action>(a);
  }
  return std::nullopt;
}

std::vector<Cell> rect_cells(int x0, int y0, int x1, int y1) {
  std::vector<Cell> out;
  for (int y = std::min(y0, y1); y <= std::max(y0, y1); ++y) {
    for (int x = std::min(x0, x1); x <= std::max(x0, x1); ++x) {
      out.push_back({x, y});
    }
  }
  return out;
}

int superstate_of(const Representation& rep, int cell_index) {
  if (cell_index < 0 ||
      cell_index >= static_cast<int>(rep.cell_to_superstate.size())) {
    return -1;
  }
  return rep.cell_to_superstate[cell_index];
}

ValidationReport validate_representation(const GridSpec& grid,
                                         const Representation& rep) {
  ValidationReport report;
  std::vector<int> seen(grid.width * grid.height, -1);
  for (size_t g = 0; g < rep.superstates.size(); ++g) {
    if (rep.superstates[g].empty()) {
      report.problems.push_back(fmt::format(
          "representation '{}': superstate {} is empty", rep.name, g));
    }
    for (const Cell& c : rep.superstates[g]) {
      if (!grid.in_bounds(c)) {
        report.problems.push_back(
            fmt::format("representation '{}': cell ({},{}) out of bounds",
                        rep.name, c.x, c.y));
        continue;
      }
      int idx = grid.cell_index(c);
      if (grid.blocked[idx]) {
        report.problems.push_back(fmt::format(
            "representation '{}': cell ({},{}) is blocked but assigned to "
            "superstate {}",
            rep.name, c.x, c.y, g));
      }
      if (seen[idx] >= 0) {
        report.problems.push_back(fmt::format(
            "representation '{}': partition not disjoint, cell ({},{}) "
            "appears in superstates {} and {}",
            rep.name, c.x, c.y, seen[idx], g));
      }
      seen[idx] = static_cast<int>(g);
    }
  }
  for (int idx = 0; idx < grid.width * grid.height; ++idx) {
    if (!grid.blocked[idx] && seen[idx] < 0) {
      Cell c = grid.cell_at(idx);
      report.problems.push_back(fmt::format(
          "representation '{}': coverage violation at cell ({},{})", rep.name,
          c.x, c.y));
    }
  }
  return report;
}

namespace {

// Cells with a wall-respecting path to some goal cell; `extra_blocked` layers
// a barrier on top of the permanent walls. Goal cells count as reaching.
std::vector<uint8_t> goal_connected(const GridSpec& g,
                                    const std::vector<uint8_t>* extra_blocked) {
  int n = g.width * g.height;
  std::vector<uint8_t> reach(n, 0);
  std::deque<int> queue;
  auto passable = [&](int idx) {
    return !g.blocked[idx] && !(extra_blocked && (*extra_blocked)[idx]);
  };
  for (int idx = 0; idx < n; ++idx) {
    if (g.goal[idx] && passable(idx)) {
      reach[idx] = 1;
      queue.push_back(idx);
    }
  }
  while (!queue.empty()) {
    int idx = queue.front();
    queue.pop_front();
    Cell c = g.cell_at(idx);
    for (int a = 0; a < kNumActions; ++a) {
      Cell t{c.x + kActionDx[a], c.y + kActionDy[a]};
      if (!g.in_bounds(t)) continue;
      int tidx = g.cell_index(t);
      if (!passable(tidx) || reach[tidx]) continue;
      reach[tidx] = 1;
      queue.push_back(tidx);
    }
  }
  return reach;
}

}  // namespace

ValidationReport validate_scenario(const Scenario& sc) {
  ValidationReport report;
  const GridSpec& g = sc.grid;
  if (g.width < 1 || g.height < 1) {
    report.problems.push_back(
        fmt::format("grid: width and height must be positive, got {}x{}",
                    g.width, g.height));
    return report;
  }
  if (static_cast<int>(g.blocked.size()) != g.width * g.height ||
      static_cast<int>(g.goal.size()) != g.width * g.height) {
    report.problems.push_back("grid: internal mask size mismatch");
    return report;
  }
  if (!g.in_bounds(g.start)) {
    report.problems.push_back(fmt::format("grid: start ({},{}) out of bounds",
                                          g.start.x, g.start.y));
  } else if (g.is_blocked(g.start)) {
    report.problems.push_back(
        fmt::format("grid: start ({},{}) is blocked", g.start.x, g.start.y));
  } else if (g.is_goal(g.start)) {
    report.problems.push_back(fmt::format(
        "grid: start ({},{}) is a goal cell", g.start.x, g.start.y));
  }
  bool any_goal = false;
  for (int idx = 0; idx < g.width * g.height; ++idx) {
    if (g.goal[idx]) {
      any_goal = true;
      if (g.blocked[idx]) {
        Cell c = g.cell_at(idx);
        report.problems.push_back(
            fmt::format("grid: goal ({},{}) is blocked", c.x, c.y));
      }
    }
  }
  if (!any_goal) report.problems.push_back("grid: no goal cell");

  std::set<std::string> barrier_ids;
  std::vector<uint8_t> open_reach;
  if (report.ok()) {
    open_reach = goal_connected(g, nullptr);
    if (!open_reach[g.cell_index(g.start)]) {
      report.problems.push_back("grid: goal unreachable from the start");
    }
  }
  for (const BarrierConfig& b : sc.barriers) {
    if (!barrier_ids.insert(b.id).second) {
      report.problems.push_back(
          fmt::format("barriers: duplicate id '{}'", b.id));
    }
    std::vector<uint8_t> mask(g.width * g.height, 0);
    bool cells_ok = true;
    for (const Cell& c : b.blocked) {
      if (!g.in_bounds(c)) {
        report.problems.push_back(fmt::format(
            "barrier '{}': cell ({},{}) out of bounds", b.id, c.x, c.y));
        cells_ok = false;
        continue;
      }
      if (g.is_goal(c)) {
        report.problems.push_back(fmt::format(
            "barrier '{}': cell ({},{}) is a goal cell", b.id, c.x, c.y));
        cells_ok = false;
      }
      mask[g.cell_index(c)] = 1;
    }
    // Deploying a barrier may lengthen routes but never strand anyone: every
    // cell that could reach the goal before deployment (other than the
    // barrier cells themselves) must still reach it afterwards.
    if (cells_ok && report.ok()) {
      std::vector<uint8_t> deployed_reach = goal_connected(g, &mask);
      for (int idx = 0; idx < g.width * g.height; ++idx) {
        if (open_reach[idx] && !mask[idx] && !deployed_reach[idx]) {
          Cell c = g.cell_at(idx);
          report.problems.push_back(fmt::format(
              "barrier '{}': deploying it cuts cell ({},{}) off from the goal",
              b.id, c.x, c.y));
        }
      }
      // A start sitting on a barrier cell may still step off it; it only
      // needs one passable neighbor with goal access.
      if (mask[g.cell_index(g.start)]) {
        Cell s = g.start;
        bool escape = false;
        for (int a = 0; a < kNumActions; ++a) {
          Cell t{s.x + kActionDx[a], s.y + kActionDy[a]};
          if (g.in_bounds(t) && deployed_reach[g.cell_index(t)]) escape = true;
        }
        if (!escape) {
          report.problems.push_back(
              fmt::format("barrier '{}': goal unreachable from the start",
                          b.id));
        }
      }
    }
  }
  if (sc.barriers.empty()) report.problems.push_back("barriers: none defined");

  if (sc.representations.empty()) {
    report.problems.push_back("representations: none defined");
  }
  for (const Representation& rep : sc.representations) {
    ValidationReport sub = validate_representation(g, rep);
    report.problems.insert(report.problems.end(), sub.problems.begin(),
                           sub.problems.end());
  }

  if (sc.prior.size() != sc.representations.size()) {
    report.problems.push_back(
        fmt::format("prior: {} entries for {} representation types",
                    sc.prior.size(), sc.representations.size()));
  } else {
    double total = 0.0;
    for (double p : sc.prior) {
      if (!(p > 0.0)) {
        report.problems.push_back(
            "prior: entries must be strictly positive (drop zero-prior types)");
        break;
      }
      total += p;
    }
    if (std::abs(total - 1.0) > 1e-9) {
      report.problems.push_back(
          fmt::format("prior: entries sum to {:.12g}, expected 1", total));
    }
  }

  if (sc.horizon < 1) {
    report.problems.push_back(
        fmt::format("horizon: must be at least 1, got {}", sc.horizon));
  }
  if (!(sc.discount > 0.0) || !(sc.discount < 1.0)) {
    report.problems.push_back(fmt::format(
        "discount: must lie strictly inside (0, 1), got {}", sc.discount));
  }
  return report;
}

Scenario load_scenario(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ValidationError(fmt::format("scenario is not valid JSON: {}",
                                      e.what()));
  }

  ValidationReport report;
  Scenario sc;

  if (!j.is_object() || !j.contains("grid") || !j["grid"].is_object()) {
    throw ValidationError("scenario: missing 'grid' object");
  }
  const json& jg = j["grid"];
  sc.grid.width = jg.value("width", 0);
  sc.grid.height = jg.value("height", 0);
  if (sc.grid.width < 1 || sc.grid.height < 1) {
    throw ValidationError(
        fmt::format("grid: width and height must be positive, got {}x{}",
                    sc.grid.width, sc.grid.height));
  }
  int n = sc.grid.width * sc.grid.height;
  sc.grid.blocked.assign(n, 0);
  sc.grid.goal.assign(n, 0);
  if (jg.contains("blocked")) {
    for (const Cell& c : parse_cell_list(jg["blocked"], "grid.blocked",
                                         &report)) {
      if (sc.grid.in_bounds(c)) {
        sc.grid.blocked[sc.grid.cell_index(c)] = 1;
      } else {
        report.problems.push_back(fmt::format(
            "grid.blocked: cell ({},{}) out of bounds", c.x, c.y));
      }
    }
  }
  if (jg.contains("goal")) {
    // A list of cells, or one bare [x, y] pair as shorthand.
    const json& jgoal = jg["goal"];
    std::vector<Cell> goals;
    if (jgoal.is_array() && jgoal.size() == 2 && jgoal[0].is_number_integer()) {
      goals.push_back(parse_cell(jgoal, "grid.goal", &report));
    } else {
      goals = parse_cell_list(jgoal, "grid.goal", &report);
    }
    for (const Cell& goal : goals) {
      if (sc.grid.in_bounds(goal)) {
        sc.grid.goal[sc.grid.cell_index(goal)] = 1;
      } else {
        report.problems.push_back(fmt::format(
            "grid.goal: cell ({},{}) out of bounds", goal.x, goal.y));
      }
    }
    if (goals.empty()) report.problems.push_back("grid.goal: empty list");
  } else {
    report.problems.push_back("grid: missing 'goal'");
  }
  if (jg.contains("start")) {
    sc.grid.start = parse_cell(jg["start"], "grid.start", &report);
  } else {
    report.problems.push_back("grid: missing 'start'");
  }

  if (j.contains("barriers") && j["barriers"].is_array()) {
    for (size_t i = 0; i < j["barriers"].size(); ++i) {
      const json& jb = j["barriers"][i];
      BarrierConfig b;
      b.id = jb.value("id", fmt::format("barrier{}", i));
      if (jb.contains("blocked")) {
        b.blocked = parse_cell_list(
            jb["blocked"], fmt::format("barriers[{}].blocked", i), &report);
      }
      sc.barriers.push_back(std::move(b));
    }
  }

  if (j.contains("representations") && j["representations"].is_array()) {
    for (size_t i = 0; i < j["representations"].size(); ++i) {
      const json& jr = j["representations"][i];
      Representation rep;
      rep.name = jr.value("type", fmt::format("type{}", i));
      if (jr.contains("superstates")) {
        const json& js = jr["superstates"];
        if (!js.is_array()) {
          report.problems.push_back(fmt::format(
              "representations[{}].superstates: expected a list", i));
        } else {
          for (size_t gidx = 0; gidx < js.size(); ++gidx) {
            rep.superstates.push_back(parse_cell_list(
                js[gidx],
                fmt::format("representations[{}].superstates[{}]", i, gidx),
                &report));
          }
        }
      } else if (jr.contains("rectangles")) {
        const json& js = jr["rectangles"];
        if (!js.is_array()) {
          report.problems.push_back(fmt::format(
              "representations[{}].rectangles: expected a list", i));
        } else {
          for (size_t ridx = 0; ridx < js.size(); ++ridx) {
            const json& jrect = js[ridx];
            if (!jrect.is_array() || jrect.size() != 4) {
              report.problems.push_back(fmt::format(
                  "representations[{}].rectangles[{}]: expected [x0,y0,x1,y1]",
                  i, ridx));
              continue;
            }
            std::vector<Cell> cells =
                rect_cells(jrect[0].get<int>(), jrect[1].get<int>(),
                           jrect[2].get<int>(), jrect[3].get<int>());
            // Rectangles tile the whole board; drop the blocked cells so the
            // remaining free cells form the partition.
            std::vector<Cell> free_cells;
            for (const Cell& c : cells) {
              if (sc.grid.in_bounds(c) && !sc.grid.is_blocked(c)) {
                free_cells.push_back(c);
              }
            }
            if (!free_cells.empty()) {
              rep.superstates.push_back(std::move(free_cells));
            }
          }
        }
      } else {
        report.problems.push_back(fmt::format(
            "representations[{}]: needs 'superstates' or 'rectangles'", i));
      }
      rep.cell_to_superstate.assign(n, -1);
      for (size_t gidx = 0; gidx < rep.superstates.size(); ++gidx) {
        for (const Cell& c : rep.superstates[gidx]) {
          if (sc.grid.in_bounds(c)) {
            rep.cell_to_superstate[sc.grid.cell_index(c)] =
                static_cast<int>(gidx);
          }
        }
      }
      sc.representations.push_back(std::move(rep));
    }
  }

  sc.prior = j.value("prior", std::vector<double>{});
  sc.horizon = j.value("horizon", 1);
  sc.discount = j.value("discount", 0.95);
  if (j.contains("reward") && j["reward"].is_object()) {
    sc.reward.step = j["reward"].value("step", -0.1);
    sc.reward.goal = j["reward"].value("goal", 1.0);
  }

  ValidationReport full = validate_scenario(sc);
  report.problems.insert(report.problems.end(), full.problems.begin(),
                         full.problems.end());
  if (!report.ok()) {
    std::ostringstream msg;
    msg << "scenario failed validation:";
    for (const std::string& p : report.problems) msg << "\n  - " << p;
    throw ValidationError(msg.str());
  }
  return sc;
}

Scenario load_scenario_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw ValidationError(fmt::format("cannot open scenario file '{}'", path));
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return load_scenario(buf.str());
}

TransitionKernel build_transition(const Scenario& sc,
                                  std::optional<int> barrier) {
  const GridSpec& g = sc.grid;
  int n = g.width * g.height;

  std::vector<uint8_t> barrier_blocked(n, 0);
  if (barrier.has_value()) {
    int b = *barrier;
    if (b < 0 || b >= static_cast<int>(sc.barriers.size())) {
      throw ValidationError(fmt::format("barrier index {} out of range", b));
    }
    for (const Cell& c : sc.barriers[b].blocked) {
      if (g.in_bounds(c)) barrier_blocked[g.cell_index(c)] = 1;
    }
  }

  TransitionKernel k;
  k.cell_state.assign(n, -1);
  for (int idx = 0; idx < n; ++idx) {
    if (!g.blocked[idx]) {
      k.cell_state[idx] = static_cast<int>(k.state_cell.size());
      k.state_cell.push_back(idx);
    }
  }
  k.num_states = static_cast<int>(k.state_cell.size()) + 1;
  k.sink = k.num_states - 1;
  k.state_cell.push_back(-1);

  k.succ.assign(k.num_states, {0, 0, 0, 0});
  for (int s = 0; s < k.num_states; ++s) {
    for (int a = 0; a < kNumActions; ++a) {
      if (s == k.sink) {
        k.succ[s][a] = k.sink;
        continue;
      }
      int idx = k.state_cell[s];
      if (g.goal[idx]) {
        k.succ[s][a] = k.sink;
        continue;
      }
      Cell c = g.cell_at(idx);
      Cell t{c.x + kActionDx[a], c.y + kActionDy[a]};
      if (!g.in_bounds(t)) {
        k.succ[s][a] = s;
        continue;
      }
      int tidx = g.cell_index(t);
      if (g.blocked[tidx] || barrier_blocked[tidx]) {
        k.succ[s][a] = s;
      } else {
        k.succ[s][a] = k.cell_state[tidx];
      }
    }
  }
  return k;
}

double reward(const Scenario& sc, const TransitionKernel& k, int state,
              Action a) {
  (void)a;
  if (state == k.sink) return 0.0;
  int idx = k.state_cell[state];
  return sc.grid.goal[idx] ? sc.reward.goal : sc.reward.step;
}

std::vector<double> reward_vector(const Scenario& sc,
                                  const TransitionKernel& k) {
  std::vector<double> r(k.num_states, 0.0);
  for (int s = 0; s < k.num_states; ++s) r[s] = reward(sc, k, s, Action::Up);
  return r;
}

std::vector<int> reachable_states(const TransitionKernel& k, int start,
                                  int max_steps) {
  std::vector<int> dist(k.num_states, -1);
  std::deque<int> queue;
  dist[start] = 0;
  queue.push_back(start);
  while (!queue.empty()) {
    int s = queue.front();
    queue.pop_front();
    if (dist[s] >= max_steps) continue;
    for (int a = 0; a < kNumActions; ++a) {
      int t = k.succ[s][a];
      if (dist[t] < 0) {
        dist[t] = dist[s] + 1;
        queue.push_back(t);
      }
    }
  }
  std::vector<int> out;
  for (int s = 0; s < k.num_states; ++s) {
    if (dist[s] >= 0 && s != k.sink) out.push_back(s);
  }
  return out;
}

}  // namespace repcon

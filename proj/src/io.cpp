#include "repcon/io.hpp"

#include <algorithm>
#include <array>
#include <cstring>
#include <ctime>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

namespace repcon {

using nlohmann::json;

namespace {

json cell_json(const GridSpec& grid, int cell_index) {
  Cell c = grid.cell_at(cell_index);
  return json::array({c.x, c.y});
}

json row_json(const std::array<double, kNumActions>& row) {
  json j = json::object();
  for (int a = 0; a < kNumActions; ++a) {
    j[std::string(1, kActionLetter[a])] = row[a];
  }
  return j;
}

std::array<double, kNumActions> row_from_json(const json& j) {
  std::array<double, kNumActions> row{0.0, 0.0, 0.0, 0.0};
  for (int a = 0; a < kNumActions; ++a) {
    row[a] = j.at(std::string(1, kActionLetter[a])).get<double>();
  }
  return row;
}

std::string path_string(const GameTree& tree, int node) {
  std::string out;
  for (int cur = node; tree.parent[cur] >= 0; cur = tree.parent[cur]) {
    out.push_back(kActionLetter[tree.action_in[cur]]);
  }
  std::reverse(out.begin(), out.end());
  return out;
}

}  // namespace

json scenario_to_json(const Scenario& sc) {
  json j;
  j["schema"] = 1;
  j["grid"]["width"] = sc.grid.width;
  j["grid"]["height"] = sc.grid.height;
  json blocked = json::array();
  json goal = json::array();
  for (int idx = 0; idx < sc.grid.num_cells(); ++idx) {
    if (sc.grid.blocked[idx]) blocked.push_back(cell_json(sc.grid, idx));
    if (sc.grid.goal[idx]) goal.push_back(cell_json(sc.grid, idx));
  }
  j["grid"]["blocked"] = blocked;
  j["grid"]["goal"] = goal;
  j["grid"]["start"] = json::array({sc.grid.start.x, sc.grid.start.y});
  j["barriers"] = json::array();
  for (const BarrierConfig& b : sc.barriers) {
    json jb;
    jb["id"] = b.id;
    jb["blocked"] = json::array();
    for (const Cell& c : b.blocked) jb["blocked"].push_back({c.x, c.y});
    j["barriers"].push_back(jb);
  }
  j["representations"] = json::array();
  for (const Representation& rep : sc.representations) {
    json jr;
    jr["type"] = rep.name;
    jr["superstates"] = json::array();
    for (const auto& group : rep.superstates) {
      json jg = json::array();
      for (const Cell& c : group) jg.push_back({c.x, c.y});
      jr["superstates"].push_back(jg);
    }
    j["representations"].push_back(jr);
  }
  j["prior"] = sc.prior;
  j["horizon"] = sc.horizon;
  j["discount"] = sc.discount;
  j["reward"]["step"] = sc.reward.step;
  j["reward"]["goal"] = sc.reward.goal;
  return j;
}

json value_table_to_json(const Scenario& sc, const ValueTable& table) {
  json j;
  j["schema"] = 1;
  j["mu_epsilon"] = table.mu_epsilon;
  j["seed"] = table.seed;
  j["cells"] = json::array();
  for (int cell : table.states) j["cells"].push_back(cell_json(sc.grid, cell));
  j["value"] = table.value;
  j["policy"] = json::array();
  for (int theta = 0; theta < sc.num_types(); ++theta) {
    json jt = json::array();
    for (int omega = 0; omega < sc.num_barriers(); ++omega) {
      json jw = json::array();
      for (const PolicyTable& p : table.policy[theta][omega]) {
        json jp = json::array();
        for (const auto& row : p.rows) jp.push_back(row_json(row));
        jw.push_back(jp);
      }
      jt.push_back(jw);
    }
    j["policy"].push_back(jt);
  }
  return j;
}

ValueTable value_table_from_json(const Scenario& sc, const json& j) {
  ValueTable table;
  table.mu_epsilon = j.value("mu_epsilon", 1e-5);
  table.seed = j.value("seed", 0ull);
  for (const json& jc : j.at("cells")) {
    Cell c{jc[0].get<int>(), jc[1].get<int>()};
    if (!sc.grid.in_bounds(c)) {
      throw ValidationError(fmt::format(
          "value table cell ({},{}) is outside the grid", c.x, c.y));
    }
    int idx = sc.grid.cell_index(c);
    table.index[idx] = static_cast<int>(table.states.size());
    table.states.push_back(idx);
  }
  table.value = j.at("value")
                    .get<std::vector<std::vector<std::vector<double>>>>();
  if (static_cast<int>(table.value.size()) != sc.num_types()) {
    throw ValidationError("value table type count mismatch");
  }
  for (const auto& per_type : table.value) {
    if (static_cast<int>(per_type.size()) != sc.num_barriers()) {
      throw ValidationError("value table barrier count mismatch");
    }
    for (const auto& per_barrier : per_type) {
      if (per_barrier.size() != table.states.size()) {
        throw ValidationError("value table cell count mismatch");
      }
    }
  }
  table.policy.assign(
      sc.num_types(),
      std::vector<std::vector<PolicyTable>>(
          sc.num_barriers(), std::vector<PolicyTable>(table.states.size())));
  const json& jp = j.at("policy");
  for (int theta = 0; theta < sc.num_types(); ++theta) {
    for (int omega = 0; omega < sc.num_barriers(); ++omega) {
      for (size_t k = 0; k < table.states.size(); ++k) {
        const json& rows = jp.at(theta).at(omega).at(k);
        PolicyTable& p = table.policy[theta][omega][k];
        for (const json& row : rows) p.rows.push_back(row_from_json(row));
      }
    }
  }
  return table;
}

json equilibrium_to_json(const Scenario& sc, const GameTree& tree,
                         const EquilibriumSolution& eq) {
  json j;
  j["schema"] = 1;
  j["value"] = eq.value;
  j["stage_value"] = eq.stage_value;
  j["leaf_value"] = eq.leaf_value;
  j["value_fresh_clock"] = eq.value_fresh_clock;
  j["relaxed_value"] = eq.lp_value;
  j["best_restart"] = eq.best_restart;

  j["attacker"] = json::array();
  for (int theta = 0; theta < sc.num_types(); ++theta) {
    json jt;
    jt["type"] = sc.representations[theta].name;
    jt["rows"] = json::array();
    for (const auto& row : eq.attacker.policy[theta].rows) {
      jt["rows"].push_back(row_json(row));
    }
    j["attacker"].push_back(jt);
  }

  const int nt = sc.num_types();
  json reached = json::array();
  for (int node = tree.first_leaf; node < tree.num_nodes; ++node) {
    double mass = 0.0;
    for (int theta = 0; theta < nt; ++theta) {
      mass += eq.occupation.node_mass[theta][node];
    }
    if (mass <= 0.0) continue;
    int leaf = node - tree.first_leaf;
    json jl;
    jl["path"] = path_string(tree, node);
    jl["mass"] = mass;
    jl["belief"] = eq.beliefs[node];
    json sigma = json::object();
    for (int omega = 0; omega < sc.num_barriers(); ++omega) {
      if (eq.defender.sigma[leaf][omega] > 0.0) {
        sigma[sc.barriers[omega].id] = eq.defender.sigma[leaf][omega];
      }
    }
    jl["deployment"] = sigma;
    reached.push_back(jl);
  }
  j["reached_leaves"] = reached;
  j["defender_tie_lp"] = {{"used", eq.defender.tie_lp_used},
                          {"feasible", eq.defender.tie_lp_feasible},
                          {"slack", eq.defender.tie_slack}};
  j["verification"] = verification_to_json(eq.verification);
  return j;
}

json verification_to_json(const VerificationReport& r) {
  json j;
  j["ok"] = r.ok();
  j["beliefs_consistent"] = r.beliefs_consistent;
  j["belief_error"] = r.belief_error;
  j["defender_best_response"] = r.defender_best_response;
  j["defender_slack"] = r.defender_slack;
  j["attacker_sad_stable"] = r.attacker_sad_stable;
  j["attacker_gain"] = r.attacker_gain;
  j["unrestricted_gap"] = r.unrestricted_gap;
  j["value_recursion_consistent"] = r.proposition_spot_check;
  j["notes"] = r.notes;
  return j;
}

json comparison_to_json(const ComparisonReport& r) {
  json j;
  j["schema"] = 1;
  j["equilibrium_value"] = r.equilibrium_value;
  j["baseline_value"] = r.baseline_value;
  j["relaxed_value"] = r.lp_value;
  j["concealment_gain"] = r.concealment_gain;
  j["relative_gain"] = r.relative_gain;
  j["representation_constraint_gap"] = r.sad_gap;
  j["observation_stage_constant"] = r.stage_constant;
  j["fresh_clock"] = {{"equilibrium_value", r.equilibrium_fresh},
                      {"baseline_value", r.baseline_fresh},
                      {"concealment_gain", r.gain_fresh},
                      {"relative_gain", r.relative_gain_fresh},
                      {"relative_gain_movement_stage",
                       r.relative_gain_movement_fresh}};
  return j;
}

json rollout_to_json(const Scenario& sc, const Rollout& r) {
  json j;
  j["type"] = sc.representations[r.type].name;
  j["barrier"] = sc.barriers[r.barrier].id;
  j["payoff"] = r.payoff;
  j["absorbed"] = r.absorbed;
  j["truncation_residual"] = r.truncation_residual;
  std::string actions;
  for (int a : r.actions) actions.push_back(kActionLetter[a]);
  j["actions"] = actions;
  return j;
}

json monte_carlo_to_json(const MonteCarloResult& r) {
  json j;
  j["mean"] = r.mean;
  j["std_error"] = r.std_error;
  j["truncation_bound"] = r.truncation_bound;
  j["rollouts"] = r.n;
  return j;
}

std::string value_heatmap_csv(const Scenario& sc, const ValueTable& table,
                              int theta, int omega) {
  std::ostringstream out;
  out << "x,y,value\n";
  for (int y = 0; y < sc.grid.height; ++y) {
    for (int x = 0; x < sc.grid.width; ++x) {
      int idx = sc.grid.cell_index({x, y});
      if (!sc.grid.blocked[idx] && table.has(idx)) {
        out << fmt::format("{},{},{:.6f}\n", x, y, table.v(theta, omega, idx));
      }
    }
  }
  return out.str();
}

json manifest_to_json(const RunManifest& m) {
  json j;
  j["schema"] = 1;
  j["command"] = m.command;
  j["args"] = m.args;
  j["seed"] = m.seed;
  j["jobs"] = m.jobs;
  j["tolerance"] = m.tolerance;
  j["scenario"] = m.scenario_path;
  j["scenario_sha256"] = m.scenario_sha256;
  j["started_utc"] = m.started_utc;
  j["wall_seconds"] = m.wall_seconds;
  j["outputs"] = m.outputs;
  return j;
}

namespace {

struct Sha256 {
  uint32_t h[8] = {0x6a09e667u, 0xbb67ae85u, 0x3c6ef372u, 0xa54ff53au,
                   0x510e527fu, 0x9b05688cu, 0x1f83d9abu, 0x5be0cd19u};
  uint8_t block[64];
  uint64_t total = 0;
  size_t fill = 0;

  static uint32_t rotr(uint32_t x, int n) {
    return (x >> n) | (x << (32 - n));
  }

  void compress(const uint8_t* p) {
    static const uint32_t k[64] = {
        0x428a2f98u, 0x71374491u, 0xb5c0fbcfu, 0xe9b5dba5u, 0x3956c25bu,
        0x59f111f1u, 0x923f82a4u, 0xab1c5ed5u, 0xd807aa98u, 0x12835b01u,
        0x243185beu, 0x550c7dc3u, 0x72be5d74u, 0x80deb1feu, 0x9bdc06a7u,
        0xc19bf174u, 0xe49b69c1u, 0xefbe4786u, 0x0fc19dc6u, 0x240ca1ccu,
        0x2de92c6fu, 0x4a7484aau, 0x5cb0a9dcu, 0x76f988dau, 0x983e5152u,
        0xa831c66du, 0xb00327c8u, 0xbf597fc7u, 0xc6e00bf3u, 0xd5a79147u,
        0x06ca6351u, 0x14292967u, 0x27b70a85u, 0x2e1b2138u, 0x4d2c6dfcu,
        0x53380d13u, 0x650a7354u, 0x766a0abbu, 0x81c2c92eu, 0x92722c85u,
        0xa2bfe8a1u, 0xa81a664bu, 0xc24b8b70u, 0xc76c51a3u, 0xd192e819u,
        0xd6990624u, 0xf40e3585u, 0x106aa070u, 0x19a4c116u, 0x1e376c08u,
        0x2748774cu, 0x34b0bcb5u, 0x391c0cb3u, 0x4ed8aa4au, 0x5b9cca4fu,
        0x682e6ff3u, 0x748f82eeu, 0x78a5636fu, 0x84c87814u, 0x8cc70208u,
        0x90befffau, 0xa4506cebu, 0xbef9a3f7u, 0xc67178f2u};
    uint32_t w[64];
    for (int i = 0; i < 16; ++i) {
      w[i] = (uint32_t(p[4 * i]) << 24) | (uint32_t(p[4 * i + 1]) << 16) |
             (uint32_t(p[4 * i + 2]) << 8) | uint32_t(p[4 * i + 3]);
    }
    for (int i = 16; i < 64; ++i) {
      uint32_t s0 = rotr(w[i - 15], 7) ^ rotr(w[i - 15], 18) ^ (w[i - 15] >> 3);
      uint32_t s1 = rotr(w[i - 2], 17) ^ rotr(w[i - 2], 19) ^ (w[i - 2] >> 10);
      w[i] = w[i - 16] + s0 + w[i - 7] + s1;
    }
    uint32_t a = h[0], b = h[1], c = h[2], d = h[3], e = h[4], f = h[5],
             g = h[6], hh = h[7];
    for (int i = 0; i < 64; ++i) {
      uint32_t s1 = rotr(e, 6) ^ rotr(e, 11) ^ rotr(e, 25);
      uint32_t ch = (e & f) ^ (~e & g);
      uint32_t t1 = hh + s1 + ch + k[i] + w[i];
      uint32_t s0 = rotr(a, 2) ^ rotr(a, 13) ^ rotr(a, 22);
      uint32_t maj = (a & b) ^ (a & c) ^ (b & c);
      uint32_t t2 = s0 + maj;
      hh = g;
      g = f;
      f = e;
      e = d + t1;
      d = c;
      c = b;
      b = a;
      a = t1 + t2;
    }
    h[0] += a;
    h[1] += b;
    h[2] += c;
    h[3] += d;
    h[4] += e;
    h[5] += f;
    h[6] += g;
    h[7] += hh;
  }

  void update(const uint8_t* data, size_t len) {
    total += len;
    while (len > 0) {
      size_t take = std::min(len, sizeof(block) - fill);
      std::memcpy(block + fill, data, take);
      fill += take;
      data += take;
      len -= take;
      if (fill == sizeof(block)) {
        compress(block);
        fill = 0;
      }
    }
  }

  std::string finish() {
    uint64_t bits = total * 8;
    uint8_t pad = 0x80;
    update(&pad, 1);
    uint8_t zero = 0;
    while (fill != 56) update(&zero, 1);
    uint8_t len[8];
    for (int i = 0; i < 8; ++i) len[i] = uint8_t(bits >> (56 - 8 * i));
    update(len, 8);
    std::string out;
    for (uint32_t word : h) out += fmt::format("{:08x}", word);
    return out;
  }
};

}  // namespace

std::string sha256_hex(const std::string& bytes) {
  Sha256 hasher;
  hasher.update(reinterpret_cast<const uint8_t*>(bytes.data()), bytes.size());
  return hasher.finish();
}

std::string utc_timestamp() {
  std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw ValidationError(fmt::format("cannot open '{}'", path));
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::string& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw ValidationError(fmt::format("cannot write '{}'", path));
  }
  out << contents;
}

}  // namespace repcon

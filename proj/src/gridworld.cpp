#include "tvin/gridworld.hpp"

#include <algorithm>
#include <deque>

namespace tvin {

namespace {

const DomainSpec kNews{Domain::News, {"East", "West", "North", "South"}, 1, 1};
const DomainSpec kMoore{Domain::Moore, {"East", "West", "North", "South", "NE", "NW", "SE", "SW"},
                        1, 1};
const DomainSpec kDrive{Domain::Drive, {"MoveForward", "TurnLeft", "TurnRight"}, 4, 4};

// Unit offsets (di, dj) per action for the planar domains.
constexpr std::array<std::array<int, 2>, 8> kMooreOffsets{{
    {0, 1},    // East
    {0, -1},   // West
    {-1, 0},   // North
    {1, 0},    // South
    {-1, 1},   // NE
    {-1, -1},  // NW
    {1, 1},    // SE
    {1, -1},   // SW
}};

// Facing direction per orientation index: N, E, S, W.
constexpr std::array<std::array<int, 2>, 4> kFacing{{{-1, 0}, {0, 1}, {1, 0}, {0, -1}}};

std::vector<int> component_of_goal(const GridMap& map) {
  // 4-connected flood fill from the goal over free cells.
  std::vector<int> seen(static_cast<size_t>(map.m * map.m), 0);
  std::deque<std::pair<int, int>> q;
  q.emplace_back(map.goal_i, map.goal_j);
  seen[static_cast<size_t>(map.goal_i * map.m + map.goal_j)] = 1;
  while (!q.empty()) {
    auto [i, j] = q.front();
    q.pop_front();
    for (int a = 0; a < 4; ++a) {
      const int ni = i + kMooreOffsets[static_cast<size_t>(a)][0];
      const int nj = j + kMooreOffsets[static_cast<size_t>(a)][1];
      if (!map.in_bounds(ni, nj) || map.obstacle(ni, nj)) continue;
      int& s = seen[static_cast<size_t>(ni * map.m + nj)];
      if (!s) {
        s = 1;
        q.emplace_back(ni, nj);
      }
    }
  }
  return seen;
}

}  // namespace

const DomainSpec& domain_spec(Domain d) {
  switch (d) {
    case Domain::News: return kNews;
    case Domain::Moore: return kMoore;
    case Domain::Drive: return kDrive;
  }
  throw std::invalid_argument("unknown domain");
}

std::optional<Domain> parse_domain(const std::string& name) {
  if (name == "news" || name == "NEWS") return Domain::News;
  if (name == "moore" || name == "Moore" || name == "MOORE") return Domain::Moore;
  if (name == "drive" || name == "Drive" || name == "DRIVE") return Domain::Drive;
  return std::nullopt;
}

const char* domain_name(Domain d) {
  switch (d) {
    case Domain::News: return "news";
    case Domain::Moore: return "moore";
    case Domain::Drive: return "drive";
  }
  return "?";
}

std::optional<int> parse_action(const DomainSpec& spec, const std::string& name) {
  for (int a = 0; a < spec.num_actions(); ++a)
    if (spec.actions[static_cast<size_t>(a)] == name) return a;
  // Short aliases: N/S/E/W for the cardinal moves, F/L/R for Drive.
  static const std::vector<std::pair<std::string, std::string>> aliases = {
      {"E", "East"}, {"W", "West"}, {"N", "North"},       {"S", "South"},
      {"F", "MoveForward"}, {"L", "TurnLeft"}, {"R", "TurnRight"}, {"Forward", "MoveForward"},
  };
  for (const auto& [alias, full] : aliases)
    if (alias == name) return parse_action(spec, full);
  return std::nullopt;
}

int GridMap::obstacle_count() const {
  int n = 0;
  for (uint8_t o : obstacles) n += o;
  return n;
}

GridMap generate_obstacle_map(int m, double density, uint64_t seed) {
  if (m < 3) throw std::invalid_argument("generate_obstacle_map: m must be >= 3");
  if (density < 0.0 || density >= 1.0)
    throw std::invalid_argument("generate_obstacle_map: density must be in [0,1)");
  Rng rng(seed);
  for (int attempt = 0; attempt < 100; ++attempt) {
    GridMap map;
    map.m = m;
    map.obstacles.assign(static_cast<size_t>(m * m), 0);
    std::vector<int> free_cells;
    for (int c = 0; c < m * m; ++c) {
      if (rng.uniform() < density)
        map.obstacles[static_cast<size_t>(c)] = 1;
      else
        free_cells.push_back(c);
    }
    if (free_cells.size() < 2) continue;
    const int goal = free_cells[static_cast<size_t>(rng.uniform_int(static_cast<int>(free_cells.size())))];
    map.goal_i = goal / m;
    map.goal_j = goal % m;
    map.goal_o = rng.uniform_int(4);
    const auto comp = component_of_goal(map);
    int connected = 0;
    for (int s : comp) connected += s;
    if (connected >= 2) return map;
  }
  throw DataError("generate_obstacle_map: retry budget exhausted at density " +
                  std::to_string(density));
}

GridMap generate_maze_backtracker(int m, uint64_t seed) {
  if (m < 3 || m % 2 == 0)
    throw std::invalid_argument("generate_maze_backtracker: m must be odd and >= 3");
  Rng rng(seed);
  GridMap map;
  map.m = m;
  map.obstacles.assign(static_cast<size_t>(m * m), 1);
  // Lattice nodes sit at even coordinates; carving an edge opens the cell
  // between two nodes. The result is a spanning tree, i.e. a perfect maze.
  const int k = (m + 1) / 2;  // nodes per side
  auto node_cell = [&](int ni, int nj) { return std::pair<int, int>{2 * ni, 2 * nj}; };
  std::vector<uint8_t> visited(static_cast<size_t>(k * k), 0);
  std::vector<std::pair<int, int>> stack;
  const int start_i = rng.uniform_int(k), start_j = rng.uniform_int(k);
  stack.emplace_back(start_i, start_j);
  visited[static_cast<size_t>(start_i * k + start_j)] = 1;
  {
    auto [ci, cj] = node_cell(start_i, start_j);
    map.obstacles[static_cast<size_t>(ci * m + cj)] = 0;
  }
  constexpr std::array<std::array<int, 2>, 4> dirs{{{0, 1}, {0, -1}, {-1, 0}, {1, 0}}};
  while (!stack.empty()) {
    auto [ni, nj] = stack.back();
    std::array<int, 4> order{0, 1, 2, 3};
    for (int i = 3; i > 0; --i) std::swap(order[static_cast<size_t>(i)],
                                          order[static_cast<size_t>(rng.uniform_int(i + 1))]);
    bool advanced = false;
    for (int d : order) {
      const int ti = ni + dirs[static_cast<size_t>(d)][0];
      const int tj = nj + dirs[static_cast<size_t>(d)][1];
      if (ti < 0 || ti >= k || tj < 0 || tj >= k) continue;
      if (visited[static_cast<size_t>(ti * k + tj)]) continue;
      visited[static_cast<size_t>(ti * k + tj)] = 1;
      auto [ci, cj] = node_cell(ni, nj);
      auto [di, dj] = node_cell(ti, tj);
      map.obstacles[static_cast<size_t>(((ci + di) / 2) * m + (cj + dj) / 2)] = 0;
      map.obstacles[static_cast<size_t>(di * m + dj)] = 0;
      stack.emplace_back(ti, tj);
      advanced = true;
      break;
    }
    if (!advanced) stack.pop_back();
  }
  std::vector<int> corridor;
  for (int c = 0; c < m * m; ++c)
    if (!map.obstacles[static_cast<size_t>(c)]) corridor.push_back(c);
  const int goal = corridor[static_cast<size_t>(rng.uniform_int(static_cast<int>(corridor.size())))];
  map.goal_i = goal / m;
  map.goal_j = goal % m;
  map.goal_o = rng.uniform_int(4);
  return map;
}

GridMap generate_map(const MapGenConfig& cfg, uint64_t seed) {
  return cfg.kind == MapGenConfig::Kind::Maze
             ? generate_maze_backtracker(cfg.m, seed)
             : generate_obstacle_map(cfg.m, cfg.density, seed);
}

StepResult step(const DomainSpec& spec, const GridMap& map, const AgentState& s, int action) {
  if (action < 0 || action >= spec.num_actions())
    throw std::invalid_argument("step: action out of range");
  if (spec.id == Domain::Drive) {
    if (action == 1) return {{s.i, s.j, (s.o + 3) % 4}, false};  // TurnLeft
    if (action == 2) return {{s.i, s.j, (s.o + 1) % 4}, false};  // TurnRight
    const auto& d = kFacing[static_cast<size_t>(s.o)];
    const int ni = s.i + d[0], nj = s.j + d[1];
    if (!map.in_bounds(ni, nj) || map.obstacle(ni, nj)) return {s, true};
    return {{ni, nj, s.o}, false};
  }
  const auto& d = kMooreOffsets[static_cast<size_t>(action)];
  const int ni = s.i + d[0], nj = s.j + d[1];
  if (!map.in_bounds(ni, nj) || map.obstacle(ni, nj)) return {s, true};
  return {{ni, nj, 0}, false};
}

ExpertPolicy shortest_path_policy(const DomainSpec& spec, const GridMap& map,
                                  bool orientation_strict) {
  const int m = map.m;
  const int orient = spec.orientation_count;
  const int n_states = orient * m * m;
  ExpertPolicy pol;
  pol.spec = &spec;
  pol.m = m;
  pol.dist.assign(static_cast<size_t>(n_states), kUnreachable);
  pol.opt_action.assign(static_cast<size_t>(n_states), kNoAction);

  auto idx = [&](int i, int j, int o) { return (o * m + i) * m + j; };
  std::deque<int> frontier;
  auto seed_goal = [&](int o) {
    const int g = idx(map.goal_i, map.goal_j, o);
    pol.dist[static_cast<size_t>(g)] = 0;
    frontier.push_back(g);
  };
  if (spec.id == Domain::Drive && orientation_strict)
    seed_goal(map.goal_o);
  else
    for (int o = 0; o < orient; ++o) seed_goal(o);

  // Backward BFS: relax predecessors of each settled state. A predecessor of
  // s' is any (s, a) with step(s, a) = s' and not blocked.
  while (!frontier.empty()) {
    const int cur = frontier.front();
    frontier.pop_front();
    const int cj = cur % m, ci = (cur / m) % m, co = cur / (m * m);
    const int d = pol.dist[static_cast<size_t>(cur)];
    auto relax = [&](const AgentState& s, int action) {
      if (map.obstacle(s.i, s.j)) return;
      const int si = idx(s.i, s.j, s.o);
      if (pol.dist[static_cast<size_t>(si)] != kUnreachable) return;
      const StepResult r = step(spec, map, s, action);
      if (r.blocked || !(r.next == AgentState{ci, cj, co})) return;
      pol.dist[static_cast<size_t>(si)] = d + 1;
      pol.opt_action[static_cast<size_t>(si)] = action;
      frontier.push_back(si);
    };
    if (spec.id == Domain::Drive) {
      // MoveForward from the cell behind, same facing; turns from same cell.
      const auto& f = kFacing[static_cast<size_t>(co)];
      const int pi = ci - f[0], pj = cj - f[1];
      if (map.in_bounds(pi, pj)) relax({pi, pj, co}, 0);
      relax({ci, cj, (co + 1) % 4}, 1);  // TurnLeft lands here from o+1
      relax({ci, cj, (co + 3) % 4}, 2);  // TurnRight lands here from o-1
    } else {
      for (int a = 0; a < spec.num_actions(); ++a) {
        const auto& off = kMooreOffsets[static_cast<size_t>(a)];
        const int pi = ci - off[0], pj = cj - off[1];
        if (map.in_bounds(pi, pj)) relax({pi, pj, 0}, a);
      }
    }
  }
  // Prefer the lowest-index optimal action everywhere; BFS settles each state
  // once, so re-scan for action ties against the final distances.
  for (int o = 0; o < orient; ++o)
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j) {
        const int si = idx(i, j, o);
        if (pol.dist[static_cast<size_t>(si)] <= 0) continue;
        const AgentState s{i, j, o};
        for (int a = 0; a < spec.num_actions(); ++a) {
          const StepResult r = step(spec, map, s, a);
          if (r.blocked) continue;
          const int nd = pol.dist[static_cast<size_t>(idx(r.next.i, r.next.j, r.next.o))];
          if (nd == pol.dist[static_cast<size_t>(si)] - 1) {
            pol.opt_action[static_cast<size_t>(si)] = a;
            break;
          }
        }
      }
  return pol;
}

std::vector<int> ExpertPolicy::optimal_actions(const GridMap& map, const AgentState& s) const {
  std::vector<int> out;
  const int d = distance(s);
  if (d <= 0) return out;
  for (int a = 0; a < spec->num_actions(); ++a) {
    const StepResult r = step(*spec, map, s, a);
    if (r.blocked) continue;
    if (distance(r.next) == d - 1) out.push_back(a);
  }
  return out;
}

Tensor render_observation(const DomainSpec& spec, const GridMap& map) {
  const int m = map.m;
  Tensor obs({spec.obs_channels(), m, m});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j)
      obs.at(0, i, j) = map.obstacle(i, j) ? 1.0f : 0.0f;
  const int goal_ch = spec.id == Domain::Drive ? 1 + map.goal_o : 1;
  obs.at(goal_ch, map.goal_i, map.goal_j) = 1.0f;
  return obs;
}

Dataset sample_dataset(const DomainSpec& spec, int n_maps, int trajs_per_map,
                       const MapGenConfig& gen, uint64_t seed) {
  if (n_maps < 1) throw std::invalid_argument("sample_dataset: n_maps must be >= 1");
  Dataset ds;
  ds.domain = spec.id;
  ds.m = gen.m;
  Rng master(seed);
  for (int mi = 0; mi < n_maps; ++mi) {
    GridMap map;
    ExpertPolicy pol;
    std::vector<int> start_pool;  // state indices with dist >= 1
    bool usable = false;
    for (int attempt = 0; attempt < 100 && !usable; ++attempt) {
      const uint64_t map_seed =
          (static_cast<uint64_t>(master.next_u32()) << 32) | master.next_u32();
      map = generate_map(gen, map_seed);
      pol = shortest_path_policy(spec, map);
      start_pool.clear();
      for (size_t si = 0; si < pol.dist.size(); ++si)
        if (pol.dist[si] >= 1) start_pool.push_back(static_cast<int>(si));
      usable = !start_pool.empty();
    }
    if (!usable) throw DataError("sample_dataset: could not generate a usable map");
    ds.maps.push_back(map);
    const int m = map.m;
    for (int t = 0; t < trajs_per_map; ++t) {
      const int si = start_pool[static_cast<size_t>(
          master.uniform_int(static_cast<int>(start_pool.size())))];
      AgentState s{(si / m) % m, si % m, si / (m * m)};
      while (pol.distance(s) > 0) {
        const int a = pol.action(s);
        ds.samples.push_back({static_cast<uint32_t>(mi), s, static_cast<uint8_t>(a)});
        s = step(spec, map, s, a).next;
      }
    }
  }
  return ds;
}

std::vector<size_t> trajectory_starts(const DomainSpec& spec, const Dataset& ds) {
  std::vector<size_t> starts;
  for (size_t k = 0; k < ds.samples.size(); ++k) {
    if (k == 0) {
      starts.push_back(k);
      continue;
    }
    const Sample& prev = ds.samples[k - 1];
    const Sample& cur = ds.samples[k];
    if (prev.map_ref != cur.map_ref) {
      starts.push_back(k);
      continue;
    }
    const StepResult r =
        step(spec, ds.maps[prev.map_ref], prev.state, prev.expert_action);
    if (!(r.next == cur.state)) starts.push_back(k);
  }
  return starts;
}

}  // namespace tvin

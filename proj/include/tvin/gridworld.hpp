#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tvin/rng.hpp"
#include "tvin/tensor.hpp"

namespace tvin {

enum class Domain : uint8_t { News = 0, Moore = 1, Drive = 2 };

/// Orientation indices for Drive: 0=North, 1=East, 2=South, 3=West.
/// Row 0 is the north edge, so North decreases i and East increases j.
struct DomainSpec {
  Domain id;
  std::vector<std::string> actions;  // order is fixed; it indexes conv channels
  int orientation_count;             // 1 for News/Moore, 4 for Drive
  int obs_goal_channels;             // goal-map channels in the observation

  int num_actions() const { return static_cast<int>(actions.size()); }
  int obs_channels() const { return 1 + obs_goal_channels; }
};

const DomainSpec& domain_spec(Domain d);
std::optional<Domain> parse_domain(const std::string& name);
const char* domain_name(Domain d);
/// Action index by name ("North", "NE", "MoveForward", ...); also accepts
/// the single-letter / short aliases used in --pairs flags.
std::optional<int> parse_action(const DomainSpec& spec, const std::string& name);

struct GridMap {
  int m = 0;
  std::vector<uint8_t> obstacles;  // m*m, row-major, 1 = obstacle
  int goal_i = 0, goal_j = 0;
  int goal_o = 0;  // used by Drive only

  bool obstacle(int i, int j) const { return obstacles[static_cast<size_t>(i * m + j)] != 0; }
  bool in_bounds(int i, int j) const { return i >= 0 && i < m && j >= 0 && j < m; }
  int obstacle_count() const;
};

struct AgentState {
  int i = 0, j = 0;
  int o = 0;  // always 0 for News/Moore

  bool operator==(const AgentState&) const = default;
};

struct StepResult {
  AgentState next;
  bool blocked = false;
};

/// One expert-labelled decision point.
struct Sample {
  uint32_t map_ref = 0;
  AgentState state;
  uint8_t expert_action = 0;
};

struct Dataset {
  Domain domain = Domain::News;
  int m = 0;
  std::vector<GridMap> maps;
  std::vector<Sample> samples;  // trajectory order, grouped by map
  std::string split;            // "train" or "test"; informational only
};

struct MapGenConfig {
  enum class Kind { RandomObstacles, Maze } kind = Kind::RandomObstacles;
  int m = 9;
  double density = 0.3;  // RandomObstacles only
};

/// Random obstacle layout: every non-goal cell is an obstacle with the given
/// probability, goal uniform among free cells. Regenerates (up to 100 tries)
/// until at least two free cells are 4-connected to the goal.
GridMap generate_obstacle_map(int m, double density, uint64_t seed);

/// Perfect maze via recursive backtracker on the even-coordinate cell
/// lattice; odd m only. Goal uniform over corridor cells.
GridMap generate_maze_backtracker(int m, uint64_t seed);

GridMap generate_map(const MapGenConfig& cfg, uint64_t seed);

/// Motion semantics. News/Moore displace by the action's offset; Drive moves
/// along the facing direction or turns in place. A move onto an obstacle or
/// off-grid leaves the state unchanged with blocked=true.
StepResult step(const DomainSpec& spec, const GridMap& map, const AgentState& s, int action);

constexpr int kNoAction = -1;
constexpr int kUnreachable = -1;

struct ExpertPolicy {
  const DomainSpec* spec = nullptr;
  int m = 0;
  std::vector<int> dist;        // per state; kUnreachable if cut off, 0 at goal
  std::vector<int> opt_action;  // per state; kNoAction at goal / unreachable

  int index(const AgentState& s) const { return (s.o * m + s.i) * m + s.j; }
  int distance(const AgentState& s) const { return dist[static_cast<size_t>(index(s))]; }
  int action(const AgentState& s) const { return opt_action[static_cast<size_t>(index(s))]; }
  /// All actions achieving dist[next] == dist[s] - 1 (co-optimal set).
  std::vector<int> optimal_actions(const GridMap& map, const AgentState& s) const;
};

/// Exact shortest paths by backward BFS over the domain's state graph, unit
/// cost per action (turns included for Drive). With orientation_strict the
/// Drive goal must also match the goal orientation; by default any facing at
/// the goal cell terminates.
ExpertPolicy shortest_path_policy(const DomainSpec& spec, const GridMap& map,
                                  bool orientation_strict = false);

/// Model input image. News/Moore: (2,m,m) = obstacle mask + goal one-hot.
/// Drive: (5,m,m) = obstacle mask + 4-channel goal map, one-hot at
/// (goal orientation, goal i, goal j).
Tensor render_observation(const DomainSpec& spec, const GridMap& map);

/// Expert dataset: per map, trajs_per_map uniformly chosen reachable non-goal
/// start states, each unrolled to the goal under the expert policy. One
/// Sample per visited non-goal state. Deterministic given the seed.
Dataset sample_dataset(const DomainSpec& spec, int n_maps, int trajs_per_map,
                       const MapGenConfig& gen, uint64_t seed);

/// First sample index of each trajectory. Recoverable from the sample stream
/// because consecutive samples of one trajectory are linked by step().
std::vector<size_t> trajectory_starts(const DomainSpec& spec, const Dataset& ds);

}  // namespace tvin

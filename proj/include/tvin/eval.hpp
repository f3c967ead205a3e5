#pragma once

#include <functional>
#include <string>
#include <vector>

#include "tvin/vin.hpp"

namespace tvin {

/// A policy bound to one map at a time. Model-backed policies cache the Q map
/// on bind so rollouts cost one attention lookup per step.
class Policy {
 public:
  virtual ~Policy() = default;
  virtual void bind_map(const GridMap& map) = 0;
  virtual int predict(const AgentState& s) = 0;
};

class ModelPolicy : public Policy {
 public:
  explicit ModelPolicy(PlannerModel& model) : model_(model) {}
  void bind_map(const GridMap& map) override {
    q_ = model_.q_map_values(render_observation(model_.spec(), map));
  }
  int predict(const AgentState& s) override { return model_.predict_from_q(q_, s); }

 private:
  PlannerModel& model_;
  Tensor q_;
};

/// The shortest-path expert as a Policy, for metric sanity checks.
class ExpertPolicyAdapter : public Policy {
 public:
  explicit ExpertPolicyAdapter(const DomainSpec& spec) : spec_(spec) {}
  void bind_map(const GridMap& map) override { pol_ = shortest_path_policy(spec_, map); }
  int predict(const AgentState& s) override { return pol_.action(s); }

 private:
  const DomainSpec& spec_;
  ExpertPolicy pol_;
};

struct RolloutResult {
  enum class Outcome { ReachedGoal, HitObstacle, StepLimit };
  std::vector<AgentState> path;  // starts with the start state
  Outcome outcome = Outcome::StepLimit;
  int steps = 0;
};

struct EvalOptions {
  int max_steps_factor = 8;     // rollout cap = factor * m
  bool strict_opt = false;      // credit only the labelled action, not co-optimal ones
  bool orientation_strict = false;  // Drive goal must match orientation
};

struct EvalReport {
  double pct_opt = 0.0;
  double pct_suc = 0.0;
  int64_t n_states = 0;
  int64_t n_trajectories = 0;
  struct PerMap {
    int map_index;
    int n_states, n_correct;
    int n_trajectories, n_success;
  };
  std::vector<PerMap> per_map;
};

/// Fraction (x100) of test samples whose predicted action is shortest-path
/// optimal. Any co-optimal action counts unless strict_opt is set, in which
/// case the prediction must equal the stored label.
double percent_optimal(Policy& policy, const Dataset& test, const EvalOptions& opts = {});

/// Greedy rollout until the goal cell, a blocked step, or the step cap.
RolloutResult rollout(Policy& policy, const DomainSpec& spec, const GridMap& map,
                      const AgentState& start, int max_steps, bool orientation_strict = false);

/// Fraction (x100) of rollouts from the test trajectory starts that reach the
/// goal without hitting an obstacle.
double percent_success(Policy& policy, const Dataset& test, const EvalOptions& opts = {});

/// Both metrics in one pass over the maps, with a per-map breakdown.
EvalReport evaluate(Policy& policy, const Dataset& test, const EvalOptions& opts = {});

struct ComparisonRow {
  std::string model;
  int n = 0;  // training maps the model saw
  std::string source;
  std::string target;
  EvalReport report;
};

/// One EvalReport row per named model, all on the same test set.
std::vector<ComparisonRow> compare(
    const std::vector<std::pair<std::string, PlannerModel*>>& models, const Dataset& test,
    const EvalOptions& opts = {});

std::string comparison_csv(const std::vector<ComparisonRow>& rows);

}  // namespace tvin

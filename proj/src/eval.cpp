#include "tvin/eval.hpp"

#include <algorithm>
#include <sstream>

namespace tvin {

namespace {

bool at_goal(const GridMap& map, const AgentState& s, bool orientation_strict) {
  if (s.i != map.goal_i || s.j != map.goal_j) return false;
  return !orientation_strict || s.o == map.goal_o;
}

}  // namespace

RolloutResult rollout(Policy& policy, const DomainSpec& spec, const GridMap& map,
                      const AgentState& start, int max_steps, bool orientation_strict) {
  if (!map.in_bounds(start.i, start.j) || map.obstacle(start.i, start.j))
    throw std::invalid_argument("rollout: start is not a free cell");
  RolloutResult result;
  result.path.push_back(start);
  AgentState s = start;
  while (true) {
    if (at_goal(map, s, orientation_strict)) {
      result.outcome = RolloutResult::Outcome::ReachedGoal;
      return result;
    }
    if (result.steps >= max_steps) {
      result.outcome = RolloutResult::Outcome::StepLimit;
      return result;
    }
    const int a = policy.predict(s);
    const StepResult r = step(spec, map, s, a);
    if (r.blocked) {
      result.outcome = RolloutResult::Outcome::HitObstacle;
      return result;
    }
    s = r.next;
    result.path.push_back(s);
    ++result.steps;
  }
}

EvalReport evaluate(Policy& policy, const Dataset& test, const EvalOptions& opts) {
  if (test.samples.empty()) throw std::invalid_argument("evaluate: empty test set");
  const DomainSpec& spec = domain_spec(test.domain);
  const int max_steps = opts.max_steps_factor * test.m;

  // Per-map sample ranges; samples are stored grouped by map.
  std::vector<std::pair<size_t, size_t>> ranges(test.maps.size(), {0, 0});
  for (size_t i = 0; i < test.samples.size(); ++i) {
    auto& r = ranges[test.samples[i].map_ref];
    if (r.second == 0) r.first = i;
    r.second = i + 1;
  }
  const std::vector<size_t> traj_starts = trajectory_starts(spec, test);

  EvalReport report;
  size_t next_traj = 0;
  for (size_t mi = 0; mi < test.maps.size(); ++mi) {
    const auto [lo, hi] = ranges[mi];
    if (hi == 0) continue;
    const GridMap& map = test.maps[mi];
    policy.bind_map(map);
    const ExpertPolicy oracle = shortest_path_policy(spec, map, opts.orientation_strict);
    EvalReport::PerMap pm{static_cast<int>(mi), 0, 0, 0, 0};
    for (size_t i = lo; i < hi; ++i) {
      const Sample& s = test.samples[i];
      const int pred = policy.predict(s.state);
      bool correct = pred == s.expert_action;
      if (!correct && !opts.strict_opt) {
        const auto co = oracle.optimal_actions(map, s.state);
        correct = std::find(co.begin(), co.end(), pred) != co.end();
      }
      pm.n_states += 1;
      pm.n_correct += correct ? 1 : 0;
      while (next_traj < traj_starts.size() && traj_starts[next_traj] == i) {
        const RolloutResult rr =
            rollout(policy, spec, map, s.state, max_steps, opts.orientation_strict);
        pm.n_trajectories += 1;
        pm.n_success += rr.outcome == RolloutResult::Outcome::ReachedGoal ? 1 : 0;
        ++next_traj;
      }
    }
    report.n_states += pm.n_states;
    report.n_trajectories += pm.n_trajectories;
    report.per_map.push_back(pm);
  }
  int64_t correct = 0, success = 0;
  for (const auto& pm : report.per_map) {
    correct += pm.n_correct;
    success += pm.n_success;
  }
  report.pct_opt = 100.0 * static_cast<double>(correct) / static_cast<double>(report.n_states);
  report.pct_suc =
      100.0 * static_cast<double>(success) / static_cast<double>(report.n_trajectories);
  return report;
}

double percent_optimal(Policy& policy, const Dataset& test, const EvalOptions& opts) {
  return evaluate(policy, test, opts).pct_opt;
}

double percent_success(Policy& policy, const Dataset& test, const EvalOptions& opts) {
  return evaluate(policy, test, opts).pct_suc;
}

std::vector<ComparisonRow> compare(
    const std::vector<std::pair<std::string, PlannerModel*>>& models, const Dataset& test,
    const EvalOptions& opts) {
  std::vector<ComparisonRow> rows;
  for (const auto& [name, model] : models) {
    if (model->config().domain != test.domain)
      throw std::invalid_argument("compare: model '" + name + "' domain " +
                                  domain_name(model->config().domain) +
                                  " does not match test domain " + domain_name(test.domain));
    ModelPolicy policy(*model);
    ComparisonRow row;
    row.model = name;
    row.n = static_cast<int>(test.maps.size());
    row.source = "-";
    row.target = std::string(domain_name(test.domain)) + "-" + std::to_string(test.m);
    row.report = evaluate(policy, test, opts);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string comparison_csv(const std::vector<ComparisonRow>& rows) {
  std::ostringstream out;
  out << "model,N,source,target,pct_opt,pct_suc\n";
  out.setf(std::ios::fixed);
  out.precision(2);
  for (const auto& r : rows)
    out << r.model << ',' << r.n << ',' << r.source << ',' << r.target << ',' << r.report.pct_opt
        << ',' << r.report.pct_suc << '\n';
  return out.str();
}

}  // namespace tvin

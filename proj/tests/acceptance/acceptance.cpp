// End-to-end acceptance suite. Each numbered check prints one PASS/FAIL line;
// the process exits nonzero if any check fails.

#include <chrono>
#include <cstring>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <vector>

#include "json.hpp"

#include "tvin/eval.hpp"
#include "tvin/harness.hpp"
#include "tvin/oracle_suites.hpp"
#include "tvin/transfer.hpp"

using namespace tvin;

namespace {

struct Outcome {
  bool pass;
  std::string detail;
};

struct Runner {
  int failures = 0;

  void run(int id, const std::string& name, const std::function<Outcome()>& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome out{false, ""};
    try {
      out = fn();
    } catch (const std::exception& e) {
      out.pass = false;
      out.detail = std::string("exception: ") + e.what();
    }
    const double secs = std::chrono::duration_cast<std::chrono::milliseconds>(
                            std::chrono::steady_clock::now() - t0)
                            .count() /
                        1000.0;
    if (!out.pass) ++failures;
    std::printf("[%2d] %s  %-38s (%.1f s)  %s\n", id, out.pass ? "PASS" : "FAIL", name.c_str(),
                secs, out.detail.c_str());
    std::fflush(stdout);
  }
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f", v);
  return buf;
}

}  // namespace

int main(int argc, char** argv) {
  std::string out_dir = "acceptance_runs";
  for (int i = 1; i < argc - 1; ++i) {
    if (std::string(argv[i]) == "--out") out_dir = argv[i + 1];
  }
  const int threads = harness::thread_budget(false);
  std::ostringstream sink;  // suite internals log here; criteria lines go to stdout

  Runner runner;

  runner.run(1, "gradient finite-difference suite", [&] {
    const auto t0 = std::chrono::steady_clock::now();
    const auto report = suites::run_gradient_suites(20, sink);
    const double secs = std::chrono::duration_cast<std::chrono::milliseconds>(
                            std::chrono::steady_clock::now() - t0)
                            .count() /
                        1000.0;
    std::string detail = "worst=" + std::to_string(report.worst) + " (" + report.worst_case + ")";
    if (secs >= 120.0) return Outcome{false, "over the 2 min budget; " + detail};
    return Outcome{report.pass, detail};
  });

  runner.run(2, "exact-VI equivalence (gamma .99)", [&] {
    const auto t0 = std::chrono::steady_clock::now();
    const auto report = suites::run_vi_equivalence(50, sink);
    const double secs = std::chrono::duration_cast<std::chrono::milliseconds>(
                            std::chrono::steady_clock::now() - t0)
                            .count() /
                        1000.0;
    std::string detail = "max_abs=" + std::to_string(report.worst);
    if (secs >= 60.0) return Outcome{false, "over the 1 min budget; " + detail};
    return Outcome{report.pass, detail};
  });

  runner.run(3, "expert scores exactly 100/100", [&] {
    for (Domain d : {Domain::News, Domain::Moore, Domain::Drive})
      for (int m : {9, 15})
        for (uint64_t seed : {1ull, 2ull}) {
          MapGenConfig gen;
          gen.m = m;
          gen.density = 0.3;
          const Dataset ds = sample_dataset(domain_spec(d), 10, 4, gen, seed);
          ExpertPolicyAdapter expert(domain_spec(d));
          const EvalReport report = evaluate(expert, ds);
          if (report.pct_opt != 100.0 || report.pct_suc != 100.0)
            return Outcome{false, std::string(domain_name(d)) + "-" + std::to_string(m) +
                                      " seed " + std::to_string(seed) + ": " +
                                      fmt(report.pct_opt) + "/" + fmt(report.pct_suc)};
        }
    return Outcome{true, "3 domains x 2 sizes x 2 seeds"};
  });

  runner.run(4, "identity transfer is bitwise exact", [&] {
    VinConfig cfg;
    cfg.domain = Domain::News;
    cfg.k = 20;
    cfg.hidden = 150;
    cfg.seed = 7;
    VinModel source(cfg);
    VinConfig tgt = cfg;
    tgt.seed = 8;
    TvinModel tvin = build_tvin(source, tgt, default_mapping(Domain::News, Domain::News));
    Rng rng(99);
    for (int trial = 0; trial < 1000; ++trial) {
      const GridMap map = generate_obstacle_map(9, 0.3, 1000 + static_cast<uint64_t>(trial));
      const Tensor obs = render_observation(source.spec(), map);
      const AgentState s{rng.uniform_int(9), rng.uniform_int(9), 0};
      const Tensor qs = source.q_map_values(obs);
      const Tensor qt = tvin.q_map_values(obs);
      const Tensor ps = attend(qs, s, 1);
      const Tensor pt = attend(qt, s, 1);
      if (std::memcmp(ps.data(), pt.data(), sizeof(float) * 4) != 0)
        return Outcome{false, "mismatch at trial " + std::to_string(trial)};
    }
    return Outcome{true, "1000 random maps/states"};
  });

  // Criteria 5, 6, 8 share one desk-preset run.
  const harness::ExperimentPreset* desk = harness::find_preset("news2moore-desk");
  std::vector<harness::RunRow> desk_rows;
  double desk_secs = 0.0;
  runner.run(5, "transfer helps at low data (+4 pts)", [&] {
    const auto t0 = std::chrono::steady_clock::now();
    const auto result = harness::run_experiment(*desk, out_dir, threads, sink);
    desk_secs = std::chrono::duration_cast<std::chrono::milliseconds>(
                    std::chrono::steady_clock::now() - t0)
                    .count() /
                1000.0;
    desk_rows = result.rows;
    const double vin_opt = harness::mean_metric(desk_rows, "VIN", 200, false);
    const double tvin_opt = harness::mean_metric(desk_rows, "TVIN", 200, false);
    const double vin_suc = harness::mean_metric(desk_rows, "VIN", 200, true);
    const double tvin_suc = harness::mean_metric(desk_rows, "TVIN", 200, true);
    const std::string detail = "opt " + fmt(tvin_opt) + " vs " + fmt(vin_opt) + ", suc " +
                               fmt(tvin_suc) + " vs " + fmt(vin_suc) + ", " + fmt(desk_secs) +
                               " s";
    if (desk_secs >= 1800.0) return Outcome{false, "over the 30 min budget; " + detail};
    return Outcome{tvin_opt >= vin_opt + 4.0 && tvin_suc >= vin_suc + 4.0, detail};
  });

  runner.run(6, "ordering VIN <= VIN_i <= TVIN (1.5 pt tie)", [&] {
    if (desk_rows.empty()) return Outcome{false, "desk preset unavailable"};
    const double vin = harness::mean_metric(desk_rows, "VIN", 200, false);
    const double vin_i = harness::mean_metric(desk_rows, "VIN_i", 200, false);
    const double tvin = harness::mean_metric(desk_rows, "TVIN", 200, false);
    const bool ok = vin <= vin_i + 1.5 && vin_i <= tvin + 1.5;
    return Outcome{ok, fmt(vin) + " <= " + fmt(vin_i) + " <= " + fmt(tvin)};
  });

  runner.run(7, "more transferred actions help", [&] {
    const harness::ExperimentPreset* preset = harness::find_preset("action-ablation");
    const auto result = harness::run_experiment(*preset, out_dir, threads, sink);
    std::vector<double> means;
    for (int pairs : preset->pair_counts)
      means.push_back(harness::mean_metric(result.rows, "TVIN", 200, false, 0, 0, pairs));
    std::string detail;
    for (double v : means) detail += fmt(v) + " ";
    bool monotone = true;
    for (size_t i = 1; i < means.size(); ++i)
      if (means[i] < means[i - 1] - 2.0) monotone = false;
    const bool big_gap = means.back() >= means.front() + 2.0;
    return Outcome{monotone && big_gap, "opt by pair count: " + detail};
  });

  runner.run(8, "the transfer gap shrinks with data", [&] {
    if (desk_rows.empty()) return Outcome{false, "desk preset unavailable"};
    const double gap_small = harness::mean_metric(desk_rows, "TVIN", 200, false) -
                             harness::mean_metric(desk_rows, "VIN", 200, false);
    const double gap_large = harness::mean_metric(desk_rows, "TVIN", 1000, false) -
                             harness::mean_metric(desk_rows, "VIN", 1000, false);
    return Outcome{gap_small > gap_large,
                   "gap@200=" + fmt(gap_small) + " gap@1000=" + fmt(gap_large)};
  });

  runner.run(9, "TVIN >= VIN across K and F", [&] {
    const harness::ExperimentPreset* preset = harness::find_preset("kf-sweep");
    const auto result = harness::run_experiment(*preset, out_dir, threads, sink);
    std::string detail;
    bool ok = true;
    for (int k : preset->sweep_k)
      for (int f : preset->sweep_f) {
        const double vin = harness::mean_metric(result.rows, "VIN", 200, false, k, f);
        const double tvin = harness::mean_metric(result.rows, "TVIN", 200, false, k, f);
        if (tvin < vin) ok = false;
        detail += "K" + std::to_string(k) + "F" + std::to_string(f) + ":" + fmt(tvin) + "/" +
                  fmt(vin) + " ";
      }
    return Outcome{ok, detail};
  });

  runner.run(10, "reference reruns hash identically", [&] {
    const harness::ExperimentPreset* preset = harness::find_preset("smoke");
    const auto a = harness::run_experiment(*preset, out_dir + "/rerun_a", 1, sink);
    const auto b = harness::run_experiment(*preset, out_dir + "/rerun_b", 1, sink);
    nlohmann::json ma, mb;
    std::ifstream(a.manifest_path) >> ma;
    std::ifstream(b.manifest_path) >> mb;
    if (ma["artifacts"] != mb["artifacts"])
      return Outcome{false, "artifact hashes differ between reruns"};
    return Outcome{true, std::to_string(ma["artifacts"].size()) + " artifacts identical"};
  });

  if (runner.failures == 0) {
    std::printf("acceptance: all criteria passed\n");
    return 0;
  }
  std::printf("acceptance: %d criteria FAILED\n", runner.failures);
  return 1;
}

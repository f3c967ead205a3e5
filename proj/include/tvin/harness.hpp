#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tvin/eval.hpp"
#include "tvin/transfer.hpp"

namespace tvin::harness {

/// FNV-1a 64-bit content hash; enough to assert artifact identity between
/// reruns.
uint64_t hash_bytes(const void* data, size_t n);
uint64_t hash_file(const std::string& path);
std::string hash_file_hex(const std::string& path);

int thread_budget(bool reference, int requested = 0);  // honors TVIN_THREADS

/// Runs independent jobs on up to `threads` workers and rethrows the first
/// failure. Jobs must not share mutable state; outputs go to disk.
void run_jobs(std::vector<std::function<void()>> jobs, int threads);

struct StageSettings {
  int k = 0;  // 0 = default for maze size
  int f = 3;
  int epochs = 30;
  float lr = 0.005f;
  int batch_size = 128;
  int hidden = 150;

  VinConfig to_config(Domain domain, int m, uint64_t seed) const;
};

/// One experiment family patterned after the published comparison tables,
/// shrunk to desk scale.
struct ExperimentPreset {
  enum class Kind { Compare, KfSweep, Ablation };
  std::string name;
  Kind kind = Kind::Compare;

  Domain source_domain = Domain::News;
  int source_m = 9;
  int source_maps = 1000;
  Domain target_domain = Domain::Moore;
  int target_m = 15;
  std::vector<int> target_maps = {200, 1000};
  int test_maps = 200;
  int trajs_per_map = 7;
  double density = 0.3;
  std::string mapping;  // pairs text; empty = paper default for the pair
  std::vector<uint64_t> seeds = {1, 2, 3};

  StageSettings source_stage;
  StageSettings target_stage;

  std::vector<int> sweep_k;      // KfSweep
  std::vector<int> sweep_f;      // KfSweep
  std::vector<int> pair_counts;  // Ablation
};

const std::vector<ExperimentPreset>& presets();
const ExperimentPreset* find_preset(const std::string& name);

struct RunRow {
  std::string model;  // VIN / VIN_i / TVIN
  int n_maps = 0;
  uint64_t seed = 0;
  int k = 0, f = 0;
  int pairs = -1;  // transferred-action count; -1 when not applicable
  double pct_opt = 0.0, pct_suc = 0.0;
};

struct ExperimentResult {
  std::vector<RunRow> rows;
  std::string results_csv_path;
  std::string manifest_path;
};

/// Full pipeline: generate data, train source, train VIN / VIN_i / TVIN per
/// cell, evaluate, and write results.csv plus a manifest of artifact hashes.
ExperimentResult run_experiment(const ExperimentPreset& preset, const std::string& out_dir,
                                int threads, std::ostream& log);

/// Mean per model over seeds for a filtered subset of rows.
double mean_metric(const std::vector<RunRow>& rows, const std::string& model, int n_maps,
                   bool success, int k = 0, int f = 0, int pairs = -2);

std::string epoch_csv_header();
std::string epoch_csv_line(int epoch, const EpochStats& stats);
void write_transfer_report_csv(const TransferReport& report, const std::string& path);

}  // namespace tvin::harness

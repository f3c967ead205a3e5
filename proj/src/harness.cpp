#include "tvin/harness.hpp"

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include "json.hpp"

#include "tvin/dataset_io.hpp"

namespace fs = std::filesystem;

namespace tvin::harness {

uint64_t hash_bytes(const void* data, size_t n) {
  const auto* p = static_cast<const uint8_t*>(data);
  uint64_t h = 0xcbf29ce484222325ull;
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

uint64_t hash_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("hash_file: cannot open " + path);
  uint64_t h = 0xcbf29ce484222325ull;
  char buf[1 << 16];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    const auto n = static_cast<size_t>(in.gcount());
    for (size_t i = 0; i < n; ++i) {
      h ^= static_cast<uint8_t>(buf[i]);
      h *= 0x100000001b3ull;
    }
    if (!in) break;
  }
  return h;
}

std::string hash_file_hex(const std::string& path) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(hash_file(path)));
  return buf;
}

int thread_budget(bool reference, int requested) {
  if (reference) return 1;
  int n = requested > 0 ? requested : static_cast<int>(std::thread::hardware_concurrency());
  if (n < 1) n = 1;
  if (const char* env = std::getenv("TVIN_THREADS")) {
    const int cap = std::atoi(env);
    if (cap >= 1) n = std::min(n, cap);
  }
  return n;
}

void run_jobs(std::vector<std::function<void()>> jobs, int threads) {
  if (threads <= 1) {
    for (auto& job : jobs) job();
    return;
  }
  std::atomic<size_t> next{0};
  std::mutex err_mutex;
  std::exception_ptr first_error;
  auto worker = [&] {
    while (true) {
      const size_t i = next.fetch_add(1);
      if (i >= jobs.size()) return;
      try {
        jobs[i]();
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

VinConfig StageSettings::to_config(Domain domain, int m, uint64_t seed) const {
  VinConfig cfg;
  cfg.domain = domain;
  cfg.k = k > 0 ? k : default_k_for(m);
  cfg.f = f;
  cfg.hidden = hidden;
  cfg.lr = lr;
  cfg.batch_size = batch_size;
  cfg.epochs = epochs;
  cfg.seed = seed;
  return cfg;
}

namespace {

uint64_t mix_seed(uint64_t seed, uint64_t tag) {
  uint64_t x = seed * 0x9e3779b97f4a7c15ull + tag;
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ull;
  x ^= x >> 27;
  return x;
}

std::vector<ExperimentPreset> make_presets() {
  std::vector<ExperimentPreset> out;

  {
    ExperimentPreset p;
    p.name = "news2moore-desk";
    p.kind = ExperimentPreset::Kind::Compare;
    p.target_maps = {200, 1000};
    out.push_back(p);
  }
  {
    ExperimentPreset p;
    p.name = "moore2news-desk";
    p.kind = ExperimentPreset::Kind::Compare;
    p.source_domain = Domain::Moore;
    p.target_domain = Domain::News;
    p.target_maps = {200, 1000};
    out.push_back(p);
  }
  {
    ExperimentPreset p;
    p.name = "drive2news-desk";
    p.kind = ExperimentPreset::Kind::Compare;
    p.source_domain = Domain::Drive;
    p.target_domain = Domain::News;
    p.target_m = 9;
    p.target_stage.k = 20;
    p.target_maps = {200, 1000};
    out.push_back(p);
  }
  {
    ExperimentPreset p;
    p.name = "kf-sweep";
    p.kind = ExperimentPreset::Kind::KfSweep;
    p.target_maps = {200};
    p.seeds = {1, 2};
    p.sweep_k = {10, 20, 30};
    p.sweep_f = {3, 5};
    out.push_back(p);
  }
  {
    ExperimentPreset p;
    p.name = "action-ablation";
    p.kind = ExperimentPreset::Kind::Ablation;
    p.target_maps = {200};
    p.pair_counts = {1, 2, 3, 4};
    out.push_back(p);
  }
  {
    ExperimentPreset p;
    p.name = "smoke";
    p.kind = ExperimentPreset::Kind::Compare;
    p.source_maps = 50;
    p.target_m = 9;
    p.target_maps = {30};
    p.test_maps = 20;
    p.seeds = {1};
    p.source_stage.epochs = 3;
    p.target_stage.epochs = 3;
    p.target_stage.k = 20;
    out.push_back(p);
  }
  return out;
}

std::string csv_comment(const ExperimentPreset& preset) {
  std::ostringstream out;
  out << "# preset=" << preset.name << " final-epoch metrics, no early stopping;"
      << " source_epochs=" << preset.source_stage.epochs
      << " target_epochs=" << preset.target_stage.epochs << " density=" << preset.density
      << " trajs_per_map=" << preset.trajs_per_map << "\n";
  return out.str();
}

struct ArtifactLog {
  std::mutex mutex;
  std::vector<std::string> files;
  std::ostream* log = nullptr;

  void add(const std::string& path) {
    std::lock_guard<std::mutex> lock(mutex);
    files.push_back(path);
  }
  void note(const std::string& line) {
    std::lock_guard<std::mutex> lock(mutex);
    if (log) (*log) << line << "\n" << std::flush;
  }
};

void write_epoch_csv(const std::string& path, const std::vector<EpochStats>& history,
                     const std::string& comment) {
  std::ofstream out(path);
  out << comment << epoch_csv_header();
  for (size_t e = 0; e < history.size(); ++e)
    out << epoch_csv_line(static_cast<int>(e), history[e]);
}

}  // namespace

const std::vector<ExperimentPreset>& presets() {
  static const std::vector<ExperimentPreset> all = make_presets();
  return all;
}

const ExperimentPreset* find_preset(const std::string& name) {
  for (const auto& p : presets())
    if (p.name == name) return &p;
  return nullptr;
}

std::string epoch_csv_header() { return "epoch,mean_loss,train_acc,wall_ms\n"; }

std::string epoch_csv_line(int epoch, const EpochStats& stats) {
  std::ostringstream out;
  out << epoch << ',' << stats.mean_loss << ',' << stats.train_accuracy << ',' << stats.wall_ms
      << '\n';
  return out.str();
}

void write_transfer_report_csv(const TransferReport& report, const std::string& path) {
  std::ofstream out(path);
  out << "epoch";
  for (const auto& name : report.action_names) out << ",theta_t." << name;
  out << "\n";
  for (size_t e = 0; e < report.theta_by_epoch.size(); ++e) {
    out << e;
    for (float v : report.theta_by_epoch[e]) out << ',' << v;
    out << "\n";
  }
}

double mean_metric(const std::vector<RunRow>& rows, const std::string& model, int n_maps,
                   bool success, int k, int f, int pairs) {
  double sum = 0.0;
  int count = 0;
  for (const auto& r : rows) {
    if (r.model != model) continue;
    if (n_maps > 0 && r.n_maps != n_maps) continue;
    if (k > 0 && r.k != k) continue;
    if (f > 0 && r.f != f) continue;
    if (pairs != -2 && r.pairs != pairs) continue;
    sum += success ? r.pct_suc : r.pct_opt;
    ++count;
  }
  if (count == 0) throw std::invalid_argument("mean_metric: no rows match " + model);
  return sum / count;
}

ExperimentResult run_experiment(const ExperimentPreset& preset, const std::string& out_dir,
                                int threads, std::ostream& log) {
  const auto t0 = std::chrono::steady_clock::now();
  const fs::path root = fs::path(out_dir) / preset.name;
  fs::create_directories(root / "datasets");
  fs::create_directories(root / "checkpoints");
  fs::create_directories(root / "reports");

  ArtifactLog artifacts;
  artifacts.log = &log;
  const std::string comment = csv_comment(preset);

  const DomainSpec& src_spec = domain_spec(preset.source_domain);
  const DomainSpec& tgt_spec = domain_spec(preset.target_domain);
  const ActionMapping full_mapping =
      preset.mapping.empty()
          ? default_mapping(preset.source_domain, preset.target_domain)
          : parse_mapping(src_spec, tgt_spec, preset.mapping);

  const std::vector<int> f_values = preset.kind == ExperimentPreset::Kind::KfSweep
                                        ? preset.sweep_f
                                        : std::vector<int>{preset.target_stage.f};
  const std::vector<int> k_values = preset.kind == ExperimentPreset::Kind::KfSweep
                                        ? preset.sweep_k
                                        : std::vector<int>{0};

  // --- stage 0: datasets -----------------------------------------------
  MapGenConfig src_gen{MapGenConfig::Kind::RandomObstacles, preset.source_m, preset.density};
  MapGenConfig tgt_gen{MapGenConfig::Kind::RandomObstacles, preset.target_m, preset.density};

  std::vector<Dataset> source_train;  // per seed
  for (size_t si = 0; si < preset.seeds.size(); ++si) {
    Dataset ds = sample_dataset(src_spec, preset.source_maps, preset.trajs_per_map, src_gen,
                                mix_seed(preset.seeds[si], 1));
    ds.split = "train";
    const std::string path =
        (root / "datasets" /
         ("src_" + std::string(domain_name(preset.source_domain)) +
          std::to_string(preset.source_m) + "_seed" + std::to_string(preset.seeds[si]) + ".bin"))
            .string();
    save_dataset(ds, path);
    artifacts.add(path);
    source_train.push_back(std::move(ds));
  }
  std::vector<std::vector<Dataset>> target_train(preset.seeds.size());  // [seed][n_idx]
  for (size_t si = 0; si < preset.seeds.size(); ++si) {
    for (size_t ni = 0; ni < preset.target_maps.size(); ++ni) {
      Dataset ds = sample_dataset(tgt_spec, preset.target_maps[ni], preset.trajs_per_map, tgt_gen,
                                  mix_seed(preset.seeds[si], 10 + ni));
      ds.split = "train";
      const std::string path =
          (root / "datasets" /
           ("tgt_" + std::string(domain_name(preset.target_domain)) +
            std::to_string(preset.target_m) + "_n" + std::to_string(preset.target_maps[ni]) +
            "_seed" + std::to_string(preset.seeds[si]) + ".bin"))
              .string();
      save_dataset(ds, path);
      artifacts.add(path);
      target_train[si].push_back(std::move(ds));
    }
  }
  Dataset test = sample_dataset(tgt_spec, preset.test_maps, preset.trajs_per_map, tgt_gen,
                                mix_seed(0x7e57, 0));
  test.split = "test";
  {
    const std::string path =
        (root / "datasets" /
         ("test_" + std::string(domain_name(preset.target_domain)) +
          std::to_string(preset.target_m) + ".bin"))
            .string();
    save_dataset(test, path);
    artifacts.add(path);
  }
  artifacts.note("[" + preset.name + "] datasets ready");

  ExperimentResult result;
  auto finalize = [&](bool ok) {
    // results.csv + manifest survive partial failures so completed stages can
    // be inspected.
    const fs::path results_path = root / "results.csv";
    {
      std::ofstream out(results_path);
      out << comment << "model,N,source,target,seed,K,F,pairs,pct_opt,pct_suc\n";
      out.setf(std::ios::fixed);
      out.precision(2);
      for (const auto& r : result.rows) {
        if (r.model.empty()) continue;
        out << r.model << ',' << r.n_maps << ','
            << domain_name(preset.source_domain) << '-' << preset.source_m << ','
            << domain_name(preset.target_domain) << '-' << preset.target_m << ',' << r.seed << ','
            << r.k << ',' << r.f << ',' << r.pairs << ',' << r.pct_opt << ',' << r.pct_suc
            << '\n';
      }
    }
    artifacts.add(results_path.string());
    nlohmann::json manifest;
    manifest["preset"] = preset.name;
    manifest["complete"] = ok;
    manifest["seeds"] = preset.seeds;
    manifest["density"] = preset.density;
    manifest["source"] = std::string(domain_name(preset.source_domain)) + "-" +
                         std::to_string(preset.source_m);
    manifest["target"] = std::string(domain_name(preset.target_domain)) + "-" +
                         std::to_string(preset.target_m);
    manifest["wall_ms"] = std::chrono::duration_cast<std::chrono::milliseconds>(
                              std::chrono::steady_clock::now() - t0)
                              .count();
    std::sort(artifacts.files.begin(), artifacts.files.end());
    nlohmann::json files = nlohmann::json::object();
    for (const auto& f : artifacts.files)
      files[fs::path(f).lexically_relative(root).string()] = hash_file_hex(f);
    manifest["artifacts"] = files;
    const fs::path manifest_path = root / "manifest.json";
    std::ofstream(manifest_path) << manifest.dump(2) << "\n";
    result.results_csv_path = results_path.string();
    result.manifest_path = manifest_path.string();
  };

  try {
    // --- stage 1: source models ----------------------------------------
    std::vector<std::vector<VinModel>> sources(preset.seeds.size());  // [seed][f_idx]
    for (auto& v : sources) v.reserve(f_values.size());
    {
      std::vector<std::pair<size_t, int>> wanted;  // (seed idx, f)
      for (size_t si = 0; si < preset.seeds.size(); ++si)
        for (int f : f_values) wanted.emplace_back(si, f);
      std::vector<std::optional<VinModel>> slots(wanted.size());
      std::vector<std::function<void()>> jobs;
      for (size_t w = 0; w < wanted.size(); ++w) {
        jobs.push_back([&, w] {
          const auto [si, f] = wanted[w];
          StageSettings stage = preset.source_stage;
          stage.f = f;
          VinConfig cfg =
              stage.to_config(preset.source_domain, preset.source_m, preset.seeds[si]);
          VinModel model(cfg);
          const std::string tag = "src_f" + std::to_string(f) + "_seed" +
                                  std::to_string(preset.seeds[si]);
          const auto history = train_model(model, source_train[si], cfg);
          const std::string ck = (root / "checkpoints" / (tag + ".ck")).string();
          model.save(ck);
          artifacts.add(ck);
          const std::string curve = (root / "reports" / (tag + ".csv")).string();
          write_epoch_csv(curve, history, comment);
          artifacts.add(curve);
          slots[w] = std::move(model);
          artifacts.note("[" + preset.name + "] trained " + tag);
        });
      }
      run_jobs(std::move(jobs), threads);
      for (size_t w = 0; w < wanted.size(); ++w)
        sources[wanted[w].first].push_back(std::move(*slots[w]));
    }

    // --- stage 2: target models ----------------------------------------
    struct Cell {
      size_t seed_idx;
      size_t n_idx;
      int k;  // 0 = stage default
      int f_idx;
      int pairs;  // -1 = full mapping / not applicable
      std::vector<std::string> models;
    };
    std::vector<Cell> cells;
    for (size_t si = 0; si < preset.seeds.size(); ++si) {
      switch (preset.kind) {
        case ExperimentPreset::Kind::Compare:
          for (size_t ni = 0; ni < preset.target_maps.size(); ++ni)
            cells.push_back({si, ni, 0, 0, -1, {"VIN", "VIN_i", "TVIN"}});
          break;
        case ExperimentPreset::Kind::KfSweep:
          for (int k : k_values)
            for (size_t fi = 0; fi < f_values.size(); ++fi)
              cells.push_back({si, 0, k, static_cast<int>(fi), -1, {"VIN", "TVIN"}});
          break;
        case ExperimentPreset::Kind::Ablation:
          cells.push_back({si, 0, 0, 0, -1, {"VIN"}});
          for (int pc : preset.pair_counts)
            cells.push_back({si, 0, 0, 0, pc, {"TVIN"}});
          break;
      }
    }
    std::vector<std::vector<RunRow>> cell_rows(cells.size());
    std::vector<std::function<void()>> jobs;
    for (size_t ci = 0; ci < cells.size(); ++ci) {
      jobs.push_back([&, ci] {
        const Cell& cell = cells[ci];
        const uint64_t seed = preset.seeds[cell.seed_idx];
        StageSettings stage = preset.target_stage;
        if (cell.k > 0) stage.k = cell.k;
        stage.f = f_values[static_cast<size_t>(cell.f_idx)];
        VinConfig cfg = stage.to_config(preset.target_domain, preset.target_m, seed);
        const Dataset& train_ds = target_train[cell.seed_idx][cell.n_idx];
        const VinModel& source = sources[cell.seed_idx][static_cast<size_t>(cell.f_idx)];
        ActionMapping mapping = full_mapping;
        if (cell.pairs >= 0)
          mapping.pairs.resize(static_cast<size_t>(
              std::min<int>(cell.pairs, static_cast<int>(full_mapping.pairs.size()))));

        std::ostringstream suffix;
        suffix << "_n" << preset.target_maps[cell.n_idx] << "_k" << cfg.k << "_f" << cfg.f;
        if (cell.pairs >= 0) suffix << "_p" << cell.pairs;
        suffix << "_seed" << seed;

        for (const std::string& kind : cell.models) {
          RunRow row;
          row.model = kind;
          row.n_maps = preset.target_maps[cell.n_idx];
          row.seed = seed;
          row.k = cfg.k;
          row.f = cfg.f;
          row.pairs = kind == "TVIN" && cell.pairs >= 0 ? cell.pairs : -1;
          const std::string tag = kind + suffix.str();
          EvalReport report;
          if (kind == "TVIN") {
            TvinModel model = build_tvin(source, cfg, mapping);
            TransferReport tr = train_tvin(model, train_ds, cfg);
            const std::string ck = (root / "checkpoints" / (tag + ".ck")).string();
            model.save(ck);
            artifacts.add(ck);
            const std::string theta = (root / "reports" / (tag + "_theta.csv")).string();
            write_transfer_report_csv(tr, theta);
            artifacts.add(theta);
            const std::string curve = (root / "reports" / (tag + ".csv")).string();
            write_epoch_csv(curve, tr.epochs, comment);
            artifacts.add(curve);
            ModelPolicy policy(model);
            report = evaluate(policy, test);
          } else {
            VinModel model =
                kind == "VIN_i" ? build_vin_init(source, cfg, mapping) : VinModel(cfg);
            const auto history = train_model(model, train_ds, cfg);
            const std::string ck = (root / "checkpoints" / (tag + ".ck")).string();
            model.save(ck);
            artifacts.add(ck);
            const std::string curve = (root / "reports" / (tag + ".csv")).string();
            write_epoch_csv(curve, history, comment);
            artifacts.add(curve);
            ModelPolicy policy(model);
            report = evaluate(policy, test);
          }
          row.pct_opt = report.pct_opt;
          row.pct_suc = report.pct_suc;
          cell_rows[ci].push_back(row);
          std::ostringstream msg;
          msg.setf(std::ios::fixed);
          msg.precision(1);
          msg << "[" << preset.name << "] " << tag << " %opt=" << row.pct_opt
              << " %suc=" << row.pct_suc;
          artifacts.note(msg.str());
        }
      });
    }
    run_jobs(std::move(jobs), threads);
    for (const auto& rows : cell_rows)
      result.rows.insert(result.rows.end(), rows.begin(), rows.end());
  } catch (...) {
    finalize(false);
    throw;
  }
  finalize(true);
  return result;
}

}  // namespace tvin::harness

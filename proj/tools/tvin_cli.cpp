// Command-line front end: data generation, training, transfer, evaluation,
// experiment presets, and the numeric self-checks.
//
// Exit codes: 0 ok, 2 bad flags, 3 data error, 4 numeric failure.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>

#include "CLI11.hpp"

#include "tvin/checkpoint.hpp"
#include "tvin/dataset_io.hpp"
#include "tvin/eval.hpp"
#include "tvin/harness.hpp"
#include "tvin/oracle_suites.hpp"
#include "tvin/transfer.hpp"

namespace {

using namespace tvin;

struct TrainFlags {
  std::string data, out, curve;
  int k = 0, f = 3, hidden = 150, epochs = 30, batch = 128;
  double lr = 0.005;
  uint64_t seed = 1;
  std::string batch_mode = "map";

  void attach(CLI::App* cmd, bool with_arch) {
    cmd->add_option("--data", data, "training dataset file")->required();
    cmd->add_option("--out", out, "output checkpoint path")->required();
    cmd->add_option("--K,--k", k, "VI iterations (default: by maze size)");
    cmd->add_option("--epochs", epochs, "training epochs");
    cmd->add_option("--lr", lr, "SGD learning rate");
    cmd->add_option("--batch", batch, "minibatch size in samples");
    cmd->add_option("--seed", seed, "training seed");
    cmd->add_option("--curve", curve, "per-epoch CSV output path");
    cmd->add_option("--batch-mode", batch_mode, "map|sample shuffle granularity")
        ->check(CLI::IsMember({"map", "sample"}));
    if (with_arch) {
      cmd->add_option("--F,--f", f, "action kernel size (odd)");
      cmd->add_option("--hidden", hidden, "reward net hidden channels");
    }
  }

  VinConfig to_config(const Dataset& ds) const {
    VinConfig cfg;
    cfg.domain = ds.domain;
    cfg.k = k > 0 ? k : default_k_for(ds.m);
    cfg.f = f;
    cfg.hidden = hidden;
    cfg.lr = static_cast<float>(lr);
    cfg.batch_size = batch;
    cfg.epochs = epochs;
    cfg.seed = seed;
    cfg.batch_mode =
        batch_mode == "sample" ? VinConfig::BatchMode::Sample : VinConfig::BatchMode::Map;
    return cfg;
  }
};

void write_curve(const std::string& path, const std::vector<EpochStats>& history) {
  if (path.empty()) return;
  std::ofstream out(path);
  out << harness::epoch_csv_header();
  for (size_t e = 0; e < history.size(); ++e)
    out << harness::epoch_csv_line(static_cast<int>(e), history[e]);
}

int run(int argc, char** argv) {
  CLI::App app{"transfer value iteration planner"};
  app.require_subcommand(1);
  app.set_config("--config", "", "flat key=value config file; flags take precedence");

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "generate an expert-labelled dataset");
  std::string gen_domain = "news", gen_out;
  int gen_m = 9, gen_maps = 1000, gen_trajs = 7;
  double gen_density = 0.3;
  uint64_t gen_seed = 1;
  bool gen_maze = false;
  gen->add_option("--domain", gen_domain, "news|moore|drive")->required();
  gen->add_option("--m", gen_m, "maze side length");
  gen->add_option("--maps", gen_maps, "number of maps");
  gen->add_option("--trajs", gen_trajs, "expert trajectories per map");
  gen->add_option("--density", gen_density, "obstacle density");
  gen->add_flag("--maze", gen_maze, "recursive-backtracker mazes instead of random obstacles");
  gen->add_option("--seed", gen_seed, "generator seed");
  gen->add_option("--out", gen_out, "output dataset path")->required();

  // train
  auto* train = app.add_subcommand("train", "train a VIN from scratch");
  TrainFlags train_flags;
  train_flags.attach(train, true);

  // transfer
  auto* transfer = app.add_subcommand("transfer", "build and train a transfer model");
  TrainFlags tr_flags;
  tr_flags.attach(transfer, false);
  std::string tr_source, tr_pairs, tr_mode = "tvin", tr_theta_csv;
  double tr_theta_init = 1.0;
  bool tr_unfreeze_reward = false;
  transfer->add_option("--source", tr_source, "pre-trained source checkpoint")->required();
  transfer->add_option("--pairs", tr_pairs,
                       "action mapping source=target,... (default: by domain pair)");
  transfer->add_option("--mode", tr_mode, "tvin: frozen kernels + transfer weights; init: "
                                          "source weights as initialization only")
      ->check(CLI::IsMember({"tvin", "init"}));
  transfer->add_option("--theta-init", tr_theta_init, "initial transfer weight");
  transfer->add_flag("--unfreeze-reward", tr_unfreeze_reward, "fine-tune the reward net too");
  transfer->add_option("--theta-csv", tr_theta_csv, "per-epoch transfer-weight CSV path");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "evaluate checkpoints on a test dataset");
  std::vector<std::string> eval_models;
  std::string eval_data, eval_out;
  bool eval_strict = false, eval_orient = false;
  int eval_steps_factor = 8;
  eval_cmd->add_option("--models", eval_models, "checkpoint paths")
      ->required()
      ->delimiter(',');
  eval_cmd->add_option("--data", eval_data, "test dataset file")->required();
  eval_cmd->add_option("--out", eval_out, "CSV output path (default: stdout)");
  eval_cmd->add_flag("--strict-opt", eval_strict, "credit only the stored expert label");
  eval_cmd->add_flag("--orientation-strict", eval_orient,
                     "drive goals must match orientation");
  eval_cmd->add_option("--max-steps-factor", eval_steps_factor, "rollout cap = factor * m");

  // experiment
  auto* exp = app.add_subcommand("experiment", "run a named experiment preset");
  std::string exp_preset, exp_out = "runs";
  int exp_threads = 0;
  bool exp_reference = false;
  exp->add_option("preset", exp_preset, "preset name")->required();
  exp->add_option("--out", exp_out, "output directory");
  exp->add_option("--threads", exp_threads, "worker threads (default: cores, TVIN_THREADS cap)");
  exp->add_flag("--reference", exp_reference, "single-threaded reference mode");

  auto* list = app.add_subcommand("list-presets", "list experiment presets");

  // grad-check / oracle-check
  auto* grad = app.add_subcommand("grad-check", "finite-difference gradient suites");
  int grad_seeds = 20;
  grad->add_option("--seeds", grad_seeds, "seeds per suite");
  auto* oracle = app.add_subcommand("oracle-check", "VI-vs-tabular equivalence suite");
  int oracle_seeds = 50;
  oracle->add_option("--seeds", oracle_seeds, "random maps to test");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);  // prints help/usage
    return code == 0 ? 0 : 2;
  }

  if (gen->parsed()) {
    const auto domain = parse_domain(gen_domain);
    if (!domain) throw std::invalid_argument("unknown domain: " + gen_domain);
    MapGenConfig cfg;
    cfg.kind = gen_maze ? MapGenConfig::Kind::Maze : MapGenConfig::Kind::RandomObstacles;
    cfg.m = gen_m;
    cfg.density = gen_density;
    Dataset ds = sample_dataset(domain_spec(*domain), gen_maps, gen_trajs, cfg, gen_seed);
    ds.split = "train";
    save_dataset(ds, gen_out);
    double obstacle_cells = 0.0;
    for (const auto& map : ds.maps) obstacle_cells += map.obstacle_count();
    std::cout << "wrote " << gen_out << ": domain=" << domain_name(*domain) << " m=" << ds.m
              << " maps=" << ds.maps.size() << " samples=" << ds.samples.size()
              << " realized_density="
              << obstacle_cells / (static_cast<double>(ds.maps.size()) * gen_m * gen_m) << "\n";
    return 0;
  }

  if (train->parsed()) {
    const Dataset ds = load_dataset(train_flags.data);
    const VinConfig cfg = train_flags.to_config(ds);
    VinModel model(cfg);
    const auto history = train_model(model, ds, cfg, [&](int e, const EpochStats& s) {
      std::cout << "epoch " << e << " loss=" << s.mean_loss << " acc=" << s.train_accuracy
                << " wall_ms=" << s.wall_ms << "\n";
    });
    model.save(train_flags.out);
    write_curve(train_flags.curve, history);
    std::cout << "wrote " << train_flags.out << "\n";
    return 0;
  }

  if (transfer->parsed()) {
    const Dataset ds = load_dataset(tr_flags.data);
    VinModel source = VinModel::load(tr_source);
    VinConfig cfg = tr_flags.to_config(ds);
    cfg.f = source.config().f;  // transferred kernels fix the kernel size
    const ActionMapping mapping =
        tr_pairs.empty() ? default_mapping(source.config().domain, ds.domain)
                         : parse_mapping(source.spec(), domain_spec(ds.domain), tr_pairs);
    if (tr_mode == "init") {
      VinModel model = build_vin_init(source, cfg, mapping);
      const auto history = train_model(model, ds, cfg);
      model.save(tr_flags.out);
      write_curve(tr_flags.curve, history);
      std::cout << "wrote " << tr_flags.out << " (VIN_i baseline)\n";
      return 0;
    }
    TransferOptions opts;
    opts.theta_init = static_cast<float>(tr_theta_init);
    opts.freeze_reward = !tr_unfreeze_reward;
    TvinModel model = build_tvin(source, cfg, mapping, opts);
    const TransferReport report =
        train_tvin(model, ds, cfg, [&](int e, const EpochStats& s) {
          std::cout << "epoch " << e << " loss=" << s.mean_loss << " acc=" << s.train_accuracy
                    << " wall_ms=" << s.wall_ms << "\n";
        });
    model.save(tr_flags.out);
    if (!tr_theta_csv.empty()) harness::write_transfer_report_csv(report, tr_theta_csv);
    write_curve(tr_flags.curve, report.epochs);
    std::cout << "wrote " << tr_flags.out << " (frozen " << report.frozen_scalars
              << " scalars, trainable " << report.trainable_scalars << ")\n";
    return 0;
  }

  if (eval_cmd->parsed()) {
    const Dataset ds = load_dataset(eval_data);
    EvalOptions opts;
    opts.strict_opt = eval_strict;
    opts.orientation_strict = eval_orient;
    opts.max_steps_factor = eval_steps_factor;
    // Keep the models alive for the duration of compare().
    std::vector<std::unique_ptr<PlannerModel>> owners;
    std::vector<std::pair<std::string, PlannerModel*>> named;
    for (const std::string& path : eval_models) {
      const auto loaded = load_checkpoint(path);
      const Param* meta = find_param(loaded, "meta");
      if (!meta) throw DataError("checkpoint missing meta entry: " + path);
      if (read_meta_param(*meta).kind == ModelKind::Tvin)
        owners.push_back(std::make_unique<TvinModel>(TvinModel::load(path)));
      else
        owners.push_back(std::make_unique<VinModel>(VinModel::load(path)));
      named.emplace_back(std::filesystem::path(path).stem().string(), owners.back().get());
    }
    const auto rows = compare(named, ds, opts);
    const std::string csv = comparison_csv(rows);
    if (eval_out.empty()) {
      std::cout << csv;
    } else {
      std::ofstream(eval_out) << csv;
      std::cout << "wrote " << eval_out << "\n";
    }
    return 0;
  }

  if (exp->parsed()) {
    const harness::ExperimentPreset* preset = harness::find_preset(exp_preset);
    if (!preset) throw std::invalid_argument("unknown preset: " + exp_preset +
                                             " (see list-presets)");
    const int threads = harness::thread_budget(exp_reference, exp_threads);
    const auto result = harness::run_experiment(*preset, exp_out, threads, std::cout);
    std::cout << "results: " << result.results_csv_path << "\nmanifest: " << result.manifest_path
              << "\n";
    return 0;
  }

  if (list->parsed()) {
    for (const auto& p : harness::presets())
      std::cout << p.name << ": " << domain_name(p.source_domain) << "-" << p.source_m << " -> "
                << domain_name(p.target_domain) << "-" << p.target_m << "\n";
    return 0;
  }

  if (grad->parsed()) {
    const auto report = suites::run_gradient_suites(grad_seeds, std::cout);
    if (!report.pass) throw NumericError("gradient suite failed");
    return 0;
  }
  if (oracle->parsed()) {
    const auto report = suites::run_vi_equivalence(oracle_seeds, std::cout);
    if (!report.pass) throw NumericError("VI equivalence suite failed");
    return 0;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const tvin::NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 4;
  } catch (const std::logic_error& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}

// Python bindings for the planner core: dataset generation, training,
// transfer, and evaluation.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <memory>
#include <sstream>

#include "tvin/checkpoint.hpp"
#include "tvin/dataset_io.hpp"
#include "tvin/eval.hpp"
#include "tvin/harness.hpp"
#include "tvin/oracle_suites.hpp"
#include "tvin/transfer.hpp"

namespace py = pybind11;
using namespace tvin;

namespace {

Domain domain_from_name(const std::string& name) {
  const auto d = parse_domain(name);
  if (!d) throw std::invalid_argument("unknown domain: " + name);
  return *d;
}

VinConfig config_from_kwargs(Domain domain, int m, int k, int f, int hidden, double lr,
                             int batch, int epochs, uint64_t seed, const std::string& mode) {
  VinConfig cfg;
  cfg.domain = domain;
  cfg.k = k > 0 ? k : default_k_for(m);
  cfg.f = f;
  cfg.hidden = hidden;
  cfg.lr = static_cast<float>(lr);
  cfg.batch_size = batch;
  cfg.epochs = epochs;
  cfg.seed = seed;
  cfg.batch_mode = mode == "sample" ? VinConfig::BatchMode::Sample : VinConfig::BatchMode::Map;
  return cfg;
}

py::dict report_to_dict(const EvalReport& r) {
  py::dict out;
  out["pct_opt"] = r.pct_opt;
  out["pct_suc"] = r.pct_suc;
  out["n_states"] = r.n_states;
  out["n_trajectories"] = r.n_trajectories;
  return out;
}

std::shared_ptr<PlannerModel> load_any_model(const std::string& path) {
  const auto params = load_checkpoint(path);
  const Param* meta = find_param(params, "meta");
  if (!meta) throw DataError("checkpoint missing meta entry: " + path);
  if (read_meta_param(*meta).kind == ModelKind::Tvin)
    return std::make_shared<TvinModel>(TvinModel::load(path));
  return std::make_shared<VinModel>(VinModel::load(path));
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Differentiable value-iteration planner with cross-domain transfer";

  py::class_<Dataset>(m, "Dataset")
      .def_property_readonly("domain",
                             [](const Dataset& ds) { return std::string(domain_name(ds.domain)); })
      .def_property_readonly("m", [](const Dataset& ds) { return ds.m; })
      .def_property_readonly("num_maps", [](const Dataset& ds) { return ds.maps.size(); })
      .def_property_readonly("num_samples", [](const Dataset& ds) { return ds.samples.size(); })
      .def("save", &save_dataset, py::arg("path"))
      .def("__repr__", [](const Dataset& ds) {
        return "<Dataset " + std::string(domain_name(ds.domain)) + "-" + std::to_string(ds.m) +
               " maps=" + std::to_string(ds.maps.size()) +
               " samples=" + std::to_string(ds.samples.size()) + ">";
      });

  m.def(
      "generate_dataset",
      [](const std::string& domain, int maps, int trajs, int m, double density, bool maze,
         uint64_t seed) {
        MapGenConfig gen;
        gen.kind = maze ? MapGenConfig::Kind::Maze : MapGenConfig::Kind::RandomObstacles;
        gen.m = m;
        gen.density = density;
        return sample_dataset(domain_spec(domain_from_name(domain)), maps, trajs, gen, seed);
      },
      py::arg("domain"), py::arg("maps"), py::arg("trajs") = 7, py::arg("m") = 9,
      py::arg("density") = 0.3, py::arg("maze") = false, py::arg("seed") = 1);
  m.def("load_dataset", &load_dataset, py::arg("path"));

  py::class_<PlannerModel, std::shared_ptr<PlannerModel>>(m, "PlannerModel")
      .def_property_readonly("domain",
                             [](PlannerModel& mod) {
                               return std::string(domain_name(mod.config().domain));
                             })
      .def_property_readonly("k", [](PlannerModel& mod) { return mod.config().k; })
      .def_property_readonly("f", [](PlannerModel& mod) { return mod.config().f; })
      .def("predict_action",
           [](PlannerModel& mod, const Dataset& ds, int map_index, int i, int j, int o) {
             const GridMap& map = ds.maps.at(static_cast<size_t>(map_index));
             return mod.predict_action(render_observation(mod.spec(), map), {i, j, o});
           },
           py::arg("dataset"), py::arg("map_index"), py::arg("i"), py::arg("j"), py::arg("o") = 0)
      .def("action_probs", [](PlannerModel& mod, const Dataset& ds, int map_index, int i, int j,
                              int o) {
        const GridMap& map = ds.maps.at(static_cast<size_t>(map_index));
        const PolicyOutput out = mod.forward(render_observation(mod.spec(), map), {i, j, o});
        std::vector<float> probs(out.probs.data(), out.probs.data() + out.probs.numel());
        return probs;
      }, py::arg("dataset"), py::arg("map_index"), py::arg("i"), py::arg("j"), py::arg("o") = 0);

  py::class_<VinModel, PlannerModel, std::shared_ptr<VinModel>>(m, "VinModel")
      .def("save", &VinModel::save, py::arg("path"));
  py::class_<TvinModel, PlannerModel, std::shared_ptr<TvinModel>>(m, "TvinModel")
      .def("save", &TvinModel::save, py::arg("path"))
      .def_property_readonly("theta", &TvinModel::theta_values);

  m.def(
      "train_vin",
      [](const Dataset& ds, int k, int f, int hidden, double lr, int batch, int epochs,
         uint64_t seed, const std::string& batch_mode) {
        const VinConfig cfg =
            config_from_kwargs(ds.domain, ds.m, k, f, hidden, lr, batch, epochs, seed, batch_mode);
        auto model = std::make_shared<VinModel>(cfg);
        train_model(*model, ds, cfg);
        return model;
      },
      py::arg("dataset"), py::arg("k") = 0, py::arg("f") = 3, py::arg("hidden") = 150,
      py::arg("lr") = 0.005, py::arg("batch") = 128, py::arg("epochs") = 30, py::arg("seed") = 1,
      py::arg("batch_mode") = "map");

  m.def(
      "train_tvin",
      [](std::shared_ptr<VinModel> source, const Dataset& ds, const std::string& pairs, int k,
         double lr, int batch, int epochs, uint64_t seed, double theta_init,
         bool freeze_reward, const std::string& batch_mode) {
        VinConfig cfg = config_from_kwargs(ds.domain, ds.m, k, source->config().f,
                                           source->config().hidden, lr, batch, epochs, seed,
                                           batch_mode);
        const ActionMapping mapping =
            pairs.empty() ? default_mapping(source->config().domain, ds.domain)
                          : parse_mapping(source->spec(), domain_spec(ds.domain), pairs);
        TransferOptions opts;
        opts.theta_init = static_cast<float>(theta_init);
        opts.freeze_reward = freeze_reward;
        auto model = std::make_shared<TvinModel>(build_tvin(*source, cfg, mapping, opts));
        train_tvin(*model, ds, cfg);
        return model;
      },
      py::arg("source"), py::arg("dataset"), py::arg("pairs") = "", py::arg("k") = 0,
      py::arg("lr") = 0.005, py::arg("batch") = 128, py::arg("epochs") = 30, py::arg("seed") = 1,
      py::arg("theta_init") = 1.0, py::arg("freeze_reward") = true, py::arg("batch_mode") = "map");

  m.def(
      "train_vin_init",
      [](std::shared_ptr<VinModel> source, const Dataset& ds, const std::string& pairs, int k,
         double lr, int batch, int epochs, uint64_t seed, const std::string& batch_mode) {
        VinConfig cfg = config_from_kwargs(ds.domain, ds.m, k, source->config().f,
                                           source->config().hidden, lr, batch, epochs, seed,
                                           batch_mode);
        const ActionMapping mapping =
            pairs.empty() ? default_mapping(source->config().domain, ds.domain)
                          : parse_mapping(source->spec(), domain_spec(ds.domain), pairs);
        auto model = std::make_shared<VinModel>(build_vin_init(*source, cfg, mapping));
        train_model(*model, ds, cfg);
        return model;
      },
      py::arg("source"), py::arg("dataset"), py::arg("pairs") = "", py::arg("k") = 0,
      py::arg("lr") = 0.005, py::arg("batch") = 128, py::arg("epochs") = 30, py::arg("seed") = 1,
      py::arg("batch_mode") = "map");

  m.def("load_model", &load_any_model, py::arg("path"));

  m.def(
      "evaluate",
      [](std::shared_ptr<PlannerModel> model, const Dataset& test, bool strict_opt,
         int max_steps_factor) {
        EvalOptions opts;
        opts.strict_opt = strict_opt;
        opts.max_steps_factor = max_steps_factor;
        ModelPolicy policy(*model);
        return report_to_dict(evaluate(policy, test, opts));
      },
      py::arg("model"), py::arg("test"), py::arg("strict_opt") = false,
      py::arg("max_steps_factor") = 8);

  m.def(
      "rollout",
      [](std::shared_ptr<PlannerModel> model, const Dataset& ds, int map_index, int i, int j,
         int o, int max_steps) {
        const GridMap& map = ds.maps.at(static_cast<size_t>(map_index));
        if (max_steps <= 0) max_steps = 8 * map.m;
        ModelPolicy policy(*model);
        policy.bind_map(map);
        const RolloutResult r = rollout(policy, model->spec(), map, {i, j, o}, max_steps);
        py::dict out;
        out["steps"] = r.steps;
        out["outcome"] = r.outcome == RolloutResult::Outcome::ReachedGoal ? "goal"
                         : r.outcome == RolloutResult::Outcome::HitObstacle ? "obstacle"
                                                                            : "step_limit";
        std::vector<std::tuple<int, int, int>> path;
        for (const AgentState& s : r.path) path.emplace_back(s.i, s.j, s.o);
        out["path"] = path;
        return out;
      },
      py::arg("model"), py::arg("dataset"), py::arg("map_index"), py::arg("i"), py::arg("j"),
      py::arg("o") = 0, py::arg("max_steps") = 0);

  m.def(
      "expert_metrics",
      [](const Dataset& test) {
        ExpertPolicyAdapter expert(domain_spec(test.domain));
        return report_to_dict(evaluate(expert, test));
      },
      py::arg("test"));

  m.def(
      "gradient_check",
      [](int seeds) {
        std::ostringstream log;
        const auto report = suites::run_gradient_suites(seeds, log);
        return py::make_tuple(report.pass, report.worst, log.str());
      },
      py::arg("seeds") = 5);
}

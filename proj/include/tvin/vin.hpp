#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "tvin/autodiff.hpp"
#include "tvin/gridworld.hpp"

namespace tvin {

/// Default VI recurrence depth by maze size: 20 / 30 / 56 for 9 / 15 / 28,
/// interpolated for in-between sizes.
int default_k_for(int m);

struct VinConfig {
  Domain domain = Domain::News;
  int k = 20;        // VI iterations
  int f = 3;         // action kernel size, odd
  int hidden = 150;  // reward-net hidden channels
  float lr = 0.005f;
  int batch_size = 128;
  int epochs = 30;
  uint64_t seed = 1;
  /// Map mode shuffles maps and batches whole maps (one shared VI forward per
  /// map); sample mode shuffles individual samples. Gradients are identical
  /// for identical batch composition; map mode is the fast default.
  enum class BatchMode { Map, Sample } batch_mode = BatchMode::Map;

  const DomainSpec& spec() const { return domain_spec(domain); }
  int reward_channels() const { return spec().orientation_count; }

  void validate() const;
};

struct PolicyOutput {
  Tensor logits;     // (|A|)
  Tensor probs;      // (|A|), sums to 1
  Tensor value_map;  // (r, m, m), final V for inspection
};

/// Common surface for VIN and TVIN: enough to build the planning graph on a
/// tape, train, checkpoint, and evaluate.
class PlannerModel {
 public:
  virtual ~PlannerModel() = default;
  virtual const VinConfig& config() const = 0;
  /// Every param, checkpoint order. First entry is the "meta" descriptor.
  virtual std::vector<Param*> params() = 0;
  /// Builds reward map + K VI iterations; returns the final Q map (|A|*r,m,m).
  virtual ValueId build_q_map(Tape& t, const Tensor& obs) = 0;
  /// Attention selection + output head over a built Q map.
  virtual ValueId build_logits(Tape& t, ValueId q_map, const AgentState& s) = 0;

  const DomainSpec& spec() const { return config().spec(); }
  std::vector<Param*> trainable_params();

  PolicyOutput forward(const Tensor& obs, const AgentState& s);
  int predict_action(const Tensor& obs, const AgentState& s);
  /// Q map without gradient recording, for cached per-map evaluation.
  Tensor q_map_values(const Tensor& obs);
  int predict_from_q(const Tensor& q, const AgentState& s);
};

/// K iterations of Q = conv([R;V]), V = per-group action max, then one final
/// conv for the returned Q. V starts at zero.
ValueId vi_recurrence(Tape& t, ValueId r_map, ValueId q_kernel, int k, int groups,
                      ValueId* v_final = nullptr);

class VinModel : public PlannerModel {
 public:
  explicit VinModel(const VinConfig& cfg);

  const VinConfig& config() const override { return cfg_; }
  std::vector<Param*> params() override;
  ValueId build_q_map(Tape& t, const Tensor& obs) override;
  ValueId build_logits(Tape& t, ValueId q_map, const AgentState& s) override;

  /// R = conv_r(relu(conv_h(obs))).
  Tensor reward_map(const Tensor& obs);
  /// VI over a given reward map with this model's kernels; returns final V
  /// and Q. Used directly by the exact-VI equivalence suite.
  struct ViOut {
    Tensor v;  // (r, m, m)
    Tensor q;  // (|A|*r, m, m)
  };
  ViOut vi_forward(const Tensor& r_map, int k);

  void save(const std::string& path) const;
  static VinModel load(const std::string& path);

  Param conv_h_w, conv_h_b;  // (hidden, obs_ch, 3, 3) + (hidden)
  Param conv_r_w;            // (r, hidden, 1, 1), no bias
  Param q_kernels;           // (|A|*r, 2r, F, F), shared across iterations
  Param head_w, head_b;      // (|A|, |A|) + (|A|)

 private:
  VinConfig cfg_;
  Param meta_;
};

/// Picks the |A| Q values at the agent's pixel and orientation group.
Tensor attend(const Tensor& q, const AgentState& s, int groups);

struct EpochStats {
  double mean_loss = 0.0;
  double train_accuracy = 0.0;  // fraction in [0,1]
  int64_t wall_ms = 0;
};

/// One pass over the dataset: shuffle with the epoch seed, minibatch SGD with
/// cross-entropy against expert labels. Throws NumericError on divergence.
EpochStats train_epoch(PlannerModel& model, const Dataset& ds, const VinConfig& cfg,
                       int epoch_index);

/// Full training run; optional per-epoch callback for CSV logging.
std::vector<EpochStats> train_model(
    PlannerModel& model, const Dataset& ds, const VinConfig& cfg,
    const std::function<void(int, const EpochStats&)>& on_epoch = nullptr);

/// Model-kind tag carried in the "meta" checkpoint entry.
enum class ModelKind : int { Vin = 0, Tvin = 1 };
Param make_meta_param(ModelKind kind, const VinConfig& cfg);
struct MetaInfo {
  ModelKind kind;
  Domain domain;
  int k;
  int f;
};
MetaInfo read_meta_param(const Param& meta);

}  // namespace tvin

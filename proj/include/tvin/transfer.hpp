#pragma once

#include <string>
#include <vector>

#include "tvin/vin.hpp"

namespace tvin {

/// Pairs of (source action, target action) considered similar enough to
/// share transition kernels. Must be injective on both sides.
struct ActionMapping {
  std::vector<std::pair<int, int>> pairs;

  void validate(const DomainSpec& src, const DomainSpec& tgt) const;
  /// -1 if the target action has no source counterpart.
  int source_of(int target_action) const;
};

/// Parses "North=MoveForward,East=TurnLeft" (source=target, by action name).
ActionMapping parse_mapping(const DomainSpec& src, const DomainSpec& tgt,
                            const std::string& text);
/// The paper-given similar-action pairs for a domain combination.
ActionMapping default_mapping(Domain src, Domain tgt);

/// Reshapes an action kernel across orientation-channel layouts. Exact copy
/// when shapes match; 4->1 averages the orientation blocks (R block to R
/// block, V block to V block); 1->4 broadcasts onto each orientation's
/// diagonal block with zeros elsewhere. Kernel size must match.
Tensor project_kernel(const Tensor& src, int r_t, int f_t);

/// Same orientation handling for the reward head conv_r (r, hidden, 1, 1).
Tensor project_reward_head(const Tensor& src, int r_t);

struct TransferOptions {
  float theta_init = 1.0f;
  bool freeze_reward = true;  // unfreezing fine-tunes f_R alongside the encoder
};

/// Target-domain model built from a pre-trained source per the transfer
/// construction: encoder in front of the frozen source reward net, frozen
/// transferred kernels scaled by per-action transfer weights, fresh kernels
/// for unmapped actions, fresh head.
class TvinModel : public PlannerModel {
 public:
  const VinConfig& config() const override { return cfg_; }
  std::vector<Param*> params() override;
  ValueId build_q_map(Tape& t, const Tensor& obs) override;
  ValueId build_logits(Tape& t, ValueId q_map, const AgentState& s) override;

  void save(const std::string& path) const;
  static TvinModel load(const std::string& path);

  /// Target action indices with a transferred kernel, in action order.
  const std::vector<int>& transferred_actions() const { return transferred_; }
  std::vector<float> theta_values() const;

  Param encoder_w, encoder_b;  // (src_obs, tgt_obs, 1, 1) + (src_obs)
  Param conv_h_w, conv_h_b;    // frozen source reward net
  Param conv_r_w;
  std::vector<Param> q_pre;  // frozen, one per transferred target action
  std::vector<Param> theta;  // transfer weight per transferred target action
  std::vector<Param> q_new;  // one per unmapped target action
  Param head_w, head_b;

 private:
  friend TvinModel build_tvin(const VinModel&, const VinConfig&, const ActionMapping&,
                              const TransferOptions&);
  TvinModel() = default;

  VinConfig cfg_;
  Param meta_;
  std::vector<int> transferred_;      // target action indices, ascending
  std::vector<int> slot_of_action_;   // target action -> index into q_pre/theta or q_new
  std::vector<bool> is_transferred_;  // per target action
};

TvinModel build_tvin(const VinModel& source, const VinConfig& target_cfg,
                     const ActionMapping& mapping, const TransferOptions& opts = {});

/// Heuristic-transfer baseline: a plain target VIN whose reward net and
/// mapped action kernels start from the source weights. Nothing is frozen and
/// there are no transfer weights.
VinModel build_vin_init(const VinModel& source, const VinConfig& target_cfg,
                        const ActionMapping& mapping);

struct TransferReport {
  std::vector<std::string> action_names;        // transferred target actions
  std::vector<std::vector<float>> theta_by_epoch;  // [epoch 0 = init]
  std::vector<EpochStats> epochs;
  int64_t frozen_scalars = 0;
  int64_t trainable_scalars = 0;
};

/// Training loop over the transfer graph. Verifies after every epoch that the
/// frozen params are byte-identical to their build-time values.
TransferReport train_tvin(TvinModel& model, const Dataset& ds, const VinConfig& cfg,
                          const std::function<void(int, const EpochStats&)>& on_epoch = nullptr);

}  // namespace tvin

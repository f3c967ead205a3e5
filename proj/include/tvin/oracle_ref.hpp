#pragma once

#include <vector>

#include "tvin/gridworld.hpp"
#include "tvin/tensor.hpp"
#include "tvin/transfer.hpp"
#include "tvin/vin.hpp"

namespace tvin::oracle {

/// Double-precision reference implementations, written independently of the
/// tape ops. They back the finite-difference gradient suites and the
/// VI-vs-tabular equivalence check.

using DVec = std::vector<double>;

DVec to_double(const Tensor& t);

/// Cross-correlation with zero "same" padding; plain index loops.
DVec ref_conv2d(const DVec& x, int c_in, int h, int w, const DVec& kernel, int c_out, int f,
                const DVec* bias);
DVec ref_relu(const DVec& x);
DVec ref_group_max(const DVec& x, int a_count, int groups, int h, int w);
DVec ref_linear(const DVec& x, const DVec& weight, const DVec& bias, int d_out, int d_in);
double ref_softmax_ce(const DVec& logits, int target);

/// Loss of the whole VIN graph, recomputed in double from the model's params.
double ref_vin_loss(VinModel& model, const Tensor& obs, const AgentState& s, int label);
/// Same for the transfer graph, including the effective-kernel assembly.
double ref_tvin_loss(TvinModel& model, const Tensor& obs, const AgentState& s, int label);

/// Hand-set kernels that encode the true grid transitions: a gamma tap on the
/// value channel displaced by each action (turn actions re-read the rotated
/// orientation channel in place) plus a unit reward tap.
Tensor make_true_transition_kernels(const DomainSpec& spec, double gamma, int f);

/// State reward used by the equivalence suite: +0.1 at the goal, -0.05 on
/// obstacles, replicated across orientation channels.
Tensor reward_from_map(const DomainSpec& spec, const GridMap& map);

/// Exact value iteration on the grid MDP matching those kernels: V starts at
/// zero, off-grid values read as zero, K synchronous sweeps.
DVec ref_tabular_vi(const DomainSpec& spec, const Tensor& reward, double gamma, int k);

}  // namespace tvin::oracle

// Copyright 2026 The postlab Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef POSTLAB_HYBRID_HPP_
#define POSTLAB_HYBRID_HPP_

#include <map>
#include <string>
#include <vector>

#include "postlab/grpo.hpp"
#include "postlab/sft.hpp"

namespace postlab {

// Three ways of combining supervised traces with policy-gradient training.

struct HybridResult {
  ParameterSet params;
  std::vector<SftStepInfo> sft_steps;
  std::vector<RlStepInfo> rl_steps;
  RunStatus status = RunStatus::kOk;
  std::string message;
};

// ---- two-stage: SFT on traces, then RL with a 4x rollout budget ----

struct TwoStageConfig {
  SftConfig sft;
  RlConfig rl;
  // Stage-1 length cap: traces longer than this many target tokens are
  // excluded from the SFT stage. The RL stage rollout budget is fixed at
  // 4 * stage1_max_tokens (overriding rl.max_new_tokens).
  int stage1_max_tokens = 256;
  void validate() const;
};

HybridResult run_two_stage(const Policy& policy, const ParameterSet& init,
                           const std::vector<SupervisedTrace>& traces,
                           const std::vector<Query>& pool, const TwoStageConfig& cfg,
                           MetricsWriter* metrics = nullptr);

// ---- interleaved: per-group routing between the two losses ----

enum class Branch { kSft, kRl };

// kSft when not a single rollout in the group is correct (the policy cannot
// reach the answer on its own, so it gets ground truth), kRl otherwise.
Branch route_interleaved(const RolloutGroup& group);

struct InterleavedConfig {
  RlConfig rl;
  double sft_weight = 1.0;  // scale of the supervised branch in the batch loss
  void validate() const;
};

struct InterleavedStepInfo {
  RlStepInfo rl;
  double fraction_sft = 0.0;  // fraction of this step's queries routed to SFT
};

struct InterleavedResult {
  ParameterSet params;
  std::vector<InterleavedStepInfo> steps;
  RunStatus status = RunStatus::kOk;
  std::string message;
};

// `traces` must hold a supervised trace for every query id in the pool.
InterleavedResult train_interleaved(const Policy& policy, const ParameterSet& init,
                                    const std::vector<Query>& pool,
                                    const std::map<std::string, SupervisedTrace>& traces,
                                    const InterleavedConfig& cfg,
                                    MetricsWriter* metrics = nullptr);

// ---- progressive: annealed ground-truth prefix ----

// Linear anneal from 1 at step 0 towards 0 at step == total_steps.
double prefix_fraction(int step, int total_steps);

struct ProgressiveConfig {
  RlConfig rl;
  double prefix_weight = 0.2;  // cross-entropy weight on the teacher prefix
  void validate() const;
};

template <typename T>
struct ProgressiveLoss {
  double loss = 0.0;
  ParameterSetT<T> grad;
  double sft_part = 0.0;
  double rl_part = 0.0;
  int prefix_len = 0;
};

// fraction >= 1: exactly an SFT step on the full trace with uniform weight
// `prefix_weight` (the group is not touched and may be empty).
// fraction <= 0: exactly a GRPO step on the group.
// Otherwise the sum of the GRPO loss and the weighted cross-entropy over the
// first round(fraction * len) trace tokens.
template <typename T>
ProgressiveLoss<T> progressive_loss(const PolicyT<T>& policy,
                                    const ParameterSetT<T>& params,
                                    const RolloutGroup& group,
                                    const std::vector<std::vector<T>>& ref_log_probs,
                                    const SupervisedTrace& trace, double fraction,
                                    double prefix_weight, double clip_epsilon,
                                    double kl_coefficient);

extern template ProgressiveLoss<float> progressive_loss(
    const PolicyT<float>&, const ParameterSetT<float>&, const RolloutGroup&,
    const std::vector<std::vector<float>>&, const SupervisedTrace&, double, double,
    double, double);
extern template ProgressiveLoss<double> progressive_loss(
    const PolicyT<double>&, const ParameterSetT<double>&, const RolloutGroup&,
    const std::vector<std::vector<double>>&, const SupervisedTrace&, double, double,
    double, double);

struct ProgressiveStepInfo {
  RlStepInfo rl;
  double fraction = 0.0;
  double mean_prefix_len = 0.0;
  double sft_part = 0.0;
};

struct ProgressiveResult {
  ParameterSet params;
  std::vector<ProgressiveStepInfo> steps;
  RunStatus status = RunStatus::kOk;
  std::string message;
};

ProgressiveResult train_progressive(const Policy& policy, const ParameterSet& init,
                                    const std::vector<Query>& pool,
                                    const std::map<std::string, SupervisedTrace>& traces,
                                    const ProgressiveConfig& cfg,
                                    MetricsWriter* metrics = nullptr);

}  // namespace postlab

#endif  // POSTLAB_HYBRID_HPP_

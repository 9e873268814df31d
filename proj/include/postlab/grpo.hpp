// Copyright 2026 The postlab Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef POSTLAB_GRPO_HPP_
#define POSTLAB_GRPO_HPP_

#include <map>
#include <string>
#include <vector>

#include "postlab/metrics.hpp"
#include "postlab/policy.hpp"
#include "postlab/sft.hpp"
#include "postlab/task_env.hpp"

namespace postlab {

struct Rollout {
  std::vector<int> tokens;           // includes the terminal eos when sampled
  std::vector<float> old_log_probs;  // under the behaviour snapshot
  RewardBreakdown reward;
  bool truncated = false;
};

struct RolloutGroup {
  std::string query_id;
  std::vector<int> prompt_tokens;
  std::vector<Rollout> rollouts;
  std::vector<double> advantages;
};

struct RlConfig {
  double learning_rate = 1e-3;
  int batch_size = 4;   // queries per step
  int group_size = 8;   // rollouts per query
  double clip_epsilon = 0.2;
  double kl_coefficient = 0.005;
  double rollout_temperature = 1.0;
  int max_new_tokens = 160;
  int steps = 200;
  double grad_clip = 1.0;
  uint64_t seed = 0;
  int workers = 0;  // 0 = library default
  void validate() const;
};

struct RlStepInfo {
  int step = 0;
  double loss = 0.0;
  double mean_reward = 0.0;
  double mean_entropy = 0.0;
  double mean_response_length = 0.0;
  double truncation_ratio = 0.0;
  double clip_fraction = 0.0;
  double mean_kl_to_ref = 0.0;
  double grad_norm = 0.0;
};

struct RlResult {
  ParameterSet params;
  std::vector<RlStepInfo> steps;
  RunStatus status = RunStatus::kOk;
  std::string message;
};

// Group-relative advantages: (r - mean) / population std, or exactly zero for
// every member when the rewards are (numerically) uniform. Throws if fewer
// than two rewards are given.
std::vector<double> compute_advantages(std::span<const double> rewards);

// k3 estimator of KL(cur || ref) at one token: exp(d) - d - 1 with
// d = logp_ref - logp_cur. Non-negative, zero iff the log-probs agree.
double token_kl(double logp_cur, double logp_ref);

// Samples group_size rollouts from params under `dec` (seed is derived per
// rollout from dec.seed, the query id and the rollout index), scores rewards
// and fills advantages.
RolloutGroup collect_group(const Policy& policy, const ParameterSet& params,
                           const Query& query, int group_size,
                           const DecodingConfig& dec);

template <typename T>
struct GrpoLossResult {
  double loss = 0.0;
  ParameterSetT<T> grad;
  double clip_fraction = 0.0;  // fraction of tokens on the clipped branch
  double mean_kl = 0.0;        // mean k3 to the reference, telemetry
  double mean_entropy = 0.0;
  int64_t token_count = 0;
};

// Clipped importance-ratio surrogate with group-relative advantages, averaged
// 1/|o| within each rollout and 1/G across the group, plus kl_coefficient
// times the k3 divergence to the reference policy, negated into a loss.
// Old log-probs come from the rollouts; ref_log_probs must be aligned with
// the rollout tokens (they also feed the mean_kl telemetry when
// kl_coefficient is zero).
template <typename T>
GrpoLossResult<T> grpo_loss(const PolicyT<T>& policy,
                            const ParameterSetT<T>& params_cur,
                            const RolloutGroup& group,
                            const std::vector<std::vector<T>>& ref_log_probs,
                            double clip_epsilon, double kl_coefficient);

extern template GrpoLossResult<float> grpo_loss(const PolicyT<float>&,
                                                const ParameterSetT<float>&,
                                                const RolloutGroup&,
                                                const std::vector<std::vector<float>>&,
                                                double, double);
extern template GrpoLossResult<double> grpo_loss(
    const PolicyT<double>&, const ParameterSetT<double>&, const RolloutGroup&,
    const std::vector<std::vector<double>>&, double, double);

// Drops queries whose measured pass rate puts them in the easiest difficulty
// level (pass_count * 16 >= 12 * runs). Queries missing from the profile are
// kept.
std::vector<Query> filter_easiest(const std::vector<Query>& pool,
                                  const std::map<std::string, int>& pass_count,
                                  int runs);

// On-policy loop: each step snapshots the behaviour policy, collects groups
// for a batch of queries, applies one SGD step on the group loss. The
// reference policy for the KL term stays frozen at `init`.
RlResult train_rl(const Policy& policy, const ParameterSet& init,
                  const std::vector<Query>& pool, const RlConfig& cfg,
                  MetricsWriter* metrics = nullptr);

}  // namespace postlab

#endif  // POSTLAB_GRPO_HPP_

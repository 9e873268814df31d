// Copyright 2026 The postlab Authors
// SPDX-License-Identifier: Apache-2.0

#include "postlab/hybrid.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "postlab/parallel.hpp"
#include "postlab/rng.hpp"

namespace postlab {

void TwoStageConfig::validate() const {
  sft.validate();
  rl.validate();
  if (stage1_max_tokens < 1)
    throw std::invalid_argument("stage1_max_tokens must be >= 1");
}

void InterleavedConfig::validate() const {
  rl.validate();
  if (sft_weight < 0.0) throw std::invalid_argument("sft_weight must be >= 0");
}

void ProgressiveConfig::validate() const {
  rl.validate();
  if (prefix_weight <= 0.0) throw std::invalid_argument("prefix_weight must be positive");
}

HybridResult run_two_stage(const Policy& policy, const ParameterSet& init,
                           const std::vector<SupervisedTrace>& traces,
                           const std::vector<Query>& pool, const TwoStageConfig& cfg,
                           MetricsWriter* metrics) {
  cfg.validate();
  std::vector<SupervisedTrace> stage1;
  for (const auto& tr : traces) {
    if (static_cast<int>(tr.target_tokens.size()) <= cfg.stage1_max_tokens)
      stage1.push_back(tr);
  }
  if (stage1.empty())
    throw std::invalid_argument("no traces fit within stage1_max_tokens");

  HybridResult res;
  const SftResult sft = train_sft(policy, init, stage1, cfg.sft, metrics);
  res.sft_steps = sft.steps;
  res.params = sft.params;
  if (sft.status != RunStatus::kOk) {
    res.status = sft.status;
    res.message = "stage 1: " + sft.message;
    return res;
  }

  RlConfig rl = cfg.rl;
  rl.max_new_tokens = 4 * cfg.stage1_max_tokens;  // longer leash after warm start
  const RlResult rlres = train_rl(policy, sft.params, pool, rl, metrics);
  res.rl_steps = rlres.steps;
  res.params = rlres.params;
  if (rlres.status != RunStatus::kOk) {
    res.status = rlres.status;
    res.message = "stage 2: " + rlres.message;
  }
  return res;
}

Branch route_interleaved(const RolloutGroup& group) {
  for (const auto& ro : group.rollouts) {
    if (ro.reward.correct) return Branch::kRl;
  }
  return Branch::kSft;
}

namespace {

// Shuffled cyclic batches over a fixed pool, deterministic in the seed.
class PoolCycler {
 public:
  PoolCycler(size_t n, uint64_t seed) : rng_(mix_seed(seed, 0xc9c)), order_(n) {
    for (size_t i = 0; i < n; ++i) order_[i] = i;
    cursor_ = n;  // force a shuffle on first use
  }

  std::vector<size_t> next(size_t batch) {
    if (cursor_ + batch > order_.size()) {
      for (size_t i = order_.size(); i > 1; --i) {
        std::swap(order_[i - 1], order_[rng_.below(i)]);
      }
      cursor_ = 0;
    }
    std::vector<size_t> out(order_.begin() + cursor_, order_.begin() + cursor_ + batch);
    cursor_ += batch;
    return out;
  }

 private:
  Rng rng_;
  std::vector<size_t> order_;
  size_t cursor_ = 0;
};

const SupervisedTrace& trace_for(const std::map<std::string, SupervisedTrace>& traces,
                                 const std::string& id) {
  auto it = traces.find(id);
  if (it == traces.end())
    throw std::invalid_argument("no supervised trace for query " + id);
  return it->second;
}

DecodingConfig rollout_decoding(const RlConfig& cfg, int step) {
  DecodingConfig dec;
  dec.temperature = cfg.rollout_temperature;
  dec.top_p = 1.0;
  dec.top_k = 0;
  dec.max_new_tokens = cfg.max_new_tokens;
  dec.seed = mix_seed(cfg.seed, 0xc0, static_cast<uint64_t>(step));
  return dec;
}

}  // namespace

InterleavedResult train_interleaved(const Policy& policy, const ParameterSet& init,
                                    const std::vector<Query>& pool,
                                    const std::map<std::string, SupervisedTrace>& traces,
                                    const InterleavedConfig& cfg,
                                    MetricsWriter* metrics) {
  cfg.validate();
  if (pool.empty()) throw std::invalid_argument("train_interleaved: empty query pool");
  for (const auto& q : pool) trace_for(traces, q.id);  // fail fast

  InterleavedResult res;
  res.params = init;
  const ParameterSet& params_ref = init;
  PoolCycler cycler(pool.size(), cfg.rl.seed);
  const size_t batch = std::min<size_t>(cfg.rl.batch_size, pool.size());
  const int workers = resolve_workers(cfg.rl.workers);

  struct Work {
    RolloutGroup group;
    Branch branch = Branch::kRl;
    double loss = 0.0;
    ParameterSet grad;
    GrpoLossResult<float> rl;  // telemetry, RL branch only
  };

  for (int step = 0; step < cfg.rl.steps; ++step) {
    const auto idx = cycler.next(batch);
    const ParameterSet params_old = res.params;
    std::vector<Work> work(batch);
    parallel_for(static_cast<int64_t>(batch), workers, [&](int64_t b) {
      const Query& q = pool[idx[b]];
      Work& w = work[b];
      w.group = collect_group(policy, params_old, q, cfg.rl.group_size,
                              rollout_decoding(cfg.rl, step));
      w.branch = route_interleaved(w.group);
      if (w.branch == Branch::kSft) {
        auto lg = sft_loss(policy, res.params, trace_for(traces, q.id));
        w.loss = cfg.sft_weight * lg.loss;
        w.grad = std::move(lg.grad);
        w.grad.scale(static_cast<float>(cfg.sft_weight));
      } else {
        std::vector<std::vector<float>> ref_lp(w.group.rollouts.size());
        for (size_t i = 0; i < w.group.rollouts.size(); ++i) {
          ref_lp[i] = policy.response_log_probs(params_ref, w.group.prompt_tokens,
                                                w.group.rollouts[i].tokens);
        }
        w.rl = grpo_loss(policy, res.params, w.group, ref_lp, cfg.rl.clip_epsilon,
                         cfg.rl.kl_coefficient);
        w.loss = w.rl.loss;
        w.grad = std::move(w.rl.grad);
      }
    });

    ParameterSet grad;
    double loss = 0.0;
    double reward_sum = 0.0, len_sum = 0.0, trunc_sum = 0.0;
    double kl_sum = 0.0, ent_sum = 0.0, clip_sum = 0.0;
    int64_t rl_tokens = 0;
    int rollouts_total = 0, sft_routed = 0;
    for (size_t b = 0; b < batch; ++b) {
      Work& w = work[b];
      loss += w.loss;
      if (b == 0) {
        grad = std::move(w.grad);
      } else {
        grad.axpy(1.0f, w.grad);
      }
      for (const auto& ro : w.group.rollouts) {
        reward_sum += ro.reward.total;
        len_sum += static_cast<double>(ro.tokens.size());
        trunc_sum += ro.truncated ? 1.0 : 0.0;
        ++rollouts_total;
      }
      if (w.branch == Branch::kSft) {
        ++sft_routed;
      } else {
        kl_sum += w.rl.mean_kl * static_cast<double>(w.rl.token_count);
        ent_sum += w.rl.mean_entropy * static_cast<double>(w.rl.token_count);
        clip_sum += w.rl.clip_fraction * static_cast<double>(w.rl.token_count);
        rl_tokens += w.rl.token_count;
      }
    }
    const float inv_b = 1.0f / static_cast<float>(batch);
    grad.scale(inv_b);
    loss *= inv_b;

    const double gnorm = grad.l2_norm();
    if (!std::isfinite(loss) || !std::isfinite(gnorm)) {
      res.status = RunStatus::kNumericError;
      res.message = "non-finite loss or gradient at step " + std::to_string(step);
      return res;
    }
    if (gnorm > cfg.rl.grad_clip)
      grad.scale(static_cast<float>(cfg.rl.grad_clip / gnorm));
    res.params.axpy(-static_cast<float>(cfg.rl.learning_rate), grad);

    InterleavedStepInfo info;
    info.rl.step = step;
    info.rl.loss = loss;
    info.rl.mean_reward = reward_sum / rollouts_total;
    info.rl.mean_response_length = len_sum / rollouts_total;
    info.rl.truncation_ratio = trunc_sum / rollouts_total;
    info.rl.mean_entropy = rl_tokens ? ent_sum / rl_tokens : 0.0;
    info.rl.clip_fraction = rl_tokens ? clip_sum / rl_tokens : 0.0;
    info.rl.mean_kl_to_ref = rl_tokens ? kl_sum / rl_tokens : 0.0;
    info.rl.grad_norm = gnorm;
    info.fraction_sft = static_cast<double>(sft_routed) / static_cast<double>(batch);
    res.steps.push_back(info);
    if (metrics) {
      metrics->write({{"step", step},
                      {"loss", loss},
                      {"mean_reward", info.rl.mean_reward},
                      {"mean_entropy", info.rl.mean_entropy},
                      {"mean_response_length", info.rl.mean_response_length},
                      {"truncation_ratio", info.rl.truncation_ratio},
                      {"clip_fraction", info.rl.clip_fraction},
                      {"mean_kl_to_ref", info.rl.mean_kl_to_ref},
                      {"grad_norm", gnorm},
                      {"fraction_sft", info.fraction_sft}});
    }
  }
  return res;
}

double prefix_fraction(int step, int total_steps) {
  if (total_steps < 1) throw std::invalid_argument("total_steps must be >= 1");
  if (step < 0) throw std::invalid_argument("step must be >= 0");
  return std::max(0.0, 1.0 - static_cast<double>(step) / total_steps);
}

template <typename T>
ProgressiveLoss<T> progressive_loss(const PolicyT<T>& policy,
                                    const ParameterSetT<T>& params,
                                    const RolloutGroup& group,
                                    const std::vector<std::vector<T>>& ref_log_probs,
                                    const SupervisedTrace& trace, double fraction,
                                    double prefix_weight, double clip_epsilon,
                                    double kl_coefficient) {
  trace.validate();
  ProgressiveLoss<T> out;
  const size_t len = trace.target_tokens.size();

  if (fraction >= 1.0) {
    SupervisedTrace full = trace;
    full.loss_kind.assign(len, LossKind::kSft);
    full.loss_weight.assign(len, static_cast<float>(prefix_weight));
    auto lg = sft_loss(policy, params, full);
    out.loss = lg.loss;
    out.sft_part = lg.loss;
    out.grad = std::move(lg.grad);
    out.prefix_len = static_cast<int>(len);
    return out;
  }

  auto gl = grpo_loss(policy, params, group, ref_log_probs, clip_epsilon,
                      kl_coefficient);
  out.loss = gl.loss;
  out.rl_part = gl.loss;
  out.grad = std::move(gl.grad);
  if (fraction <= 0.0) return out;

  const int plen =
      static_cast<int>(std::llround(fraction * static_cast<double>(len)));
  out.prefix_len = plen;
  if (plen == 0) return out;
  // Causality makes the prefix log-probs independent of later trace tokens,
  // so scoring the truncated target is exact.
  SupervisedTrace prefix;
  prefix.query_id = trace.query_id;
  prefix.prompt_tokens = trace.prompt_tokens;
  prefix.target_tokens.assign(trace.target_tokens.begin(),
                              trace.target_tokens.begin() + plen);
  prefix.loss_kind.assign(plen, LossKind::kSft);
  prefix.loss_weight.assign(plen, static_cast<float>(prefix_weight));
  prefix.source = trace.source + ":prefix";
  auto lg = sft_loss(policy, params, prefix);
  out.sft_part = lg.loss;
  out.loss += lg.loss;
  out.grad.axpy(T(1), lg.grad);
  return out;
}

template ProgressiveLoss<float> progressive_loss(
    const PolicyT<float>&, const ParameterSetT<float>&, const RolloutGroup&,
    const std::vector<std::vector<float>>&, const SupervisedTrace&, double, double,
    double, double);
template ProgressiveLoss<double> progressive_loss(
    const PolicyT<double>&, const ParameterSetT<double>&, const RolloutGroup&,
    const std::vector<std::vector<double>>&, const SupervisedTrace&, double, double,
    double, double);

ProgressiveResult train_progressive(const Policy& policy, const ParameterSet& init,
                                    const std::vector<Query>& pool,
                                    const std::map<std::string, SupervisedTrace>& traces,
                                    const ProgressiveConfig& cfg,
                                    MetricsWriter* metrics) {
  cfg.validate();
  if (pool.empty()) throw std::invalid_argument("train_progressive: empty query pool");
  for (const auto& q : pool) trace_for(traces, q.id);

  ProgressiveResult res;
  res.params = init;
  const ParameterSet& params_ref = init;
  PoolCycler cycler(pool.size(), cfg.rl.seed);
  const size_t batch = std::min<size_t>(cfg.rl.batch_size, pool.size());
  const int workers = resolve_workers(cfg.rl.workers);

  struct Work {
    RolloutGroup group;
    ProgressiveLoss<float> pl;
    bool has_group = false;
  };

  for (int step = 0; step < cfg.rl.steps; ++step) {
    const double fraction = prefix_fraction(step, cfg.rl.steps);
    const auto idx = cycler.next(batch);
    const ParameterSet params_old = res.params;
    std::vector<Work> work(batch);
    parallel_for(static_cast<int64_t>(batch), workers, [&](int64_t b) {
      const Query& q = pool[idx[b]];
      Work& w = work[b];
      std::vector<std::vector<float>> ref_lp;
      if (fraction < 1.0) {
        w.group = collect_group(policy, params_old, q, cfg.rl.group_size,
                                rollout_decoding(cfg.rl, step));
        w.has_group = true;
        ref_lp.resize(w.group.rollouts.size());
        for (size_t i = 0; i < w.group.rollouts.size(); ++i) {
          ref_lp[i] = policy.response_log_probs(params_ref, w.group.prompt_tokens,
                                                w.group.rollouts[i].tokens);
        }
      }
      w.pl = progressive_loss(policy, res.params, w.group, ref_lp,
                              trace_for(traces, q.id), fraction, cfg.prefix_weight,
                              cfg.rl.clip_epsilon, cfg.rl.kl_coefficient);
    });

    ParameterSet grad;
    double loss = 0.0, sft_part = 0.0, prefix_sum = 0.0;
    double reward_sum = 0.0, len_sum = 0.0, trunc_sum = 0.0;
    int rollouts_total = 0;
    for (size_t b = 0; b < batch; ++b) {
      Work& w = work[b];
      loss += w.pl.loss;
      sft_part += w.pl.sft_part;
      prefix_sum += w.pl.prefix_len;
      if (b == 0) {
        grad = std::move(w.pl.grad);
      } else {
        grad.axpy(1.0f, w.pl.grad);
      }
      if (w.has_group) {
        for (const auto& ro : w.group.rollouts) {
          reward_sum += ro.reward.total;
          len_sum += static_cast<double>(ro.tokens.size());
          trunc_sum += ro.truncated ? 1.0 : 0.0;
          ++rollouts_total;
        }
      }
    }
    const float inv_b = 1.0f / static_cast<float>(batch);
    grad.scale(inv_b);
    loss *= inv_b;
    sft_part *= inv_b;

    const double gnorm = grad.l2_norm();
    if (!std::isfinite(loss) || !std::isfinite(gnorm)) {
      res.status = RunStatus::kNumericError;
      res.message = "non-finite loss or gradient at step " + std::to_string(step);
      return res;
    }
    if (gnorm > cfg.rl.grad_clip)
      grad.scale(static_cast<float>(cfg.rl.grad_clip / gnorm));
    res.params.axpy(-static_cast<float>(cfg.rl.learning_rate), grad);

    ProgressiveStepInfo info;
    info.rl.step = step;
    info.rl.loss = loss;
    info.rl.grad_norm = gnorm;
    info.rl.mean_reward = rollouts_total ? reward_sum / rollouts_total : 0.0;
    info.rl.mean_response_length = rollouts_total ? len_sum / rollouts_total : 0.0;
    info.rl.truncation_ratio = rollouts_total ? trunc_sum / rollouts_total : 0.0;
    info.fraction = fraction;
    info.mean_prefix_len = prefix_sum / static_cast<double>(batch);
    info.sft_part = sft_part;
    res.steps.push_back(info);
    if (metrics) {
      metrics->write({{"step", step},
                      {"loss", loss},
                      {"fraction", fraction},
                      {"mean_prefix_len", info.mean_prefix_len},
                      {"sft_part", sft_part},
                      {"mean_reward", info.rl.mean_reward},
                      {"mean_response_length", info.rl.mean_response_length},
                      {"truncation_ratio", info.rl.truncation_ratio},
                      {"grad_norm", gnorm}});
    }
  }
  return res;
}

}  // namespace postlab

// Copyright 2026 The postlab Authors
// SPDX-License-Identifier: Apache-2.0

#include "postlab/grpo.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "postlab/eval.hpp"
#include "postlab/parallel.hpp"
#include "postlab/rng.hpp"
#include "postlab/tokenizer.hpp"

namespace postlab {

void RlConfig::validate() const {
  if (learning_rate <= 0.0) throw std::invalid_argument("learning_rate must be positive");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (group_size < 2) throw std::invalid_argument("group_size must be >= 2");
  if (clip_epsilon <= 0.0 || clip_epsilon >= 1.0)
    throw std::invalid_argument("clip_epsilon must be in (0, 1)");
  if (kl_coefficient < 0.0)
    throw std::invalid_argument("kl_coefficient must be >= 0");
  if (rollout_temperature <= 0.0)
    throw std::invalid_argument("rollout_temperature must be positive");
  if (max_new_tokens < 1) throw std::invalid_argument("max_new_tokens must be >= 1");
  if (steps < 1) throw std::invalid_argument("steps must be >= 1");
  if (grad_clip <= 0.0) throw std::invalid_argument("grad_clip must be positive");
}

std::vector<double> compute_advantages(std::span<const double> rewards) {
  const size_t g = rewards.size();
  if (g < 2) throw std::invalid_argument("advantages need a group of at least 2");
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= static_cast<double>(g);
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  var /= static_cast<double>(g);
  const double sd = std::sqrt(var);
  std::vector<double> adv(g, 0.0);
  if (sd < 1e-8) return adv;  // uniform rewards carry no signal
  for (size_t i = 0; i < g; ++i) adv[i] = (rewards[i] - mean) / sd;
  return adv;
}

double token_kl(double logp_cur, double logp_ref) {
  const double d = logp_ref - logp_cur;
  return std::max(0.0, std::exp(d) - d - 1.0);
}

RolloutGroup collect_group(const Policy& policy, const ParameterSet& params,
                           const Query& query, int group_size,
                           const DecodingConfig& dec) {
  if (group_size < 2) throw std::invalid_argument("group_size must be >= 2");
  const auto& tok = Tokenizer::instance();
  RolloutGroup group;
  group.query_id = query.id;
  group.prompt_tokens =
      query.prompt_tokens.empty() ? render_prompt(query) : query.prompt_tokens;
  group.rollouts.resize(group_size);
  for (int i = 0; i < group_size; ++i) {
    DecodingConfig d = dec;
    d.seed = mix_seed(dec.seed, hash_str(query.id), static_cast<uint64_t>(i));
    const SampleResult s = policy.sample(params, group.prompt_tokens, d);
    Rollout& r = group.rollouts[i];
    r.tokens = s.tokens;
    r.old_log_probs = s.log_probs;
    r.truncated = s.truncated;
    r.reward = reward(query, tok.decode(r.tokens));
  }
  std::vector<double> rewards(group_size);
  for (int i = 0; i < group_size; ++i) rewards[i] = group.rollouts[i].reward.total;
  group.advantages = compute_advantages(rewards);
  return group;
}

template <typename T>
GrpoLossResult<T> grpo_loss(const PolicyT<T>& policy,
                            const ParameterSetT<T>& params_cur,
                            const RolloutGroup& group,
                            const std::vector<std::vector<T>>& ref_log_probs,
                            double clip_epsilon, double kl_coefficient) {
  const size_t g = group.rollouts.size();
  if (g < 2) throw std::invalid_argument("grpo_loss needs a group of at least 2");
  if (group.advantages.size() != g)
    throw std::invalid_argument("group advantages not filled");
  if (ref_log_probs.size() != g)
    throw std::invalid_argument("one ref_log_probs vector per rollout required");
  if (clip_epsilon <= 0.0 || clip_epsilon >= 1.0)
    throw std::invalid_argument("clip_epsilon must be in (0, 1)");

  GrpoLossResult<T> out;
  double loss = 0.0;
  double kl_sum = 0.0, entropy_sum = 0.0;
  int64_t clipped = 0, tokens_total = 0;
  const double inv_g = 1.0 / static_cast<double>(g);

  for (size_t i = 0; i < g; ++i) {
    const Rollout& ro = group.rollouts[i];
    const size_t len = ro.tokens.size();
    if (len == 0) throw std::invalid_argument("empty rollout");
    if (ro.old_log_probs.size() != len)
      throw std::invalid_argument("rollout log-probs not aligned with tokens");
    if (ref_log_probs[i].size() != len)
      throw std::invalid_argument("ref log-probs not aligned with tokens");

    const auto scored = policy.score(params_cur, group.prompt_tokens, ro.tokens);
    const double adv = group.advantages[i];
    const double inv_len = 1.0 / static_cast<double>(len);
    std::vector<T> weights(len);
    double objective = 0.0;
    for (size_t t = 0; t < len; ++t) {
      const double lc = static_cast<double>(scored.log_probs[t]);
      const double lo = static_cast<double>(ro.old_log_probs[t]);
      const double lr = static_cast<double>(ref_log_probs[i][t]);
      const double ratio = std::exp(lc - lo);
      const double unclipped = ratio * adv;
      const double clipped_ratio =
          std::min(std::max(ratio, 1.0 - clip_epsilon), 1.0 + clip_epsilon);
      const double clipped_term = clipped_ratio * adv;
      const bool use_clip = clipped_term < unclipped;
      double obj_t = use_clip ? clipped_term : unclipped;
      double dobj_dlc = use_clip ? 0.0 : ratio * adv;
      if (use_clip) ++clipped;

      const double d = lr - lc;
      kl_sum += std::max(0.0, std::exp(d) - d - 1.0);
      if (kl_coefficient != 0.0) {
        obj_t -= kl_coefficient * std::max(0.0, std::exp(d) - d - 1.0);
        dobj_dlc -= kl_coefficient * (1.0 - std::exp(d));
      }
      objective += obj_t;
      weights[t] = T(inv_g * inv_len * dobj_dlc);
    }
    loss -= inv_g * inv_len * objective;
    entropy_sum += scored.entropy() * static_cast<double>(len);
    tokens_total += static_cast<int64_t>(len);

    auto grad_i = policy.backward(scored, params_cur, weights);
    if (i == 0) {
      out.grad = std::move(grad_i);
    } else {
      out.grad.axpy(T(1), grad_i);
    }
  }
  out.loss = loss;
  out.token_count = tokens_total;
  out.clip_fraction = static_cast<double>(clipped) / static_cast<double>(tokens_total);
  out.mean_kl = kl_sum / static_cast<double>(tokens_total);
  out.mean_entropy = entropy_sum / static_cast<double>(tokens_total);
  return out;
}

template GrpoLossResult<float> grpo_loss(const PolicyT<float>&,
                                         const ParameterSetT<float>&,
                                         const RolloutGroup&,
                                         const std::vector<std::vector<float>>&,
                                         double, double);
template GrpoLossResult<double> grpo_loss(const PolicyT<double>&,
                                          const ParameterSetT<double>&,
                                          const RolloutGroup&,
                                          const std::vector<std::vector<double>>&,
                                          double, double);

std::vector<Query> filter_easiest(const std::vector<Query>& pool,
                                  const std::map<std::string, int>& pass_count,
                                  int runs) {
  if (runs < 1) throw std::invalid_argument("runs must be >= 1");
  std::vector<Query> kept;
  kept.reserve(pool.size());
  for (const auto& q : pool) {
    auto it = pass_count.find(q.id);
    if (it != pass_count.end() && difficulty_level(it->second, runs) == 1) continue;
    kept.push_back(q);
  }
  return kept;
}

namespace {

// Everything a step needs from one query, so the batch can fan out across
// workers and reduce in a fixed order.
struct QueryWork {
  RolloutGroup group;
  GrpoLossResult<float> lg;
};

}  // namespace

RlResult train_rl(const Policy& policy, const ParameterSet& init,
                  const std::vector<Query>& pool, const RlConfig& cfg,
                  MetricsWriter* metrics) {
  cfg.validate();
  if (pool.empty()) throw std::invalid_argument("train_rl: empty query pool");

  const ParameterSet& params_ref = init;  // frozen
  RlResult res;
  res.params = init;

  Rng shuffle_rng(mix_seed(cfg.seed, 0xb01));
  std::vector<size_t> order(pool.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  size_t cursor = order.size();  // force an initial shuffle

  const int batch = std::min<int>(cfg.batch_size, static_cast<int>(pool.size()));
  const int workers = resolve_workers(cfg.workers);

  for (int step = 0; step < cfg.steps; ++step) {
    if (cursor + batch > order.size()) {
      for (size_t i = order.size(); i > 1; --i) {
        std::swap(order[i - 1], order[shuffle_rng.below(i)]);
      }
      cursor = 0;
    }
    std::vector<const Query*> batch_queries(batch);
    for (int b = 0; b < batch; ++b) batch_queries[b] = &pool[order[cursor + b]];
    cursor += batch;

    const ParameterSet params_old = res.params;  // behaviour snapshot
    std::vector<QueryWork> work(batch);
    parallel_for(batch, workers, [&](int64_t b) {
      DecodingConfig dec;
      dec.temperature = cfg.rollout_temperature;
      dec.top_p = 1.0;
      dec.top_k = 0;
      dec.max_new_tokens = cfg.max_new_tokens;
      dec.seed = mix_seed(cfg.seed, 0xc0, static_cast<uint64_t>(step));
      QueryWork& w = work[b];
      w.group = collect_group(policy, params_old, *batch_queries[b],
                              cfg.group_size, dec);
      std::vector<std::vector<float>> ref_lp(w.group.rollouts.size());
      for (size_t i = 0; i < w.group.rollouts.size(); ++i) {
        ref_lp[i] = policy.response_log_probs(params_ref, w.group.prompt_tokens,
                                              w.group.rollouts[i].tokens);
      }
      w.lg = grpo_loss(policy, res.params, w.group, ref_lp, cfg.clip_epsilon,
                       cfg.kl_coefficient);
    });

    ParameterSet grad;
    double loss = 0.0;
    double reward_sum = 0.0, len_sum = 0.0, trunc_sum = 0.0;
    double kl_sum = 0.0, ent_sum = 0.0, clip_sum = 0.0;
    int64_t tokens_total = 0;
    int rollouts_total = 0;
    for (int b = 0; b < batch; ++b) {
      QueryWork& w = work[b];
      loss += w.lg.loss;
      if (b == 0) {
        grad = std::move(w.lg.grad);
      } else {
        grad.axpy(1.0f, w.lg.grad);
      }
      for (const auto& ro : w.group.rollouts) {
        reward_sum += ro.reward.total;
        len_sum += static_cast<double>(ro.tokens.size());
        trunc_sum += ro.truncated ? 1.0 : 0.0;
        ++rollouts_total;
      }
      kl_sum += w.lg.mean_kl * static_cast<double>(w.lg.token_count);
      ent_sum += w.lg.mean_entropy * static_cast<double>(w.lg.token_count);
      clip_sum += w.lg.clip_fraction * static_cast<double>(w.lg.token_count);
      tokens_total += w.lg.token_count;
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
    if (gnorm > cfg.grad_clip) grad.scale(static_cast<float>(cfg.grad_clip / gnorm));
    res.params.axpy(-static_cast<float>(cfg.learning_rate), grad);

    RlStepInfo info;
    info.step = step;
    info.loss = loss;
    info.mean_reward = reward_sum / rollouts_total;
    info.mean_entropy = ent_sum / static_cast<double>(tokens_total);
    info.mean_response_length = len_sum / rollouts_total;
    info.truncation_ratio = trunc_sum / rollouts_total;
    info.clip_fraction = clip_sum / static_cast<double>(tokens_total);
    info.mean_kl_to_ref = kl_sum / static_cast<double>(tokens_total);
    info.grad_norm = gnorm;
    res.steps.push_back(info);
    if (metrics) {
      metrics->write({{"step", info.step},
                      {"loss", info.loss},
                      {"mean_reward", info.mean_reward},
                      {"mean_entropy", info.mean_entropy},
                      {"mean_response_length", info.mean_response_length},
                      {"truncation_ratio", info.truncation_ratio},
                      {"clip_fraction", info.clip_fraction},
                      {"mean_kl_to_ref", info.mean_kl_to_ref},
                      {"grad_norm", info.grad_norm}});
    }
  }
  return res;
}

}  // namespace postlab

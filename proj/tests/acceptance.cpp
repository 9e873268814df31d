// Copyright 2026 The postlab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Acceptance gate. Runs an exact property suite (criteria 1-11) and a set of
// fixed-seed directional experiments (criteria 12-18, three seeds each, the
// majority must satisfy), printing one [PASS]/[FAIL] line per criterion.
// Exit status is the number of failed criteria, capped at 1.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "postlab/checkpoint.hpp"
#include "postlab/data_mixing.hpp"
#include "postlab/eval.hpp"
#include "postlab/grpo.hpp"
#include "postlab/hybrid.hpp"
#include "postlab/merge.hpp"
#include "postlab/policy.hpp"
#include "postlab/rng.hpp"
#include "postlab/sft.hpp"
#include "postlab/task_env.hpp"
#include "postlab/tokenizer.hpp"
#include "postlab/trace.hpp"

using namespace postlab;
namespace fs = std::filesystem;

namespace {

// ---------------------------------------------------------------- harness

struct Line {
  int id = 0;
  std::string name;
  bool pass = false;
  std::string note;
  double secs = 0.0;
};

std::vector<Line> g_lines;

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

template <typename Fn>
void criterion(int id, const std::string& name, Fn&& body) {
  Line line;
  line.id = id;
  line.name = name;
  auto t0 = std::chrono::steady_clock::now();
  try {
    line.pass = body(line.note);
  } catch (const std::exception& e) {
    line.pass = false;
    line.note = std::string("exception: ") + e.what();
  }
  line.secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::printf("[%s] %02d %s: %s (%.1fs)\n", line.pass ? "PASS" : "FAIL", line.id,
              line.name.c_str(), line.note.c_str(), line.secs);
  std::fflush(stdout);
  g_lines.push_back(std::move(line));
}

double rel_err(double a, double b, double guard) {
  const double d = std::abs(a - b);
  return d / std::max({std::abs(a), std::abs(b), guard});
}

bool same_data(const ParameterSet& a, const ParameterSet& b) {
  if (!a.same_structure(b)) return false;
  for (size_t i = 0; i < a.size(); ++i)
    if (std::memcmp(a[i].data.data(), b[i].data.data(), a[i].data.size() * sizeof(float)) != 0)
      return false;
  return true;
}

// Central finite difference of a scalar objective at one flat coordinate.
template <typename Fn>
double fd_at(Fn&& f, ParameterSetT<double>& p, size_t ti, size_t j, double h) {
  const double orig = p[ti].data[j];
  p[ti].data[j] = orig + h;
  const double up = f(p);
  p[ti].data[j] = orig - h;
  const double dn = f(p);
  p[ti].data[j] = orig;
  return (up - dn) / (2.0 * h);
}

// Deterministic sample of flat coordinates, spread over the whole set.
std::vector<std::pair<size_t, size_t>> coord_sample(const ParameterSetT<double>& p,
                                                    int count, uint64_t seed) {
  std::vector<int64_t> prefix(p.size() + 1, 0);
  for (size_t i = 0; i < p.size(); ++i) prefix[i + 1] = prefix[i] + p[i].numel();
  const int64_t total = prefix.back();
  Rng rng(seed);
  std::vector<std::pair<size_t, size_t>> out;
  out.reserve(static_cast<size_t>(count));
  for (int c = 0; c < count; ++c) {
    const int64_t flat = static_cast<int64_t>(rng.below(static_cast<uint64_t>(total)));
    size_t ti = static_cast<size_t>(
        std::upper_bound(prefix.begin(), prefix.end(), flat) - prefix.begin() - 1);
    out.emplace_back(ti, static_cast<size_t>(flat - prefix[ti]));
  }
  return out;
}

template <typename Fn>
double max_fd_rel_err(Fn&& f, const PolicyT<double>& policy, ParameterSetT<double>& params,
                      const ParameterSetT<double>& grad, int coords, uint64_t seed,
                      double guard) {
  double worst = 0.0;
  for (auto [ti, j] : coord_sample(params, coords, seed)) {
    const double fd = fd_at(f, params, ti, j, 1e-4);
    worst = std::max(worst, rel_err(grad[ti].data[j], fd, guard));
  }
  (void)policy;
  return worst;
}

std::string decode_tokens(const std::vector<int>& toks) {
  return Tokenizer::instance().decode(toks);
}

// ---------------------------------------------------- synthetic RL fixtures

RolloutGroup synthetic_group(const PolicyT<double>& policy,
                             const ParameterSetT<double>& params,
                             const std::vector<int>& prompt,
                             const std::vector<std::vector<int>>& responses,
                             const std::vector<double>& rewards, double old_shift) {
  RolloutGroup g;
  g.query_id = "synthetic";
  g.prompt_tokens = prompt;
  for (size_t i = 0; i < responses.size(); ++i) {
    Rollout r;
    r.tokens = responses[i];
    const auto lp = policy.response_log_probs(params, prompt, r.tokens);
    for (double v : lp) r.old_log_probs.push_back(static_cast<float>(v + old_shift));
    r.reward.total = rewards[i];
    r.reward.correct = rewards[i] >= 0.9;
    g.rollouts.push_back(std::move(r));
  }
  g.advantages = compute_advantages(rewards);
  return g;
}

std::vector<std::vector<double>> ref_lps(const PolicyT<double>& policy,
                                         const ParameterSetT<double>& ref,
                                         const RolloutGroup& g) {
  std::vector<std::vector<double>> out;
  for (const Rollout& r : g.rollouts)
    out.push_back(policy.response_log_probs(ref, g.prompt_tokens, r.tokens));
  return out;
}

// ------------------------------------------------------- property criteria

bool c01_gradients(std::string& note) {
  PolicyConfig cfg;
  cfg.vocab_size = 64;
  cfg.context_len = 256;
  cfg.embed_dim = 8;
  cfg.num_layers = 1;
  cfg.num_heads = 2;
  cfg.init_seed = 5;
  PolicyT<double> policy(cfg);
  ParameterSetT<double> params = policy.init_params();
  const int64_t n_params = params.total_params();

  // (a) supervised cross-entropy on a real trace
  SupervisedTrace trace = oracle_trace(generate_query(1, 77), TraceStyle::kConcise);
  auto f_sft = [&](const ParameterSetT<double>& p) { return sft_loss(policy, p, trace).loss; };
  const auto g_sft = sft_loss(policy, params, trace).grad;
  const double e_sft = max_fd_rel_err(f_sft, policy, params, g_sft, 400, 0xC1A, 1e-3);

  // (b) clipped surrogate with an active KL term. The reference sits near the
  // current point, as it does in training; a far-away reference blows up the
  // exp() in the divergence estimator and drowns the finite difference in
  // truncation error.
  PolicyConfig ref_cfg = cfg;
  ref_cfg.init_seed = 6;
  ParameterSetT<double> ref = params;
  ref.axpy(0.05, PolicyT<double>(ref_cfg).init_params());
  RolloutGroup group = synthetic_group(policy, params, {1, 2, 3, 4, 5, 6},
                                       {{7, 9, 4, 0}, {5, 5, 8, 2, 0}, {11, 3, 0}},
                                       {1.0, 0.0, 0.1}, -0.05);
  const auto refs = ref_lps(policy, ref, group);
  auto f_rl = [&](const ParameterSetT<double>& p) {
    return grpo_loss(policy, p, group, refs, 0.2, 0.05).loss;
  };
  const auto g_rl = grpo_loss(policy, params, group, refs, 0.2, 0.05).grad;
  const double e_rl = max_fd_rel_err(f_rl, policy, params, g_rl, 400, 0xC1B, 1e-3);

  // (c) annealed mixture of the two
  SupervisedTrace mix;
  mix.query_id = "synthetic";
  mix.prompt_tokens = {1, 2, 3, 4, 5, 6};
  mix.target_tokens = {4, 6, 8, 10, 12, 0};
  mix.loss_kind.assign(6, LossKind::kSft);
  mix.loss_weight.assign(6, 1.0f);
  mix.source = "fixture";
  auto f_mix = [&](const ParameterSetT<double>& p) {
    return progressive_loss(policy, p, group, refs, mix, 0.5, 0.2, 0.2, 0.05).loss;
  };
  const auto g_mix = progressive_loss(policy, params, group, refs, mix, 0.5, 0.2, 0.2, 0.05).grad;
  const double e_mix = max_fd_rel_err(f_mix, policy, params, g_mix, 400, 0xC1C, 1e-3);

  const double worst = std::max({e_sft, e_rl, e_mix});
  note = fmt("%lld params; max rel err %.2e (sft %.2e, surrogate %.2e, mixed %.2e), "
             "denominator floored at 1e-3",
             static_cast<long long>(n_params), worst, e_sft, e_rl, e_mix);
  return n_params <= 5000 && worst < 1e-4;
}

bool c02_advantages(std::string& note) {
  Rng rng(0xADu);
  const double levels[4] = {0.0, 0.1, 0.9, 1.0};
  int uniform_seen = 0, mixed_seen = 0;
  double worst_mean = 0.0, worst_sd = 0.0;
  for (int g = 0; g < 1000; ++g) {
    const size_t n = 2 + static_cast<size_t>(rng.below(15));
    std::vector<double> rewards(n);
    for (double& r : rewards) r = levels[rng.below(4)];
    const bool uniform =
        std::all_of(rewards.begin(), rewards.end(), [&](double r) { return r == rewards[0]; });
    const std::vector<double> adv = compute_advantages(rewards);
    if (uniform) {
      ++uniform_seen;
      for (double a : adv)
        if (a != 0.0) {
          note = fmt("group %d: uniform rewards gave a nonzero advantage %.3e", g, a);
          return false;
        }
    } else {
      ++mixed_seen;
      double mean = 0.0;
      for (double a : adv) mean += a;
      mean /= static_cast<double>(n);
      double var = 0.0;
      for (double a : adv) var += (a - mean) * (a - mean);
      const double sd = std::sqrt(var / static_cast<double>(n));
      worst_mean = std::max(worst_mean, std::abs(mean));
      worst_sd = std::max(worst_sd, std::abs(sd - 1.0));
    }
  }
  note = fmt("%d mixed / %d uniform groups; worst |mean| %.2e, worst |sd-1| %.2e",
             mixed_seen, uniform_seen, worst_mean, worst_sd);
  return uniform_seen > 0 && mixed_seen > 0 && worst_mean < 1e-6 && worst_sd < 1e-3;
}

bool c03_reinforce(std::string& note) {
  PolicyConfig cfg;
  cfg.vocab_size = 3;
  cfg.context_len = 16;
  cfg.embed_dim = 4;
  cfg.num_layers = 1;
  cfg.num_heads = 1;
  cfg.init_seed = 9;
  PolicyT<double> policy(cfg);
  ParameterSetT<double> params = policy.init_params();

  RolloutGroup group = synthetic_group(policy, params, {1, 2, 1},
                                       {{2, 1, 2, 0}, {1, 1, 0}, {2, 2, 1, 1, 0}, {1, 2, 0}},
                                       {1.0, 0.0, 0.1, 0.9}, 0.0);
  const auto refs = ref_lps(policy, params, group);
  const auto res = grpo_loss(policy, params, group, refs, 0.2, 0.0);

  // Independent oracle: finite differences of the plain REINFORCE objective
  // -(1/G) sum_i A_i (1/|o_i|) sum_t log p(o_it).
  auto reinforce = [&](const ParameterSetT<double>& p) {
    double obj = 0.0;
    for (size_t i = 0; i < group.rollouts.size(); ++i) {
      const auto lp = policy.response_log_probs(p, group.prompt_tokens, group.rollouts[i].tokens);
      double s = 0.0;
      for (double v : lp) s += v;
      obj += group.advantages[i] * s / static_cast<double>(lp.size());
    }
    return -obj / static_cast<double>(group.rollouts.size());
  };

  double worst = 0.0;
  for (size_t ti = 0; ti < params.size(); ++ti) {
    for (size_t j = 0; j < params[ti].data.size(); ++j) {
      const double fd = fd_at(reinforce, params, ti, j, 1e-5);
      worst = std::max(worst, rel_err(res.grad[ti].data[j], fd, 1e-5));
    }
  }
  note = fmt("%lld params swept; max rel err %.2e (denominator floored at 1e-5), "
             "clip fraction %.3f",
             static_cast<long long>(params.total_params()), worst, res.clip_fraction);
  return worst < 1e-5 && res.clip_fraction == 0.0;
}

bool c04_k3(std::string& note) {
  Rng rng(0x43u);
  double worst_neg = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const double lc = -8.0 * rng.uniform();
    const double lr = -8.0 * rng.uniform();
    worst_neg = std::min(worst_neg, token_kl(lc, lr));
  }
  bool zero_ok = true;
  for (int i = 0; i < 100; ++i) {
    const double x = -8.0 * rng.uniform();
    zero_ok = zero_ok && token_kl(x, x) == 0.0;
  }
  const double at_ln2 = token_kl(-1.5, -1.5 + std::log(2.0));
  const double expect = 2.0 - std::log(2.0) - 1.0;
  note = fmt("min over 10k pairs %.2e; value at log-ratio ln2 off by %.2e", worst_neg,
             std::abs(at_ln2 - expect));
  return worst_neg >= 0.0 && zero_ok && std::abs(at_ln2 - expect) <= 1e-9;
}

bool c05_buckets(std::string& note) {
  const int expected[17] = {5, 5, 4, 4, 4, 3, 3, 3, 2, 2, 2, 2, 1, 1, 1, 1, 1};
  for (int c = 0; c <= 16; ++c) {
    const int got = difficulty_level(c, 16);
    // independent re-derivation of the reference thresholds
    int matches = 0, derived = 5;
    if (16 * c >= 12 * 16) ++matches, derived = 1;
    else if (16 * c >= 8 * 16) ++matches, derived = 2;
    else if (16 * c >= 5 * 16) ++matches, derived = 3;
    else if (16 * c >= 2 * 16) ++matches, derived = 4;
    else ++matches, derived = 5;
    if (matches != 1 || got != derived || got != expected[c]) {
      note = fmt("pass %d/16: got level %d, expected %d", c, got, expected[c]);
      return false;
    }
  }
  note = "levels for 0..16 of 16 match the reference thresholds; partition exhaustive";
  return true;
}

bool c06_merging(std::string& note) {
  PolicyConfig cfg;
  cfg.vocab_size = 16;
  cfg.context_len = 24;
  cfg.embed_dim = 8;
  cfg.num_layers = 1;
  cfg.num_heads = 2;
  cfg.init_seed = 21;
  Policy policy(cfg);
  const ParameterSet a = policy.init_params();
  cfg.init_seed = 22;
  const ParameterSet b = Policy(cfg).init_params();

  if (params_fingerprint(linear_merge(a, b, 0.0)) != params_fingerprint(a) ||
      params_fingerprint(linear_merge(a, b, 1.0)) != params_fingerprint(b) ||
      params_fingerprint(slerp_merge(a, b, 0.0)) != params_fingerprint(a) ||
      params_fingerprint(slerp_merge(a, b, 1.0)) != params_fingerprint(b)) {
    note = "an endpoint merge was not bit-exact";
    return false;
  }

  const ParameterSet mid = linear_merge(a, b, 0.5);
  for (size_t i = 0; i < a.size(); ++i)
    for (size_t j = 0; j < a[i].data.size(); ++j)
      if (mid[i].data[j] != 0.5f * a[i].data[j] + 0.5f * b[i].data[j]) {
        note = "linear midpoint differed from the elementwise average";
        return false;
      }

  auto one = [](float x, float y) {
    ParameterSet p;
    auto& t = p.add("w", {2});
    t.data = {x, y};
    return p;
  };
  const ParameterSet s = slerp_merge(one(1.0f, 0.0f), one(0.0f, 1.0f), 0.37);
  const auto& sd = s.at("w").data;
  const double norm = std::sqrt(double(sd[0]) * sd[0] + double(sd[1]) * sd[1]);
  if (std::abs(norm - 1.0) > 1e-5) {
    note = fmt("orthogonal slerp norm drifted to %.6f", norm);
    return false;
  }

  const ParameterSet t =
      ties_merge(one(0.0f, 0.0f), one(2.0f, -1.0f), one(-0.5f, -1.0f), 0.5, 1.0);
  if (t.at("w").data[0] != 2.0f || t.at("w").data[1] != -1.0f) {
    note = fmt("trim/elect/merge example gave [%g, %g], want [2, -1]", t.at("w").data[0],
               t.at("w").data[1]);
    return false;
  }

  Rng rng(0x6E5u);
  std::vector<float> v(37);
  for (float& x : v) x = static_cast<float>(rng.gaussian());
  v[4] = 0.75f;
  v[11] = -0.75f;  // magnitude tie resolved toward the lower index
  for (int64_t k : {int64_t(1), int64_t(7), int64_t(37)}) {
    std::vector<int64_t> oracle(v.size());
    for (size_t i = 0; i < v.size(); ++i) oracle[i] = static_cast<int64_t>(i);
    std::stable_sort(oracle.begin(), oracle.end(), [&](int64_t x, int64_t y) {
      const float ax = std::abs(v[size_t(x)]), ay = std::abs(v[size_t(y)]);
      if (ax != ay) return ax > ay;
      return x < y;
    });
    oracle.resize(static_cast<size_t>(k));
    std::sort(oracle.begin(), oracle.end());
    if (top_k_by_magnitude(v, k) != oracle) {
      note = fmt("magnitude trim mismatched the sort oracle at k=%lld",
                 static_cast<long long>(k));
      return false;
    }
  }

  note = "endpoints bit-exact; midpoint exact; slerp norm kept; worked example and "
         "trim oracle exact";
  return true;
}

bool c07_token_kl(std::string& note) {
  PolicyConfig cfg;
  cfg.vocab_size = 64;
  cfg.context_len = 64;
  cfg.embed_dim = 8;
  cfg.num_layers = 1;
  cfg.num_heads = 2;
  cfg.init_seed = 31;
  Policy policy(cfg);
  const ParameterSet pa = policy.init_params();
  cfg.init_seed = 32;
  const ParameterSet pb = Policy(cfg).init_params();

  const Query q = generate_query(1, 3);
  std::vector<int> prompt = Tokenizer::instance().encode("compute: " + q.expression + "\n");
  std::vector<int> response = Tokenizer::instance().encode("12+3");
  response.push_back(0);

  for (double v : token_level_kl(policy, pa, pa, prompt, response))
    if (std::abs(v) > 1e-12) {
      note = fmt("identical weights gave KL %.3e", v);
      return false;
    }

  const auto kl = token_level_kl(policy, pa, pb, prompt, response);
  const auto da = policy.response_log_dists(pa, prompt, response);
  const auto db = policy.response_log_dists(pb, prompt, response);
  double worst = 0.0;
  for (size_t j = 0; j < kl.size(); ++j) {
    double naive = 0.0;
    for (size_t v = 0; v < da[j].size(); ++v)
      naive += std::exp(static_cast<double>(da[j][v])) *
               (static_cast<double>(da[j][v]) - static_cast<double>(db[j][v]));
    worst = std::max(worst, std::abs(kl[j] - naive));
  }
  note = fmt("zero on identical weights; worst gap to the naive sum %.2e over %zu positions",
             worst, kl.size());
  return worst < 1e-8;
}

bool c08_reward_table(std::string& note) {
  const Query q = generate_query(2, 12);
  const std::string good = "<think>work</think>\n\\boxed{" + std::to_string(q.answer) + "}";
  const std::string bare = "\\boxed{" + std::to_string(q.answer) + "}";
  const std::string wrong_fmt =
      "<think>work</think>\n\\boxed{" + std::to_string(q.answer + 1) + "}";
  const std::string junk = "no answer here";

  struct Case {
    const std::string* text;
    double total;
    bool correct;
  } cases[] = {{&good, 1.0, true}, {&bare, 0.9, true}, {&wrong_fmt, 0.1, false}, {&junk, 0.0, false}};
  for (const auto& c : cases) {
    const RewardBreakdown r = reward(q, *c.text);
    if (std::abs(r.total - c.total) > 1e-12 || r.correct != c.correct) {
      note = fmt("expected total %.1f correct=%d, got %.3f correct=%d", c.total,
                 int(c.correct), r.total, int(r.correct));
      return false;
    }
  }
  note = "totals {1.0, 0.9, 0.1, 0.0} and correctness flags all exact";
  return true;
}

bool c09_mixing(std::string& note) {
  const std::vector<Query> pool = make_query_pool({1, 2}, 10, 0x909u);
  std::map<std::string, Query> by_id;
  for (const Query& q : pool) by_id[q.id] = q;

  // 30 correct self-generated records over the first eight queries; the last
  // two queries stay unsolved and must be backfilled.
  const int per_query[8] = {4, 4, 4, 4, 4, 4, 3, 3};
  std::vector<DistillRecord> recs;
  for (int i = 0; i < 8; ++i) {
    const DatasetRecord oracle = record_from_query(pool[size_t(i)], TraceStyle::kConcise);
    for (int k = 0; k < per_query[i]; ++k) {
      DistillRecord r;
      r.query_id = pool[size_t(i)].id;
      r.text = oracle.trace;
      r.length_tokens = static_cast<int>(Tokenizer::instance().encode(r.text).size());
      r.correct = true;
      recs.push_back(std::move(r));
    }
  }

  const std::vector<SupervisedTrace> mixed = assemble_mixed(pool, recs);
  if (mixed.size() != 32) {
    note = fmt("expected 32 traces, got %zu", mixed.size());
    return false;
  }
  int backfilled = 0;
  for (const SupervisedTrace& t : mixed) {
    const std::string text = decode_tokens(t.target_tokens);
    if (!reward(by_id.at(t.query_id), text).correct) {
      note = "a mixed trace does not earn the accuracy reward";
      return false;
    }
    if (t.source != "distill") ++backfilled;
  }
  note = fmt("32 traces (30 distilled + %d backfilled), every one correct", backfilled);
  return backfilled == 2;
}

bool c10_routing(std::string& note) {
  Rng rng(0x10Au);
  const double levels[4] = {0.0, 0.1, 0.9, 1.0};
  int to_sft = 0, to_rl = 0;
  for (int g = 0; g < 500; ++g) {
    RolloutGroup group;
    group.query_id = fmt("q%d", g);
    const size_t n = 2 + static_cast<size_t>(rng.below(6));
    bool any_correct = false;
    std::vector<double> rewards;
    for (size_t i = 0; i < n; ++i) {
      Rollout r;
      r.tokens = {1, 0};
      r.reward.total = levels[rng.below(4)];
      r.reward.correct = r.reward.total >= 0.9;
      any_correct = any_correct || r.reward.correct;
      rewards.push_back(r.reward.total);
      group.rollouts.push_back(std::move(r));
    }
    group.advantages = compute_advantages(rewards);
    const Branch b = route_interleaved(group);
    if (b != Branch::kSft && b != Branch::kRl) {
      note = "routing produced no branch";
      return false;
    }
    if ((b == Branch::kSft) != !any_correct) {
      note = fmt("group %d (any_correct=%d) routed to the wrong branch", g, int(any_correct));
      return false;
    }
    ++(b == Branch::kSft ? to_sft : to_rl);
  }
  note = fmt("500 groups routed to exactly one branch each (%d supervised, %d on-policy); "
             "zero-correct groups all supervised",
             to_sft, to_rl);
  return to_sft > 0 && to_rl > 0;
}

bool c11_progressive_ends(std::string& note) {
  PolicyConfig cfg;
  cfg.vocab_size = 64;
  cfg.context_len = 64;
  cfg.embed_dim = 8;
  cfg.num_layers = 1;
  cfg.num_heads = 2;
  cfg.init_seed = 41;
  Policy policy(cfg);
  const ParameterSet params = policy.init_params();
  cfg.init_seed = 42;
  const ParameterSet refp = Policy(cfg).init_params();

  PolicyT<float> fpolicy(policy.config());
  std::vector<std::vector<int>> resp{{7, 9, 4, 0}, {5, 5, 8, 2, 0}, {11, 3, 0}};
  RolloutGroup group;
  group.query_id = "synthetic";
  group.prompt_tokens = {1, 2, 3, 4};
  std::vector<double> rewards{1.0, 0.0, 0.1};
  for (size_t i = 0; i < resp.size(); ++i) {
    Rollout r;
    r.tokens = resp[i];
    const auto lp = fpolicy.response_log_probs(params, group.prompt_tokens, r.tokens);
    r.old_log_probs.assign(lp.begin(), lp.end());
    r.reward.total = rewards[i];
    r.reward.correct = rewards[i] >= 0.9;
    group.rollouts.push_back(std::move(r));
  }
  group.advantages = compute_advantages(rewards);
  std::vector<std::vector<float>> refs;
  for (const Rollout& r : group.rollouts)
    refs.push_back(fpolicy.response_log_probs(refp, group.prompt_tokens, r.tokens));

  SupervisedTrace trace;
  trace.query_id = "synthetic";
  trace.prompt_tokens = {1, 2, 3, 4};
  trace.target_tokens = {4, 6, 8, 10, 12, 0};
  trace.loss_kind.assign(6, LossKind::kSft);
  trace.loss_weight.assign(6, 1.0f);
  trace.source = "fixture";

  const auto at0 = progressive_loss(fpolicy, params, group, refs, trace, 0.0, 0.2, 0.2, 0.01);
  const auto pure_rl = grpo_loss(fpolicy, params, group, refs, 0.2, 0.01);
  if (at0.loss != pure_rl.loss || !same_data(at0.grad, pure_rl.grad)) {
    note = "fraction 0 did not reproduce the surrogate loss bit for bit";
    return false;
  }

  const auto at1 = progressive_loss(fpolicy, params, group, refs, trace, 1.0, 0.2, 0.2, 0.01);
  SupervisedTrace weighted = trace;
  weighted.loss_weight.assign(weighted.target_tokens.size(), 0.2f);
  const auto pure_sft = sft_loss(fpolicy, params, weighted);
  if (at1.loss != pure_sft.loss || !same_data(at1.grad, pure_sft.grad)) {
    note = "fraction 1 did not reproduce the 0.2-weighted cross-entropy bit for bit";
    return false;
  }
  note = "fraction 0 equals the surrogate and fraction 1 equals the 0.2-weighted "
         "cross-entropy, losses and gradients bitwise";
  return true;
}

// ------------------------------------------------- directional experiments

constexpr uint64_t kSeeds[3] = {101, 202, 303};

// Sizes tuned for a single desktop core; every arm stays well under the
// five-minute budget.
struct Sizes {
  int base_queries = 24;
  int base_epochs = 10;
  double base_lr = 0.01;

  int rl_pool = 20;        // difficulty 1-3 mix
  int rl_steps = 200;      // criterion 12 prescribes 200
  int rl_batch = 2;
  int rl_group = 8;
  double rl_lr = 0.02;
  int rl_max_new = 160;

  int kl_pool = 16;        // difficulty 1-2
  int kl_steps = 300;      // criterion 13 prescribes 300
  int kl_batch = 2;
  int kl_group = 6;
  int kl_max_new = 112;

  int ret_fresh = 10;      // held-out difficulty-2 queries joining the kept set
  int ret_easy = 6;        // training queries re-used as always-solved probes
  int ret_steps = 140;
  int ret_profile_runs = 8;
  int ret_eval_runs = 8;

  int style_queries = 12;  // difficulty-1 training sets for the style arms
  int style_epochs = 8;
  double style_lr = 0.005;
  int style_batch = 4;

  int solver_epochs = 12;  // criterion 17 arm, concise traces on the profiled pool
  double solver_lr = 0.01;

  int profile_pool = 25;   // difficulty 1-5
  int profile_runs = 16;

  int heldout_queries = 16;
  int style_eval_queries = 12;
  int style_eval_runs = 6;
  int merge_eval_runs = 4;
};

const Sizes S;

struct Lab {
  uint64_t seed = 0;
  std::string error;  // non-empty when fixture construction failed
  PolicyConfig cfg;
  std::optional<Policy> policy;
  ParameterSet baseline;
  std::vector<Query> pool_base;
  RlResult rl;               // 200 steps, difficulty 1-3
  RlResult kl_off, kl_on;    // 300 steps each, beta 0 vs 0.005
  SftResult good_arm, verbose_arm, solver_arm;
  std::vector<Query> pool_profile;
};

DecodingConfig eval_dec(uint64_t seed, int max_new, bool greedy = false) {
  DecodingConfig dec;
  dec.max_new_tokens = max_new;
  dec.greedy = greedy;
  dec.seed = seed;
  return dec;
}

std::vector<SupervisedTrace> traces_for(const std::vector<Query>& pool, TraceStyle style) {
  std::vector<SupervisedTrace> out;
  out.reserve(pool.size());
  for (const Query& q : pool) out.push_back(oracle_trace(q, style));
  return out;
}

RlConfig rl_config(uint64_t seed, int steps, int batch, int group, int max_new, double beta) {
  RlConfig c;
  c.learning_rate = S.rl_lr;
  c.batch_size = batch;
  c.group_size = group;
  c.clip_epsilon = 0.2;
  c.kl_coefficient = beta;
  c.rollout_temperature = 1.0;
  c.max_new_tokens = max_new;
  c.steps = steps;
  c.grad_clip = 1.0;
  c.seed = seed;
  c.workers = 1;
  return c;
}

Lab build_lab(uint64_t seed) {
  Lab lab;
  lab.seed = seed;
  try {
    lab.cfg.vocab_size = Tokenizer::instance().vocab_size();
    lab.cfg.context_len = 2048;
    lab.cfg.embed_dim = 24;
    lab.cfg.num_layers = 2;
    lab.cfg.num_heads = 2;
    lab.cfg.init_seed = mix_seed(seed, 0xB0);
    lab.policy.emplace(lab.cfg);
    const ParameterSet base = lab.policy->init_params();

    lab.pool_base = make_query_pool({1}, S.base_queries, mix_seed(seed, 0xA1));
    SftConfig bc;
    bc.learning_rate = S.base_lr;
    bc.batch_size = 8;
    bc.epochs = S.base_epochs;
    bc.seed = mix_seed(seed, 1);
    SftResult base_run =
        train_sft(*lab.policy, base, traces_for(lab.pool_base, TraceStyle::kConcise), bc);
    if (base_run.status != RunStatus::kOk) throw std::runtime_error("baseline: " + base_run.message);
    lab.baseline = std::move(base_run.params);

    const auto pool_rl = make_query_pool({1, 1, 2, 2, 3}, S.rl_pool, mix_seed(seed, 0xA2));
    lab.rl = train_rl(*lab.policy, lab.baseline, pool_rl,
                      rl_config(mix_seed(seed, 2), S.rl_steps, S.rl_batch, S.rl_group,
                                S.rl_max_new, 0.005));
    if (lab.rl.status != RunStatus::kOk) throw std::runtime_error("rl arm: " + lab.rl.message);

    const auto pool_kl = make_query_pool({1, 2}, S.kl_pool, mix_seed(seed, 0xA3));
    lab.kl_off = train_rl(*lab.policy, lab.baseline, pool_kl,
                          rl_config(mix_seed(seed, 3), S.kl_steps, S.kl_batch, S.kl_group,
                                    S.kl_max_new, 0.0));
    lab.kl_on = train_rl(*lab.policy, lab.baseline, pool_kl,
                         rl_config(mix_seed(seed, 3), S.kl_steps, S.kl_batch, S.kl_group,
                                   S.kl_max_new, 0.005));
    if (lab.kl_off.status != RunStatus::kOk || lab.kl_on.status != RunStatus::kOk)
      throw std::runtime_error("anchored/unanchored arms failed");

    const auto pool_style = make_query_pool({1}, S.style_queries, mix_seed(seed, 0xA5));
    SftConfig sc;
    sc.learning_rate = S.style_lr;
    sc.batch_size = S.style_batch;
    sc.epochs = S.style_epochs;
    sc.seed = mix_seed(seed, 5);
    lab.good_arm =
        train_sft(*lab.policy, lab.baseline, traces_for(pool_style, TraceStyle::kLongCotGood), sc);
    sc.seed = mix_seed(seed, 6);
    lab.verbose_arm = train_sft(*lab.policy, lab.baseline,
                                traces_for(pool_style, TraceStyle::kLongCotVerbose), sc);
    if (lab.good_arm.status != RunStatus::kOk || lab.verbose_arm.status != RunStatus::kOk)
      throw std::runtime_error("style arms failed");

    lab.pool_profile = make_query_pool({1, 2, 3, 4, 5}, S.profile_pool, mix_seed(seed, 0xA8));
    SftConfig vc;
    vc.learning_rate = S.solver_lr;
    vc.batch_size = 5;
    vc.epochs = S.solver_epochs;
    vc.seed = mix_seed(seed, 7);
    lab.solver_arm = train_sft(*lab.policy, lab.baseline,
                               traces_for(lab.pool_profile, TraceStyle::kConcise), vc);
    if (lab.solver_arm.status != RunStatus::kOk)
      throw std::runtime_error("solver arm: " + lab.solver_arm.message);
  } catch (const std::exception& e) {
    lab.error = e.what();
  }
  return lab;
}

struct SeedVote {
  bool ok = false;
  std::string why;
};

bool majority(const std::vector<SeedVote>& votes, std::string& note) {
  int ok = 0;
  std::string parts;
  for (size_t i = 0; i < votes.size(); ++i) {
    ok += votes[i].ok ? 1 : 0;
    parts += fmt("%ss%llu %s[%s]", i ? "; " : "", static_cast<unsigned long long>(kSeeds[i]),
                 votes[i].ok ? "ok" : "NO", votes[i].why.c_str());
  }
  note = fmt("%d/%zu seeds satisfied: %s", ok, votes.size(), parts.c_str());
  return 2 * ok > static_cast<int>(votes.size());
}

double mean_reward_over(const std::vector<RlStepInfo>& steps, size_t from, size_t count) {
  double s = 0.0;
  for (size_t i = from; i < from + count; ++i) s += steps[i].mean_reward;
  return s / static_cast<double>(count);
}

bool c12_rl_learns(const std::vector<Lab>& labs, std::string& note) {
  std::vector<SeedVote> votes;
  for (const Lab& lab : labs) {
    SeedVote v;
    if (!lab.error.empty()) {
      v.why = lab.error;
    } else if (lab.rl.steps.size() < size_t(S.rl_steps)) {
      v.why = fmt("only %zu steps", lab.rl.steps.size());
    } else {
      const double first = mean_reward_over(lab.rl.steps, 0, 50);
      const double last = mean_reward_over(lab.rl.steps, size_t(S.rl_steps) - 50, 50);
      v.ok = first < 0.4 && last > 0.7;
      v.why = fmt("first50 %.3f, last50 %.3f", first, last);
    }
    votes.push_back(std::move(v));
  }
  return majority(votes, note);
}

bool c13_kl_anchor(const std::vector<Lab>& labs, std::string& note) {
  std::vector<SeedVote> votes;
  for (const Lab& lab : labs) {
    SeedVote v;
    if (!lab.error.empty()) {
      v.why = lab.error;
    } else {
      double mx_off = 0.0, mx_on = 0.0;
      for (const auto& s : lab.kl_off.steps) mx_off = std::max(mx_off, s.mean_kl_to_ref);
      for (const auto& s : lab.kl_on.steps) mx_on = std::max(mx_on, s.mean_kl_to_ref);
      v.ok = mx_on < mx_off;
      v.why = fmt("max KL %.4f anchored vs %.4f free", mx_on, mx_off);
    }
    votes.push_back(std::move(v));
  }
  return majority(votes, note);
}

bool c14_retention(const std::vector<Lab>& labs, std::string& note) {
  std::vector<SeedVote> votes;
  for (const Lab& lab : labs) {
    SeedVote v;
    if (!lab.error.empty()) {
      v.why = lab.error;
      votes.push_back(std::move(v));
      continue;
    }
    // training pool: seen difficulty-1 queries (solved every time) plus fresh
    // difficulty-2 material that still carries a learning signal
    std::vector<Query> pool(lab.pool_base.begin(), lab.pool_base.begin() + S.ret_easy);
    const auto fresh = make_query_pool({2}, S.ret_fresh, mix_seed(lab.seed, 0xA4));
    pool.insert(pool.end(), fresh.begin(), fresh.end());

    const DifficultyProfile prof =
        pass_rate_profile(*lab.policy, lab.baseline, pool, S.ret_profile_runs,
                          eval_dec(mix_seed(lab.seed, 0xE1), S.kl_max_new), 1);
    std::vector<Query> easy;
    for (const Query& q : pool)
      if (prof.pass_count.at(q.id) == prof.runs) easy.push_back(q);
    if (easy.size() < 3) {
      v.why = fmt("only %zu always-solved queries", easy.size());
      votes.push_back(std::move(v));
      continue;
    }
    const std::vector<Query> kept = filter_easiest(pool, prof.pass_count, prof.runs);
    if (kept.empty() || kept.size() == pool.size()) {
      v.why = "easy filtering removed nothing (or everything)";
      votes.push_back(std::move(v));
      continue;
    }

    const RlConfig rc = rl_config(mix_seed(lab.seed, 4), S.ret_steps, S.kl_batch,
                                  S.kl_group, S.kl_max_new, 0.005);
    const RlResult with_easy = train_rl(*lab.policy, lab.baseline, pool, rc);
    const RlResult without_easy = train_rl(*lab.policy, lab.baseline, kept, rc);
    if (with_easy.status != RunStatus::kOk || without_easy.status != RunStatus::kOk) {
      v.why = "a retention arm aborted";
      votes.push_back(std::move(v));
      continue;
    }
    const double rate_in =
        evaluate(*lab.policy, with_easy.params, easy, S.ret_eval_runs,
                 eval_dec(mix_seed(lab.seed, 0xE2), S.kl_max_new), 1)
            .pass_rate;
    const double rate_ex =
        evaluate(*lab.policy, without_easy.params, easy, S.ret_eval_runs,
                 eval_dec(mix_seed(lab.seed, 0xE2), S.kl_max_new), 1)
            .pass_rate;
    v.ok = rate_in >= 0.95 && rate_ex < rate_in;
    v.why = fmt("%zu easy kept %.3f vs dropped %.3f", easy.size(), rate_in, rate_ex);
    votes.push_back(std::move(v));
  }
  return majority(votes, note);
}

double lexicon_rate(const EvalReport& rep) {
  int64_t total = 0;
  for (const auto& [w, n] : rep.word_counts) total += n;
  int64_t responses = 0;
  for (const auto& q : rep.queries) responses += static_cast<int64_t>(q.responses.size());
  return responses ? static_cast<double>(total) / static_cast<double>(responses) : 0.0;
}

bool c15_style_transfer(const std::vector<Lab>& labs, std::string& note) {
  std::vector<SeedVote> votes;
  for (const Lab& lab : labs) {
    SeedVote v;
    if (!lab.error.empty()) {
      v.why = lab.error;
      votes.push_back(std::move(v));
      continue;
    }
    const auto prompts = make_query_pool({1, 2}, S.heldout_queries, mix_seed(lab.seed, 0xA7));
    const DecodingConfig dec = eval_dec(0, 768, /*greedy=*/true);
    const EvalReport base = evaluate(*lab.policy, lab.baseline, prompts, 1, dec, 1);
    const EvalReport good = evaluate(*lab.policy, lab.good_arm.params, prompts, 1, dec, 1);
    const EvalReport rl = evaluate(*lab.policy, lab.rl.params, prompts, 1, dec, 1);

    const double fb = lexicon_rate(base), fg = lexicon_rate(good), fr = lexicon_rate(rl);
    const bool len_ok = good.mean_response_length >= 5.0 * base.mean_response_length;
    const bool lex_ok = fg > fb && fg > fr && fr <= 2.0 * fb;
    v.ok = len_ok && lex_ok;
    v.why = fmt("len %.0f vs base %.0f; words/resp good %.2f base %.2f rl %.2f",
                good.mean_response_length, base.mean_response_length, fg, fb, fr);
    votes.push_back(std::move(v));
  }
  return majority(votes, note);
}

bool c16_trace_quality(const std::vector<Lab>& labs, std::string& note) {
  std::vector<SeedVote> votes;
  for (const Lab& lab : labs) {
    SeedVote v;
    if (!lab.error.empty()) {
      v.why = lab.error;
      votes.push_back(std::move(v));
      continue;
    }
    const auto heldout =
        make_query_pool({1}, S.style_eval_queries, mix_seed(lab.seed, 0xA6));
    const DecodingConfig dec = eval_dec(mix_seed(lab.seed, 0xE3), 1344);
    const double pg = evaluate(*lab.policy, lab.good_arm.params, heldout,
                               S.style_eval_runs, dec, 1)
                          .pass_rate;
    const double pv = evaluate(*lab.policy, lab.verbose_arm.params, heldout,
                               S.style_eval_runs, dec, 1)
                          .pass_rate;
    v.ok = pg > pv;
    v.why = fmt("held-out pass %.3f structured vs %.3f padded", pg, pv);
    votes.push_back(std::move(v));
  }
  return majority(votes, note);
}

bool c17_level_gains(const std::vector<Lab>& labs, std::string& note) {
  std::vector<SeedVote> votes;
  for (const Lab& lab : labs) {
    SeedVote v;
    if (!lab.error.empty()) {
      v.why = lab.error;
      votes.push_back(std::move(v));
      continue;
    }
    const DecodingConfig dec = eval_dec(mix_seed(lab.seed, 0xE4), 224);
    const EvalReport before =
        evaluate(*lab.policy, lab.baseline, lab.pool_profile, S.profile_runs, dec, 1);
    DifficultyProfile prof;
    prof.runs = S.profile_runs;
    for (const auto& q : before.queries) prof.pass_count[q.id] = q.pass_count;

    const EvalReport after_sft =
        evaluate(*lab.policy, lab.solver_arm.params, lab.pool_profile, S.profile_runs, dec, 1);
    const EvalReport after_rl =
        evaluate(*lab.policy, lab.rl.params, lab.pool_profile, S.profile_runs, dec, 1);

    const auto pre = accuracy_by_level(before, prof);
    const auto post_sft = accuracy_by_level(after_sft, prof);
    const auto post_rl = accuracy_by_level(after_rl, prof);
    if (!pre.count(1) || !pre.count(5)) {
      v.why = "profile lacks a level-1 or level-5 bucket";
      votes.push_back(std::move(v));
      continue;
    }
    const double gain1 = post_sft.at(1) - pre.at(1);
    const double gain5 = post_sft.at(5) - pre.at(5);
    double worst_rl = 1.0;
    for (const auto& [lvl, acc] : post_rl) worst_rl = std::min(worst_rl, acc - pre.at(lvl));
    v.ok = gain5 > gain1 && worst_rl >= -0.02 - 1e-12;
    v.why = fmt("sft gain L5 %+.3f vs L1 %+.3f; worst rl level gain %+.3f", gain5, gain1,
                worst_rl);
    votes.push_back(std::move(v));
  }
  return majority(votes, note);
}

bool c18_merge_curve(const std::vector<Lab>& labs, std::string& note) {
  std::vector<SeedVote> votes;
  for (const Lab& lab : labs) {
    SeedVote v;
    if (!lab.error.empty()) {
      v.why = lab.error;
      votes.push_back(std::move(v));
      continue;
    }
    const std::string dir = fmt("acceptance-scratch/sweep-%llu",
                                static_cast<unsigned long long>(lab.seed));
    const std::vector<double> ratios{0.0, 0.25, 0.5, 0.75, 1.0};
    const auto entries = ratio_sweep(MergeMethod::kLinear, lab.cfg, lab.good_arm.params,
                                     lab.rl.params, nullptr, ratios, 0.2, dir);
    const auto heldout = make_query_pool({1, 2}, S.heldout_queries, mix_seed(lab.seed, 0xA9));
    const DecodingConfig dec = eval_dec(mix_seed(lab.seed, 0xE5), 768);

    std::vector<double> curve;
    for (const auto& e : entries) {
      const Checkpoint ck = load_checkpoint(e.path);
      curve.push_back(evaluate(*lab.policy, ck.params, heldout, S.merge_eval_runs, dec, 1)
                          .pass_rate);
    }
    bool ok = curve.size() == ratios.size();
    for (double p : curve) ok = ok && std::isfinite(p) && p >= 0.0 && p <= 1.0;
    for (size_t i = 1; ok && i + 1 < curve.size(); ++i) {
      const double lo = std::min({curve[i - 1], curve[i], curve[i + 1]});
      const double hi = std::max({curve[i - 1], curve[i], curve[i + 1]});
      ok = curve[i] >= lo && curve[i] <= hi;
    }
    std::string pts;
    for (size_t i = 0; i < curve.size(); ++i)
      pts += fmt("%s%.2f:%.3f", i ? " " : "", ratios[i], curve[i]);
    v.ok = ok;
    v.why = "curve " + pts;
    votes.push_back(std::move(v));
  }
  return majority(votes, note);
}

}  // namespace

int main() {
  fs::remove_all("acceptance-scratch");
  fs::create_directories("acceptance-scratch");

  criterion(1, "gradient-check", c01_gradients);
  criterion(2, "advantage-normalization", c02_advantages);
  criterion(3, "reinforce-equivalence", c03_reinforce);
  criterion(4, "k3-divergence", c04_k3);
  criterion(5, "difficulty-buckets", c05_buckets);
  criterion(6, "merging-properties", c06_merging);
  criterion(7, "token-level-kl", c07_token_kl);
  criterion(8, "reward-table", c08_reward_table);
  criterion(9, "data-mixing-fixture", c09_mixing);
  criterion(10, "routing-partition", c10_routing);
  criterion(11, "progressive-endpoints", c11_progressive_ends);

  std::vector<Lab> labs;
  for (uint64_t seed : kSeeds) {
    const auto t0 = std::chrono::steady_clock::now();
    labs.push_back(build_lab(seed));
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("# fixture seed %llu built in %.1fs%s%s\n",
                static_cast<unsigned long long>(seed), secs,
                labs.back().error.empty() ? "" : " ERROR ",
                labs.back().error.c_str());
    std::fflush(stdout);
  }

  criterion(12, "rl-learning", [&](std::string& n) { return c12_rl_learns(labs, n); });
  criterion(13, "kl-stabilization", [&](std::string& n) { return c13_kl_anchor(labs, n); });
  criterion(14, "easy-sample-retention", [&](std::string& n) { return c14_retention(labs, n); });
  criterion(15, "style-transfer", [&](std::string& n) { return c15_style_transfer(labs, n); });
  criterion(16, "trace-quality", [&](std::string& n) { return c16_trace_quality(labs, n); });
  criterion(17, "level-gains", [&](std::string& n) { return c17_level_gains(labs, n); });
  criterion(18, "merge-interpolation", [&](std::string& n) { return c18_merge_curve(labs, n); });

  int failed = 0;
  for (const Line& l : g_lines) failed += l.pass ? 0 : 1;
  std::printf("%zu criteria, %d failed\n", g_lines.size(), failed);
  return failed ? 1 : 0;
}

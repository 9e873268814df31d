// Copyright 2026 The postlab Authors
// SPDX-License-Identifier: Apache-2.0

#include <cstdio>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "postlab/config.hpp"
#include "postlab/experiment.hpp"
#include "postlab/rng.hpp"

namespace postlab {
namespace {

std::string num(int64_t v) { return std::to_string(v); }

// Incremental spec assembly; stages are numbered in insertion order and
// artifact references use the well-known stage directory names.
class SpecBuilder {
 public:
  SpecBuilder(const std::string& name, uint64_t seed, int context, int embed) : seed_(seed) {
    cfg_.set("name", name);
    cfg_.set("seed", std::to_string(seed));
    cfg_.set("model.context", num(context));
    cfg_.set("model.embed", num(embed));
    cfg_.set("model.layers", "2");
    cfg_.set("model.heads", "2");
  }

  int stage(const std::string& kind,
            std::vector<std::pair<std::string, std::string>> kv) {
    ++n_;
    std::string prefix = "stage." + num(n_) + ".";
    cfg_.set(prefix + "kind", kind);
    kinds_.push_back(kind);
    for (auto& [k, v] : kv) cfg_.set(prefix + k, v);
    return n_;
  }

  // pin a stage seed (dataset stages that must generate identical queries,
  // or treatment arms that must share their training seed)
  void pin_seed(int stage_idx, uint64_t seed) {
    cfg_.set("stage." + num(stage_idx) + ".seed", std::to_string(seed));
  }

  std::string ref(int stage_idx, const std::string& file) const {
    return "stage-" + num(stage_idx) + "-" + kinds_[static_cast<size_t>(stage_idx - 1)] +
           "/" + file;
  }
  std::string data(int stage_idx) const { return ref(stage_idx, "dataset.jsonl"); }
  std::string ckpt(int stage_idx) const { return ref(stage_idx, "ckpt-final.ckpt"); }

  uint64_t seed() const { return seed_; }
  std::string text() const { return cfg_.serialize(); }

 private:
  Config cfg_;
  uint64_t seed_;
  int n_ = 0;
  std::vector<std::string> kinds_;
};

using KV = std::vector<std::pair<std::string, std::string>>;

KV operator+(KV a, const KV& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

// Long-CoT data quality: matched budgets on concise vs structured vs padded
// traces over the same queries, compared on held-out pass rate, response
// length and reasoning-word usage.
std::string sft_quality(uint64_t seed) {
  SpecBuilder b("sft-quality", seed, 1536, 48);
  uint64_t shared = mix_seed(seed, 0x71);
  int t_concise = b.stage("dataset", {{"count", "48"}, {"difficulties", "1,2"}, {"style", "concise"}});
  b.pin_seed(t_concise, shared);
  int t_good = b.stage("dataset", {{"count", "48"}, {"difficulties", "1,2"}, {"style", "long_cot_good"}});
  b.pin_seed(t_good, shared);
  int t_verbose = b.stage("dataset", {{"count", "48"}, {"difficulties", "1,2"}, {"style", "long_cot_verbose"}});
  b.pin_seed(t_verbose, shared);
  int heldout = b.stage("dataset", {{"count", "24"}, {"difficulties", "1,2"}, {"style", "concise"}});

  KV sft{{"epochs", "4"}, {"batch", "8"}, {"lr", "0.003"}, {"max_trace_tokens", "1400"}};
  int m_concise = b.stage("sft", sft + KV{{"data", b.data(t_concise)}});
  int m_good = b.stage("sft", sft + KV{{"data", b.data(t_good)}});
  int m_verbose = b.stage("sft", sft + KV{{"data", b.data(t_verbose)}});

  KV ev{{"data", b.data(heldout)}, {"runs", "8"}, {"decode.max_new", "1400"}};
  b.stage("eval", ev + KV{{"ckpt", b.ckpt(m_concise)}});
  b.stage("eval", ev + KV{{"ckpt", b.ckpt(m_good)}});
  b.stage("eval", ev + KV{{"ckpt", b.ckpt(m_verbose)}});

  b.stage("analyze", {{"baseline", b.ckpt(m_concise)},
                      {"models", "good=" + b.ckpt(m_good) + ",verbose=" + b.ckpt(m_verbose)},
                      {"data", b.data(heldout)},
                      {"runs", "8"},
                      {"decode.max_new", "1400"}});
  return b.text();
}

// KL-regularisation ablation: identical RL runs with beta 0 and beta 0.01;
// the metrics streams carry the divergence from the frozen reference.
std::string kl_ablation(uint64_t seed) {
  SpecBuilder b("kl-ablation", seed, 256, 48);
  int train = b.stage("dataset", {{"count", "48"}, {"difficulties", "1,2,3"}, {"style", "concise"}});
  int heldout = b.stage("dataset", {{"count", "25"}, {"difficulties", "1,2,3,4,5"}, {"style", "concise"}});
  int base = b.stage("sft", {{"data", b.data(train)}, {"epochs", "4"}, {"batch", "8"}});

  KV rl{{"pool", b.data(train)}, {"init", b.ckpt(base)}, {"steps", "120"},
        {"batch", "4"}, {"group", "8"}, {"max_new", "96"}};
  int free_run = b.stage("rl", rl + KV{{"beta", "0"}});
  int tether = b.stage("rl", rl + KV{{"beta", "0.01"}});
  b.pin_seed(tether, mix_seed(seed, free_run));  // same rollout seeds as the beta=0 arm

  KV ev{{"data", b.data(heldout)}, {"runs", "16"}};
  b.stage("eval", ev + KV{{"ckpt", b.ckpt(free_run)}});
  b.stage("eval", ev + KV{{"ckpt", b.ckpt(tether)}});
  b.stage("analyze", {{"baseline", b.ckpt(base)},
                      {"models", "beta0=" + b.ckpt(free_run) + ",beta01=" + b.ckpt(tether)},
                      {"data", b.data(heldout)},
                      {"runs", "16"}});
  return b.text();
}

// Does dropping queries the start model already solves (easiest empirical
// level) change what is retained? Two RL arms from one warm start.
std::string easy_retention(uint64_t seed) {
  SpecBuilder b("easy-retention", seed, 256, 48);
  int pool = b.stage("dataset", {{"count", "64"}, {"difficulties", "1,2,3,4"}, {"style", "concise"}});
  int heldout = b.stage("dataset", {{"count", "32"}, {"difficulties", "1,2,3,4"}, {"style", "concise"}});
  int warm = b.stage("sft", {{"data", b.data(pool)}, {"epochs", "4"}, {"batch", "8"}});

  KV rl{{"pool", b.data(pool)}, {"init", b.ckpt(warm)}, {"steps", "100"},
        {"batch", "4"}, {"group", "8"}, {"max_new", "96"}};
  int keep_all = b.stage("rl", rl + KV{{"filter_easiest", "false"}});
  int filtered = b.stage("rl", rl + KV{{"filter_easiest", "true"}, {"profile_runs", "16"}});
  b.pin_seed(filtered, mix_seed(seed, keep_all));

  KV ev{{"data", b.data(heldout)}, {"runs", "16"}};
  b.stage("eval", ev + KV{{"ckpt", b.ckpt(keep_all)}});
  b.stage("eval", ev + KV{{"ckpt", b.ckpt(filtered)}});
  b.stage("analyze", {{"baseline", b.ckpt(warm)},
                      {"models", "keep_all=" + b.ckpt(keep_all) + ",filtered=" + b.ckpt(filtered)},
                      {"data", b.data(heldout)},
                      {"runs", "16"}});
  return b.text();
}

// Where do the two procedures earn their gains? Same base model, one arm
// continues with structured traces, one with policy gradients; gains are
// bucketed by the base model's own pass-rate levels.
std::string sft_vs_rl(uint64_t seed) {
  SpecBuilder b("sft-vs-rl", seed, 512, 48);
  uint64_t shared = mix_seed(seed, 0x72);
  int t_concise = b.stage("dataset", {{"count", "48"}, {"difficulties", "1,2,3"}, {"style", "concise"}});
  b.pin_seed(t_concise, shared);
  int t_good = b.stage("dataset", {{"count", "48"}, {"difficulties", "1,2,3"}, {"style", "long_cot_good"}});
  b.pin_seed(t_good, shared);
  int heldout = b.stage("dataset", {{"count", "30"}, {"difficulties", "1,2,3,4,5"}, {"style", "concise"}});

  int base = b.stage("sft", {{"data", b.data(t_concise)}, {"epochs", "4"}, {"batch", "8"}});
  int sft_arm = b.stage("sft", {{"data", b.data(t_good)}, {"init", b.ckpt(base)},
                                {"epochs", "3"}, {"batch", "8"}, {"max_trace_tokens", "420"}});
  int rl_arm = b.stage("rl", {{"pool", b.data(t_concise)}, {"init", b.ckpt(base)},
                              {"steps", "120"}, {"batch", "4"}, {"group", "8"},
                              {"max_new", "128"}});
  b.stage("analyze", {{"baseline", b.ckpt(base)},
                      {"models", "sft=" + b.ckpt(sft_arm) + ",rl=" + b.ckpt(rl_arm)},
                      {"data", b.data(heldout)},
                      {"runs", "16"},
                      {"decode.max_new", "448"}});
  return b.text();
}

// Supervised warm start, then RL with a 4x rollout budget.
std::string two_stage(uint64_t seed) {
  SpecBuilder b("two-stage", seed, 1024, 48);
  int traces = b.stage("dataset", {{"count", "40"}, {"difficulties", "1,2"}, {"style", "long_cot_good"}});
  int pool = b.stage("dataset", {{"count", "48"}, {"difficulties", "1,2,3"}, {"style", "concise"}});
  int heldout = b.stage("dataset", {{"count", "24"}, {"difficulties", "1,2,3,4"}, {"style", "concise"}});

  int hybrid = b.stage("hybrid", {{"mode", "two_stage"},
                                  {"traces", b.data(traces)},
                                  {"pool", b.data(pool)},
                                  {"init", "fresh"},
                                  {"stage1_max_tokens", "224"},
                                  {"sft.epochs", "4"}, {"sft.batch", "8"},
                                  {"rl.steps", "80"}, {"rl.batch", "4"}, {"rl.group", "8"}});
  int sft_only = b.stage("sft", {{"data", b.data(traces)}, {"epochs", "4"}, {"batch", "8"},
                                 {"max_trace_tokens", "224"}});

  KV ev{{"data", b.data(heldout)}, {"runs", "16"}, {"decode.max_new", "896"}};
  b.stage("eval", ev + KV{{"ckpt", b.ckpt(hybrid)}});
  b.stage("eval", ev + KV{{"ckpt", b.ckpt(sft_only)}});
  b.stage("analyze", {{"baseline", b.ckpt(sft_only)},
                      {"models", "two_stage=" + b.ckpt(hybrid)},
                      {"data", b.data(heldout)},
                      {"runs", "16"},
                      {"decode.max_new", "896"}});
  return b.text();
}

// Per-group routing: ground truth only where the policy has zero correct
// rollouts, policy gradients everywhere else.
std::string interleaved(uint64_t seed) {
  SpecBuilder b("interleaved", seed, 512, 48);
  int pool = b.stage("dataset", {{"count", "40"}, {"difficulties", "1,2"}, {"style", "long_cot_good"}});
  int heldout = b.stage("dataset", {{"count", "24"}, {"difficulties", "1,2,3"}, {"style", "concise"}});
  int warm = b.stage("sft", {{"data", b.data(pool)}, {"epochs", "2"}, {"batch", "8"},
                             {"max_trace_tokens", "420"}});
  int hybrid = b.stage("hybrid", {{"mode", "interleaved"},
                                  {"traces", b.data(pool)},
                                  {"pool", b.data(pool)},
                                  {"init", b.ckpt(warm)},
                                  {"sft_weight", "0.5"},
                                  {"rl.steps", "80"}, {"rl.batch", "4"}, {"rl.group", "8"},
                                  {"rl.max_new", "448"}});
  b.stage("eval", {{"ckpt", b.ckpt(hybrid)}, {"data", b.data(heldout)}, {"runs", "16"},
                   {"decode.max_new", "448"}});
  b.stage("analyze", {{"baseline", b.ckpt(warm)},
                      {"models", "interleaved=" + b.ckpt(hybrid)},
                      {"data", b.data(heldout)},
                      {"runs", "16"},
                      {"decode.max_new", "448"}});
  return b.text();
}

// Annealed ground-truth prefix: rollouts continue a teacher prefix whose
// share shrinks linearly to zero over the run.
std::string progressive(uint64_t seed) {
  SpecBuilder b("progressive", seed, 512, 48);
  int pool = b.stage("dataset", {{"count", "40"}, {"difficulties", "1,2"}, {"style", "long_cot_good"}});
  int heldout = b.stage("dataset", {{"count", "24"}, {"difficulties", "1,2,3"}, {"style", "concise"}});
  int warm = b.stage("sft", {{"data", b.data(pool)}, {"epochs", "2"}, {"batch", "8"},
                             {"max_trace_tokens", "420"}});
  int hybrid = b.stage("hybrid", {{"mode", "progressive"},
                                  {"traces", b.data(pool)},
                                  {"pool", b.data(pool)},
                                  {"init", b.ckpt(warm)},
                                  {"prefix_weight", "0.2"},
                                  {"rl.steps", "100"}, {"rl.batch", "4"}, {"rl.group", "8"},
                                  {"rl.max_new", "448"}});
  b.stage("eval", {{"ckpt", b.ckpt(hybrid)}, {"data", b.data(heldout)}, {"runs", "16"},
                   {"decode.max_new", "448"}});
  b.stage("analyze", {{"baseline", b.ckpt(warm)},
                      {"models", "progressive=" + b.ckpt(hybrid)},
                      {"data", b.data(heldout)},
                      {"runs", "16"},
                      {"decode.max_new", "448"}});
  return b.text();
}

// Student trained on a mix of the teacher's own shortest correct responses
// and oracle traces where the teacher never succeeded.
std::string data_mixing(uint64_t seed) {
  SpecBuilder b("data-mixing", seed, 512, 48);
  int teach_train = b.stage("dataset", {{"count", "40"}, {"difficulties", "1,2"}, {"style", "long_cot_good"}});
  int queries = b.stage("dataset", {{"count", "30"}, {"difficulties", "1,2"}, {"style", "concise"}});
  int heldout = b.stage("dataset", {{"count", "24"}, {"difficulties", "1,2,3"}, {"style", "concise"}});

  int teacher = b.stage("sft", {{"data", b.data(teach_train)}, {"epochs", "4"}, {"batch", "8"},
                                {"max_trace_tokens", "420"}});
  int mixed = b.stage("distill", {{"init", b.ckpt(teacher)},
                                  {"queries", b.data(queries)},
                                  {"samples", "8"},
                                  {"keep", "shortest"},
                                  {"decode.temperature", "1"},
                                  {"decode.max_new", "448"}});
  int student = b.stage("sft", {{"data", b.ref(mixed, "mixed.jsonl")}, {"epochs", "4"},
                                {"batch", "8"}, {"max_trace_tokens", "420"}});

  b.stage("eval", {{"ckpt", b.ckpt(student)}, {"data", b.data(heldout)}, {"runs", "16"},
                   {"decode.max_new", "448"}});
  b.stage("analyze", {{"baseline", b.ckpt(teacher)},
                      {"models", "student=" + b.ckpt(student)},
                      {"data", b.data(heldout)},
                      {"runs", "16"},
                      {"decode.max_new", "448"}});
  return b.text();
}

// Weight-space combinations of an SFT arm and an RL arm that share a base,
// swept across ratios for all three methods and scored on held-out queries.
std::string merge_sweep(uint64_t seed) {
  SpecBuilder b("merge-sweep", seed, 512, 48);
  int t_good = b.stage("dataset", {{"count", "40"}, {"difficulties", "1,2"}, {"style", "long_cot_good"}});
  int pool = b.stage("dataset", {{"count", "48"}, {"difficulties", "1,2,3"}, {"style", "concise"}});
  int heldout = b.stage("dataset", {{"count", "24"}, {"difficulties", "1,2,3,4"}, {"style", "concise"}});

  int base = b.stage("sft", {{"data", b.data(pool)}, {"epochs", "4"}, {"batch", "8"}});
  int sft_arm = b.stage("sft", {{"data", b.data(t_good)}, {"init", b.ckpt(base)},
                                {"epochs", "3"}, {"batch", "8"}, {"max_trace_tokens", "420"}});
  int rl_arm = b.stage("rl", {{"pool", b.data(pool)}, {"init", b.ckpt(base)},
                              {"steps", "100"}, {"batch", "4"}, {"group", "8"},
                              {"max_new", "96"}});

  KV common{{"a", b.ckpt(sft_arm)}, {"b", b.ckpt(rl_arm)},
            {"ratios", "0,0.25,0.5,0.75,1"}, {"data", b.data(heldout)}, {"runs", "8"},
            {"decode.max_new", "448"}};
  b.stage("merge", common + KV{{"method", "linear"}});
  b.stage("merge", common + KV{{"method", "ties"}, {"base", b.ckpt(base)}, {"density", "0.5"}});
  b.stage("merge", common + KV{{"method", "slerp"}});

  b.stage("analyze", {{"baseline", b.ckpt(base)},
                      {"models", "sft=" + b.ckpt(sft_arm) + ",rl=" + b.ckpt(rl_arm)},
                      {"data", b.data(heldout)},
                      {"runs", "8"},
                      {"decode.max_new", "448"}});
  return b.text();
}

}  // namespace

std::vector<std::string> recipe_names() {
  return {"sft-quality", "kl-ablation", "easy-retention", "sft-vs-rl", "two-stage",
          "interleaved", "progressive", "data-mixing", "merge-sweep"};
}

std::string recipe_spec(const std::string& name, uint64_t seed) {
  if (name == "sft-quality") return sft_quality(seed);
  if (name == "kl-ablation") return kl_ablation(seed);
  if (name == "easy-retention") return easy_retention(seed);
  if (name == "sft-vs-rl") return sft_vs_rl(seed);
  if (name == "two-stage") return two_stage(seed);
  if (name == "interleaved") return interleaved(seed);
  if (name == "progressive") return progressive(seed);
  if (name == "data-mixing") return data_mixing(seed);
  if (name == "merge-sweep") return merge_sweep(seed);
  throw std::runtime_error("unknown recipe: " + name);
}

}  // namespace postlab

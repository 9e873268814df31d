// Copyright 2026 The postlab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Command line front end. Everything goes through the C API of the shared
// library: each subcommand assembles a flat key=value config from its flags
// and hands it to the corresponding plab_* entry point.

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "postlab/postlab_c.h"

namespace {

// one "key = value" line; empty values mean "flag not given, keep default"
void kv(std::string& cfg, const std::string& key, const std::string& value) {
  if (value.empty()) return;
  cfg += key + " = " + value + "\n";
}

int report(plab_rc rc) {
  if (rc == PLAB_OK) return 0;
  std::fprintf(stderr, "error: %s\n", plab_last_error());
  return static_cast<int>(rc);
}

int run_stage(const std::string& kind, const std::string& cfg, const std::string& out) {
  char* summary = nullptr;
  plab_rc rc = plab_stage_run(kind.c_str(), cfg.c_str(), out.c_str(), &summary);
  if (rc == PLAB_OK && summary) std::printf("%s\n", summary);
  plab_free(summary);
  return report(rc);
}

struct ModelFlags {
  std::string context, embed, layers, heads, init_seed;
  void attach(CLI::App* cmd) {
    cmd->add_option("--context", context, "model context window");
    cmd->add_option("--embed", embed, "model embedding width");
    cmd->add_option("--layers", layers, "transformer blocks");
    cmd->add_option("--heads", heads, "attention heads");
    cmd->add_option("--model-init-seed", init_seed, "weight init seed");
  }
  void emit(std::string& cfg) const {
    kv(cfg, "model.context", context);
    kv(cfg, "model.embed", embed);
    kv(cfg, "model.layers", layers);
    kv(cfg, "model.heads", heads);
    kv(cfg, "model.init_seed", init_seed);
  }
};

struct DecodeFlags {
  std::string temperature, top_p, top_k, max_new, seed;
  bool greedy = false;
  void attach(CLI::App* cmd) {
    cmd->add_option("--temperature", temperature, "sampling temperature");
    cmd->add_option("--top-p", top_p, "nucleus mass");
    cmd->add_option("--top-k", top_k, "top-k cutoff (0 = off)");
    cmd->add_option("--max-new", max_new, "response token budget");
    cmd->add_option("--decode-seed", seed, "decoding seed");
    cmd->add_flag("--greedy", greedy, "greedy decoding");
  }
  void emit(std::string& cfg) const {
    kv(cfg, "decode.temperature", temperature);
    kv(cfg, "decode.top_p", top_p);
    kv(cfg, "decode.top_k", top_k);
    kv(cfg, "decode.max_new", max_new);
    kv(cfg, "decode.seed", seed);
    if (greedy) kv(cfg, "decode.greedy", "true");
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"post-training laboratory for a tiny reasoning policy"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(plab_version()));

  std::string workers;
  app.add_option("--workers", workers, "worker threads (default: POSTLAB_WORKERS or all cores)");

  // ---- dataset ----
  auto* c_dataset = app.add_subcommand("dataset", "generate a query/trace dataset");
  std::string ds_out, ds_count, ds_difficulties, ds_style, ds_seed, ds_file;
  c_dataset->add_option("--out", ds_out, "output directory")->required();
  c_dataset->add_option("--count", ds_count, "number of queries")->required();
  c_dataset->add_option("--difficulties", ds_difficulties, "comma list, e.g. 1,2,3");
  c_dataset->add_option("--style", ds_style, "concise | long_cot_good | long_cot_verbose");
  c_dataset->add_option("--seed", ds_seed, "generation seed");
  c_dataset->add_option("--file", ds_file, "output file name (dataset.jsonl)");

  // ---- sft ----
  auto* c_sft = app.add_subcommand("sft", "supervised fine-tuning on traces");
  std::string sft_out, sft_data, sft_init, sft_lr, sft_batch, sft_epochs, sft_clip,
      sft_seed, sft_cap;
  bool sft_no_shuffle = false, sft_save_epochs = false;
  ModelFlags sft_model;
  c_sft->add_option("--out", sft_out, "output directory")->required();
  c_sft->add_option("--data", sft_data, "trace dataset (jsonl)")->required();
  c_sft->add_option("--init", sft_init, "starting checkpoint, or 'fresh'");
  c_sft->add_option("--lr", sft_lr, "learning rate");
  c_sft->add_option("--batch", sft_batch, "batch size");
  c_sft->add_option("--epochs", sft_epochs, "epochs");
  c_sft->add_option("--grad-clip", sft_clip, "gradient norm ceiling");
  c_sft->add_option("--max-trace-tokens", sft_cap, "drop longer traces");
  c_sft->add_option("--seed", sft_seed, "shuffle seed");
  c_sft->add_flag("--no-shuffle", sft_no_shuffle, "keep dataset order");
  c_sft->add_flag("--save-epochs", sft_save_epochs, "checkpoint after every epoch");
  sft_model.attach(c_sft);

  // ---- rl ----
  auto* c_rl = app.add_subcommand("rl", "group-relative policy optimisation");
  std::string rl_out, rl_pool, rl_init, rl_steps, rl_batch, rl_group, rl_lr, rl_eps,
      rl_beta, rl_temp, rl_max_new, rl_clip, rl_seed, rl_profile_runs;
  bool rl_filter = false;
  c_rl->add_option("--out", rl_out, "output directory")->required();
  c_rl->add_option("--pool", rl_pool, "query pool (jsonl)")->required();
  c_rl->add_option("--init", rl_init, "starting checkpoint")->required();
  c_rl->add_option("--steps", rl_steps, "optimisation steps");
  c_rl->add_option("--batch", rl_batch, "queries per step");
  c_rl->add_option("--group", rl_group, "rollouts per query");
  c_rl->add_option("--lr", rl_lr, "learning rate");
  c_rl->add_option("--clip-eps", rl_eps, "ratio clip width");
  c_rl->add_option("--beta", rl_beta, "KL coefficient");
  c_rl->add_option("--temp", rl_temp, "rollout temperature");
  c_rl->add_option("--max-new", rl_max_new, "rollout token budget");
  c_rl->add_option("--grad-clip", rl_clip, "gradient norm ceiling");
  c_rl->add_option("--seed", rl_seed, "training seed");
  c_rl->add_flag("--filter-easiest", rl_filter, "drop queries the start model finds easiest");
  c_rl->add_option("--profile-runs", rl_profile_runs, "runs per query for the filter profile");

  // ---- hybrid ----
  auto* c_hy = app.add_subcommand("hybrid", "combined supervised + RL schedules");
  std::string hy_out, hy_mode, hy_traces, hy_pool, hy_init, hy_stage1, hy_sft_weight,
      hy_prefix_weight, hy_seed;
  std::string hy_sft_lr, hy_sft_batch, hy_sft_epochs;
  std::string hy_rl_steps, hy_rl_batch, hy_rl_group, hy_rl_lr, hy_rl_eps, hy_rl_beta,
      hy_rl_temp, hy_rl_max_new;
  ModelFlags hy_model;
  c_hy->add_option("--out", hy_out, "output directory")->required();
  c_hy->add_option("--mode", hy_mode, "two_stage | interleaved | progressive")->required();
  c_hy->add_option("--traces", hy_traces, "trace dataset (jsonl)")->required();
  c_hy->add_option("--pool", hy_pool, "query pool (jsonl)")->required();
  c_hy->add_option("--init", hy_init, "starting checkpoint, or 'fresh'");
  c_hy->add_option("--stage1-max-tokens", hy_stage1, "two_stage: SFT trace cap");
  c_hy->add_option("--sft-weight", hy_sft_weight, "interleaved: supervised branch weight");
  c_hy->add_option("--prefix-weight", hy_prefix_weight, "progressive: prefix CE weight");
  c_hy->add_option("--sft-lr", hy_sft_lr, "stage-1 learning rate");
  c_hy->add_option("--sft-batch", hy_sft_batch, "stage-1 batch size");
  c_hy->add_option("--sft-epochs", hy_sft_epochs, "stage-1 epochs");
  c_hy->add_option("--rl-steps", hy_rl_steps, "RL steps");
  c_hy->add_option("--rl-batch", hy_rl_batch, "RL queries per step");
  c_hy->add_option("--rl-group", hy_rl_group, "RL rollouts per query");
  c_hy->add_option("--rl-lr", hy_rl_lr, "RL learning rate");
  c_hy->add_option("--rl-clip-eps", hy_rl_eps, "RL ratio clip width");
  c_hy->add_option("--rl-beta", hy_rl_beta, "RL KL coefficient");
  c_hy->add_option("--rl-temp", hy_rl_temp, "RL rollout temperature");
  c_hy->add_option("--rl-max-new", hy_rl_max_new, "RL rollout token budget");
  c_hy->add_option("--seed", hy_seed, "training seed");
  hy_model.attach(c_hy);

  // ---- distill ----
  auto* c_di = app.add_subcommand("distill", "sample a teacher into a mixed trace set");
  std::string di_out, di_init, di_queries, di_samples, di_keep, di_seed;
  DecodeFlags di_decode;
  c_di->add_option("--out", di_out, "output directory")->required();
  c_di->add_option("--init", di_init, "teacher checkpoint")->required();
  c_di->add_option("--queries", di_queries, "query dataset (jsonl)")->required();
  c_di->add_option("--samples", di_samples, "samples per query");
  c_di->add_option("--keep", di_keep, "all | shortest");
  c_di->add_option("--seed", di_seed, "sampling seed");
  di_decode.attach(c_di);

  // ---- merge ----
  auto* c_me = app.add_subcommand("merge", "weight-space model merging sweep");
  std::string me_out, me_method, me_a, me_b, me_base, me_ratios, me_density, me_data,
      me_runs, me_seed;
  DecodeFlags me_decode;
  c_me->add_option("--out", me_out, "output directory")->required();
  c_me->add_option("--method", me_method, "linear | ties | slerp")->required();
  c_me->add_option("--a", me_a, "first parent checkpoint")->required();
  c_me->add_option("--b", me_b, "second parent checkpoint")->required();
  c_me->add_option("--base", me_base, "shared base checkpoint (ties)");
  c_me->add_option("--ratios", me_ratios, "comma list of interpolation ratios");
  c_me->add_option("--density", me_density, "ties trim density");
  c_me->add_option("--data", me_data, "optional eval dataset for the sweep");
  c_me->add_option("--runs", me_runs, "eval runs per query");
  c_me->add_option("--seed", me_seed, "eval seed");
  me_decode.attach(c_me);

  // ---- eval ----
  auto* c_ev = app.add_subcommand("eval", "pass rate and telemetry on a dataset");
  std::string ev_out, ev_ckpt, ev_data, ev_runs, ev_seed;
  DecodeFlags ev_decode;
  c_ev->add_option("--out", ev_out, "output directory")->required();
  c_ev->add_option("--ckpt", ev_ckpt, "checkpoint to evaluate")->required();
  c_ev->add_option("--data", ev_data, "query dataset (jsonl)")->required();
  c_ev->add_option("--runs", ev_runs, "samples per query");
  c_ev->add_option("--seed", ev_seed, "eval seed");
  ev_decode.attach(c_ev);

  // ---- analyze ----
  auto* c_an = app.add_subcommand("analyze", "difficulty-bucketed model comparison");
  std::string an_out, an_baseline, an_data, an_runs, an_profile_runs, an_kl, an_seed;
  std::vector<std::string> an_models;
  DecodeFlags an_decode;
  c_an->add_option("--out", an_out, "output directory")->required();
  c_an->add_option("--baseline", an_baseline, "baseline checkpoint")->required();
  c_an->add_option("--model", an_models, "name=checkpoint (repeatable)")->required();
  c_an->add_option("--data", an_data, "query dataset (jsonl)")->required();
  c_an->add_option("--runs", an_runs, "samples per query");
  c_an->add_option("--profile-runs", an_profile_runs, "runs for the difficulty profile");
  c_an->add_option("--kl-queries", an_kl, "queries for the drift estimate");
  c_an->add_option("--seed", an_seed, "eval seed");
  an_decode.attach(c_an);

  // ---- run ----
  auto* c_run = app.add_subcommand("run", "run an experiment spec or a built-in recipe");
  std::string run_spec, run_out, run_recipe, run_seed = "1";
  c_run->add_option("spec", run_spec, "experiment spec file");
  c_run->add_option("--out", run_out, "output directory")->required();
  c_run->add_option("--recipe", run_recipe, "built-in recipe name");
  c_run->add_option("--seed", run_seed, "recipe master seed");

  // ---- plots ----
  auto* c_pl = app.add_subcommand("plots", "render plots for stored artifacts");
  std::string pl_dir;
  c_pl->add_option("dir", pl_dir, "artifact directory")->required();

  // ---- recipes ----
  auto* c_re = app.add_subcommand("recipes", "list built-in recipe names");

  // ---- sample ----
  auto* c_sa = app.add_subcommand("sample", "one completion from a checkpoint");
  std::string sa_ckpt, sa_prompt;
  DecodeFlags sa_decode;
  c_sa->add_option("--ckpt", sa_ckpt, "checkpoint")->required();
  c_sa->add_option("--prompt", sa_prompt, "prompt text")->required();
  sa_decode.attach(c_sa);

  CLI11_PARSE(app, argc, argv);

  if (!workers.empty()) setenv("POSTLAB_WORKERS", workers.c_str(), 1);

  if (*c_dataset) {
    std::string cfg;
    kv(cfg, "count", ds_count);
    kv(cfg, "difficulties", ds_difficulties);
    kv(cfg, "style", ds_style);
    kv(cfg, "seed", ds_seed);
    kv(cfg, "file", ds_file);
    return run_stage("dataset", cfg, ds_out);
  }

  if (*c_sft) {
    std::string cfg;
    kv(cfg, "data", sft_data);
    kv(cfg, "init", sft_init);
    kv(cfg, "lr", sft_lr);
    kv(cfg, "batch", sft_batch);
    kv(cfg, "epochs", sft_epochs);
    kv(cfg, "grad_clip", sft_clip);
    kv(cfg, "max_trace_tokens", sft_cap);
    kv(cfg, "seed", sft_seed);
    if (sft_no_shuffle) kv(cfg, "shuffle", "false");
    if (sft_save_epochs) kv(cfg, "save_epochs", "true");
    kv(cfg, "workers", workers);
    sft_model.emit(cfg);
    return run_stage("sft", cfg, sft_out);
  }

  if (*c_rl) {
    std::string cfg;
    kv(cfg, "pool", rl_pool);
    kv(cfg, "init", rl_init);
    kv(cfg, "steps", rl_steps);
    kv(cfg, "batch", rl_batch);
    kv(cfg, "group", rl_group);
    kv(cfg, "lr", rl_lr);
    kv(cfg, "clip_eps", rl_eps);
    kv(cfg, "beta", rl_beta);
    kv(cfg, "temp", rl_temp);
    kv(cfg, "max_new", rl_max_new);
    kv(cfg, "grad_clip", rl_clip);
    kv(cfg, "seed", rl_seed);
    if (rl_filter) kv(cfg, "filter_easiest", "true");
    kv(cfg, "profile_runs", rl_profile_runs);
    kv(cfg, "workers", workers);
    return run_stage("rl", cfg, rl_out);
  }

  if (*c_hy) {
    std::string cfg;
    kv(cfg, "mode", hy_mode);
    kv(cfg, "traces", hy_traces);
    kv(cfg, "pool", hy_pool);
    kv(cfg, "init", hy_init);
    kv(cfg, "stage1_max_tokens", hy_stage1);
    kv(cfg, "sft_weight", hy_sft_weight);
    kv(cfg, "prefix_weight", hy_prefix_weight);
    kv(cfg, "sft.lr", hy_sft_lr);
    kv(cfg, "sft.batch", hy_sft_batch);
    kv(cfg, "sft.epochs", hy_sft_epochs);
    kv(cfg, "rl.steps", hy_rl_steps);
    kv(cfg, "rl.batch", hy_rl_batch);
    kv(cfg, "rl.group", hy_rl_group);
    kv(cfg, "rl.lr", hy_rl_lr);
    kv(cfg, "rl.clip_eps", hy_rl_eps);
    kv(cfg, "rl.beta", hy_rl_beta);
    kv(cfg, "rl.temp", hy_rl_temp);
    kv(cfg, "rl.max_new", hy_rl_max_new);
    kv(cfg, "seed", hy_seed);
    kv(cfg, "workers", workers);
    hy_model.emit(cfg);
    return run_stage("hybrid", cfg, hy_out);
  }

  if (*c_di) {
    std::string cfg;
    kv(cfg, "init", di_init);
    kv(cfg, "queries", di_queries);
    kv(cfg, "samples", di_samples);
    kv(cfg, "keep", di_keep);
    kv(cfg, "seed", di_seed);
    kv(cfg, "workers", workers);
    di_decode.emit(cfg);
    return run_stage("distill", cfg, di_out);
  }

  if (*c_me) {
    std::string cfg;
    kv(cfg, "method", me_method);
    kv(cfg, "a", me_a);
    kv(cfg, "b", me_b);
    kv(cfg, "base", me_base);
    kv(cfg, "ratios", me_ratios);
    kv(cfg, "density", me_density);
    kv(cfg, "data", me_data);
    kv(cfg, "runs", me_runs);
    kv(cfg, "seed", me_seed);
    kv(cfg, "workers", workers);
    me_decode.emit(cfg);
    return run_stage("merge", cfg, me_out);
  }

  if (*c_ev) {
    std::string cfg;
    kv(cfg, "ckpt", ev_ckpt);
    kv(cfg, "data", ev_data);
    kv(cfg, "runs", ev_runs);
    kv(cfg, "seed", ev_seed);
    kv(cfg, "workers", workers);
    ev_decode.emit(cfg);
    return run_stage("eval", cfg, ev_out);
  }

  if (*c_an) {
    std::string cfg;
    kv(cfg, "baseline", an_baseline);
    std::string models;
    for (const std::string& m : an_models) {
      if (!models.empty()) models += ",";
      models += m;
    }
    kv(cfg, "models", models);
    kv(cfg, "data", an_data);
    kv(cfg, "runs", an_runs);
    kv(cfg, "profile_runs", an_profile_runs);
    kv(cfg, "kl_queries", an_kl);
    kv(cfg, "seed", an_seed);
    kv(cfg, "workers", workers);
    an_decode.emit(cfg);
    return run_stage("analyze", cfg, an_out);
  }

  if (*c_run) {
    std::string spec_path = run_spec;
    if (!run_recipe.empty()) {
      if (!run_spec.empty()) {
        std::fprintf(stderr, "error: give either a spec file or --recipe, not both\n");
        return 1;
      }
      char* text = nullptr;
      uint64_t seed = std::strtoull(run_seed.c_str(), nullptr, 10);
      if (plab_rc rc = plab_recipe_spec(run_recipe.c_str(), seed, &text)) return report(rc);
      std::filesystem::create_directories(run_out);
      spec_path = run_out + "/spec.cfg";
      std::ofstream out(spec_path, std::ios::trunc);
      out << text;
      out.close();
      plab_free(text);
    }
    if (spec_path.empty()) {
      std::fprintf(stderr, "error: give a spec file or --recipe\n");
      return 1;
    }
    char* result = nullptr;
    plab_rc rc = plab_experiment_run(spec_path.c_str(), run_out.c_str(), &result);
    if (rc == PLAB_OK && result) std::printf("%s\n", result);
    plab_free(result);
    return report(rc);
  }

  auto print_csv_lines = [](const char* csv) {
    std::string list(csv ? csv : "");
    size_t pos = 0;
    while (pos < list.size()) {
      size_t comma = list.find(',', pos);
      size_t len = comma == std::string::npos ? std::string::npos : comma - pos;
      std::printf("%s\n", list.substr(pos, len).c_str());
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
  };

  if (*c_pl) {
    char* written = nullptr;
    plab_rc rc = plab_plots_emit(pl_dir.c_str(), &written);
    if (rc == PLAB_OK) print_csv_lines(written);
    plab_free(written);
    return report(rc);
  }

  if (*c_re) {
    char* names = nullptr;
    if (plab_rc rc = plab_recipe_names(&names)) return report(rc);
    print_csv_lines(names);
    plab_free(names);
    return 0;
  }

  if (*c_sa) {
    plab_policy* p = nullptr;
    if (plab_rc rc = plab_policy_open(sa_ckpt.c_str(), &p)) return report(rc);
    std::string cfg;
    sa_decode.emit(cfg);
    char* text = nullptr;
    plab_rc rc = plab_policy_sample(p, sa_prompt.c_str(), cfg.c_str(), &text);
    if (rc == PLAB_OK) std::printf("%s\n", text);
    plab_free(text);
    plab_policy_close(p);
    return report(rc);
  }

  return 0;
}

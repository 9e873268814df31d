// Copyright 2026 The postlab Authors
// SPDX-License-Identifier: Apache-2.0

#include "postlab/experiment.hpp"

#include <algorithm>
#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include "postlab/checkpoint.hpp"
#include "postlab/data_mixing.hpp"
#include "postlab/eval.hpp"
#include "postlab/grpo.hpp"
#include "postlab/hybrid.hpp"
#include "postlab/merge.hpp"
#include "postlab/metrics.hpp"
#include "postlab/parallel.hpp"
#include "postlab/rng.hpp"
#include "postlab/sft.hpp"
#include "postlab/task_env.hpp"
#include "postlab/tokenizer.hpp"

namespace postlab {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string resolve(const Config& cfg, const std::string& value) {
  fs::path p(value);
  if (p.is_absolute()) return p.string();
  return (fs::path(cfg.str_or("_root", ".")) / p).lexically_normal().string();
}

std::string need_input(const Config& cfg, const std::string& key) {
  std::string path = resolve(cfg, cfg.str(key));
  if (!fs::exists(path)) throw std::runtime_error(key + ": no such file: " + path);
  return path;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

PolicyConfig policy_config_from(const Config& cfg, uint64_t seed) {
  PolicyConfig pc;
  const int vocab = Tokenizer::instance().vocab_size();
  pc.vocab_size = static_cast<int>(cfg.num_or("model.vocab", vocab));
  pc.context_len = static_cast<int>(cfg.num_or("model.context", 512));
  pc.embed_dim = static_cast<int>(cfg.num_or("model.embed", 64));
  pc.num_layers = static_cast<int>(cfg.num_or("model.layers", 2));
  pc.num_heads = static_cast<int>(cfg.num_or("model.heads", 2));
  pc.init_seed = cfg.seed_or("model.init_seed", mix_seed(seed, 0x1417));
  if (pc.vocab_size != vocab)
    throw std::runtime_error("model.vocab must match the tokenizer (" +
                             std::to_string(vocab) + ")");
  pc.validate();
  return pc;
}

// Start state of a training stage: a prior checkpoint, or fresh weights from
// the stage's model.* keys.
Checkpoint starting_point(const Config& cfg, uint64_t seed) {
  std::string init = cfg.str_or("init", "fresh");
  if (init != "fresh") {
    std::string path = resolve(cfg, init);
    if (!fs::exists(path)) throw std::runtime_error("init: no such file: " + path);
    return load_checkpoint(path);
  }
  Checkpoint ck;
  ck.config = policy_config_from(cfg, seed);
  ck.params = Policy(ck.config).init_params();
  ck.meta = json::object();
  return ck;
}

DecodingConfig decoding_from(const Config& cfg, uint64_t default_seed) {
  DecodingConfig dec;
  dec.temperature = cfg.real_or("decode.temperature", 0.6);
  dec.top_p = cfg.real_or("decode.top_p", 0.95);
  dec.top_k = static_cast<int>(cfg.num_or("decode.top_k", 20));
  dec.max_new_tokens = static_cast<int>(cfg.num_or("decode.max_new", 256));
  dec.greedy = cfg.flag_or("decode.greedy", false);
  dec.seed = cfg.seed_or("decode.seed", default_seed);
  dec.validate();
  return dec;
}

RlConfig rl_config_from(const Config& cfg, const std::string& prefix, uint64_t seed) {
  RlConfig rl;
  rl.learning_rate = cfg.real_or(prefix + "lr", rl.learning_rate);
  rl.batch_size = static_cast<int>(cfg.num_or(prefix + "batch", rl.batch_size));
  rl.group_size = static_cast<int>(cfg.num_or(prefix + "group", rl.group_size));
  rl.clip_epsilon = cfg.real_or(prefix + "clip_eps", rl.clip_epsilon);
  rl.kl_coefficient = cfg.real_or(prefix + "beta", rl.kl_coefficient);
  rl.rollout_temperature = cfg.real_or(prefix + "temp", rl.rollout_temperature);
  rl.max_new_tokens = static_cast<int>(cfg.num_or(prefix + "max_new", rl.max_new_tokens));
  rl.steps = static_cast<int>(cfg.num_or(prefix + "steps", rl.steps));
  rl.grad_clip = cfg.real_or(prefix + "grad_clip", rl.grad_clip);
  rl.seed = seed;
  rl.workers = static_cast<int>(cfg.num_or("workers", 0));
  rl.validate();
  return rl;
}

SftConfig sft_config_from(const Config& cfg, const std::string& prefix, uint64_t seed) {
  SftConfig sc;
  sc.learning_rate = cfg.real_or(prefix + "lr", sc.learning_rate);
  sc.batch_size = static_cast<int>(cfg.num_or(prefix + "batch", sc.batch_size));
  sc.epochs = static_cast<int>(cfg.num_or(prefix + "epochs", sc.epochs));
  sc.grad_clip = cfg.real_or(prefix + "grad_clip", sc.grad_clip);
  sc.shuffle = cfg.flag_or(prefix + "shuffle", sc.shuffle);
  sc.seed = seed;
  sc.validate();
  return sc;
}

std::vector<Query> queries_of(const std::string& path) {
  std::vector<Query> qs;
  for (const DatasetRecord& rec : read_dataset(path)) qs.push_back(query_from_record(rec));
  return qs;
}

std::vector<SupervisedTrace> traces_of(const std::string& path) {
  std::vector<SupervisedTrace> ts;
  for (const DatasetRecord& rec : read_dataset(path)) ts.push_back(trace_from_record(rec));
  return ts;
}

double tail_mean_reward(const std::vector<RlStepInfo>& steps) {
  if (steps.empty()) return 0.0;
  size_t n = std::min<size_t>(8, steps.size());
  double s = 0.0;
  for (size_t i = steps.size() - n; i < steps.size(); ++i) s += steps[i].mean_reward;
  return s / static_cast<double>(n);
}

void require_ok(RunStatus status, const std::string& message, const std::string& where) {
  if (status != RunStatus::kOk)
    throw std::runtime_error(where + ": " + (message.empty() ? "numeric error" : message));
}

// ---- stage runners -------------------------------------------------------

json stage_dataset(const Config& cfg, const std::string& out_dir) {
  int count = static_cast<int>(cfg.num("count"));
  std::vector<int> difficulties =
      cfg.has("difficulties") ? cfg.int_list("difficulties") : std::vector<int>{1, 2, 3, 4, 5};
  TraceStyle style = trace_style_from_name(cfg.str_or("style", "concise"));
  uint64_t seed = cfg.seed_or("seed", 1);
  std::string file = cfg.str_or("file", "dataset.jsonl");

  std::vector<Query> pool = make_query_pool(difficulties, count, seed);
  std::vector<DatasetRecord> recs;
  recs.reserve(pool.size());
  for (const Query& q : pool) recs.push_back(record_from_query(q, style));
  std::string path = (fs::path(out_dir) / file).string();
  write_dataset(path, recs);

  int64_t trace_tokens = 0;
  const Tokenizer& tok = Tokenizer::instance();
  for (const DatasetRecord& r : recs) trace_tokens += static_cast<int64_t>(tok.encode(r.trace).size());
  return json{{"file", file},
              {"count", count},
              {"style", std::string(trace_style_name(style))},
              {"difficulties", difficulties},
              {"trace_tokens", trace_tokens}};
}

json stage_sft(const Config& cfg, const std::string& out_dir) {
  uint64_t seed = cfg.seed_or("seed", 1);
  std::vector<SupervisedTrace> data = traces_of(need_input(cfg, "data"));
  int cap = static_cast<int>(cfg.num_or("max_trace_tokens", 0));
  if (cap > 0) {
    std::erase_if(data, [cap](const SupervisedTrace& t) {
      return static_cast<int>(t.target_tokens.size()) > cap;
    });
  }
  if (data.empty()) throw std::runtime_error("sft: no traces to train on");

  Checkpoint start = starting_point(cfg, seed);
  Policy policy(start.config);
  SftConfig sc = sft_config_from(cfg, "", mix_seed(seed, 0x5f7));

  MetricsWriter metrics((fs::path(out_dir) / "metrics.jsonl").string());
  SftResult res = train_sft(policy, start.params, data, sc, &metrics);

  if (cfg.flag_or("save_epochs", false)) {
    for (size_t e = 0; e < res.epoch_params.size(); ++e) {
      char name[48];
      std::snprintf(name, sizeof name, "ckpt-epoch-%zu.ckpt", e + 1);
      save_checkpoint((fs::path(out_dir) / name).string(), start.config,
                      res.epoch_params[e], json{{"stage", "sft"}, {"epoch", e + 1}});
    }
  }
  save_checkpoint((fs::path(out_dir) / "ckpt-final.ckpt").string(), start.config,
                  res.params, json{{"stage", "sft"}});
  require_ok(res.status, res.message, "sft");

  double final_loss = res.steps.empty() ? 0.0 : res.steps.back().loss;
  return json{{"traces", data.size()},
              {"steps", res.steps.size()},
              {"final_loss", final_loss},
              {"checkpoint", "ckpt-final.ckpt"}};
}

json stage_rl(const Config& cfg, const std::string& out_dir) {
  uint64_t seed = cfg.seed_or("seed", 1);
  std::vector<Query> pool = queries_of(need_input(cfg, "pool"));
  Checkpoint start = starting_point(cfg, seed);
  Policy policy(start.config);
  RlConfig rl = rl_config_from(cfg, "", mix_seed(seed, 0xb01));

  json summary;
  if (cfg.flag_or("filter_easiest", false)) {
    int profile_runs = static_cast<int>(cfg.num_or("profile_runs", 16));
    DecodingConfig dec = decoding_from(cfg, mix_seed(seed, 0x9f0f));
    dec.temperature = rl.rollout_temperature;
    dec.max_new_tokens = rl.max_new_tokens;
    DifficultyProfile prof =
        pass_rate_profile(policy, start.params, pool, profile_runs, dec, rl.workers);
    std::vector<Query> kept = filter_easiest(pool, prof.pass_count, prof.runs);
    json pass = json::object();
    for (const auto& [id, c] : prof.pass_count) pass[id] = c;
    write_text((fs::path(out_dir) / "profile.json").string(),
               json{{"runs", prof.runs},
                    {"pass_count", pass},
                    {"pool", pool.size()},
                    {"kept", kept.size()}}
                   .dump(2) +
                   "\n");
    summary["dropped_easiest"] = pool.size() - kept.size();
    pool = std::move(kept);
    if (pool.empty()) throw std::runtime_error("rl: filter removed every query");
  }

  MetricsWriter metrics((fs::path(out_dir) / "metrics.jsonl").string());
  RlResult res = train_rl(policy, start.params, pool, rl, &metrics);
  save_checkpoint((fs::path(out_dir) / "ckpt-final.ckpt").string(), start.config,
                  res.params, json{{"stage", "rl"}});
  require_ok(res.status, res.message, "rl");

  summary["pool"] = pool.size();
  summary["steps"] = res.steps.size();
  summary["final_mean_reward"] = tail_mean_reward(res.steps);
  summary["final_mean_kl_to_ref"] =
      res.steps.empty() ? 0.0 : res.steps.back().mean_kl_to_ref;
  summary["checkpoint"] = "ckpt-final.ckpt";
  return summary;
}

json stage_hybrid(const Config& cfg, const std::string& out_dir) {
  uint64_t seed = cfg.seed_or("seed", 1);
  std::string mode = cfg.str("mode");
  std::vector<Query> pool = queries_of(need_input(cfg, "pool"));
  std::vector<SupervisedTrace> traces = traces_of(need_input(cfg, "traces"));
  Checkpoint start = starting_point(cfg, seed);
  Policy policy(start.config);
  MetricsWriter metrics((fs::path(out_dir) / "metrics.jsonl").string());

  std::map<std::string, SupervisedTrace> by_id;
  for (const SupervisedTrace& t : traces) by_id[t.query_id] = t;

  json summary{{"mode", mode}, {"pool", pool.size()}, {"traces", traces.size()}};
  ParameterSet final_params;
  if (mode == "two_stage") {
    TwoStageConfig tc;
    tc.sft = sft_config_from(cfg, "sft.", mix_seed(seed, 0x2a));
    tc.rl = rl_config_from(cfg, "rl.", mix_seed(seed, 0x2b));
    tc.stage1_max_tokens =
        static_cast<int>(cfg.num_or("stage1_max_tokens", tc.stage1_max_tokens));
    tc.validate();
    HybridResult res = run_two_stage(policy, start.params, traces, pool, tc, &metrics);
    final_params = std::move(res.params);
    summary["sft_steps"] = res.sft_steps.size();
    summary["rl_steps"] = res.rl_steps.size();
    summary["final_mean_reward"] = tail_mean_reward(res.rl_steps);
    save_checkpoint((fs::path(out_dir) / "ckpt-final.ckpt").string(), start.config,
                    final_params, json{{"stage", "hybrid"}, {"mode", mode}});
    require_ok(res.status, res.message, "hybrid/two_stage");
  } else if (mode == "interleaved") {
    for (const Query& q : pool)
      if (!by_id.count(q.id))
        throw std::runtime_error("hybrid: no trace for pool query " + q.id);
    InterleavedConfig ic;
    ic.rl = rl_config_from(cfg, "rl.", mix_seed(seed, 0x2c));
    ic.sft_weight = cfg.real_or("sft_weight", ic.sft_weight);
    ic.validate();
    InterleavedResult res = train_interleaved(policy, start.params, pool, by_id, ic, &metrics);
    final_params = std::move(res.params);
    double fsft = 0.0;
    for (const auto& s : res.steps) fsft += s.fraction_sft;
    if (!res.steps.empty()) fsft /= static_cast<double>(res.steps.size());
    summary["steps"] = res.steps.size();
    summary["mean_fraction_sft"] = fsft;
    save_checkpoint((fs::path(out_dir) / "ckpt-final.ckpt").string(), start.config,
                    final_params, json{{"stage", "hybrid"}, {"mode", mode}});
    require_ok(res.status, res.message, "hybrid/interleaved");
  } else if (mode == "progressive") {
    for (const Query& q : pool)
      if (!by_id.count(q.id))
        throw std::runtime_error("hybrid: no trace for pool query " + q.id);
    ProgressiveConfig pc;
    pc.rl = rl_config_from(cfg, "rl.", mix_seed(seed, 0x2d));
    pc.prefix_weight = cfg.real_or("prefix_weight", pc.prefix_weight);
    pc.validate();
    ProgressiveResult res = train_progressive(policy, start.params, pool, by_id, pc, &metrics);
    final_params = std::move(res.params);
    summary["steps"] = res.steps.size();
    summary["final_fraction"] = res.steps.empty() ? 0.0 : res.steps.back().fraction;
    save_checkpoint((fs::path(out_dir) / "ckpt-final.ckpt").string(), start.config,
                    final_params, json{{"stage", "hybrid"}, {"mode", mode}});
    require_ok(res.status, res.message, "hybrid/progressive");
  } else {
    throw std::runtime_error("hybrid: unknown mode: " + mode);
  }
  summary["checkpoint"] = "ckpt-final.ckpt";
  return summary;
}

json stage_distill(const Config& cfg, const std::string& out_dir) {
  uint64_t seed = cfg.seed_or("seed", 1);
  std::vector<Query> queries = queries_of(need_input(cfg, "queries"));
  Checkpoint teacher = starting_point(cfg, seed);
  Policy policy(teacher.config);
  int samples = static_cast<int>(cfg.num_or("samples", 8));
  std::string keep = cfg.str_or("keep", "shortest");
  if (keep != "all" && keep != "shortest")
    throw std::runtime_error("distill: keep must be all or shortest: " + keep);
  DecodingConfig dec = decoding_from(cfg, mix_seed(seed, 0xd15));
  int workers = static_cast<int>(cfg.num_or("workers", 0));

  std::vector<DistillRecord> kept =
      distill(policy, teacher.params, queries, samples, dec, keep == "all", workers);
  std::vector<DatasetRecord> recs = mixed_records(queries, kept);
  write_dataset((fs::path(out_dir) / "mixed.jsonl").string(), recs);

  std::set<std::string> covered;
  int64_t distilled_tokens = 0;
  for (const DistillRecord& r : kept) {
    covered.insert(r.query_id);
    distilled_tokens += r.length_tokens;
  }
  json stats{{"queries", queries.size()},
             {"samples_per_query", samples},
             {"keep", keep},
             {"distilled", kept.size()},
             {"backfilled", queries.size() - covered.size()},
             {"mixed_total", recs.size()},
             {"distilled_tokens", distilled_tokens}};
  write_text((fs::path(out_dir) / "stats.json").string(), stats.dump(2) + "\n");
  stats["file"] = "mixed.jsonl";
  return stats;
}

json stage_merge(const Config& cfg, const std::string& out_dir) {
  MergeMethod method = merge_method_from_name(cfg.str("method"));
  Checkpoint a = load_checkpoint(need_input(cfg, "a"));
  Checkpoint b = load_checkpoint(need_input(cfg, "b"));
  if (!(a.config == b.config)) throw std::runtime_error("merge: parent configs differ");
  Checkpoint base;
  const ParameterSet* base_ptr = nullptr;
  if (method == MergeMethod::kTies) {
    base = load_checkpoint(need_input(cfg, "base"));
    if (!(base.config == a.config))
      throw std::runtime_error("merge: base config differs from parents");
    base_ptr = &base.params;
  }
  std::vector<double> ratios = cfg.has("ratios")
                                   ? cfg.real_list("ratios")
                                   : std::vector<double>{0.0, 0.25, 0.5, 0.75, 1.0};
  double density = cfg.real_or("density", 0.5);

  std::vector<SweepEntry> entries =
      ratio_sweep(method, a.config, a.params, b.params, base_ptr, ratios, density, out_dir);

  json sweep = json::array();
  for (const SweepEntry& e : entries)
    sweep.push_back({{"ratio", e.ratio}, {"path", fs::path(e.path).filename().string()}});
  write_text((fs::path(out_dir) / "sweep.json").string(),
             json{{"method", std::string(merge_method_name(method))},
                  {"density", density},
                  {"entries", sweep}}
                 .dump(2) +
                 "\n");

  json summary{{"method", std::string(merge_method_name(method))},
               {"checkpoints", entries.size()}};

  if (cfg.has("data")) {  // optional: evaluate every swept checkpoint
    std::vector<Query> queries = queries_of(need_input(cfg, "data"));
    int runs = static_cast<int>(cfg.num_or("runs", 8));
    int workers = static_cast<int>(cfg.num_or("workers", 0));
    uint64_t seed = cfg.seed_or("seed", 1);
    Policy policy(a.config);
    std::string tsv = "method\tratio\tpass_rate\tmean_reward\tmean_len\n";
    double best_rate = -1.0, best_ratio = 0.0;
    for (const SweepEntry& e : entries) {
      Checkpoint ck = load_checkpoint(e.path);
      DecodingConfig dec = decoding_from(cfg, mix_seed(seed, 0xe7a1));
      EvalReport rep = evaluate(policy, ck.params, queries, runs, dec, workers);
      tsv += std::string(merge_method_name(method)) + "\t" + fmt("%.6g", e.ratio) + "\t" +
             fmt("%.6g", rep.pass_rate) + "\t" + fmt("%.6g", rep.mean_reward) + "\t" +
             fmt("%.6g", rep.mean_response_length) + "\n";
      if (rep.pass_rate > best_rate) {
        best_rate = rep.pass_rate;
        best_ratio = e.ratio;
      }
    }
    write_text((fs::path(out_dir) / "sweep-eval.tsv").string(), tsv);
    summary["best_ratio"] = best_ratio;
    summary["best_pass_rate"] = best_rate;
  }
  return summary;
}

json stage_eval(const Config& cfg, const std::string& out_dir) {
  uint64_t seed = cfg.seed_or("seed", 1);
  Checkpoint ck = load_checkpoint(need_input(cfg, "ckpt"));
  Policy policy(ck.config);
  std::vector<Query> queries = queries_of(need_input(cfg, "data"));
  int runs = static_cast<int>(cfg.num_or("runs", 16));
  int workers = static_cast<int>(cfg.num_or("workers", 0));
  DecodingConfig dec = decoding_from(cfg, mix_seed(seed, 0xe7a1));

  EvalReport rep = evaluate(policy, ck.params, queries, runs, dec, workers);
  write_text((fs::path(out_dir) / "report.json").string(),
             report_to_json(rep).dump(2) + "\n");

  std::string tsv = "id\tdifficulty\truns\tpass_count\tmean_len\n";
  for (const QueryEval& q : rep.queries) {
    double mean_len = 0.0;
    for (int len : q.lengths) mean_len += len;
    if (!q.lengths.empty()) mean_len /= static_cast<double>(q.lengths.size());
    tsv += q.id + "\t" + std::to_string(q.difficulty) + "\t" + std::to_string(rep.runs) +
           "\t" + std::to_string(q.pass_count) + "\t" + fmt("%.6g", mean_len) + "\n";
  }
  write_text((fs::path(out_dir) / "report.tsv").string(), tsv);

  return json{{"queries", queries.size()},
              {"runs", runs},
              {"pass_rate", rep.pass_rate},
              {"mean_reward", rep.mean_reward},
              {"mean_response_length", rep.mean_response_length}};
}

json stage_analyze(const Config& cfg, const std::string& out_dir) {
  uint64_t seed = cfg.seed_or("seed", 1);
  Checkpoint baseline = load_checkpoint(need_input(cfg, "baseline"));
  Policy policy(baseline.config);
  std::vector<Query> queries = queries_of(need_input(cfg, "data"));
  int runs = static_cast<int>(cfg.num_or("runs", 16));
  int profile_runs = static_cast<int>(cfg.num_or("profile_runs", runs));
  int workers = static_cast<int>(cfg.num_or("workers", 0));
  DecodingConfig dec = decoding_from(cfg, mix_seed(seed, 0xa7a1));

  // named comparison models: "name=path,name=path"
  std::vector<std::pair<std::string, Checkpoint>> models;
  for (const std::string& item : cfg.list("models")) {
    size_t eq = item.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("analyze: models entries must be name=path: " + item);
    std::string name = item.substr(0, eq);
    std::string path = resolve(cfg, item.substr(eq + 1));
    if (!fs::exists(path)) throw std::runtime_error("analyze: no such file: " + path);
    Checkpoint ck = load_checkpoint(path);
    if (!(ck.config == baseline.config))
      throw std::runtime_error("analyze: config of " + name + " differs from baseline");
    models.emplace_back(name, std::move(ck));
  }
  if (models.empty()) throw std::runtime_error("analyze: no models given");

  // difficulty buckets come from the baseline's own pass rates
  DifficultyProfile prof =
      pass_rate_profile(policy, baseline.params, queries, profile_runs, dec, workers);

  EvalReport base_rep = evaluate(policy, baseline.params, queries, runs, dec, workers);
  std::map<int, double> base_acc = accuracy_by_level(base_rep, prof);

  json analysis;
  analysis["runs"] = runs;
  analysis["profile_runs"] = profile_runs;
  analysis["baseline"] = {{"pass_rate", base_rep.pass_rate},
                          {"mean_response_length", base_rep.mean_response_length}};

  std::map<std::string, EvalReport> reps;
  for (auto& [name, ck] : models) reps[name] = evaluate(policy, ck.params, queries, runs, dec, workers);

  // per-level accuracy and gain over the baseline
  std::string levels_tsv = "level\tbaseline";
  for (auto& [name, ck] : models) levels_tsv += "\t" + name + "\t" + name + "_gain";
  levels_tsv += "\n";
  json by_level = json::object();
  for (int lvl = 1; lvl <= 5; ++lvl) {
    double b = base_acc.count(lvl) ? base_acc.at(lvl) : -1.0;
    if (b < 0.0) continue;  // no queries landed in this bucket
    levels_tsv += std::to_string(lvl) + "\t" + fmt("%.6g", b);
    json row{{"baseline", b}};
    for (auto& [name, ck] : models) {
      std::map<int, double> acc = accuracy_by_level(reps.at(name), prof);
      double v = acc.count(lvl) ? acc.at(lvl) : 0.0;
      levels_tsv += "\t" + fmt("%.6g", v) + "\t" + fmt("%.6g", v - b);
      row[name] = v;
    }
    levels_tsv += "\n";
    by_level[std::to_string(lvl)] = row;
  }
  analysis["accuracy_by_level"] = by_level;
  write_text((fs::path(out_dir) / "levels.tsv").string(), levels_tsv);

  // tracked-word usage
  std::string words_tsv = "word\tbaseline";
  for (auto& [name, ck] : models) words_tsv += "\t" + name;
  words_tsv += "\n";
  json words = json::object();
  for (const std::string& w : tracked_words()) {
    words_tsv += w + "\t" + std::to_string(base_rep.word_counts.at(w));
    json row{{"baseline", base_rep.word_counts.at(w)}};
    for (auto& [name, ck] : models) {
      words_tsv += "\t" + std::to_string(reps.at(name).word_counts.at(w));
      row[name] = reps.at(name).word_counts.at(w);
    }
    words_tsv += "\n";
    words[w] = row;
  }
  analysis["word_counts"] = words;
  write_text((fs::path(out_dir) / "words.tsv").string(), words_tsv);

  // response length distributions
  auto all_lengths = [](const EvalReport& r) {
    std::vector<int> ls;
    for (const QueryEval& q : r.queries) ls.insert(ls.end(), q.lengths.begin(), q.lengths.end());
    return ls;
  };
  std::string len_tsv = "model\tmean\tmedian\tp90\tmax\n";
  json lengths = json::object();
  auto add_len = [&](const std::string& name, const EvalReport& r) {
    LengthStats st = response_length_stats(all_lengths(r));
    len_tsv += name + "\t" + fmt("%.6g", st.mean) + "\t" + fmt("%.6g", st.median) + "\t" +
               fmt("%.6g", st.p90) + "\t" + std::to_string(st.max) + "\n";
    lengths[name] = {{"mean", st.mean}, {"median", st.median}, {"p90", st.p90}, {"max", st.max}};
  };
  add_len("baseline", base_rep);
  for (auto& [name, ck] : models) add_len(name, reps.at(name));
  analysis["lengths"] = lengths;
  write_text((fs::path(out_dir) / "lengths.tsv").string(), len_tsv);

  // drift from the baseline: mean token-level KL along each model's own
  // greedy responses on a fixed slice of the queries
  int kl_queries = static_cast<int>(
      cfg.num_or("kl_queries", std::min<int64_t>(8, static_cast<int64_t>(queries.size()))));
  kl_queries = std::min<int>(kl_queries, static_cast<int>(queries.size()));
  json drift = json::object();
  for (auto& [name, ck] : models) {
    DecodingConfig greedy = dec;
    greedy.greedy = true;
    double total = 0.0;
    int64_t tokens = 0;
    for (int i = 0; i < kl_queries; ++i) {
      SampleResult sr = policy.sample(ck.params, queries[i].prompt_tokens, greedy);
      if (sr.tokens.empty()) continue;
      std::vector<double> kl = token_level_kl(policy, ck.params, baseline.params,
                                              queries[i].prompt_tokens, sr.tokens);
      for (double v : kl) total += v;
      tokens += static_cast<int64_t>(kl.size());
    }
    drift[name] = tokens > 0 ? total / static_cast<double>(tokens) : 0.0;
  }
  analysis["mean_token_kl_to_baseline"] = drift;

  json model_summaries = json::object();
  for (auto& [name, ck] : models) {
    const EvalReport& r = reps.at(name);
    model_summaries[name] = {{"pass_rate", r.pass_rate},
                             {"mean_response_length", r.mean_response_length}};
  }
  analysis["models"] = model_summaries;
  write_text((fs::path(out_dir) / "analysis.json").string(), analysis.dump(2) + "\n");

  json summary{{"models", models.size()}, {"baseline_pass_rate", base_rep.pass_rate}};
  for (auto& [name, ck] : models) summary[name + "_pass_rate"] = reps.at(name).pass_rate;
  return summary;
}

// ---- validation ----------------------------------------------------------

void check_numeric(const Config& cfg, const std::vector<std::string>& int_keys,
                   const std::vector<std::string>& real_keys) {
  for (const std::string& k : int_keys)
    if (cfg.has(k)) cfg.num(k);
  for (const std::string& k : real_keys)
    if (cfg.has(k)) cfg.real(k);
}

void validate_stage(const std::string& kind, const Config& cfg) {
  auto require = [&](std::initializer_list<const char*> keys) {
    for (const char* k : keys)
      if (!cfg.has(k)) throw std::invalid_argument("missing required key '" + std::string(k) + "'");
  };
  const std::vector<std::string> decode_int{"decode.top_k", "decode.max_new"};
  const std::vector<std::string> decode_real{"decode.temperature", "decode.top_p"};

  if (kind == "dataset") {
    require({"count"});
    cfg.num("count");
    if (cfg.has("difficulties"))
      for (int d : cfg.int_list("difficulties"))
        if (d < 1 || d > 5) throw std::invalid_argument("difficulties must be within 1..5");
    trace_style_from_name(cfg.str_or("style", "concise"));
  } else if (kind == "sft") {
    require({"data"});
    check_numeric(cfg, {"batch", "epochs", "max_trace_tokens"}, {"lr", "grad_clip"});
  } else if (kind == "rl") {
    require({"pool", "init"});
    check_numeric(cfg, {"steps", "batch", "group", "max_new", "profile_runs"},
                  {"lr", "clip_eps", "beta", "temp", "grad_clip"});
  } else if (kind == "hybrid") {
    require({"mode", "traces", "pool", "init"});
    std::string mode = cfg.str("mode");
    if (mode != "two_stage" && mode != "interleaved" && mode != "progressive")
      throw std::invalid_argument("unknown hybrid mode: " + mode);
    check_numeric(cfg,
                  {"stage1_max_tokens", "sft.batch", "sft.epochs", "rl.steps", "rl.batch",
                   "rl.group", "rl.max_new"},
                  {"sft_weight", "prefix_weight", "sft.lr", "rl.lr", "rl.clip_eps",
                   "rl.beta", "rl.temp"});
  } else if (kind == "distill") {
    require({"init", "queries"});
    std::string keep = cfg.str_or("keep", "shortest");
    if (keep != "all" && keep != "shortest")
      throw std::invalid_argument("distill keep must be all or shortest");
    check_numeric(cfg, {"samples"}, {});
    check_numeric(cfg, decode_int, decode_real);
  } else if (kind == "merge") {
    require({"method", "a", "b"});
    MergeMethod m = merge_method_from_name(cfg.str("method"));
    if (m == MergeMethod::kTies && !cfg.has("base"))
      throw std::invalid_argument("ties merge requires a base checkpoint");
    if (cfg.has("ratios")) cfg.real_list("ratios");
    check_numeric(cfg, {"runs"}, {"density"});
  } else if (kind == "eval") {
    require({"ckpt", "data"});
    check_numeric(cfg, {"runs"}, {});
    check_numeric(cfg, decode_int, decode_real);
  } else if (kind == "analyze") {
    require({"baseline", "models", "data"});
    for (const std::string& item : cfg.list("models"))
      if (item.find('=') == std::string::npos)
        throw std::invalid_argument("models entries must be name=path: " + item);
    check_numeric(cfg, {"runs", "profile_runs", "kl_queries"}, {});
    check_numeric(cfg, decode_int, decode_real);
  } else {
    throw std::invalid_argument("unknown stage kind: " + kind);
  }
  check_numeric(cfg, {"model.vocab", "model.context", "model.embed", "model.layers",
                      "model.heads", "workers"},
                {});
}

std::vector<int> stage_indices(const Config& spec) {
  std::vector<int> idx;
  for (const std::string& key : spec.group_keys("stage")) {
    errno = 0;
    char* end = nullptr;
    long n = std::strtol(key.c_str(), &end, 10);
    if (errno != 0 || end == key.c_str() || *end != '\0' || n <= 0)
      throw std::invalid_argument("bad stage index: stage." + key);
    idx.push_back(static_cast<int>(n));
  }
  std::sort(idx.begin(), idx.end());
  for (size_t i = 0; i < idx.size(); ++i)
    if (idx[i] != static_cast<int>(i) + 1)
      throw std::invalid_argument("stage indices must be contiguous from 1");
  return idx;
}

// Top-level keys a stage inherits when it does not set them itself.
void inject_inherited(const Config& spec, Config& stage) {
  const Config model = spec.subset("model");
  for (const auto& [k, v] : model.values())
    if (!stage.has("model." + k)) stage.set("model." + k, v);
  if (spec.has("workers") && !stage.has("workers")) stage.set("workers", spec.str("workers"));
}

}  // namespace

const std::vector<std::string>& stage_kinds() {
  static const std::vector<std::string> kinds{"dataset", "sft", "rl",   "hybrid",
                                              "distill", "merge", "eval", "analyze"};
  return kinds;
}

void validate_experiment(const Config& spec) {
  if (!spec.has("name")) throw std::invalid_argument("experiment: missing key 'name'");
  spec.seed_or("seed", 0);
  std::vector<int> idx = stage_indices(spec);
  if (idx.empty()) throw std::invalid_argument("experiment: no stages");
  for (int i : idx) {
    Config stage = spec.subset("stage." + std::to_string(i));
    inject_inherited(spec, stage);
    try {
      validate_stage(stage.str_or("kind", ""), stage);
    } catch (const std::exception& e) {
      throw std::invalid_argument("stage." + std::to_string(i) + ": " + e.what());
    }
  }
}

json run_stage(const std::string& kind, const Config& cfg, const std::string& out_dir) {
  fs::create_directories(out_dir);
  json summary;
  if (kind == "dataset") summary = stage_dataset(cfg, out_dir);
  else if (kind == "sft") summary = stage_sft(cfg, out_dir);
  else if (kind == "rl") summary = stage_rl(cfg, out_dir);
  else if (kind == "hybrid") summary = stage_hybrid(cfg, out_dir);
  else if (kind == "distill") summary = stage_distill(cfg, out_dir);
  else if (kind == "merge") summary = stage_merge(cfg, out_dir);
  else if (kind == "eval") summary = stage_eval(cfg, out_dir);
  else if (kind == "analyze") summary = stage_analyze(cfg, out_dir);
  else throw std::runtime_error("unknown stage kind: " + kind);
  write_text((fs::path(out_dir) / "summary.json").string(), summary.dump(2) + "\n");
  return summary;
}

json run_experiment(const Config& spec, const std::string& out_dir) {
  validate_experiment(spec);
  fs::create_directories(out_dir);
  uint64_t seed = spec.seed_or("seed", 1);

  // materialise the spec as run, with every stage seed pinned
  Config pinned = spec;
  std::vector<int> idx = stage_indices(spec);
  for (int i : idx) {
    std::string key = "stage." + std::to_string(i) + ".seed";
    if (!pinned.has(key)) pinned.set(key, std::to_string(mix_seed(seed, i)));
  }
  write_text((fs::path(out_dir) / "spec-as-run.cfg").string(), pinned.serialize());

  json stages = json::array();
  for (int i : idx) {
    Config stage = pinned.subset("stage." + std::to_string(i));
    inject_inherited(pinned, stage);
    stage.set("_root", out_dir);
    std::string kind = stage.str("kind");
    std::string dir_name = "stage-" + std::to_string(i) + "-" + kind;
    std::string stage_dir = (fs::path(out_dir) / dir_name).string();
    try {
      json summary = run_stage(kind, stage, stage_dir);
      stages.push_back({{"index", i}, {"kind", kind}, {"dir", dir_name}, {"summary", summary}});
    } catch (const std::exception& e) {
      write_text((fs::path(out_dir) / "FAILED").string(),
                 "stage " + std::to_string(i) + " (" + kind + "): " + e.what() + "\n");
      throw;
    }
  }

  json result{{"name", spec.str("name")}, {"seed", seed}, {"stages", stages}};
  write_text((fs::path(out_dir) / "stages.json").string(), result.dump(2) + "\n");
  write_manifest(out_dir);
  return result;
}

json build_manifest(const std::string& root) {
  std::vector<std::string> paths;
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (!entry.is_regular_file()) continue;
    std::string rel = fs::relative(entry.path(), root).generic_string();
    if (rel == "manifest.json") continue;
    paths.push_back(rel);
  }
  std::sort(paths.begin(), paths.end());

  json files = json::array();
  for (const std::string& rel : paths) {
    std::ifstream in(fs::path(root) / rel, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    std::string bytes = ss.str();
    char digest[32];
    std::snprintf(digest, sizeof digest, "%016llx",
                  static_cast<unsigned long long>(hash_str(bytes)));
    files.push_back({{"path", rel}, {"bytes", bytes.size()}, {"fnv1a64", digest}});
  }
  return json{{"files", files}};
}

void write_manifest(const std::string& root) {
  write_text((fs::path(root) / "manifest.json").string(),
             build_manifest(root).dump(2) + "\n");
}

}  // namespace postlab

// Copyright 2026 The postlab Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef POSTLAB_EXPERIMENT_HPP_
#define POSTLAB_EXPERIMENT_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "postlab/config.hpp"

namespace postlab {

// An experiment spec is a Config with top-level keys (name, seed, model.*,
// workers) and numbered stages:
//
//   stage.1.kind = dataset
//   stage.1.count = 64
//   stage.2.kind = sft
//   stage.2.data = stage-1-dataset/dataset.jsonl
//
// Stage-relative paths resolve against the experiment output directory, so
// later stages can consume earlier artifacts by their well-known names.

const std::vector<std::string>& stage_kinds();

// Structural validation without touching the filesystem: stage numbering,
// known kinds, required keys, parseable numbers and enums. Throws
// std::runtime_error with the offending key on failure.
void validate_experiment(const Config& spec);

// Executes a single stage, writing its artifacts under out_dir. Relative
// paths in `cfg` resolve against cfg["_root"] (default: the current
// directory). Returns a summary of what was produced.
nlohmann::json run_stage(const std::string& kind, const Config& cfg,
                         const std::string& out_dir);

// Runs every stage in order under out_dir: stage i writes into
// out_dir/stage-<i>-<kind>/. The spec as run (with injected per-stage seeds)
// is stored as spec-as-run.cfg, stage summaries as stages.json and a content
// manifest as manifest.json. On failure a FAILED marker naming the stage and
// error is left behind and the exception propagates.
nlohmann::json run_experiment(const Config& spec, const std::string& out_dir);

// Content manifest of every regular file under root (sorted relative paths,
// byte sizes, FNV-1a64 digests). No timestamps, so identical artifact trees
// produce identical manifests.
nlohmann::json build_manifest(const std::string& root);
void write_manifest(const std::string& root);

// Built-in experiment recipes, keyed by name. recipe_spec returns the full
// config text for a given master seed.
std::vector<std::string> recipe_names();
std::string recipe_spec(const std::string& name, uint64_t seed);

}  // namespace postlab

#endif  // POSTLAB_EXPERIMENT_HPP_

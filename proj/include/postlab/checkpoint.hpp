// Copyright 2026 The postlab Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef POSTLAB_CHECKPOINT_HPP_
#define POSTLAB_CHECKPOINT_HPP_

#include <string>

#include <nlohmann/json.hpp>

#include "postlab/policy.hpp"
#include "postlab/tensor.hpp"

namespace postlab {

struct Checkpoint {
  PolicyConfig config;
  ParameterSet params;
  nlohmann::json meta;  // free-form provenance (merge recipes, stage info, ...)
};

// Text header (magic line + one JSON line describing config, tensor table and
// meta) followed by raw little-endian float32 data in declared order.
// Round-trips bit-exactly.
void save_checkpoint(const std::string& path, const PolicyConfig& config,
                     const ParameterSet& params,
                     const nlohmann::json& meta = nlohmann::json::object());
Checkpoint load_checkpoint(const std::string& path);

nlohmann::json config_to_json(const PolicyConfig& cfg);
PolicyConfig config_from_json(const nlohmann::json& j);

}  // namespace postlab

#endif  // POSTLAB_CHECKPOINT_HPP_

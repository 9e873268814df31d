// Copyright 2026 The postlab Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef POSTLAB_MERGE_HPP_
#define POSTLAB_MERGE_HPP_

#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "postlab/policy.hpp"
#include "postlab/tensor.hpp"

namespace postlab {

enum class MergeMethod { kLinear, kTies, kSlerp };

std::string_view merge_method_name(MergeMethod m);
MergeMethod merge_method_from_name(std::string_view name);

// All merges are elementwise over identically structured parameter sets and
// return the first (second) parent bit-exactly at t == 0 (t == 1).

ParameterSet linear_merge(const ParameterSet& a, const ParameterSet& b, double t);

// Per tensor: task vectors against `base` are trimmed to the top
// ceil(density * n) entries by magnitude, a sign is elected from the weighted
// trimmed vectors ((1-t) on a, t on b), and entries whose sign matches are
// averaged with renormalised weights. Result is base + merged vector.
ParameterSet ties_merge(const ParameterSet& base, const ParameterSet& a,
                        const ParameterSet& b, double t, double density);

// Spherical interpolation per flattened tensor, falling back to linear when
// the two tensors are (anti)parallel or one of them is zero.
ParameterSet slerp_merge(const ParameterSet& a, const ParameterSet& b, double t);

// Top-k index selection used by the TIES trim (exposed for verification):
// indices of the k largest |v|, ties resolved toward the lower index.
std::vector<int64_t> top_k_by_magnitude(const std::vector<float>& v, int64_t k);

uint64_t params_fingerprint(const ParameterSet& params);

struct SweepEntry {
  double ratio = 0.0;
  std::string path;
};

// Merges at every ratio and writes checkpoints named
// merge-<method>-<ratio>.ckpt under out_dir; each checkpoint's meta carries
// the full recipe (method, ratio, density, parent fingerprints).
std::vector<SweepEntry> ratio_sweep(MergeMethod method, const PolicyConfig& config,
                                    const ParameterSet& a, const ParameterSet& b,
                                    const ParameterSet* base,  // required for ties
                                    const std::vector<double>& ratios, double density,
                                    const std::string& out_dir);

}  // namespace postlab

#endif  // POSTLAB_MERGE_HPP_

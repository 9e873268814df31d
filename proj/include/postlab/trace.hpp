// Copyright 2026 The postlab Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef POSTLAB_TRACE_HPP_
#define POSTLAB_TRACE_HPP_

#include <cstdint>
#include <string>
#include <vector>

namespace postlab {

// How a target token participates in training.
//   kSft    cross-entropy token
//   kRl     placeholder for tokens owned by the policy-gradient side of a
//           mixed objective
//   kIgnore scored by neither (padding / masked-out prefix)
enum class LossKind : uint8_t { kSft = 0, kRl = 1, kIgnore = 2 };

struct SupervisedTrace {
  std::string query_id;
  std::vector<int> prompt_tokens;
  std::vector<int> target_tokens;       // includes the terminal eos
  std::vector<LossKind> loss_kind;      // one per target token
  std::vector<float> loss_weight;      // one per target token
  std::string source;                   // "oracle:<style>", "distill", ...

  void validate() const;  // throws std::invalid_argument on shape mismatches
};

}  // namespace postlab

#endif  // POSTLAB_TRACE_HPP_

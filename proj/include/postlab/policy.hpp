// Copyright 2026 The postlab Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef POSTLAB_POLICY_HPP_
#define POSTLAB_POLICY_HPP_

#include <cstdint>
#include <span>
#include <vector>

#include "postlab/tensor.hpp"

namespace postlab {

struct PolicyConfig {
  int vocab_size = 64;
  int context_len = 512;
  int embed_dim = 64;
  int num_layers = 2;
  int num_heads = 2;
  uint64_t init_seed = 0;

  int head_dim() const { return embed_dim / num_heads; }
  int mlp_dim() const { return 4 * embed_dim; }
  void validate() const;  // throws std::invalid_argument
  bool operator==(const PolicyConfig&) const = default;
};

struct DecodingConfig {
  double temperature = 0.6;
  double top_p = 0.95;
  int top_k = 20;  // 0 disables the top-k filter
  int max_new_tokens = 256;
  bool greedy = false;
  uint64_t seed = 0;
  void validate() const;
};

struct SampleResult {
  std::vector<int> tokens;       // includes the terminal eos token if one was sampled
  std::vector<float> log_probs;  // raw (untempered) log-probability of each sampled token
  bool truncated = false;        // hit max_new_tokens (or the context limit) without eos
};

// Activations cached by a teacher-forced forward pass, consumed by backward().
template <typename T>
struct ScoredT {
  std::vector<T> log_probs;               // [R] log p(response[j] | prefix)
  std::vector<std::vector<T>> log_dists;  // [R][V] full log distribution per position
  double entropy() const;                 // mean next-token entropy over the R positions

  // internal state below; layout is an implementation detail of PolicyT
  struct LayerCache {
    std::vector<T> x_in, ln1_mean, ln1_rstd, l1, qkv, att, ao, x_mid, ln2_mean,
        ln2_rstd, l2, z1;
  };
  std::vector<int> inputs;  // prompt + response[:-1]
  std::vector<int> response;
  int prompt_len = 0;
  std::vector<LayerCache> layers;
  std::vector<T> x_final, lnf_mean, lnf_rstd, lf, probs;
};

// Decoder-only transformer: learned positional embeddings, pre-LN blocks,
// causal attention, 4x GELU MLP, untied readout without bias. The scalar type
// is a template parameter so gradient checks can run the exact same code in
// double precision. Parameters live outside the class; every method takes the
// ParameterSet it should use, which keeps snapshots (behaviour policy,
// reference policy) cheap and explicit.
template <typename T>
class PolicyT {
 public:
  explicit PolicyT(const PolicyConfig& cfg);
  const PolicyConfig& config() const { return cfg_; }

  // Gaussian(0, 0.02) weights and embeddings, unit LayerNorm gains, zero
  // biases. Deterministic in cfg.init_seed.
  ParameterSetT<T> init_params() const;

  // Teacher-forced log p of each response token given prompt + earlier
  // response tokens. The final response token is a target only, never input.
  std::vector<T> response_log_probs(const ParameterSetT<T>& params,
                                    std::span<const int> prompt,
                                    std::span<const int> response) const;

  // Full next-token log distribution at each response position.
  std::vector<std::vector<T>> response_log_dists(const ParameterSetT<T>& params,
                                                 std::span<const int> prompt,
                                                 std::span<const int> response) const;

  // Ancestral sampling with temperature / top-k / top-p (or greedy argmax).
  // Stops at eos (which is kept in the result) or when max_new_tokens / the
  // context window is exhausted. Deterministic in cfg.seed.
  SampleResult sample(const ParameterSetT<T>& params, std::span<const int> prompt,
                      const DecodingConfig& dec) const;

  // Forward pass retaining activations.
  ScoredT<T> score(const ParameterSetT<T>& params, std::span<const int> prompt,
                   std::span<const int> response) const;

  // Gradient of sum_j weights[j] * (-log p(response[j])) with respect to
  // params. Every training objective here reaches the parameters only through
  // the per-token log-probabilities, so callers encode their objective in the
  // weight vector. `scored` must come from score() under the same params.
  ParameterSetT<T> backward(const ScoredT<T>& scored, const ParameterSetT<T>& params,
                            std::span<const T> weights) const;

 private:
  PolicyConfig cfg_;
};

using Policy = PolicyT<float>;
using Scored = ScoredT<float>;

extern template class PolicyT<float>;
extern template class PolicyT<double>;
extern template struct ScoredT<float>;
extern template struct ScoredT<double>;

}  // namespace postlab

#endif  // POSTLAB_POLICY_HPP_

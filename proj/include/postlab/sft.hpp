// Copyright 2026 The postlab Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef POSTLAB_SFT_HPP_
#define POSTLAB_SFT_HPP_

#include <string>
#include <vector>

#include "postlab/metrics.hpp"
#include "postlab/policy.hpp"
#include "postlab/trace.hpp"

namespace postlab {

struct SftConfig {
  double learning_rate = 3e-3;
  int batch_size = 16;
  int epochs = 3;
  double grad_clip = 1.0;  // global gradient norm ceiling
  bool shuffle = true;
  uint64_t seed = 0;
  void validate() const;
};

enum class RunStatus { kOk, kNumericError };

struct SftStepInfo {
  int step = 0;
  int epoch = 0;
  double loss = 0.0;
  double grad_norm = 0.0;  // before clipping
};

struct SftResult {
  ParameterSet params;  // final, or the last finite state on numeric abort
  std::vector<ParameterSet> epoch_params;
  std::vector<SftStepInfo> steps;
  RunStatus status = RunStatus::kOk;
  std::string message;
};

template <typename T>
struct LossGrad {
  double loss = 0.0;
  ParameterSetT<T> grad;
};

// Mean cross-entropy over target tokens marked kSft, each scaled by its
// loss_weight; the divisor is the token count, not the weight sum, so a
// uniform weight w scales the whole loss by w. Tokens marked kRl or kIgnore
// contribute nothing. Gradient has the structure of `params`.
template <typename T>
LossGrad<T> sft_loss(const PolicyT<T>& policy, const ParameterSetT<T>& params,
                     const SupervisedTrace& trace);

extern template LossGrad<float> sft_loss(const PolicyT<float>&,
                                         const ParameterSetT<float>&,
                                         const SupervisedTrace&);
extern template LossGrad<double> sft_loss(const PolicyT<double>&,
                                          const ParameterSetT<double>&,
                                          const SupervisedTrace&);

// Plain SGD with per-batch gradient averaging and global norm clipping.
// Deterministic in (init, data order, config.seed). A non-finite loss or
// gradient aborts the run and returns the parameters from before the bad
// step.
SftResult train_sft(const Policy& policy, const ParameterSet& init,
                    const std::vector<SupervisedTrace>& data, const SftConfig& cfg,
                    MetricsWriter* metrics = nullptr);

}  // namespace postlab

#endif  // POSTLAB_SFT_HPP_

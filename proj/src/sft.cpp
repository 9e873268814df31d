// Copyright 2026 The postlab Authors
// SPDX-License-Identifier: Apache-2.0

#include "postlab/sft.hpp"

#include <cmath>
#include <stdexcept>

#include "postlab/rng.hpp"

namespace postlab {

void SftConfig::validate() const {
  if (learning_rate <= 0.0) throw std::invalid_argument("learning_rate must be positive");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (grad_clip <= 0.0) throw std::invalid_argument("grad_clip must be positive");
}

template <typename T>
LossGrad<T> sft_loss(const PolicyT<T>& policy, const ParameterSetT<T>& params,
                     const SupervisedTrace& trace) {
  trace.validate();
  const auto scored = policy.score(params, trace.prompt_tokens, trace.target_tokens);

  const size_t n = trace.target_tokens.size();
  int64_t n_sft = 0;
  for (size_t j = 0; j < n; ++j) {
    if (trace.loss_kind[j] == LossKind::kSft) ++n_sft;
  }

  LossGrad<T> out;
  if (n_sft == 0) {
    for (const auto& t : params) out.grad.add(t.name, t.shape);
    return out;
  }

  std::vector<T> weights(n, T(0));
  double loss = 0.0;
  for (size_t j = 0; j < n; ++j) {
    if (trace.loss_kind[j] != LossKind::kSft) continue;
    const T w = T(trace.loss_weight[j]) / T(n_sft);
    weights[j] = w;
    loss += static_cast<double>(w) * -static_cast<double>(scored.log_probs[j]);
  }
  out.loss = loss;
  out.grad = policy.backward(scored, params, weights);
  return out;
}

template LossGrad<float> sft_loss(const PolicyT<float>&, const ParameterSetT<float>&,
                                  const SupervisedTrace&);
template LossGrad<double> sft_loss(const PolicyT<double>&,
                                   const ParameterSetT<double>&,
                                   const SupervisedTrace&);

SftResult train_sft(const Policy& policy, const ParameterSet& init,
                    const std::vector<SupervisedTrace>& data, const SftConfig& cfg,
                    MetricsWriter* metrics) {
  cfg.validate();
  if (data.empty()) throw std::invalid_argument("train_sft: empty dataset");

  SftResult res;
  res.params = init;
  Rng rng(mix_seed(cfg.seed, 0x5f7));
  std::vector<size_t> order(data.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  int step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (cfg.shuffle) {
      for (size_t i = order.size(); i > 1; --i) {
        std::swap(order[i - 1], order[rng.below(i)]);
      }
    }
    for (size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const size_t end = std::min(order.size(), start + cfg.batch_size);
      ParameterSet grad;
      double loss = 0.0;
      for (size_t k = start; k < end; ++k) {
        auto lg = sft_loss(policy, res.params, data[order[k]]);
        loss += lg.loss;
        if (k == start) {
          grad = std::move(lg.grad);
        } else {
          grad.axpy(1.0f, lg.grad);
        }
      }
      const float inv = 1.0f / static_cast<float>(end - start);
      grad.scale(inv);
      loss *= inv;

      const double gnorm = grad.l2_norm();
      if (!std::isfinite(loss) || !std::isfinite(gnorm)) {
        res.status = RunStatus::kNumericError;
        res.message = "non-finite loss or gradient at step " + std::to_string(step);
        return res;
      }
      if (gnorm > cfg.grad_clip) {
        grad.scale(static_cast<float>(cfg.grad_clip / gnorm));
      }
      res.params.axpy(-static_cast<float>(cfg.learning_rate), grad);

      res.steps.push_back({step, epoch, loss, gnorm});
      if (metrics) {
        metrics->write({{"step", step},
                        {"epoch", epoch},
                        {"loss", loss},
                        {"grad_norm", gnorm}});
      }
      ++step;
    }
    res.epoch_params.push_back(res.params);
  }
  return res;
}

}  // namespace postlab

// Copyright 2026 The postlab Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef POSTLAB_EVAL_HPP_
#define POSTLAB_EVAL_HPP_

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "postlab/policy.hpp"
#include "postlab/task_env.hpp"

namespace postlab {

// Empirical difficulty level from c passes out of k runs, graded against the
// reference scale of 12/16, 8/16, 5/16 and 2/16. Pure integer arithmetic so
// bucket edges are exact for any k.
//   level 1: 16c >= 12k     (easiest)
//   level 2: 16c >=  8k
//   level 3: 16c >=  5k
//   level 4: 16c >=  2k
//   level 5: otherwise      (hardest)
int difficulty_level(int pass_count, int runs);

struct DifficultyProfile {
  int runs = 0;
  std::map<std::string, int> pass_count;
  int level(const std::string& query_id) const;  // throws on unknown id
};

// The five reasoning words whose usage statistics are tracked in analyses.
const std::vector<std::string>& tracked_words();

struct QueryEval {
  std::string id;
  int difficulty = 0;  // generator label, not the empirical level
  int pass_count = 0;
  std::vector<bool> correct;          // per run
  std::vector<int> lengths;           // response tokens per run
  std::vector<std::string> responses; // decoded text per run
  double mean_reward = 0.0;
};

struct EvalReport {
  int runs = 0;
  std::vector<QueryEval> queries;
  double pass_rate = 0.0;  // mean per-query pass fraction
  double mean_reward = 0.0;
  double mean_response_length = 0.0;
  std::map<std::string, int64_t> word_counts;  // tracked words over all responses
};

// K independently seeded samples per query; sub-seeds derive from
// (dec.seed, query id, run index) so results do not depend on worker count.
EvalReport evaluate(const Policy& policy, const ParameterSet& params,
                    const std::vector<Query>& queries, int runs,
                    const DecodingConfig& dec, int workers = 0);

DifficultyProfile pass_rate_profile(const Policy& policy, const ParameterSet& params,
                                    const std::vector<Query>& queries, int runs,
                                    const DecodingConfig& dec, int workers = 0);

// Mean pass fraction per empirical level; every query must be profiled.
std::map<int, double> accuracy_by_level(const EvalReport& report,
                                        const DifficultyProfile& profile);

// Whole-word occurrence counts (letter boundaries) of `words` across `texts`.
std::map<std::string, int64_t> word_frequency(const std::vector<std::string>& texts,
                                              const std::vector<std::string>& words);

// Per-position KL(a || b) along one response: sum_v p_a(v) (log p_a - log p_b).
std::vector<double> token_level_kl(const Policy& policy, const ParameterSet& params_a,
                                   const ParameterSet& params_b,
                                   std::span<const int> prompt,
                                   std::span<const int> response);

struct LengthStats {
  double mean = 0.0;
  double median = 0.0;
  double p90 = 0.0;  // nearest-rank
  int max = 0;
};
LengthStats response_length_stats(const std::vector<int>& lengths);

nlohmann::json report_to_json(const EvalReport& report);

}  // namespace postlab

#endif  // POSTLAB_EVAL_HPP_

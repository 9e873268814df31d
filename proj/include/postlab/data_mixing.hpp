// Copyright 2026 The postlab Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef POSTLAB_DATA_MIXING_HPP_
#define POSTLAB_DATA_MIXING_HPP_

#include <string>
#include <vector>

#include "postlab/policy.hpp"
#include "postlab/task_env.hpp"
#include "postlab/trace.hpp"

namespace postlab {

struct DistillRecord {
  std::string query_id;
  std::string text;  // decoded response
  int length_tokens = 0;
  bool correct = false;
};

// Samples `samples_per_query` responses per query (sub-seeds from dec.seed,
// query id and sample index) and keeps the correct ones. With
// keep_all_correct=false only the shortest correct response per query
// survives (ties: earliest sample).
std::vector<DistillRecord> distill(const Policy& policy, const ParameterSet& params,
                                   const std::vector<Query>& queries,
                                   int samples_per_query, const DecodingConfig& dec,
                                   bool keep_all_correct, int workers = 0);

// Mixed supervision: one trace per distilled record, plus an oracle long-CoT
// trace for every query that contributed no distilled record. Output order:
// distilled first (query order, then sample order), then the backfill.
std::vector<SupervisedTrace> assemble_mixed(const std::vector<Query>& queries,
                                            const std::vector<DistillRecord>& distilled);

// Same mix as dataset records, for export through the CLI.
std::vector<DatasetRecord> mixed_records(const std::vector<Query>& queries,
                                         const std::vector<DistillRecord>& distilled);

}  // namespace postlab

#endif  // POSTLAB_DATA_MIXING_HPP_

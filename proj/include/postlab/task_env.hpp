// Copyright 2026 The postlab Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef POSTLAB_TASK_ENV_HPP_
#define POSTLAB_TASK_ENV_HPP_

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "postlab/trace.hpp"

namespace postlab {

// Verifiable integer-arithmetic reasoning task. A query is a fully
// parenthesised expression over +, -, * with small operands; the model is
// asked to reason inside <think> tags and put the final integer in \boxed{}.

inline constexpr std::string_view kReasoningInstruction =
    "please reason step by step within <think> </think> tags, and put your "
    "final answer within \\boxed{}.\n";

struct Query {
  std::string id;
  std::string expression;
  long long answer = 0;
  int difficulty = 1;  // 1..5, number of operators minus one
  std::vector<int> prompt_tokens;
};

struct RewardBreakdown {
  double accuracy = 0.0;  // 0.9 when the boxed integer matches the answer
  double format = 0.0;    // 0.1 for well-formed think/boxed structure
  double total = 0.0;
  bool correct = false;
};

// Deterministic in (difficulty, seed). Operands are drawn from 1..20 and
// expressions are rejection-sampled until every intermediate value stays
// within |v| <= 999, so answers remain short to spell out.
Query generate_query(int difficulty, uint64_t seed);

std::string prompt_text(const Query& q);
std::vector<int> render_prompt(const Query& q);

// Integer inside the last \boxed{...}, if present and parseable.
std::optional<long long> extract_answer(std::string_view response);

// Exactly one <think> and one </think>, in order, with a \boxed{ after the
// closing tag.
bool check_format(std::string_view response);

RewardBreakdown reward(const Query& q, std::string_view response);

enum class TraceStyle { kConcise, kLongCotGood, kLongCotVerbose };

std::string_view trace_style_name(TraceStyle s);
TraceStyle trace_style_from_name(std::string_view s);

// Ground-truth supervision. kConcise is a bare reduction chain;
// kLongCotGood adds stepwise verification written with the reasoning
// lexicon; kLongCotVerbose repeats redundant verification passes until the
// trace is at least three times the good variant.
SupervisedTrace oracle_trace(const Query& q, TraceStyle style);

// Reduction chain "a op b = c" in leftmost-innermost order; shared by the
// trace builders and useful for tests.
std::vector<std::string> reduction_steps(const Query& q);

// Dataset records, serialised one JSON object per line.
struct DatasetRecord {
  std::string id;
  std::string expression;
  long long answer = 0;
  int difficulty = 1;
  std::string prompt;
  std::string trace;
  std::string style;  // "concise", "long_cot_good", "long_cot_verbose", "distill"
};

void write_dataset(const std::string& path, const std::vector<DatasetRecord>& recs);
std::vector<DatasetRecord> read_dataset(const std::string& path);

Query query_from_record(const DatasetRecord& rec);
SupervisedTrace trace_from_record(const DatasetRecord& rec);
DatasetRecord record_from_query(const Query& q, TraceStyle style);

// Deterministic query pool: difficulties cycle through `difficulties` and
// seeds derive from (seed, index).
std::vector<Query> make_query_pool(const std::vector<int>& difficulties, int count,
                                   uint64_t seed);

}  // namespace postlab

#endif  // POSTLAB_TASK_ENV_HPP_

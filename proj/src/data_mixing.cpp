// Copyright 2026 The postlab Authors
// SPDX-License-Identifier: Apache-2.0

#include "postlab/data_mixing.hpp"

#include <map>
#include <stdexcept>

#include "postlab/parallel.hpp"
#include "postlab/rng.hpp"
#include "postlab/tokenizer.hpp"

namespace postlab {

std::vector<DistillRecord> distill(const Policy& policy, const ParameterSet& params,
                                   const std::vector<Query>& queries,
                                   int samples_per_query, const DecodingConfig& dec,
                                   bool keep_all_correct, int workers) {
  if (samples_per_query < 1)
    throw std::invalid_argument("samples_per_query must be >= 1");
  dec.validate();
  const auto& tok = Tokenizer::instance();

  const int64_t total = static_cast<int64_t>(queries.size()) * samples_per_query;
  std::vector<DistillRecord> cells(total);
  std::vector<char> keep(total, 0);
  parallel_for(total, resolve_workers(workers), [&](int64_t idx) {
    const size_t qi = static_cast<size_t>(idx / samples_per_query);
    const int k = static_cast<int>(idx % samples_per_query);
    const Query& q = queries[qi];
    DecodingConfig d = dec;
    d.seed = mix_seed(dec.seed, hash_str(q.id), static_cast<uint64_t>(k));
    const auto prompt = q.prompt_tokens.empty() ? render_prompt(q) : q.prompt_tokens;
    const SampleResult s = policy.sample(params, prompt, d);
    DistillRecord& r = cells[idx];
    r.query_id = q.id;
    r.text = tok.decode(s.tokens);
    r.length_tokens = static_cast<int>(s.tokens.size());
    r.correct = reward(q, r.text).correct;
    keep[idx] = r.correct ? 1 : 0;
  });

  if (!keep_all_correct) {
    // shortest correct sample per query, earliest on ties
    for (size_t qi = 0; qi < queries.size(); ++qi) {
      int64_t best = -1;
      for (int k = 0; k < samples_per_query; ++k) {
        const int64_t idx = static_cast<int64_t>(qi) * samples_per_query + k;
        if (!keep[idx]) continue;
        if (best < 0 || cells[idx].length_tokens < cells[best].length_tokens) best = idx;
      }
      for (int k = 0; k < samples_per_query; ++k) {
        const int64_t idx = static_cast<int64_t>(qi) * samples_per_query + k;
        keep[idx] = (idx == best) ? 1 : 0;
      }
    }
  }

  std::vector<DistillRecord> out;
  for (int64_t i = 0; i < total; ++i) {
    if (keep[i]) out.push_back(std::move(cells[i]));
  }
  return out;
}

namespace {

SupervisedTrace distilled_trace(const Query& q, const DistillRecord& r) {
  const auto& tok = Tokenizer::instance();
  SupervisedTrace tr;
  tr.query_id = q.id;
  tr.prompt_tokens = q.prompt_tokens.empty() ? render_prompt(q) : q.prompt_tokens;
  tr.target_tokens = tok.encode(r.text);
  tr.target_tokens.push_back(tok.eos_id());
  tr.loss_kind.assign(tr.target_tokens.size(), LossKind::kSft);
  tr.loss_weight.assign(tr.target_tokens.size(), 1.0f);
  tr.source = "distill";
  tr.validate();
  return tr;
}

}  // namespace

std::vector<SupervisedTrace> assemble_mixed(const std::vector<Query>& queries,
                                            const std::vector<DistillRecord>& distilled) {
  std::map<std::string, const Query*> by_id;
  for (const auto& q : queries) by_id[q.id] = &q;
  std::map<std::string, int> contributed;

  std::vector<SupervisedTrace> out;
  out.reserve(distilled.size() + queries.size());
  for (const auto& r : distilled) {
    auto it = by_id.find(r.query_id);
    if (it == by_id.end())
      throw std::invalid_argument("distilled record for unknown query " + r.query_id);
    out.push_back(distilled_trace(*it->second, r));
    ++contributed[r.query_id];
  }
  for (const auto& q : queries) {
    if (contributed.count(q.id)) continue;
    out.push_back(oracle_trace(q, TraceStyle::kLongCotGood));
  }
  return out;
}

std::vector<DatasetRecord> mixed_records(const std::vector<Query>& queries,
                                         const std::vector<DistillRecord>& distilled) {
  std::map<std::string, const Query*> by_id;
  for (const auto& q : queries) by_id[q.id] = &q;
  std::map<std::string, int> contributed;

  std::vector<DatasetRecord> out;
  for (const auto& r : distilled) {
    auto it = by_id.find(r.query_id);
    if (it == by_id.end())
      throw std::invalid_argument("distilled record for unknown query " + r.query_id);
    const Query& q = *it->second;
    DatasetRecord rec;
    rec.id = q.id;
    rec.expression = q.expression;
    rec.answer = q.answer;
    rec.difficulty = q.difficulty;
    rec.prompt = prompt_text(q);
    rec.trace = r.text;
    rec.style = "distill";
    out.push_back(std::move(rec));
    ++contributed[r.query_id];
  }
  for (const auto& q : queries) {
    if (contributed.count(q.id)) continue;
    out.push_back(record_from_query(q, TraceStyle::kLongCotGood));
  }
  return out;
}

}  // namespace postlab

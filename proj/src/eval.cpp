// Copyright 2026 The postlab Authors
// SPDX-License-Identifier: Apache-2.0

#include "postlab/eval.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "postlab/parallel.hpp"
#include "postlab/rng.hpp"
#include "postlab/tokenizer.hpp"

namespace postlab {

int difficulty_level(int pass_count, int runs) {
  if (runs < 1) throw std::invalid_argument("runs must be >= 1");
  if (pass_count < 0 || pass_count > runs)
    throw std::invalid_argument("pass_count must be in 0..runs");
  const long long c16 = 16LL * pass_count;
  if (c16 >= 12LL * runs) return 1;
  if (c16 >= 8LL * runs) return 2;
  if (c16 >= 5LL * runs) return 3;
  if (c16 >= 2LL * runs) return 4;
  return 5;
}

int DifficultyProfile::level(const std::string& query_id) const {
  auto it = pass_count.find(query_id);
  if (it == pass_count.end())
    throw std::out_of_range("query not in profile: " + query_id);
  return difficulty_level(it->second, runs);
}

const std::vector<std::string>& tracked_words() {
  static const std::vector<std::string> words = {"wait", "check", "mistake",
                                                 "alternative", "however"};
  return words;
}

EvalReport evaluate(const Policy& policy, const ParameterSet& params,
                    const std::vector<Query>& queries, int runs,
                    const DecodingConfig& dec, int workers) {
  if (runs < 1) throw std::invalid_argument("runs must be >= 1");
  if (queries.empty()) throw std::invalid_argument("evaluate: no queries");
  dec.validate();

  const auto& tok = Tokenizer::instance();
  EvalReport rep;
  rep.runs = runs;
  rep.queries.resize(queries.size());

  const int64_t total = static_cast<int64_t>(queries.size()) * runs;
  struct Cell {
    bool correct = false;
    int length = 0;
    double reward = 0.0;
    std::string text;
  };
  std::vector<Cell> cells(total);
  parallel_for(total, resolve_workers(workers), [&](int64_t idx) {
    const size_t qi = static_cast<size_t>(idx / runs);
    const int run = static_cast<int>(idx % runs);
    const Query& q = queries[qi];
    DecodingConfig d = dec;
    d.seed = mix_seed(dec.seed, hash_str(q.id), static_cast<uint64_t>(run));
    const auto prompt = q.prompt_tokens.empty() ? render_prompt(q) : q.prompt_tokens;
    const SampleResult s = policy.sample(params, prompt, d);
    Cell& c = cells[idx];
    c.text = tok.decode(s.tokens);
    c.length = static_cast<int>(s.tokens.size());
    const RewardBreakdown rb = reward(q, c.text);
    c.correct = rb.correct;
    c.reward = rb.total;
  });

  double pass_sum = 0.0, reward_sum = 0.0, len_sum = 0.0;
  std::vector<std::string> all_texts;
  all_texts.reserve(total);
  for (size_t qi = 0; qi < queries.size(); ++qi) {
    QueryEval& qe = rep.queries[qi];
    qe.id = queries[qi].id;
    qe.difficulty = queries[qi].difficulty;
    double qreward = 0.0;
    for (int run = 0; run < runs; ++run) {
      const Cell& c = cells[qi * runs + run];
      qe.correct.push_back(c.correct);
      qe.lengths.push_back(c.length);
      qe.responses.push_back(c.text);
      all_texts.push_back(c.text);
      if (c.correct) ++qe.pass_count;
      qreward += c.reward;
      len_sum += c.length;
    }
    qe.mean_reward = qreward / runs;
    pass_sum += static_cast<double>(qe.pass_count) / runs;
    reward_sum += qe.mean_reward;
  }
  rep.pass_rate = pass_sum / static_cast<double>(queries.size());
  rep.mean_reward = reward_sum / static_cast<double>(queries.size());
  rep.mean_response_length = len_sum / static_cast<double>(total);
  rep.word_counts = word_frequency(all_texts, tracked_words());
  return rep;
}

DifficultyProfile pass_rate_profile(const Policy& policy, const ParameterSet& params,
                                    const std::vector<Query>& queries, int runs,
                                    const DecodingConfig& dec, int workers) {
  const EvalReport rep = evaluate(policy, params, queries, runs, dec, workers);
  DifficultyProfile prof;
  prof.runs = runs;
  for (const auto& qe : rep.queries) prof.pass_count[qe.id] = qe.pass_count;
  return prof;
}

std::map<int, double> accuracy_by_level(const EvalReport& report,
                                        const DifficultyProfile& profile) {
  std::map<int, double> sum;
  std::map<int, int> count;
  for (const auto& qe : report.queries) {
    const int lvl = profile.level(qe.id);
    sum[lvl] += static_cast<double>(qe.pass_count) / report.runs;
    count[lvl] += 1;
  }
  std::map<int, double> acc;
  for (const auto& [lvl, s] : sum) acc[lvl] = s / count[lvl];
  return acc;
}

namespace {
bool is_letter(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z');
}
}  // namespace

std::map<std::string, int64_t> word_frequency(const std::vector<std::string>& texts,
                                              const std::vector<std::string>& words) {
  std::map<std::string, int64_t> counts;
  for (const auto& w : words) counts[w] = 0;
  for (const auto& text : texts) {
    for (const auto& w : words) {
      if (w.empty()) continue;
      size_t pos = text.find(w);
      while (pos != std::string::npos) {
        const bool left_ok = pos == 0 || !is_letter(text[pos - 1]);
        const size_t end = pos + w.size();
        const bool right_ok = end >= text.size() || !is_letter(text[end]);
        if (left_ok && right_ok) ++counts[w];
        pos = text.find(w, pos + 1);
      }
    }
  }
  return counts;
}

std::vector<double> token_level_kl(const Policy& policy, const ParameterSet& params_a,
                                   const ParameterSet& params_b,
                                   std::span<const int> prompt,
                                   std::span<const int> response) {
  const auto da = policy.response_log_dists(params_a, prompt, response);
  const auto db = policy.response_log_dists(params_b, prompt, response);
  std::vector<double> kl(da.size(), 0.0);
  for (size_t j = 0; j < da.size(); ++j) {
    double s = 0.0;
    for (size_t v = 0; v < da[j].size(); ++v) {
      const double lpa = da[j][v];
      s += std::exp(lpa) * (lpa - static_cast<double>(db[j][v]));
    }
    kl[j] = s;
  }
  return kl;
}

LengthStats response_length_stats(const std::vector<int>& lengths) {
  if (lengths.empty()) throw std::invalid_argument("no lengths given");
  std::vector<int> sorted = lengths;
  std::sort(sorted.begin(), sorted.end());
  LengthStats st;
  double sum = 0.0;
  for (int v : sorted) sum += v;
  st.mean = sum / static_cast<double>(sorted.size());
  const size_t n = sorted.size();
  st.median = (n % 2 == 1) ? sorted[n / 2]
                           : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  const size_t rank = static_cast<size_t>(
      std::ceil(0.9 * static_cast<double>(n)));  // nearest-rank, 1-based
  st.p90 = sorted[std::max<size_t>(rank, 1) - 1];
  st.max = sorted.back();
  return st;
}

nlohmann::json report_to_json(const EvalReport& report) {
  nlohmann::json j;
  j["runs"] = report.runs;
  j["pass_rate"] = report.pass_rate;
  j["mean_reward"] = report.mean_reward;
  j["mean_response_length"] = report.mean_response_length;
  j["word_counts"] = report.word_counts;
  auto queries = nlohmann::json::array();
  for (const auto& qe : report.queries) {
    queries.push_back({{"id", qe.id},
                       {"difficulty", qe.difficulty},
                       {"pass_count", qe.pass_count},
                       {"mean_reward", qe.mean_reward},
                       {"lengths", qe.lengths}});
  }
  j["queries"] = std::move(queries);
  return j;
}

}  // namespace postlab

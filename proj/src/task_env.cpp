// Copyright 2026 The postlab Authors
// SPDX-License-Identifier: Apache-2.0

#include "postlab/task_env.hpp"

#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <memory>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "postlab/rng.hpp"
#include "postlab/tokenizer.hpp"

namespace postlab {

void SupervisedTrace::validate() const {
  if (prompt_tokens.empty()) throw std::invalid_argument("trace: empty prompt");
  if (target_tokens.empty()) throw std::invalid_argument("trace: empty target");
  if (loss_kind.size() != target_tokens.size() ||
      loss_weight.size() != target_tokens.size()) {
    throw std::invalid_argument("trace: per-token annotations must match target length");
  }
  for (float w : loss_weight) {
    if (!(w >= 0.0f)) throw std::invalid_argument("trace: negative loss weight");
  }
}

namespace {

constexpr long long kMaxIntermediate = 999;
constexpr int kMaxOperand = 20;

struct Node {
  long long val = 0;
  char op = 0;  // 0 for leaves
  std::unique_ptr<Node> l, r;
  bool leaf() const { return op == 0; }
};

std::unique_ptr<Node> build_tree(int n_ops, Rng& rng) {
  auto node = std::make_unique<Node>();
  if (n_ops == 0) {
    node->val = 1 + static_cast<long long>(rng.below(kMaxOperand));
    return node;
  }
  const char ops[3] = {'+', '-', '*'};
  node->op = ops[rng.below(3)];
  const int left_ops = static_cast<int>(rng.below(static_cast<uint64_t>(n_ops)));
  node->l = build_tree(left_ops, rng);
  node->r = build_tree(n_ops - 1 - left_ops, rng);
  return node;
}

long long apply_op(char op, long long a, long long b) {
  switch (op) {
    case '+': return a + b;
    case '-': return a - b;
    case '*': return a * b;
  }
  throw std::logic_error("unknown operator");
}

// evaluates and enforces the intermediate-value bound
bool eval_tree(Node* n) {
  if (n->leaf()) return true;
  if (!eval_tree(n->l.get()) || !eval_tree(n->r.get())) return false;
  n->val = apply_op(n->op, n->l->val, n->r->val);
  return std::llabs(n->val) <= kMaxIntermediate;
}

void render_node(const Node* n, bool root, std::string& out) {
  if (n->leaf()) {
    out += std::to_string(n->val);
    return;
  }
  if (!root) out += '(';
  render_node(n->l.get(), false, out);
  out += n->op;
  render_node(n->r.get(), false, out);
  if (!root) out += ')';
}

std::string render_tree(const Node* n) {
  std::string out;
  render_node(n, true, out);
  return out;
}

std::unique_ptr<Node> clone_tree(const Node* n) {
  auto c = std::make_unique<Node>();
  c->val = n->val;
  c->op = n->op;
  if (n->l) c->l = clone_tree(n->l.get());
  if (n->r) c->r = clone_tree(n->r.get());
  return c;
}

// leftmost innermost reducible node (both children leaves)
Node* find_reducible(Node* n) {
  if (n->leaf()) return nullptr;
  if (Node* m = find_reducible(n->l.get())) return m;
  if (Node* m = find_reducible(n->r.get())) return m;
  if (n->l->leaf() && n->r->leaf()) return n;
  return nullptr;
}

struct Reduction {
  std::vector<std::string> steps;   // "2+3=5"
  std::vector<std::string> states;  // expression after each step
  std::vector<long long> values;    // result of each step
};

std::unique_ptr<Node> parse_expression(std::string_view s);

Reduction reduce_chain(const Query& q) {
  auto tree = parse_expression(q.expression);
  Reduction red;
  while (!tree->leaf()) {
    Node* n = find_reducible(tree.get());
    std::string step = std::to_string(n->l->val);
    step += n->op;
    step += std::to_string(n->r->val);
    step += '=';
    step += std::to_string(n->val);
    red.steps.push_back(std::move(step));
    red.values.push_back(n->val);
    n->op = 0;
    n->l.reset();
    n->r.reset();
    red.states.push_back(render_tree(tree.get()));
  }
  return red;
}

// Minimal recursive-descent parser for the fully parenthesised expressions we
// render. Lets traces be rebuilt from dataset records without carrying trees.
struct Parser {
  std::string_view s;
  size_t i = 0;

  char peek() const { return i < s.size() ? s[i] : '\0'; }
  char take() { return s[i++]; }

  std::unique_ptr<Node> parse_atom() {
    auto n = std::make_unique<Node>();
    if (peek() == '(') {
      take();
      n = parse_binary();
      if (take() != ')') throw std::invalid_argument("expected ')'");
      return n;
    }
    bool neg = false;
    if (peek() == '-') {
      neg = true;
      take();
    }
    if (!std::isdigit(static_cast<unsigned char>(peek())))
      throw std::invalid_argument("expected a number");
    long long v = 0;
    while (std::isdigit(static_cast<unsigned char>(peek()))) v = v * 10 + (take() - '0');
    n->val = neg ? -v : v;
    return n;
  }

  std::unique_ptr<Node> parse_binary() {
    auto lhs = parse_atom();
    while (peek() == '+' || peek() == '-' || peek() == '*') {
      const char op = take();
      auto rhs = parse_atom();
      auto parent = std::make_unique<Node>();
      parent->op = op;
      parent->l = std::move(lhs);
      parent->r = std::move(rhs);
      lhs = std::move(parent);
    }
    return lhs;
  }
};

std::unique_ptr<Node> parse_expression(std::string_view s) {
  Parser p{s};
  auto n = p.parse_binary();
  if (p.i != s.size()) throw std::invalid_argument("trailing characters in expression");
  if (!eval_tree(n.get()))
    throw std::invalid_argument("expression exceeds the intermediate bound");
  return n;
}

size_t count_occurrences(std::string_view s, std::string_view needle) {
  size_t n = 0;
  size_t pos = s.find(needle);
  while (pos != std::string_view::npos) {
    ++n;
    pos = s.find(needle, pos + needle.size());
  }
  return n;
}

}  // namespace

Query generate_query(int difficulty, uint64_t seed) {
  if (difficulty < 1 || difficulty > 5)
    throw std::invalid_argument("difficulty must be in 1..5");
  Rng rng(mix_seed(seed, 0x7a5c));
  Query q;
  q.difficulty = difficulty;
  const int n_ops = difficulty + 1;
  for (int attempt = 0; attempt < 100000; ++attempt) {
    auto tree = build_tree(n_ops, rng);
    if (!eval_tree(tree.get())) continue;
    q.expression = render_tree(tree.get());
    q.answer = tree->val;
    char buf[32];
    std::snprintf(buf, sizeof buf, "d%d-%016llx", difficulty,
                  static_cast<unsigned long long>(seed));
    q.id = buf;
    q.prompt_tokens = render_prompt(q);
    return q;
  }
  throw std::runtime_error("could not generate a bounded expression");
}

std::string prompt_text(const Query& q) {
  std::string out = "compute: ";
  out += q.expression;
  out += '\n';
  out += kReasoningInstruction;
  return out;
}

std::vector<int> render_prompt(const Query& q) {
  return Tokenizer::instance().encode(prompt_text(q));
}

std::optional<long long> extract_answer(std::string_view response) {
  const std::string_view marker = "\\boxed{";
  const size_t open = response.rfind(marker);
  if (open == std::string_view::npos) return std::nullopt;
  const size_t start = open + marker.size();
  const size_t close = response.find('}', start);
  if (close == std::string_view::npos) return std::nullopt;
  std::string_view inner = response.substr(start, close - start);
  while (!inner.empty() && inner.front() == ' ') inner.remove_prefix(1);
  while (!inner.empty() && inner.back() == ' ') inner.remove_suffix(1);
  if (inner.empty()) return std::nullopt;
  size_t i = 0;
  bool neg = false;
  if (inner[i] == '-') {
    neg = true;
    ++i;
  }
  if (i == inner.size()) return std::nullopt;
  long long v = 0;
  for (; i < inner.size(); ++i) {
    if (!std::isdigit(static_cast<unsigned char>(inner[i]))) return std::nullopt;
    if (v > (std::numeric_limits<long long>::max() - 9) / 10) return std::nullopt;
    v = v * 10 + (inner[i] - '0');
  }
  return neg ? -v : v;
}

bool check_format(std::string_view response) {
  if (count_occurrences(response, "<think>") != 1) return false;
  if (count_occurrences(response, "</think>") != 1) return false;
  const size_t open = response.find("<think>");
  const size_t close = response.find("</think>");
  if (close < open) return false;
  return response.find("\\boxed{", close + 8) != std::string_view::npos;
}

RewardBreakdown reward(const Query& q, std::string_view response) {
  RewardBreakdown rb;
  rb.format = check_format(response) ? 0.1 : 0.0;
  const auto ans = extract_answer(response);
  rb.correct = ans.has_value() && *ans == q.answer;
  rb.accuracy = rb.correct ? 0.9 : 0.0;
  rb.total = rb.accuracy + rb.format;
  return rb;
}

std::string_view trace_style_name(TraceStyle s) {
  switch (s) {
    case TraceStyle::kConcise: return "concise";
    case TraceStyle::kLongCotGood: return "long_cot_good";
    case TraceStyle::kLongCotVerbose: return "long_cot_verbose";
  }
  throw std::logic_error("unknown trace style");
}

TraceStyle trace_style_from_name(std::string_view s) {
  if (s == "concise") return TraceStyle::kConcise;
  if (s == "long_cot_good") return TraceStyle::kLongCotGood;
  if (s == "long_cot_verbose") return TraceStyle::kLongCotVerbose;
  throw std::invalid_argument("unknown trace style: " + std::string(s));
}

std::vector<std::string> reduction_steps(const Query& q) {
  return reduce_chain(q).steps;
}

namespace {

std::string concise_text(const Query& q, const Reduction& red) {
  std::string t = "<think>";
  for (size_t k = 0; k < red.steps.size(); ++k) {
    if (k) t += '\n';
    t += red.steps[k];
  }
  t += "</think>\n\\boxed{";
  t += std::to_string(q.answer);
  t += '}';
  return t;
}

// Body of the structured trace. Word counts per trace are deliberately
// graded: check > wait > mistake > however > alternative, strictly, so that
// output word statistics of a model trained on these traces carry the same
// ordering.
std::string good_body(const Query& q, const Reduction& red) {
  const std::string ans = std::to_string(q.answer);
  std::string t = "<think>\n";
  t += "first, i reduce " + q.expression + " step by step.\n";
  for (size_t k = 0; k < red.steps.size(); ++k) {
    t += "step " + std::to_string(k + 1) + ": " + red.steps[k] + ". now: " +
         red.states[k] + ".\n";
  }
  t += "next, i verify and check the chain.\n";
  for (size_t k = 0; k < red.steps.size(); ++k) {
    t += "check step " + std::to_string(k + 1) + ": the value is " +
         std::to_string(red.values[k]) + ". ok.\n";
  }
  t += "wait, maybe a mistake hides. hmm.\n";
  t += "wait, step 1 still gives " + std::to_string(red.values[0]) +
       ". no mistake.\n";
  t += "wait, the last value is still " + ans + ".\n";
  t += "wait, all steps agree.\n";
  t += "however, an alternative grouping agrees.\n";
  t += "however, the total stays " + ans + ".\n";
  return t;
}

std::string good_tail(const Query& q) {
  const std::string ans = std::to_string(q.answer);
  std::string t;
  t += "check the final value: " + ans + ".\n";
  t += "check done. no mistake found.\n";
  t += "so the answer is " + ans + ".\n";
  t += "</think>\n\\boxed{" + ans + "}";
  return t;
}

std::string good_text(const Query& q, const Reduction& red) {
  return good_body(q, red) + good_tail(q);
}

std::string verbose_text(const Query& q, const Reduction& red) {
  const auto& tok = Tokenizer::instance();
  const size_t good_len = tok.encode(good_text(q, red)).size();
  const size_t target_len = 3 * good_len + good_len / 10;  // 3.1x

  std::string body = good_body(q, red);
  const std::string tail = good_tail(q);
  for (int pass = 1;; ++pass) {
    if (tok.encode(body + tail).size() >= target_len) break;
    body += "verify pass " + std::to_string(pass) +
            ": i check the whole chain once more from the start.\n";
    for (size_t k = 0; k < red.steps.size(); ++k) {
      body += "check step " + std::to_string(k + 1) + " again: " + red.steps[k] +
              ". still correct.\n";
    }
    body += "wait, no mistake appears in pass " + std::to_string(pass) + ".\n";
  }
  return body + tail;
}

std::string oracle_trace_text(const Query& q, TraceStyle style) {
  const Reduction red = reduce_chain(q);
  switch (style) {
    case TraceStyle::kConcise: return concise_text(q, red);
    case TraceStyle::kLongCotGood: return good_text(q, red);
    case TraceStyle::kLongCotVerbose: return verbose_text(q, red);
  }
  throw std::logic_error("unknown trace style");
}

SupervisedTrace make_trace(const Query& q, const std::string& text,
                           const std::string& source) {
  const auto& tok = Tokenizer::instance();
  SupervisedTrace tr;
  tr.query_id = q.id;
  tr.prompt_tokens = q.prompt_tokens.empty() ? render_prompt(q) : q.prompt_tokens;
  tr.target_tokens = tok.encode(text);
  tr.target_tokens.push_back(tok.eos_id());
  tr.loss_kind.assign(tr.target_tokens.size(), LossKind::kSft);
  tr.loss_weight.assign(tr.target_tokens.size(), 1.0f);
  tr.source = source;
  tr.validate();
  return tr;
}

}  // namespace

SupervisedTrace oracle_trace(const Query& q, TraceStyle style) {
  return make_trace(q, oracle_trace_text(q, style),
                    "oracle:" + std::string(trace_style_name(style)));
}

void write_dataset(const std::string& path, const std::vector<DatasetRecord>& recs) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  for (const auto& r : recs) {
    nlohmann::json j{{"id", r.id},          {"expression", r.expression},
                     {"answer", r.answer},  {"difficulty", r.difficulty},
                     {"prompt", r.prompt},  {"trace", r.trace},
                     {"style", r.style}};
    out << j.dump() << "\n";
  }
  if (!out) throw std::runtime_error("failed writing dataset: " + path);
}

std::vector<DatasetRecord> read_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset: " + path);
  std::vector<DatasetRecord> recs;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line);
    DatasetRecord r;
    r.id = j.at("id").get<std::string>();
    r.expression = j.at("expression").get<std::string>();
    r.answer = j.at("answer").get<long long>();
    r.difficulty = j.at("difficulty").get<int>();
    r.prompt = j.at("prompt").get<std::string>();
    r.trace = j.at("trace").get<std::string>();
    r.style = j.at("style").get<std::string>();
    recs.push_back(std::move(r));
  }
  return recs;
}

Query query_from_record(const DatasetRecord& rec) {
  Query q;
  q.id = rec.id;
  q.expression = rec.expression;
  q.answer = rec.answer;
  q.difficulty = rec.difficulty;
  q.prompt_tokens = Tokenizer::instance().encode(rec.prompt);
  return q;
}

SupervisedTrace trace_from_record(const DatasetRecord& rec) {
  Query q = query_from_record(rec);
  return make_trace(q, rec.trace, "dataset:" + rec.style);
}

DatasetRecord record_from_query(const Query& q, TraceStyle style) {
  DatasetRecord r;
  r.id = q.id;
  r.expression = q.expression;
  r.answer = q.answer;
  r.difficulty = q.difficulty;
  r.prompt = prompt_text(q);
  r.trace = oracle_trace_text(q, style);
  r.style = std::string(trace_style_name(style));
  return r;
}

std::vector<Query> make_query_pool(const std::vector<int>& difficulties, int count,
                                   uint64_t seed) {
  if (difficulties.empty()) throw std::invalid_argument("no difficulties given");
  std::vector<Query> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) {
    const int d = difficulties[i % difficulties.size()];
    out.push_back(generate_query(d, mix_seed(seed, static_cast<uint64_t>(i))));
  }
  return out;
}

}  // namespace postlab

// Copyright 2026 The postlab Authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <span>
#include <vector>

#include "postlab/checkpoint.hpp"
#include "postlab/policy.hpp"
#include "postlab/rng.hpp"

using namespace postlab;

namespace {

PolicyConfig tiny_config() {
  PolicyConfig cfg;
  cfg.vocab_size = 11;
  cfg.context_len = 24;
  cfg.embed_dim = 8;
  cfg.num_layers = 2;
  cfg.num_heads = 2;
  cfg.init_seed = 7;
  return cfg;
}

std::vector<int> random_tokens(Rng& rng, int n, int vocab) {
  std::vector<int> t(n);
  for (int& v : t) v = static_cast<int>(rng.below(uint64_t(vocab)));
  return t;
}

// Reference loss the gradient is checked against: sum_j w_j * (-log p_j),
// recomputed from scratch so finite differences see the whole forward pass.
double weighted_nll(const PolicyT<double>& policy, const ParameterSetT<double>& params,
                    std::span<const int> prompt, std::span<const int> response,
                    std::span<const double> weights) {
  const auto lps = policy.response_log_probs(params, prompt, response);
  double loss = 0.0;
  for (size_t j = 0; j < lps.size(); ++j) loss -= weights[j] * lps[j];
  return loss;
}

}  // namespace

TEST_CASE("config validation rejects malformed shapes") {
  PolicyConfig cfg = tiny_config();
  CHECK_NOTHROW(cfg.validate());
  cfg.vocab_size = 1;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = tiny_config();
  cfg.embed_dim = 9;  // not divisible by num_heads = 2
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = tiny_config();
  cfg.num_layers = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = tiny_config();
  cfg.context_len = 1;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("decoding config validation") {
  DecodingConfig dec;
  CHECK_NOTHROW(dec.validate());
  dec.temperature = 0.0;
  CHECK_THROWS_AS(dec.validate(), std::invalid_argument);
  dec.greedy = true;  // greedy ignores temperature
  CHECK_NOTHROW(dec.validate());
  dec = DecodingConfig{};
  dec.top_p = 0.0;
  CHECK_THROWS_AS(dec.validate(), std::invalid_argument);
  dec = DecodingConfig{};
  dec.top_k = -1;
  CHECK_THROWS_AS(dec.validate(), std::invalid_argument);
  dec = DecodingConfig{};
  dec.max_new_tokens = 0;
  CHECK_THROWS_AS(dec.validate(), std::invalid_argument);
}

TEST_CASE("init is deterministic and follows the declared layout") {
  const PolicyConfig cfg = tiny_config();
  Policy policy(cfg);
  const ParameterSet a = policy.init_params();
  const ParameterSet b = policy.init_params();
  REQUIRE(a.same_structure(b));
  for (size_t i = 0; i < a.size(); ++i) CHECK(a[i].data == b[i].data);

  PolicyConfig other = cfg;
  other.init_seed = 8;
  const ParameterSet c = Policy(other).init_params();
  CHECK(a.at("tok_emb").data != c.at("tok_emb").data);

  // layout: embeddings, per-layer blocks, final norm, untied readout
  CHECK(a.has("tok_emb"));
  CHECK(a.has("pos_emb"));
  CHECK(a.has("layers.0.ln1.g"));
  CHECK(a.has("layers.1.mlp.w2"));
  CHECK(a.has("ln_f.g"));
  CHECK(a.has("head.w"));
  CHECK_FALSE(a.has("head.b"));
  CHECK(a.at("tok_emb").shape == std::vector<int64_t>{11, 8});
  CHECK(a.at("pos_emb").shape == std::vector<int64_t>{24, 8});
  CHECK(a.at("layers.0.attn.wqkv").shape == std::vector<int64_t>{24, 8});
  CHECK(a.at("layers.0.mlp.w1").shape == std::vector<int64_t>{32, 8});
  CHECK(a.at("head.w").shape == std::vector<int64_t>{11, 8});

  const int E = cfg.embed_dim, V = cfg.vocab_size, C = cfg.context_len;
  const int64_t per_layer = 2 * E            // ln1
                            + 3 * E * E + 3 * E  // qkv
                            + E * E + E          // attn out
                            + 2 * E              // ln2
                            + 4 * E * E + 4 * E  // mlp in
                            + 4 * E * E + E;     // mlp out
  const int64_t expect =
      int64_t(V) * E + int64_t(C) * E + cfg.num_layers * per_layer + 2 * E + int64_t(V) * E;
  CHECK(a.total_params() == expect);

  // norm gains start at one, every bias at zero
  for (float v : a.at("layers.0.ln1.g").data) CHECK(v == 1.0f);
  for (float v : a.at("ln_f.b").data) CHECK(v == 0.0f);
  for (float v : a.at("layers.1.attn.bqkv").data) CHECK(v == 0.0f);

  // weights are draws from N(0, 0.02)
  double sum = 0.0, sq = 0.0;
  const auto& emb = a.at("tok_emb").data;
  for (float v : emb) {
    sum += v;
    sq += double(v) * v;
  }
  const double mean = sum / emb.size();
  const double sd = std::sqrt(sq / emb.size() - mean * mean);
  CHECK(std::abs(mean) < 0.01);
  CHECK(sd > 0.01);
  CHECK(sd < 0.03);
}

TEST_CASE("log distributions normalise and agree with per-token log-probs") {
  const PolicyConfig cfg = tiny_config();
  Policy policy(cfg);
  const ParameterSet params = policy.init_params();
  Rng rng(3);
  const auto prompt = random_tokens(rng, 6, cfg.vocab_size);
  const auto response = random_tokens(rng, 9, cfg.vocab_size);

  const auto dists = policy.response_log_dists(params, prompt, response);
  const auto lps = policy.response_log_probs(params, prompt, response);
  REQUIRE(dists.size() == response.size());
  REQUIRE(lps.size() == response.size());
  for (size_t j = 0; j < dists.size(); ++j) {
    double mass = 0.0;
    for (float lp : dists[j]) {
      CHECK(lp <= 0.0f);
      mass += std::exp(double(lp));
    }
    CHECK(mass == doctest::Approx(1.0).epsilon(1e-4));
    CHECK(double(lps[j]) ==
          doctest::Approx(double(dists[j][size_t(response[j])])).epsilon(1e-4));
  }

  // score() runs the cache-retaining forward; same numbers expected
  const auto scored = policy.score(params, prompt, response);
  REQUIRE(scored.log_probs.size() == response.size());
  for (size_t j = 0; j < lps.size(); ++j)
    CHECK(std::abs(double(scored.log_probs[j]) - double(lps[j])) < 1e-3);

  // pure function of its inputs
  const auto lps2 = policy.response_log_probs(params, prompt, response);
  CHECK(lps == lps2);

  // context overflow is refused, not silently clipped
  const auto long_resp = random_tokens(rng, cfg.context_len, cfg.vocab_size);
  CHECK_THROWS_AS(policy.response_log_probs(params, prompt, long_resp),
                  std::out_of_range);
}

TEST_CASE("backward matches central finite differences on every parameter") {
  PolicyConfig cfg = tiny_config();
  PolicyT<double> policy(cfg);
  const ParameterSetT<double> params = Policy(cfg).init_params().cast<double>();

  Rng rng(11);
  const auto prompt = random_tokens(rng, 4, cfg.vocab_size);
  const auto response = random_tokens(rng, 7, cfg.vocab_size);
  std::vector<double> weights(response.size());
  for (auto& w : weights) w = 2.0 * rng.uniform() - 1.0;
  weights[2] = 0.0;  // a masked position must not leak gradient

  const auto scored = policy.score(params, prompt, response);
  const ParameterSetT<double> grad = policy.backward(scored, params, weights);
  REQUIRE(grad.same_structure(params));

  const double h = 1e-5;
  int64_t checked = 0;
  for (size_t ti = 0; ti < params.size(); ++ti) {
    for (size_t j = 0; j < params[ti].data.size(); ++j) {
      ParameterSetT<double> probe = params;
      probe[ti].data[j] += h;
      const double up = weighted_nll(policy, probe, prompt, response, weights);
      probe[ti].data[j] -= 2 * h;
      const double dn = weighted_nll(policy, probe, prompt, response, weights);
      const double fd = (up - dn) / (2 * h);
      const double an = grad[ti].data[j];
      const double tol = 1e-6 + 1e-4 * std::max(std::abs(fd), std::abs(an));
      if (std::abs(fd - an) > tol) {
        CAPTURE(params[ti].name);
        CAPTURE(j);
        CAPTURE(fd);
        CAPTURE(an);
        REQUIRE(std::abs(fd - an) <= tol);
      }
      ++checked;
    }
  }
  CHECK(checked == params.total_params());
}

TEST_CASE("gradient of the last response token flows nowhere else") {
  // only weights[last] nonzero: positions after it are never inputs, so the
  // position row of pos_emb past the loss position must stay zero
  PolicyConfig cfg = tiny_config();
  PolicyT<double> policy(cfg);
  const auto params = Policy(cfg).init_params().cast<double>();
  Rng rng(5);
  const auto prompt = random_tokens(rng, 3, cfg.vocab_size);
  const auto response = random_tokens(rng, 5, cfg.vocab_size);
  std::vector<double> weights(response.size(), 0.0);
  weights[0] = 1.0;  // loss only at the first response token

  const auto scored = policy.score(params, prompt, response);
  const auto grad = policy.backward(scored, params, weights);
  const auto& gpos = grad.at("pos_emb");
  // inputs 0..prompt-1 feed the first response prediction; later rows untouched
  for (int64_t r = int64_t(prompt.size()); r < gpos.rows(); ++r) {
    for (int64_t c = 0; c < gpos.cols(); ++c) {
      CHECK(gpos.row(r)[c] == 0.0);
    }
  }
}

TEST_CASE("sampling is deterministic, bounded and consistent") {
  PolicyConfig cfg = tiny_config();
  cfg.context_len = 48;
  Policy policy(cfg);
  const ParameterSet params = policy.init_params();
  const std::vector<int> prompt{1, 4, 2, 9};

  DecodingConfig dec;
  dec.temperature = 1.0;
  dec.top_p = 1.0;
  dec.top_k = 0;
  dec.max_new_tokens = 12;
  dec.seed = 99;

  const SampleResult a = policy.sample(params, prompt, dec);
  const SampleResult b = policy.sample(params, prompt, dec);
  CHECK(a.tokens == b.tokens);
  CHECK(a.log_probs == b.log_probs);
  REQUIRE(a.tokens.size() == a.log_probs.size());
  CHECK(a.tokens.size() <= size_t(dec.max_new_tokens));
  for (int t : a.tokens) {
    CHECK(t >= 0);
    CHECK(t < cfg.vocab_size);
  }
  if (!a.truncated) {
    CHECK(a.tokens.back() == 0);
  } else {
    CHECK(a.tokens.size() == size_t(dec.max_new_tokens));
  }

  dec.seed = 100;
  bool any_diff = false;
  for (int s = 0; s < 8 && !any_diff; ++s) {
    DecodingConfig d2 = dec;
    d2.seed = 100 + uint64_t(s);
    any_diff = policy.sample(params, prompt, d2).tokens != a.tokens;
  }
  CHECK(any_diff);  // different seeds explore different continuations

  // greedy decoding ignores the seed entirely
  DecodingConfig g;
  g.greedy = true;
  g.max_new_tokens = 12;
  g.seed = 1;
  const SampleResult g1 = policy.sample(params, prompt, g);
  g.seed = 2;
  const SampleResult g2 = policy.sample(params, prompt, g);
  CHECK(g1.tokens == g2.tokens);

  // reported log-probs are the raw (untempered) scores of the chosen tokens
  if (!a.tokens.empty()) {
    std::vector<int> resp(a.tokens.begin(), a.tokens.end());
    const auto lps = policy.response_log_probs(params, prompt, resp);
    for (size_t j = 0; j < resp.size(); ++j)
      CHECK(std::abs(double(lps[j]) - double(a.log_probs[j])) < 1e-3);
  }
}

TEST_CASE("fresh init yields a near-uniform next-token distribution") {
  PolicyConfig cfg;
  cfg.vocab_size = 64;
  cfg.context_len = 64;
  cfg.embed_dim = 32;
  cfg.num_layers = 2;
  cfg.num_heads = 2;
  cfg.init_seed = 123;
  Policy policy(cfg);
  const ParameterSet params = policy.init_params();
  Rng rng(17);
  const auto prompt = random_tokens(rng, 8, cfg.vocab_size);
  const auto response = random_tokens(rng, 16, cfg.vocab_size);
  const auto scored = policy.score(params, prompt, response);
  const double h = scored.entropy();
  CHECK(h > 3.9);                     // close to uniform
  CHECK(h <= std::log(64.0) + 1e-6);  // never above the uniform bound
}

TEST_CASE("checkpoints round-trip bit-exactly") {
  const PolicyConfig cfg = tiny_config();
  Policy policy(cfg);
  ParameterSet params = policy.init_params();
  params.at("head.w").data[3] = -0.125f;

  const auto dir = std::filesystem::temp_directory_path() / "postlab-test-ckpt";
  std::filesystem::create_directories(dir);
  const std::string path = (dir / "model.ckpt").string();
  const nlohmann::json meta{{"phase", "unit-test"}, {"step", 42}};
  save_checkpoint(path, cfg, params, meta);

  const Checkpoint ck = load_checkpoint(path);
  CHECK(ck.config == cfg);
  CHECK(ck.meta.at("phase") == "unit-test");
  CHECK(ck.meta.at("step") == 42);
  REQUIRE(ck.params.same_structure(params));
  for (size_t i = 0; i < params.size(); ++i) {
    REQUIRE(ck.params[i].data.size() == params[i].data.size());
    CHECK(std::memcmp(ck.params[i].data.data(), params[i].data.data(),
                      params[i].data.size() * sizeof(float)) == 0);
  }

  // saving the loaded set again produces identical bytes
  const std::string path2 = (dir / "model2.ckpt").string();
  save_checkpoint(path2, ck.config, ck.params, ck.meta);
  std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
  std::string b1((std::istreambuf_iterator<char>(f1)), {});
  std::string b2((std::istreambuf_iterator<char>(f2)), {});
  CHECK(b1 == b2);

  CHECK_THROWS(load_checkpoint((dir / "missing.ckpt").string()));
  std::filesystem::remove_all(dir);
}

TEST_CASE("parameter set algebra") {
  const PolicyConfig cfg = tiny_config();
  Policy policy(cfg);
  ParameterSet a = policy.init_params();
  ParameterSet b = a;
  b.scale(2.0f);
  CHECK(b.at("tok_emb").data[0] == doctest::Approx(2.0f * a.at("tok_emb").data[0]));
  b.axpy(-2.0f, a);
  CHECK(b.l2_norm() == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(a.all_finite());
  ParameterSet c = a;
  c.at("head.w").data[0] = std::numeric_limits<float>::quiet_NaN();
  CHECK_FALSE(c.all_finite());

  // double round trip preserves float values exactly
  const ParameterSet back = a.cast<double>().cast<float>();
  for (size_t i = 0; i < a.size(); ++i) CHECK(back[i].data == a[i].data);
}

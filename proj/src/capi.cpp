// Copyright 2026 The postlab Authors
// SPDX-License-Identifier: Apache-2.0

#include "postlab/postlab_c.h"

#include <cstdlib>
#include <cstring>
#include <exception>
#include <stdexcept>
#include <string>

#include "postlab/checkpoint.hpp"
#include "postlab/config.hpp"
#include "postlab/experiment.hpp"
#include "postlab/plots.hpp"
#include "postlab/policy.hpp"
#include "postlab/rng.hpp"
#include "postlab/tokenizer.hpp"

using namespace postlab;

struct plab_policy {
  PolicyConfig config;
  ParameterSet params;
};

namespace {

thread_local std::string t_error;

char* dup_string(const std::string& s) {
  char* p = static_cast<char*>(std::malloc(s.size() + 1));
  if (p) std::memcpy(p, s.c_str(), s.size() + 1);
  return p;
}

plab_rc fail(plab_rc rc, const char* what) {
  t_error = what;
  return rc;
}

template <typename Fn>
plab_rc guarded(Fn&& fn) {
  try {
    fn();
    return PLAB_OK;
  } catch (const std::invalid_argument& e) {
    return fail(PLAB_ERR_INVALID_ARGUMENT, e.what());
  } catch (const std::exception& e) {
    return fail(PLAB_ERR_RUNTIME, e.what());
  } catch (...) {
    return fail(PLAB_ERR_INTERNAL, "unknown error");
  }
}

plab_rc require(bool ok, const char* what) {
  return ok ? PLAB_OK : fail(PLAB_ERR_INVALID_ARGUMENT, what);
}

PolicyConfig config_from_text(const std::string& text) {
  Config cfg = Config::parse_text(text);
  PolicyConfig pc;
  pc.vocab_size = static_cast<int>(cfg.num_or("model.vocab", Tokenizer::instance().vocab_size()));
  pc.context_len = static_cast<int>(cfg.num_or("model.context", 512));
  pc.embed_dim = static_cast<int>(cfg.num_or("model.embed", 64));
  pc.num_layers = static_cast<int>(cfg.num_or("model.layers", 2));
  pc.num_heads = static_cast<int>(cfg.num_or("model.heads", 2));
  pc.init_seed = cfg.seed_or("model.init_seed", cfg.seed_or("seed", 1));
  pc.validate();
  return pc;
}

}  // namespace

extern "C" {

const char* plab_version(void) { return "0.1.0"; }

const char* plab_last_error(void) { return t_error.c_str(); }

void plab_free(char* p) { std::free(p); }

plab_rc plab_policy_create(const char* config_text, plab_policy** out) {
  if (plab_rc rc = require(config_text && out, "null argument")) return rc;
  return guarded([&] {
    PolicyConfig pc = config_from_text(config_text);
    auto* p = new plab_policy{pc, Policy(pc).init_params()};
    *out = p;
  });
}

plab_rc plab_policy_open(const char* checkpoint_path, plab_policy** out) {
  if (plab_rc rc = require(checkpoint_path && out, "null argument")) return rc;
  return guarded([&] {
    Checkpoint ck = load_checkpoint(checkpoint_path);
    *out = new plab_policy{ck.config, std::move(ck.params)};
  });
}

plab_rc plab_policy_save(const plab_policy* p, const char* checkpoint_path) {
  if (plab_rc rc = require(p && checkpoint_path, "null argument")) return rc;
  return guarded([&] { save_checkpoint(checkpoint_path, p->config, p->params); });
}

plab_rc plab_policy_param_count(const plab_policy* p, uint64_t* out) {
  if (plab_rc rc = require(p && out, "null argument")) return rc;
  *out = static_cast<uint64_t>(p->params.total_params());
  return PLAB_OK;
}

void plab_policy_close(plab_policy* p) { delete p; }

plab_rc plab_policy_sample(const plab_policy* p, const char* prompt,
                           const char* decode_config_text, char** out_text) {
  if (plab_rc rc = require(p && prompt && out_text, "null argument")) return rc;
  return guarded([&] {
    Config cfg = Config::parse_text(decode_config_text ? decode_config_text : "");
    DecodingConfig dec;
    dec.temperature = cfg.real_or("decode.temperature", dec.temperature);
    dec.top_p = cfg.real_or("decode.top_p", dec.top_p);
    dec.top_k = static_cast<int>(cfg.num_or("decode.top_k", dec.top_k));
    dec.max_new_tokens = static_cast<int>(cfg.num_or("decode.max_new", dec.max_new_tokens));
    dec.greedy = cfg.flag_or("decode.greedy", false);
    dec.seed = cfg.seed_or("decode.seed", 0);
    dec.validate();

    const Tokenizer& tok = Tokenizer::instance();
    std::vector<int> prompt_tokens = tok.encode(to_lower_ascii(prompt));
    Policy policy(p->config);
    SampleResult res = policy.sample(p->params, prompt_tokens, dec);
    *out_text = dup_string(tok.decode(res.tokens));
    if (!*out_text) throw std::runtime_error("out of memory");
  });
}

plab_rc plab_stage_run(const char* kind, const char* config_text, const char* out_dir,
                       char** summary_json) {
  if (plab_rc rc = require(kind && config_text && out_dir, "null argument")) return rc;
  return guarded([&] {
    Config cfg = Config::parse_text(config_text);
    nlohmann::json summary = run_stage(kind, cfg, out_dir);
    if (summary_json) {
      *summary_json = dup_string(summary.dump(2));
      if (!*summary_json) throw std::runtime_error("out of memory");
    }
  });
}

plab_rc plab_experiment_validate(const char* spec_text) {
  if (plab_rc rc = require(spec_text != nullptr, "null argument")) return rc;
  return guarded([&] { validate_experiment(Config::parse_text(spec_text)); });
}

plab_rc plab_experiment_run(const char* spec_path, const char* out_dir,
                            char** result_json) {
  if (plab_rc rc = require(spec_path && out_dir, "null argument")) return rc;
  return guarded([&] {
    Config spec = Config::parse_file(spec_path);
    nlohmann::json result = run_experiment(spec, out_dir);
    if (result_json) {
      *result_json = dup_string(result.dump(2));
      if (!*result_json) throw std::runtime_error("out of memory");
    }
  });
}

plab_rc plab_recipe_names(char** out_csv) {
  if (plab_rc rc = require(out_csv != nullptr, "null argument")) return rc;
  return guarded([&] {
    std::string joined;
    for (const std::string& name : recipe_names()) {
      if (!joined.empty()) joined += ",";
      joined += name;
    }
    *out_csv = dup_string(joined);
    if (!*out_csv) throw std::runtime_error("out of memory");
  });
}

plab_rc plab_recipe_spec(const char* name, uint64_t seed, char** out_text) {
  if (plab_rc rc = require(name && out_text, "null argument")) return rc;
  return guarded([&] {
    *out_text = dup_string(recipe_spec(name, seed));
    if (!*out_text) throw std::runtime_error("out of memory");
  });
}

plab_rc plab_plots_emit(const char* root_dir, char** written_csv) {
  if (plab_rc rc = require(root_dir != nullptr, "null argument")) return rc;
  return guarded([&] {
    std::vector<std::string> written = emit_plots(root_dir);
    if (written_csv) {
      std::string joined;
      for (const std::string& w : written) {
        if (!joined.empty()) joined += ",";
        joined += w;
      }
      *written_csv = dup_string(joined);
      if (!*written_csv) throw std::runtime_error("out of memory");
    }
  });
}

}  // extern "C"

/* Copyright 2026 The postlab Authors
 * SPDX-License-Identifier: Apache-2.0
 *
 * C interface of the postlab shared library. All entry points return a
 * plab_rc; on failure plab_last_error() describes what went wrong (the
 * buffer is thread-local and valid until the next failing call on the same
 * thread). Strings returned through char** out-parameters are heap
 * allocations owned by the caller; release them with plab_free().
 *
 * Configuration strings use the same flat "key = value" text as experiment
 * spec files, one pair per line, '#' for comments.
 */

#ifndef POSTLAB_POSTLAB_C_H_
#define POSTLAB_POSTLAB_C_H_

#include <stdint.h>

#if defined(_WIN32)
#define PLAB_API __declspec(dllexport)
#else
#define PLAB_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum plab_rc {
  PLAB_OK = 0,
  PLAB_ERR_INVALID_ARGUMENT = 1, /* bad input: config, enum, shape, text */
  PLAB_ERR_RUNTIME = 2,          /* missing files, failed runs, bad state */
  PLAB_ERR_INTERNAL = 3          /* anything unexpected */
} plab_rc;

PLAB_API const char* plab_version(void);
PLAB_API const char* plab_last_error(void);
PLAB_API void plab_free(char* p);

/* ---- policies (checkpoint handles) ---------------------------------- */

typedef struct plab_policy plab_policy; /* opaque: model config + weights */

/* Fresh random weights from "model.*" keys plus optional "seed". */
PLAB_API plab_rc plab_policy_create(const char* config_text, plab_policy** out);
PLAB_API plab_rc plab_policy_open(const char* checkpoint_path, plab_policy** out);
PLAB_API plab_rc plab_policy_save(const plab_policy* p, const char* checkpoint_path);
PLAB_API plab_rc plab_policy_param_count(const plab_policy* p, uint64_t* out);
PLAB_API void plab_policy_close(plab_policy* p);

/* Completion for a lowercase text prompt under "decode.*" keys
 * (decode.temperature, decode.top_p, decode.top_k, decode.max_new,
 * decode.greedy, decode.seed). */
PLAB_API plab_rc plab_policy_sample(const plab_policy* p, const char* prompt,
                                    const char* decode_config_text, char** out_text);

/* ---- pipeline stages and experiments --------------------------------- */

/* kind is one of: dataset, sft, rl, hybrid, distill, merge, eval, analyze.
 * Artifacts are written under out_dir; *summary_json (optional) receives a
 * JSON summary of what was produced. */
PLAB_API plab_rc plab_stage_run(const char* kind, const char* config_text,
                                const char* out_dir, char** summary_json);

/* Structural validation of a spec without running anything. */
PLAB_API plab_rc plab_experiment_validate(const char* spec_text);

/* Runs every stage of the spec file under out_dir (stage-<i>-<kind>/
 * directories, spec-as-run.cfg, stages.json, manifest.json; a FAILED marker
 * is left on error). *result_json (optional) receives the stage summaries. */
PLAB_API plab_rc plab_experiment_run(const char* spec_path, const char* out_dir,
                                     char** result_json);

/* ---- built-in recipes ------------------------------------------------- */

PLAB_API plab_rc plab_recipe_names(char** out_csv);
PLAB_API plab_rc plab_recipe_spec(const char* name, uint64_t seed, char** out_text);

/* ---- stored-artifact plots -------------------------------------------- */

/* Renders SVG + TSV plots for every metrics.jsonl / sweep-eval.tsv under
 * root_dir. *written_csv (optional) receives the comma-joined relative paths
 * of the files produced. Deterministic: same tree, same bytes. */
PLAB_API plab_rc plab_plots_emit(const char* root_dir, char** written_csv);

#ifdef __cplusplus
}
#endif

#endif /* POSTLAB_POSTLAB_C_H_ */

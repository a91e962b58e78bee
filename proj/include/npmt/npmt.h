// Copyright 2026 The npmt Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

/* C interface to the npmt toolkit.
 *
 * Every function returns an npmt_status; on failure npmt_last_error() holds a
 * message for the calling thread.  Strings returned through char** are
 * heap-allocated and must be released with npmt_free_string().
 */
#ifndef NPMT_NPMT_H_
#define NPMT_NPMT_H_

#include <stddef.h>
#include <stdint.h>

#if defined(NPMT_BUILDING_LIBRARY)
#define NPMT_API __attribute__((visibility("default")))
#else
#define NPMT_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum npmt_status {
  NPMT_OK = 0,
  NPMT_ERR_DIMENSION = 1,
  NPMT_ERR_OUT_OF_VOCAB = 2,
  NPMT_ERR_EMPTY_INPUT = 3,
  NPMT_ERR_PARSE = 4,
  NPMT_ERR_CONFIG = 5,
  NPMT_ERR_NUMERIC = 6,
  NPMT_ERR_IO = 7,
  NPMT_ERR_SIZE = 8,
  NPMT_ERR_UNDEFINED = 9,
  NPMT_ERR_INVALID_ARGUMENT = 10,
  NPMT_ERR_INTERNAL = 11
} npmt_status;

typedef struct npmt_model npmt_model; /* checkpoint: parameters plus vocabularies */
typedef struct npmt_lm npmt_lm;       /* back-off n-gram model */

/* Receives one line of progress output (JSON for training metrics). */
typedef void (*npmt_log_fn)(const char* line, void* user);

NPMT_API const char* npmt_version(void);
NPMT_API const char* npmt_last_error(void);
NPMT_API const char* npmt_status_name(npmt_status s);
NPMT_API void npmt_free_string(char* s);

/* ---- training ---- */

/* config_path may be NULL (defaults).  seed < 0 keeps the config's seed.
 * Writes out_dir/{last,best}.ckpt and out_dir/metrics.jsonl. */
NPMT_API npmt_status npmt_train(const char* src_path, const char* tgt_path,
                                const char* dev_src_path, const char* dev_tgt_path,
                                const char* config_path, const char* out_dir, int64_t seed,
                                npmt_log_fn log, void* user);

/* ---- models and decoding ---- */

NPMT_API npmt_status npmt_model_load(const char* ckpt_path, npmt_model** out);
NPMT_API void npmt_model_free(npmt_model* m);
/* JSON object with the configuration and training counters. */
NPMT_API npmt_status npmt_model_info(const npmt_model* m, char** json);

typedef struct npmt_decode_options {
  size_t beam;    /* 0 or 1: greedy; >1: beam search */
  double lambda1; /* word bonus */
  double lambda2; /* LM weight; needs an LM when non-zero */
  int merge;      /* merge identical outputs by logsumexp */
} npmt_decode_options;

NPMT_API void npmt_decode_options_init(npmt_decode_options* o);

/* Decodes one whitespace-tokenized sentence.  `lm` may be NULL.  `trace`
 * may be NULL; otherwise it receives the per-position TSV trace. */
NPMT_API npmt_status npmt_decode(const npmt_model* m, const char* sentence,
                                 const npmt_decode_options* opts, const npmt_lm* lm,
                                 char** output, char** trace);

/* Reordering gate matrix of one sentence as TSV. */
NPMT_API npmt_status npmt_gates(const npmt_model* m, const char* sentence, char** tsv);

/* ---- language model ---- */

NPMT_API npmt_status npmt_lm_train(const char* corpus_path, int order, double discount,
                                   const char* out_path);
NPMT_API npmt_status npmt_lm_load(const char* arpa_path, npmt_lm** out);
NPMT_API void npmt_lm_free(npmt_lm* lm);
/* Natural-log probability of the sentence including </s>. */
NPMT_API npmt_status npmt_lm_score(const npmt_lm* lm, const char* sentence, double* logprob);

/* ---- toy data, analysis, evaluation ---- */

typedef struct npmt_toy_spec {
  int kind; /* 0 phrase-copy, 1 local-swap */
  size_t src_vocab;
  size_t tgt_vocab;
  size_t min_phrase;
  size_t max_phrase;
  size_t swap_distance;
  size_t min_len;
  size_t max_len;
  size_t n_train;
  size_t n_dev;
  size_t n_test;
  uint64_t seed;
} npmt_toy_spec;

NPMT_API void npmt_toy_spec_init(npmt_toy_spec* s);
NPMT_API npmt_status npmt_gen_toy(const npmt_toy_spec* s, const char* out_dir);

/* Phrase-mapping table from a decode trace file, as TSV. */
NPMT_API npmt_status npmt_phrases(const char* trace_path, size_t top_n, int drop_unk, char** tsv);

/* Trains one model per window size; config_path may be NULL. */
NPMT_API npmt_status npmt_sweep_windows(const npmt_toy_spec* s, const size_t* sizes,
                                        size_t n_sizes, const char* config_path, char** tsv);

NPMT_API npmt_status npmt_bleu(const char* cand_path, const char* ref_path, int smooth,
                               double* score);

#ifdef __cplusplus
}
#endif

#endif /* NPMT_NPMT_H_ */

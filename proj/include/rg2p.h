/* Robust grapheme-to-phoneme conversion: C API.
 *
 * Every function returns RG2P_OK on success or a nonzero error code; the
 * message for the most recent failure on the calling thread is available
 * through rg2p_last_error(). Strings returned through out-parameters are
 * heap-allocated and must be released with rg2p_free_string().
 */

#ifndef RG2P_H
#define RG2P_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#define RG2P_OK 0
#define RG2P_USAGE_ERROR 2   /* bad arguments, malformed input, missing files */
#define RG2P_NUMERIC_ERROR 3 /* non-finite values or broken training invariants */

/* Message for the last failed call on this thread; empty string if none. */
const char* rg2p_last_error(void);

void rg2p_free_string(char* s);

/* Split a pronunciation lexicon (and optional sentence corpus) into a
 * dataset directory with train/dev/test manifests and vocabularies.
 * sentences_path may be NULL. */
int rg2p_prepare(const char* lexicon_path, const char* sentences_path, const char* out_dir,
                 uint64_t seed);

/* Corrupt the target words of an example file (or of a dataset directory's
 * training sentences). method is "nat" or "syn". config_json may be NULL for
 * defaults; misspellings_path may be NULL unless method is "nat". Writes
 * corrupted.tsv, events.jsonl and summary.json into out_dir. If
 * summary_json_out is non-NULL it receives the summary. */
int rg2p_synth_noise(const char* input_path, const char* method, const char* config_json,
                     const char* misspellings_path, const char* out_dir, char** summary_json_out);

/* Run a training schedule. mode is one of "baseline", "nat", "syn", "adv",
 * "robust". config_json may be NULL. resume != 0 continues an interrupted
 * run from the run directory's saved state. */
int rg2p_train(const char* config_json, const char* mode, const char* data_dir,
               const char* run_dir, int resume);

/* Score a checkpoint against a testset (example TSV or lexicon format) and
 * write a JSON report. events_path / lexicon_path / report_json_out may be
 * NULL. */
int rg2p_eval(const char* checkpoint_path, const char* testset_path, const char* report_path,
              const char* events_path, const char* lexicon_path, char** report_json_out);

/* Train one run per value of "p" (noise rate) or "l" (context length) and
 * write a sweep.tsv table under out_dir. */
int rg2p_sweep(const char* config_json, const char* mode, const char* param, const double* values,
               size_t n_values, const char* data_dir, const char* out_dir);

/* ---- loaded-model handle ---- */

typedef struct rg2p_model rg2p_model;

int rg2p_model_open(const char* checkpoint_path, rg2p_model** out);
void rg2p_model_close(rg2p_model* m);

/* Convert the words of `text`. target_index < 0 converts every word;
 * otherwise only the word at that index, with sentence context when the
 * model carries context parameters. attention_out (nullable) receives an
 * attention/gating dump for the first converted word. phonemes_out gets one
 * line per conversion: "WORD<TAB>PH PH PH". */
int rg2p_model_convert(const rg2p_model* m, const char* text, int target_index,
                       const char* attention_out, char** phonemes_out);

#ifdef __cplusplus
}
#endif

#endif /* RG2P_H */

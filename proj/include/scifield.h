#ifndef SCIFIELD_H
#define SCIFIELD_H

/*
 * C interface to the scifield library: hierarchical classification of
 * research abstracts into a discipline-field-subfield taxonomy, plus
 * citation-based interfieldness analytics.
 *
 * All functions return a status code:
 *   0  success
 *   1  usage error (bad arguments or configuration)
 *   2  data error (malformed or missing input data)
 *   3  internal error
 *
 * A run handle owns a pipeline configuration and executes stages against a
 * shared run directory. Handles are not thread safe; use one per thread.
 */

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

#define SCIFIELD_OK 0
#define SCIFIELD_ERR_USAGE 1
#define SCIFIELD_ERR_DATA 2
#define SCIFIELD_ERR_INTERNAL 3

typedef struct scifield_run scifield_run;

/*
 * Create a run handle. config_path may be NULL (configure via
 * scifield_run_set) or name a JSON config file. On success *out owns the
 * handle; release it with scifield_run_close.
 */
int scifield_run_open(const char* config_path, scifield_run** out);

/*
 * Override one configuration key, e.g. ("seed", "42"), ("mode", "multi"),
 * ("taxonomy", "/path/to/taxonomy.tsv"). Unknown keys are usage errors.
 */
int scifield_run_set(scifield_run* run, const char* key, const char* value);

/* Pipeline stages. Each validates its own inputs and is safe to re-run. */
int scifield_run_label(scifield_run* run);
int scifield_run_ingest(scifield_run* run);
int scifield_run_train(scifield_run* run);
int scifield_run_infer(scifield_run* run);
int scifield_run_analyze(scifield_run* run);

/*
 * Report of the last completed stage as "key=value" lines, or an empty
 * string. Owned by the handle; valid until the next call on it.
 */
const char* scifield_run_summary(const scifield_run* run);

/* Message of the last failed call on this handle, or an empty string. */
const char* scifield_run_error(const scifield_run* run);

void scifield_run_close(scifield_run* run);

/*
 * Decode one inverted-index abstract line
 * ("paper_id \t index_length \t {token: [positions]}") back into plain
 * text. On success *text_out receives a buffer to free with
 * scifield_string_free.
 */
int scifield_decode_abstract(const char* line, char** text_out);

void scifield_string_free(char* s);

const char* scifield_version(void);

#ifdef __cplusplus
}
#endif

#endif /* SCIFIELD_H */

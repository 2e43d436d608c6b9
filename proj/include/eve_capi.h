#ifndef EVE_CAPI_H
#define EVE_CAPI_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

/* Status codes double as process exit codes. */
typedef enum eve_status {
  EVE_OK = 0,
  EVE_ERR_CONFIG = 2, /* bad config / bad arguments */
  EVE_ERR_STAGE = 3,  /* a pipeline stage failed */
  EVE_ERR_VERIFY = 4  /* agentic verification failed (artifacts written) */
} eve_status;

/* Opaque run handle: one parsed config plus an output directory. */
typedef struct eve_run eve_run;

/* Parses the config file and prepares the output directory. Returns NULL on
 * failure; pass a buffer to receive the error message. */
eve_run* eve_run_open(const char* config_path, const char* out_dir, char* errbuf,
                      size_t errbuf_len);

/* Options must be set before the first eve_run_stage call. */
eve_status eve_run_set_seed_override(eve_run* run, int64_t seed);
/* spec has the form "lambda_band_high=2.00,2.05,2.10" */
eve_status eve_run_set_sweep(eve_run* run, const char* spec);

/* name: prepare-data | train | evaluate | select | calibrate | agentic-eval |
 * report | run */
eve_status eve_run_stage(eve_run* run, const char* name);

/* Message of the most recent failure on this handle; empty string if none. */
const char* eve_run_last_error(const eve_run* run);

void eve_run_close(eve_run* run);

const char* eve_version(void);

#ifdef __cplusplus
}
#endif

#endif /* EVE_CAPI_H */

/* C interface to the narration-dataset pipeline. All state lives behind the
 * opaque soa_pipeline handle; every call reports failure through soa_status
 * and a handle-local error string. The library never prints or exits. */
#ifndef SURGONAIR_H
#define SURGONAIR_H

#ifdef __cplusplus
extern "C" {
#endif

typedef enum soa_status {
    SOA_OK = 0,
    SOA_INVALID_ARGUMENT = 1,
    SOA_PARSE_ERROR = 2,
    SOA_VALIDATION_ERROR = 3,
    SOA_EMPTY_INPUT = 4,
    SOA_IO_ERROR = 5,
    SOA_CLIENT_ERROR = 6,
    SOA_CAUSALITY_VIOLATION = 7,
    SOA_MISSING_STAGE = 8,
    /* Some videos failed but the run completed; details in the report. */
    SOA_PARTIAL = 9,
    SOA_INTERNAL_ERROR = 10
} soa_status;

typedef struct soa_pipeline soa_pipeline;

/* Library semantic version, e.g. "1.0.0". */
const char* soa_version(void);

/* Stable name for a status code, e.g. "causality_violation". */
const char* soa_status_name(soa_status status);

/* Creates a handle from a JSON config file. Always stores a handle in *out
 * (so the error text is readable via soa_pipeline_last_error); on failure the
 * handle keeps built-in defaults. The caller owns the handle either way. */
soa_status soa_pipeline_open(const char* config_path, soa_pipeline** out);

/* Creates a handle with built-in defaults; callers must at least set
 * asr_dir, meta_dir and out_dir before running a command. */
soa_status soa_pipeline_open_default(soa_pipeline** out);

/* Overrides one configuration value. Keys mirror the config file:
 *   asr_dir, meta_dir, out_dir, cache_dir, fps, stride, threshold, mode,
 *   start_offset_ms, split_ratio, seed, workers, clock, pace_scale,
 *   external_command, external_timeout_ms, client.kind, client.endpoint,
 *   client.model, client.timeout_ms, client.max_in_flight,
 *   client.max_retries, variant, model, judge, fixed_baseline.
 * Unknown keys or unparseable values return SOA_INVALID_ARGUMENT. */
soa_status soa_pipeline_set_option(soa_pipeline* p, const char* key, const char* value);

/* Runs one command: curate, build, simulate, evaluate, validate or split.
 * SOA_OK on full success, SOA_PARTIAL when some videos failed, any other
 * status when the command could not run at all. */
soa_status soa_pipeline_run(soa_pipeline* p, const char* command);

/* Human-readable description of the last failure ("" when the last call
 * succeeded). Valid until the next call on this handle. */
const char* soa_pipeline_last_error(const soa_pipeline* p);

/* JSON report of the last completed command ("" before the first run).
 * Valid until the next call on this handle. */
const char* soa_pipeline_last_report_json(const soa_pipeline* p);

void soa_pipeline_close(soa_pipeline* p);

#ifdef __cplusplus
}
#endif

#endif /* SURGONAIR_H */

/* C interface to the data hallucination teaching library.
 *
 * All entry points return a dht_status; non-OK statuses leave a
 * human-readable message in dht_last_error() (thread-local). Objects
 * returned through out-parameters are opaque handles owned by the caller
 * and released with the matching _free function.
 */
#ifndef DHT_DHT_H
#define DHT_DHT_H

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum dht_status {
    DHT_OK = 0,
    DHT_ERR_INVALID_ARG = 1,
    DHT_ERR_PARSE = 2,
    DHT_ERR_IO = 3,
    DHT_ERR_RUNTIME = 4,
    DHT_ERR_ASSERTION = 5
} dht_status;

typedef struct dht_config dht_config;
typedef struct dht_report dht_report;

unsigned dht_version(void);
const char* dht_status_name(dht_status status);
const char* dht_last_error(void);

/* Configs are flat key=value text with dotted sections; unknown keys are
 * rejected. */
dht_status dht_config_load(const char* path, dht_config** out);
dht_status dht_config_parse(const char* text, dht_config** out);
void dht_config_free(dht_config* config);
/* Writes the 16-hex-digit config hash into buf (needs >= 17 bytes). */
dht_status dht_config_hash(const dht_config* config, char* buf, size_t buflen);

/* Runs every (teacher, seed) pair of the config, writing one trace CSV
 * per pair into out_dir (or the config's run.out_dir when out_dir is
 * NULL). jobs <= 0 uses the config's run.jobs. Declared assertions that
 * fail yield DHT_ERR_ASSERTION; the report carries one line per
 * assertion. The report may be NULL. */
dht_status dht_run(const dht_config* config, const char* out_dir, int jobs, dht_report** report);

/* Aggregates all trace CSVs in trace_dir into out_csv (mean/std per
 * teacher and iteration). */
dht_status dht_aggregate(const char* trace_dir, const char* out_csv);

/* Renders one polyline per teacher for the metric (w_dist_sq, train_loss
 * or test_acc) into an SVG. */
dht_status dht_plot(const char* trace_dir, const char* metric, int log_scale,
                    const char* out_svg);

/* Compares two teachers at an iteration. verdict: 1 = a better,
 * -1 = b better, 0 = tie under the margin rule. */
dht_status dht_compare(const char* trace_dir, const char* teacher_a, const char* teacher_b,
                       int iter, const char* metric, double margin, int* verdict, double* mean_a,
                       double* mean_b);

/* Builds the interpolation instance described by the config's theorem.*
 * keys, runs the contraction verification and writes per-step ratios to
 * out_csv (optional). The report text is the human-readable summary. */
dht_status dht_verify_theorem(const dht_config* config, const char* out_csv, dht_report** report);

const char* dht_report_text(const dht_report* report);
void dht_report_free(dht_report* report);

#ifdef __cplusplus
}
#endif

#endif /* DHT_DHT_H */

/* jumpdiff: online actor-critic solver for infinite-horizon jump-diffusion
 * control, with closed-form/ODE benchmark solvers for validation.
 *
 * All functions return a jd_status code. Errors leave a human-readable
 * message retrievable with jd_last_error() (thread-local). Strings returned
 * through out-parameters are heap-allocated; release them with
 * jd_string_free().
 */
#ifndef JUMPDIFF_H
#define JUMPDIFF_H

#ifdef __cplusplus
extern "C" {
#endif

typedef enum jd_status {
    JD_OK = 0,
    JD_ERR_CONFIG = 1,  /* invalid configuration / arguments / missing files */
    JD_ERR_NUMERIC = 2  /* solver divergence or numerical failure */
} jd_status;

const char* jd_version(void);

/* Message of the most recent failure on this thread; empty string if none. */
const char* jd_last_error(void);

/* Validate a config document and return the fully resolved form (all
 * defaults applied) in *normalized_json. */
jd_status jd_config_normalize(const char* config_json, char** normalized_json);

/* Content hash identifying the resolved configuration. */
jd_status jd_config_hash(const char* config_json, char** hash_hex);

/* Solve the problem's ground-truth benchmark and return it as JSON. */
jd_status jd_benchmark_json(const char* config_json, char** benchmark_json);

/* Run one command: "train" | "benchmark" | "evaluate" |
 * "evaluate-self-check" | "plot-data" | "table".
 * For "table", config_json is the table description and out_dir receives the
 * CSV. seed_override < 0 keeps the config's seed; out_dir NULL or empty keeps
 * the config's out_dir. */
jd_status jd_run(const char* command, const char* config_json, long long seed_override,
                 const char* out_dir);

void jd_string_free(char* s);

#ifdef __cplusplus
}
#endif

#endif /* JUMPDIFF_H */

#ifndef EISBAYES_EIS_BAYES_H
#define EISBAYES_EIS_BAYES_H

/* eis-bayes: Bayesian uncertainty estimation for fractional-order
 * equivalent-circuit models fitted to impedance spectra.
 *
 * C API of the shared library. All heavy state lives behind opaque
 * handles; every function returns an eisb_status and leaves a
 * human-readable message in eisb_last_error() on failure.
 *
 * Status values double as process exit codes for the bundled CLI:
 *   0 success, 2 validation error, 3 convergence/diagnostic failure.
 */

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  define EISB_API __declspec(dllexport)
#else
#  define EISB_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum eisb_status {
    EISB_OK = 0,
    EISB_ERR_INTERNAL = 1,
    EISB_ERR_VALIDATION = 2,
    EISB_ERR_CONVERGENCE = 3
} eisb_status;

EISB_API const char* eisb_version(void);

/* Message describing the most recent failure on this thread. */
EISB_API const char* eisb_last_error(void);

/* ------------------------------------------------------------------ */
/* Command-level entry points (what the CLI calls).                    */
/*                                                                     */
/* Each command is a pure function of (input files, config, seed):     */
/* rerunning with identical inputs produces bit-identical output       */
/* files. Configs are JSON documents; see README for the schemas.      */
/* seed_override may be NULL to use the seed from the config.          */
/* ------------------------------------------------------------------ */

/* Synthesize noisy current/voltage time series through a known model.
 * Writes current.csv/current.json, voltage.csv/voltage.json,
 * reference_spectrum.csv and simulate_run.json into out_dir. */
EISB_API eisb_status eisb_cmd_simulate(const char* config_json,
                                       const char* out_dir,
                                       const uint64_t* seed_override);

/* Estimate an impedance spectrum from one current and one voltage
 * series via the Morlet wavelet transfer-function ratio. config_json
 * may be NULL for defaults. Writes spectrum.csv and estimate_run.json. */
EISB_API eisb_status eisb_cmd_estimate(const char* current_csv,
                                       const char* voltage_csv,
                                       const char* config_json,
                                       const char* out_dir);

/* Variational-Bayes fit of ECM parameter posteriors to a spectrum.
 * Writes vb_report.json, vb_bands.csv and vb_trace.csv.
 * paper_epsilon != 0 reuses the learning rate as the ADAM denominator
 * guard instead of the usual 1e-8. */
EISB_API eisb_status eisb_cmd_fit_vb(const char* spectrum_csv,
                                     const char* config_json,
                                     const char* out_dir,
                                     const uint64_t* seed_override,
                                     int paper_epsilon);

/* Adaptive-Metropolis posterior sampling (the MCMC oracle).
 * Writes mcmc_chains.csv and mcmc_diagnostics.json. Returns
 * EISB_ERR_CONVERGENCE when acceptance rate or R-hat checks fail. */
EISB_API eisb_status eisb_cmd_fit_mcmc(const char* spectrum_csv,
                                       const char* config_json,
                                       const char* out_dir,
                                       const uint64_t* seed_override);

/* Pointwise complex mean of spectra sharing one frequency grid.
 * Writes averaged_spectrum.csv and average_run.json. */
EISB_API eisb_status eisb_cmd_average(const char* const* spectrum_csvs,
                                      size_t n_spectra,
                                      const char* out_dir);

/* Compare a VB report against an MCMC run, an averaged spectrum,
 * or a second VB report. Exactly one of mcmc_chains_csv,
 * averaged_csv, vb_report_b_json must be non-NULL.
 * Writes comparison.json. */
EISB_API eisb_status eisb_cmd_compare(const char* vb_report_json,
                                      const char* mcmc_chains_csv,
                                      const char* averaged_csv,
                                      const char* vb_report_b_json,
                                      const char* out_dir);

/* ------------------------------------------------------------------ */
/* Object-level API for embedding.                                     */
/* ------------------------------------------------------------------ */

typedef struct eisb_spectrum eisb_spectrum;
typedef struct eisb_vb_report eisb_vb_report;

/* sigma may be NULL (no per-point dispersion). Frequencies must be
 * strictly increasing and positive. */
EISB_API eisb_status eisb_spectrum_create(const double* freq_hz,
                                          const double* re_ohm,
                                          const double* im_ohm,
                                          const double* sigma_ohm,
                                          size_t n,
                                          eisb_spectrum** out);
EISB_API eisb_status eisb_spectrum_load_csv(const char* path, eisb_spectrum** out);
EISB_API eisb_status eisb_spectrum_save_csv(const eisb_spectrum* s, const char* path);
EISB_API size_t      eisb_spectrum_size(const eisb_spectrum* s);
/* Buffers must hold eisb_spectrum_size() values; sigma_ohm may be NULL.
 * If the spectrum carries no dispersion, sigma is filled with zeros. */
EISB_API eisb_status eisb_spectrum_get(const eisb_spectrum* s,
                                       double* freq_hz,
                                       double* re_ohm,
                                       double* im_ohm,
                                       double* sigma_ohm);
EISB_API void        eisb_spectrum_free(eisb_spectrum* s);

/* Model impedance at the given frequencies. rqa holds r,q,alpha per
 * RQ element, 3*n_elements values. */
EISB_API eisb_status eisb_impedance(double r_s,
                                    double l_henry,
                                    const double* rqa,
                                    size_t n_elements,
                                    const double* freq_hz,
                                    size_t n_freqs,
                                    double* re_out,
                                    double* im_out);

/* In-memory VB fit; config_json uses the fit-vb schema. */
EISB_API eisb_status eisb_fit_vb(const eisb_spectrum* s,
                                 const char* config_json,
                                 eisb_vb_report** out);

EISB_API size_t      eisb_vb_report_param_count(const eisb_vb_report* r);
/* name_buf receives a NUL-terminated parameter name ("r_s", "q_2", ...). */
EISB_API eisb_status eisb_vb_report_param(const eisb_vb_report* r,
                                          size_t index,
                                          char* name_buf,
                                          size_t name_buf_len,
                                          int* is_beta,
                                          double* p1,
                                          double* p2,
                                          double* mean,
                                          double* variance);
EISB_API int         eisb_vb_report_iterations(const eisb_vb_report* r);
/* 1 when the ELBO stopping rule fired, 0 when max_iters was hit. */
EISB_API int         eisb_vb_report_converged(const eisb_vb_report* r);
EISB_API double      eisb_vb_report_final_elbo(const eisb_vb_report* r);
/* JSON document identical to the vb_report.json a fit-vb run writes.
 * Free with eisb_string_free. */
EISB_API eisb_status eisb_vb_report_to_json(const eisb_vb_report* r, char** json_out);
EISB_API void        eisb_vb_report_free(eisb_vb_report* r);

EISB_API void        eisb_string_free(char* s);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* EISBAYES_EIS_BAYES_H */

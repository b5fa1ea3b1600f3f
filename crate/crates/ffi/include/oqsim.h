#ifndef OQSIM_H
#define OQSIM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes.
 */
typedef enum OqsimStatus {
  OQSIM_STATUS_OK = 0,
  OQSIM_STATUS_NULL_POINTER = 1,
  OQSIM_STATUS_INVALID_ARGUMENT = 2,
  OQSIM_STATUS_DIMENSION_MISMATCH = 3,
  OQSIM_STATUS_CONSTRAINT_VIOLATION = 4,
  OQSIM_STATUS_INTEGRATION_FAILURE = 5,
  OQSIM_STATUS_NOT_APPLICABLE = 6,
  OQSIM_STATUS_NOT_ESTIMABLE = 7,
  OQSIM_STATUS_CONFIG = 8,
  OQSIM_STATUS_IO = 9,
  OQSIM_STATUS_OUT_OF_RANGE = 10,
  OQSIM_STATUS_PANIC = 11,
} OqsimStatus;

typedef enum OqsimDriving {
  OQSIM_DRIVING_WHITE = 0,
  OQSIM_DRIVING_UPSILON = 1,
  OQSIM_DRIVING_OU_HAMILTONIAN = 2,
} OqsimDriving;

typedef enum OqsimSpectrum {
  OQSIM_SPECTRUM_WHITE = 0,
  OQSIM_SPECTRUM_OU_PROCESS = 1,
  OQSIM_SPECTRUM_UPSILON = 2,
} OqsimSpectrum;

/**
 * Parsed experiment configuration.
 */
typedef struct OqsimConfig OqsimConfig;

/**
 * Ensemble-averaged trajectory run.
 */
typedef struct OqsimEnsemble OqsimEnsemble;

/**
 * Master-equation solution.
 */
typedef struct OqsimSolution OqsimSolution;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread into `buf` (NUL-terminated,
 * truncated to `len`). Returns the full message length in bytes.
 */
size_t oqsim_last_error(char *buf, size_t len);

/**
 * Library version as a static NUL-terminated string.
 */
const char *oqsim_version(void);

/**
 * Parses a TOML configuration.
 */
enum OqsimStatus oqsim_config_parse(const char *text, struct OqsimConfig **out);

void oqsim_config_free(struct OqsimConfig *cfg);

/**
 * Number of `[[solvers]]` entries.
 */
enum OqsimStatus oqsim_config_solver_count(const struct OqsimConfig *cfg, size_t *out);

/**
 * Runs the ensemble configured in `cfg` for one driving.
 */
enum OqsimStatus oqsim_simulate(const struct OqsimConfig *cfg,
                                enum OqsimDriving driving,
                                struct OqsimEnsemble **out);

void oqsim_ensemble_free(struct OqsimEnsemble *e);

/**
 * Number of recorded times.
 */
enum OqsimStatus oqsim_ensemble_len(const struct OqsimEnsemble *e, size_t *out);

enum OqsimStatus oqsim_ensemble_times(const struct OqsimEnsemble *e, double *buf, size_t len);

enum OqsimStatus oqsim_ensemble_rho00(const struct OqsimEnsemble *e, double *buf, size_t len);

/**
 * Standard error of the ensemble `rho00` at every recorded time.
 */
enum OqsimStatus oqsim_ensemble_se_rho00(const struct OqsimEnsemble *e, double *buf, size_t len);

/**
 * Mean density matrix at record `idx`, written as 8 doubles.
 */
enum OqsimStatus oqsim_ensemble_rho(const struct OqsimEnsemble *e, size_t idx, double *rho);

enum OqsimStatus oqsim_ensemble_write_csv(const struct OqsimEnsemble *e, const char *path);

/**
 * Solves the `index`-th configured solver from the configured initial state.
 */
enum OqsimStatus oqsim_solve(const struct OqsimConfig *cfg,
                             size_t index,
                             struct OqsimSolution **out);

void oqsim_solution_free(struct OqsimSolution *s);

enum OqsimStatus oqsim_solution_len(const struct OqsimSolution *s, size_t *out);

enum OqsimStatus oqsim_solution_times(const struct OqsimSolution *s, double *buf, size_t len);

enum OqsimStatus oqsim_solution_rho00(const struct OqsimSolution *s, double *buf, size_t len);

enum OqsimStatus oqsim_solution_rho(const struct OqsimSolution *s, size_t idx, double *rho);

enum OqsimStatus oqsim_solution_write_csv(const struct OqsimSolution *s, const char *path);

/**
 * Redfield rate for Υ-noise at Bohr frequency `omega` and time `t`
 * (`t` may be `INFINITY`).
 */
enum OqsimStatus oqsim_gamma_upsilon(double omega,
                                     double t,
                                     double sigma,
                                     double theta,
                                     double *re,
                                     double *im);

/**
 * Redfield rate for the OU process.
 */
enum OqsimStatus oqsim_gamma_ou(double omega,
                                double t,
                                double sigma,
                                double theta,
                                double *re,
                                double *im);

enum OqsimStatus oqsim_spectral_density(enum OqsimSpectrum kind,
                                        double omega,
                                        double sigma,
                                        double theta,
                                        double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* OQSIM_H */

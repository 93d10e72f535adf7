/* C interface to the kim numerical laboratory. */

#ifndef KIM_CAPI_H
#define KIM_CAPI_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes; aligned with the CLI exit codes where they overlap.
 */
typedef enum KimStatus {
  KimStatus_Ok = 0,
  KimStatus_SolverFailure = 2,
  KimStatus_PositivityViolation = 3,
  KimStatus_BadInput = 4,
  KimStatus_NullArgument = 5,
  KimStatus_InternalPanic = 6,
} KimStatus;

/**
 * Opaque background geometry handle.
 */
typedef struct KimBackground KimBackground;

/**
 * Opaque metric handle.
 */
typedef struct KimMetric KimMetric;

/**
 * Opaque iteration trace handle.
 */
typedef struct KimTrace KimTrace;

/**
 * One per-step record of an iteration trace.
 */
typedef struct KimStepRecord {
  size_t k;
  double sup_eta;
  double inf_eta;
  double sup_psi;
  double inf_psi;
  double e0;
  /**
   * NaN when undefined (mu = 0).
   */
  double e1;
  double f_mu;
  double i;
  double j;
  double min_ricci_ratio;
  uint32_t newton_iters;
  double residual;
  /**
   * NaN for untwisted runs.
   */
  double e0_twisted;
  double normalization_constant;
} KimStepRecord;

/**
 * Energy functionals of a metric pair.
 */
typedef struct KimEnergyReport {
  double i;
  double j;
  double i0;
  double i1;
  double i_minus_j;
  double e0;
  /**
   * NaN when undefined (mu = 0).
   */
  double e1;
  double f_mu;
  /**
   * NaN when no twist was requested.
   */
  double e0_twisted;
} KimEnergyReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * ABI revision of this header.
 */
uint32_t kim_abi_version(void);

/**
 * Message describing the most recent failure on this thread. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *kim_last_error(void);

/**
 * Round-sphere background of volume `volume`, `n` quadrature nodes;
 * `even` restricts to even data.
 */
enum KimStatus kim_background_sphere(size_t n,
                                     double volume,
                                     bool even,
                                     struct KimBackground **out);

/**
 * Flat torus background on an `n x n` grid.
 */
enum KimStatus kim_background_torus(size_t n, double volume, struct KimBackground **out);

/**
 * Synthetic negative-mode background with a seeded band-limited
 * prescribed potential.
 */
enum KimStatus kim_background_synthetic(size_t n,
                                        double volume,
                                        uint64_t f0_seed,
                                        uint32_t f0_band,
                                        double f0_amp,
                                        struct KimBackground **out);

void kim_background_free(struct KimBackground *bg);

/**
 * Number of grid nodes (sphere: n, torus: n^2).
 */
size_t kim_background_node_count(const struct KimBackground *bg);

double kim_background_volume(const struct KimBackground *bg);

/**
 * Einstein proportionality constant of the background class.
 */
double kim_background_mu(const struct KimBackground *bg);

/**
 * The background metric itself.
 */
enum KimStatus kim_metric_flat(const struct KimBackground *bg, struct KimMetric **out);

/**
 * Metric from raw potential values (`len` must match the node count);
 * the data is mean-normalized and validated for positivity.
 */
enum KimStatus kim_metric_from_potential(const struct KimBackground *bg,
                                         const double *values,
                                         size_t len,
                                         struct KimMetric **out);

/**
 * Deterministic seeded band-limited metric.
 */
enum KimStatus kim_metric_random(const struct KimBackground *bg,
                                 uint64_t seed,
                                 uint32_t band,
                                 double amplitude,
                                 struct KimMetric **out);

/**
 * Möbius-dilation pullback of the round metric (sphere only).
 */
enum KimStatus kim_metric_dilation(const struct KimBackground *bg,
                                   double lambda,
                                   struct KimMetric **out);

/**
 * Copy the potential into a caller buffer of exactly `len` entries.
 */
enum KimStatus kim_metric_potential(const struct KimMetric *m, double *out, size_t len);

double kim_metric_min_density(const struct KimMetric *m);

double kim_metric_min_ricci_ratio(const struct KimMetric *m);

void kim_metric_free(struct KimMetric *m);

/**
 * Inverse Ricci operator (anticanonical sphere).
 */
enum KimStatus kim_ricci_inverse(const struct KimMetric *m, struct KimMetric **out);

/**
 * Generalized inverse Ricci operator (any background).
 */
enum KimStatus kim_ricci_inverse_general(const struct KimMetric *m, struct KimMetric **out);

/**
 * Ricci index capped at `cap`; `at_least` is set when the cap was hit.
 */
enum KimStatus kim_ricci_index(const struct KimMetric *m,
                               uint32_t cap,
                               uint32_t *out_index,
                               bool *out_at_least);

/**
 * Run the time `tau` iteration (`twist_beta = 0` for the plain dynamics).
 */
enum KimStatus kim_iterate(const struct KimMetric *start,
                           double tau,
                           size_t steps,
                           double twist_beta,
                           bool nonstandard_branch,
                           struct KimTrace **out);

/**
 * Number of recorded steps.
 */
size_t kim_trace_len(const struct KimTrace *t);

/**
 * 0 converged, 1 max-steps, 2 solver-failure, -1 on a null handle.
 */
int32_t kim_trace_verdict(const struct KimTrace *t);

/**
 * Copy record `k` (zero-based) into `out`.
 */
enum KimStatus kim_trace_record(const struct KimTrace *t, size_t k, struct KimStepRecord *out);

/**
 * The final state of a run.
 */
enum KimStatus kim_trace_final_metric(const struct KimTrace *t, struct KimMetric **out);

void kim_trace_free(struct KimTrace *t);

/**
 * All energy functionals of the pair `(a, b)`; `twist_beta = 0` skips the
 * twisted energy.
 */
enum KimStatus kim_energy_report(const struct KimMetric *a,
                                 const struct KimMetric *b,
                                 double twist_beta,
                                 struct KimEnergyReport *out);

/**
 * Audit the Moser-Trudinger-Onofri inequality for raw potential values
 * (positivity of the induced form is not required).
 */
enum KimStatus kim_mto_audit(const struct KimBackground *bg,
                             const double *phi,
                             size_t len,
                             double *out_lhs,
                             double *out_rhs,
                             double *out_margin);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* KIM_CAPI_H */

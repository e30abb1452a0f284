#ifndef IQSENSE_H
#define IQSENSE_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum IqsStatus {
  IQS_STATUS_OK = 0,
  IQS_STATUS_NULL_POINTER = 1,
  IQS_STATUS_INVALID_ARGUMENT = 2,
  IQS_STATUS_DOMAIN = 3,
  IQS_STATUS_NUMERICAL = 4,
  IQS_STATUS_BUFFER_TOO_SMALL = 5,
  IQS_STATUS_PANIC = 6,
} IqsStatus;

/**
 * Detector family used when building a rule.
 */
typedef enum IqsDetectorMode {
  IQS_DETECTOR_MODE_FOUR_LEVEL = 0,
  IQS_DETECTOR_MODE_TWO_LEVEL_BAYES = 1,
  IQS_DETECTOR_MODE_TWO_LEVEL_CFAR = 2,
} IqsDetectorMode;

/**
 * How conditional probabilities combine into false-alarm and detection figures.
 */
typedef enum IqsConvention {
  IQS_CONVENTION_UNWEIGHTED_SUM = 0,
  IQS_CONVENTION_PRIOR_WEIGHTED = 1,
} IqsConvention;

/**
 * Opaque decision rule.
 */
typedef struct IqsRule IqsRule;

/**
 * Opaque sensing scenario.
 */
typedef struct IqsScenario IqsScenario;

/**
 * Primary-link outage parameters; see the library's `OutageScenario`.
 */
typedef struct IqsOutageScenario {
  double p_mk;
  double p0;
  double beta_sq_sec;
  double noise_p;
  double var_g;
  double var_h;
  double rate_p;
} IqsOutageScenario;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the calling thread's last error message into `buf` as a
 * NUL-terminated string, truncating to fit. Returns the full message
 * length in bytes, excluding the terminator.
 *
 * # Safety
 * `buf` must be null or valid for `cap` bytes of writes.
 */
size_t iqs_last_error_message(char *buf, size_t cap);

/**
 * Upper tail `P(Z > threshold)` of the sum of `n` exponential packets
 * whose Gamma law has shape `n` and the given `scale`.
 *
 * # Safety
 * `out` must be null or valid for writes.
 */
enum IqsStatus iqs_gamma_sf(uint32_t n, double scale, double threshold, double *out);

/**
 * Builds a scenario from SNRs in dB, an optional transmitter IRR
 * (`has_irr == 0` means ideal) and the packet count.
 *
 * # Safety
 * `out` must be null or valid for writes.
 */
enum IqsStatus iqs_scenario_new(double snr1_db,
                                double snr2_db,
                                bool has_irr,
                                double irr_db,
                                uint32_t n_packets,
                                struct IqsScenario **out);

/**
 * Builds a scenario from its JSON description.
 *
 * # Safety
 * `json` must be null or a valid NUL-terminated string; `out` must be null
 * or valid for writes.
 */
enum IqsStatus iqs_scenario_from_json(const char *json, struct IqsScenario **out);

/**
 * Releases a scenario; null is ignored.
 *
 * # Safety
 * `sc` must be null or a handle from `iqs_scenario_*` not yet freed.
 */
void iqs_scenario_free(struct IqsScenario *sc);

/**
 * Writes the per-component variances under H0..H3 into `out[4]`.
 *
 * # Safety
 * `sc` must be a live handle; `out` must be valid for 4 writes.
 */
enum IqsStatus iqs_scenario_variances(const struct IqsScenario *sc, double *out);

/**
 * Builds the decision rule for `sc` under the given detector mode.
 * `target_pfa` is used only by the CFAR mode.
 *
 * # Safety
 * `sc` must be a live handle; `out` must be null or valid for writes.
 */
enum IqsStatus iqs_rule_new(const struct IqsScenario *sc,
                            enum IqsDetectorMode mode,
                            double target_pfa,
                            struct IqsRule **out);

/**
 * Releases a rule; null is ignored.
 *
 * # Safety
 * `rule` must be null or a handle from `iqs_rule_new` not yet freed.
 */
void iqs_rule_free(struct IqsRule *rule);

/**
 * Classifies a statistic value; writes the decided hypothesis index (0..=3).
 *
 * # Safety
 * `rule` must be a live handle; `out` must be null or valid for writes.
 */
enum IqsStatus iqs_rule_classify(const struct IqsRule *rule, double z, uint32_t *out);

/**
 * Copies the rule's increasing thresholds into `buf` and their count into
 * `len`. Fails with `BufferTooSmall` (still setting `len`) when `cap` is
 * insufficient; at most three thresholds exist.
 *
 * # Safety
 * `rule` must be a live handle; `buf` must be valid for `cap` writes;
 * `len` must be null or valid for writes.
 */
enum IqsStatus iqs_rule_thresholds(const struct IqsRule *rule,
                                   double *buf,
                                   size_t cap,
                                   size_t *len);

/**
 * Exact false-alarm and detection figures of `rule` on `sc`.
 *
 * # Safety
 * Handles must be live; `p_fa` and `p_d` must be null or valid for writes.
 */
enum IqsStatus iqs_analytic_metrics(const struct IqsScenario *sc,
                                    const struct IqsRule *rule,
                                    enum IqsConvention conv,
                                    double *p_fa,
                                    double *p_d);

/**
 * Monte Carlo confusion counts under the scenario's own detector mode
 * (four-level unless set in JSON): `counts[4*truth + decided]`.
 * Results depend only on the seed pair, not on threading.
 *
 * # Safety
 * `sc` must be a live handle; `counts` must be valid for 16 writes.
 */
enum IqsStatus iqs_run_trials(const struct IqsScenario *sc,
                              uint64_t per_hypothesis,
                              uint64_t master_seed,
                              uint32_t stream_index,
                              uint64_t *counts);

/**
 * Closed-form outage probability of the primary link.
 *
 * # Safety
 * `sc` and `out` must be null or valid.
 */
enum IqsStatus iqs_outage_probability(const struct IqsOutageScenario *sc, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* IQSENSE_H */

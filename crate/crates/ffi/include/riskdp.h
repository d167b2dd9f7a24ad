#ifndef RISKDP_H
#define RISKDP_H

#include <stddef.h>
#include <stdint.h>

// Result of every fallible call.
typedef enum {
  RISKDP_STATUS_OK = 0,
  RISKDP_STATUS_NULL_POINTER = 1,
  RISKDP_STATUS_INVALID_ARGUMENT = 2,
  RISKDP_STATUS_PARSE_ERROR = 3,
  RISKDP_STATUS_VALIDATION_ERROR = 4,
  RISKDP_STATUS_EXPLOSION_GUARD = 5,
  RISKDP_STATUS_NUMERIC_FAILURE = 6,
  RISKDP_STATUS_PANIC = 7,
} RiskdpStatus;

// Values accepted by the `measure` arguments.
typedef enum {
  RISKDP_MEASURE_VAR = 0,
  RISKDP_MEASURE_CVAR = 1,
  RISKDP_MEASURE_EVAR = 2,
  RISKDP_MEASURE_QUANTILE = 3,
} RiskdpMeasure;

// Finite discrete distribution.
typedef struct RiskdpDistribution RiskdpDistribution;

// Validated MDP.
typedef struct RiskdpMdp RiskdpMdp;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Builds a distribution from `len` outcomes and probabilities. The
// probabilities must sum to one.
//
// # Safety
// `outcomes` and `probabilities` point to `len` readable doubles and `out`
// to a writable handle slot.
RiskdpStatus riskdp_distribution_new(const double *outcomes,
                                     const double *probabilities,
                                     size_t len,
                                     RiskdpDistribution **out);

// Releases a distribution. Null is ignored.
//
// # Safety
// `d` is null or a handle from [`riskdp_distribution_new`] not yet freed.
void riskdp_distribution_free(RiskdpDistribution *d);

// Upper quantile `sup { z : P(X < z) <= alpha }`.
//
// # Safety
// `d` is a live distribution handle and `out` a writable double.
RiskdpStatus riskdp_var(const RiskdpDistribution *d, double alpha, double *out);

// Lower quantile `inf { z : P(X <= z) >= alpha }`.
//
// # Safety
// `d` is a live distribution handle and `out` a writable double.
RiskdpStatus riskdp_lower_quantile(const RiskdpDistribution *d, double alpha, double *out);

// Mean of the worst `alpha` fraction of outcomes.
//
// # Safety
// `d` is a live distribution handle and `out` a writable double.
RiskdpStatus riskdp_cvar(const RiskdpDistribution *d, double alpha, double *out);

// Entropic value at risk.
//
// # Safety
// `d` is a live distribution handle and `out` a writable double.
RiskdpStatus riskdp_evar(const RiskdpDistribution *d, double alpha, double *out);

// Parses and validates an MDP document.
//
// # Safety
// `json` is a nul-terminated string and `out` a writable handle slot.
RiskdpStatus riskdp_mdp_from_json(const char *json, RiskdpMdp **out);

// Releases an MDP. Null is ignored.
//
// # Safety
// `m` is null or a handle from [`riskdp_mdp_from_json`] not yet freed.
void riskdp_mdp_free(RiskdpMdp *m);

// Number of states, or 0 for a null handle.
//
// # Safety
// `m` is null or a live MDP handle.
size_t riskdp_mdp_num_states(const RiskdpMdp *m);

// Risk of the return under a Markov policy written `"s1=a1,s2=a2"`. A
// null `policy` plays the first available action everywhere.
//
// # Safety
// `m` is a live MDP handle, `policy` null or a nul-terminated string and
// `out` a writable double.
RiskdpStatus riskdp_evaluate(const RiskdpMdp *m,
                             const char *policy,
                             int32_t measure_code,
                             double alpha,
                             double *out);

// Best deterministic policy by enumeration. On success `value` holds its
// risk and, when `policy_out` is not null, `*policy_out` a description to
// release with [`riskdp_string_free`].
//
// # Safety
// `m` is a live MDP handle, `value` a writable double and `policy_out`
// null or a writable string slot.
RiskdpStatus riskdp_optimize(const RiskdpMdp *m,
                             int32_t measure_code,
                             double alpha,
                             double *value,
                             char **policy_out);

// Runs a decomposition scheme (`"cvar-eval"`, `"cvar-opt"`, `"evar-ni"`,
// `"evar-corrected"`, `"var"`, `"var-opt"`, `"quantile-opt"`) and writes
// the report as JSON to `*json_out`, to release with
// [`riskdp_string_free`]. A positive `h` selects a lattice of that step;
// otherwise CVaR schemes search breakpoints exactly and EVaR schemes use
// their default step. `policy` is required by the evaluation schemes.
//
// # Safety
// `m` is a live MDP handle, `scheme` a nul-terminated string, `policy`
// null or a nul-terminated string and `json_out` a writable string slot.
RiskdpStatus riskdp_decompose_json(const RiskdpMdp *m,
                                   const char *scheme,
                                   double alpha,
                                   const char *policy,
                                   double h,
                                   char **json_out);

// Releases a string returned by this library. Null is ignored.
//
// # Safety
// `s` is null or a string from this library not yet freed.
void riskdp_string_free(char *s);

// Message of the last failed call on this thread, or null after a
// successful call. Valid until the next call on the same thread.
const char *riskdp_last_error_message(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RISKDP_H */

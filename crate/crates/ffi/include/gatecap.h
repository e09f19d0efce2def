#ifndef GATECAP_H
#define GATECAP_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes of every fallible call.
 */
typedef enum GatecapStatus {
  GATECAP_STATUS_OK = 0,
  GATECAP_STATUS_NULL_POINTER = 1,
  GATECAP_STATUS_INVALID_ARGUMENT = 2,
  GATECAP_STATUS_DIMENSION = 3,
  GATECAP_STATUS_INVALID_STATE = 4,
  GATECAP_STATUS_OPTIMIZER = 5,
  GATECAP_STATUS_BUFFER_TOO_SMALL = 6,
  GATECAP_STATUS_PANIC = 7,
} GatecapStatus;

typedef enum GatecapFamily {
  GATECAP_FAMILY_U1 = 1,
  GATECAP_FAMILY_U2 = 2,
  GATECAP_FAMILY_U3 = 3,
} GatecapFamily;

typedef enum GatecapKind {
  GATECAP_KIND_E = 0,
  GATECAP_KIND_DELTA_E = 1,
  GATECAP_KIND_CHI = 2,
  GATECAP_KIND_DELTA_CHI = 3,
} GatecapKind;

typedef enum GatecapScheme {
  GATECAP_SCHEME_STALL = 0,
  GATECAP_SCHEME_RATE20 = 1,
} GatecapScheme;

/**
 * Opaque gate handle.
 */
typedef struct GatecapGate GatecapGate;

/**
 * Opaque optimization result handle.
 */
typedef struct GatecapResult GatecapResult;

/**
 * Annealing schedule. Obtain defaults with `gatecap_config_default`.
 */
typedef struct GatecapConfig {
  double sigma0;
  double sigma_min;
  uint64_t stall_window;
  double tau0;
  uint64_t tau_check_every;
  double tau_down;
  double tau_up;
  /**
   * A `GatecapScheme` value.
   */
  uint32_t scheme;
  uint64_t warmup_steps;
  uint64_t max_steps;
  uint32_t restarts;
  uint64_t seed;
} GatecapConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread. Valid until the next
 * failing call on the same thread; never null.
 */
const char *gatecap_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *gatecap_version(void);

/**
 * Default schedule for `kind`, a `GatecapKind` value.
 *
 * # Safety
 * `out` must be null or point to writable memory for one `GatecapConfig`.
 */
enum GatecapStatus gatecap_config_default(uint32_t kind, struct GatecapConfig *out);

/**
 * Gate of a family (a `GatecapFamily` value) at `alpha`, with ancillas of dimension `d_anc` on both sides.
 *
 * # Safety
 * `out` must be null or point to writable memory for one pointer.
 */
enum GatecapStatus gatecap_gate_family(uint32_t family,
                                       double alpha,
                                       size_t d_anc,
                                       struct GatecapGate **out);

/**
 * Canonical gate `exp(-i Σ α_k σ_k⊗σ_k)` with ancillas of dimension `d_anc`.
 *
 * # Safety
 * `out` must be null or point to writable memory for one pointer.
 */
enum GatecapStatus gatecap_gate_canonical(double alpha1,
                                          double alpha2,
                                          double alpha3,
                                          size_t d_anc,
                                          struct GatecapGate **out);

/**
 * Releases a gate. Null is ignored.
 *
 * # Safety
 * `gate` must be null or a handle from a `gatecap_gate_*` constructor not yet freed.
 */
void gatecap_gate_free(struct GatecapGate *gate);

/**
 * Dimension of the joint space the gate acts on; 0 for a null handle.
 *
 * # Safety
 * `gate` must be null or a live gate handle.
 */
size_t gatecap_gate_dim(const struct GatecapGate *gate);

/**
 * Copies the dense operator, row major, into `re` and `im` (each `len` long).
 *
 * # Safety
 * `gate` must be a live handle; `re` and `im` must hold `len` doubles.
 */
enum GatecapStatus gatecap_gate_matrix(const struct GatecapGate *gate,
                                       double *re,
                                       double *im,
                                       size_t len);

/**
 * Entanglement of `U(|φ⟩⊗|χ⟩)` in ebits. `φ` lives on Alice's side
 * (qubit ⊗ ancilla), `χ` on Bob's.
 *
 * # Safety
 * `gate` must be a live handle; each array must hold its stated length.
 */
enum GatecapStatus gatecap_final_entanglement(const struct GatecapGate *gate,
                                              const double *phi_re,
                                              const double *phi_im,
                                              size_t phi_len,
                                              const double *chi_re,
                                              const double *chi_im,
                                              size_t chi_len,
                                              double *out);

/**
 * Entanglement gained by applying the gate to a joint pure state, in ebits.
 *
 * # Safety
 * `gate` must be a live handle; `re` and `im` must hold `len` doubles.
 */
enum GatecapStatus gatecap_entanglement_gain(const struct GatecapGate *gate,
                                             const double *re,
                                             const double *im,
                                             size_t len,
                                             double *out);

/**
 * Shannon entropy in bits of a spectrum, `0 log 0 = 0`.
 *
 * # Safety
 * `eigenvalues` must hold `len` doubles.
 */
enum GatecapStatus gatecap_entropy(const double *eigenvalues, size_t len, double *out);

/**
 * Maximizes a capacity (`GatecapKind`) of a family gate (`GatecapFamily`). `ensemble_size` is ignored for
 * E and dE; `config` may be null for the defaults of `kind`.
 *
 * # Safety
 * `config` must be null or point to a valid `GatecapConfig`; `out` must
 * point to writable memory for one pointer.
 */
enum GatecapStatus gatecap_optimize(uint32_t family,
                                    double alpha,
                                    uint32_t kind,
                                    size_t ensemble_size,
                                    size_t d_anc,
                                    bool equal_probs,
                                    const struct GatecapConfig *config,
                                    struct GatecapResult **out);

/**
 * Best value found; NaN for a null handle.
 *
 * # Safety
 * `result` must be null or a live result handle.
 */
double gatecap_result_value(const struct GatecapResult *result);

/**
 * Steps summed over all restarts; 0 for a null handle.
 *
 * # Safety
 * `result` must be null or a live result handle.
 */
uint64_t gatecap_result_total_steps(const struct GatecapResult *result);

/**
 * Witness as JSON, owned by the result handle; null for a null handle.
 *
 * # Safety
 * `result` must be null or a live result handle. The string is freed with it.
 */
const char *gatecap_result_witness_json(const struct GatecapResult *result);

/**
 * Releases a result. Null is ignored.
 *
 * # Safety
 * `result` must be null or a handle from `gatecap_optimize` not yet freed.
 */
void gatecap_result_free(struct GatecapResult *result);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GATECAP_H */

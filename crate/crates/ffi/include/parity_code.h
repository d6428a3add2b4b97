#ifndef PARITY_CODE_H
#define PARITY_CODE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum PcStatus {
  PC_STATUS_OK = 0,
  PC_STATUS_NULL_POINTER = 1,
  PC_STATUS_INVALID_ARGUMENT = 2,
  PC_STATUS_PARSE = 3,
  PC_STATUS_INVALID_CODE = 4,
  PC_STATUS_CAP_EXCEEDED = 5,
  PC_STATUS_DISTANCE_VIOLATION = 6,
  PC_STATUS_SIMULATION = 7,
  PC_STATUS_VERIFICATION = 8,
  PC_STATUS_INVALID_UTF8 = 9,
  PC_STATUS_PANIC = 10,
} PcStatus;

// Opaque BP decoder handle bound to one code.
typedef struct PcBpDecoder PcBpDecoder;

// Opaque code handle.
typedef struct PcCode PcCode;

// Summary of a Monte Carlo run.
typedef struct PcTrialReport {
  uint64_t trials;
  uint64_t logical_errors;
  uint64_t bp_nonconverged;
} PcTrialReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Last error message on this thread, or null. Valid until the next failing
// call on the same thread; do not free.
const char *pc_last_error_message(void);

// Builds the LHZ code on `k` logical qubits.
enum PcStatus pc_lhz_layout(size_t k, struct PcCode **out);

// Parses a code from its text format.
//
// # Safety
// `text` must be a NUL-terminated string.
enum PcStatus pc_code_from_text(const char *text, struct PcCode **out);

// Serializes a code. Release the string with [`pc_string_free`].
//
// # Safety
// `code` must be a live handle.
enum PcStatus pc_code_to_text(const struct PcCode *code, char **out);

// # Safety
// `s` must come from this library, or be null.
void pc_string_free(char *s);

// # Safety
// `code` must come from this library, or be null.
void pc_code_free(struct PcCode *code);

// Number of physical qubits, or 0 for a null handle.
//
// # Safety
// `code` must be a live handle or null.
size_t pc_code_n(const struct PcCode *code);

// Number of encoded logical qubits, or 0 for a null handle.
//
// # Safety
// `code` must be a live handle or null.
size_t pc_code_k(const struct PcCode *code);

// Number of stabilizer generators, or 0 for a null handle.
//
// # Safety
// `code` must be a live handle or null.
size_t pc_code_num_stabilizers(const struct PcCode *code);

// Copies the support of stabilizer `s` into `buf`. `len` receives the
// weight even when `cap` is too small, in which case nothing is copied and
// `InvalidArgument` is returned.
//
// # Safety
// `buf` must hold `cap` elements.
enum PcStatus pc_code_stabilizer(const struct PcCode *code,
                                 size_t s,
                                 size_t *buf,
                                 size_t cap,
                                 size_t *len);

// Code distance (exhaustive; may return `CapExceeded`).
//
// # Safety
// `code` must be a live handle.
enum PcStatus pc_code_distance(const struct PcCode *code, size_t *out);

// Syndrome of the X error `x_flips` (one byte per qubit, non-zero = flip).
//
// # Safety
// `x_flips` must hold `n` bytes and `out` `m` bytes.
enum PcStatus pc_syndrome(const struct PcCode *code,
                          const uint8_t *x_flips,
                          size_t n,
                          uint8_t *out,
                          size_t m);

// # Safety
// `code` must be a live handle.
enum PcStatus pc_bp_decoder_new(const struct PcCode *code,
                                size_t max_iters,
                                struct PcBpDecoder **out);

// Decodes a syndrome. `correction` receives one byte per qubit and
// `converged` is set to 1 when the correction reproduces the syndrome.
//
// # Safety
// Buffers must hold the stated lengths.
enum PcStatus pc_bp_decode(const struct PcBpDecoder *dec,
                           const uint8_t *syn,
                           size_t m,
                           const double *priors,
                           size_t n,
                           uint8_t *correction,
                           int32_t *converged);

// # Safety
// `dec` must come from this library, or be null.
void pc_bp_decoder_free(struct PcBpDecoder *dec);

// Monte Carlo memory experiment on one code block. `decoder` is 0 for BP
// (with `max_iters`) and 1 for exhaustive ML.
//
// # Safety
// `code` must be a live handle.
enum PcStatus pc_run_trials(const struct PcCode *code,
                            double p_dec,
                            double p_cnot,
                            uint64_t trials,
                            uint64_t seed,
                            int32_t decoder,
                            size_t max_iters,
                            struct PcTrialReport *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PARITY_CODE_H */

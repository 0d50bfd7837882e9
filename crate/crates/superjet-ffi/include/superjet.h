#ifndef SUPERJET_H
#define SUPERJET_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define SJ_OK 0

#define SJ_CHECK_FAILED 1

#define SJ_NULL_POINTER 2

#define SJ_INVALID_UTF8 3

#define SJ_PANIC 4

/**
 * Jet superspace context.
 */
typedef struct SjContext SjContext;

/**
 * Differential polynomial bound to a context.
 */
typedef struct SjPoly SjPoly;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the last failure on this thread. Owned by the
 * library; valid until the next failing call on the same thread.
 */
const char *sj_last_error(void);

/**
 * Free a string returned by this library.
 *
 * # Safety
 * `s` must come from this library or be null.
 */
void sj_string_free(char *s);

/**
 * New context. `fields` and `params` are comma separated; `eps` gets
 * ε-weight −1.
 *
 * # Safety
 * String arguments must be null or NUL-terminated; `out` must be writable.
 */
int32_t sj_context_new(const char *fields, const char *params, uint32_t max_level, SjContext **out);

/**
 * # Safety
 * `c` must come from `sj_context_new` or be null.
 */
void sj_context_free(SjContext *c);

/**
 * Parse a polynomial in the text grammar.
 *
 * # Safety
 * `c` must be a live context, `src` NUL-terminated, `out` writable.
 */
int32_t sj_poly_parse(const SjContext *c, const char *src, SjPoly **out);

/**
 * # Safety
 * `p` must come from this library or be null.
 */
void sj_poly_free(SjPoly *p);

/**
 * Canonical text form; free with `sj_string_free`.
 *
 * # Safety
 * `p` must be a live polynomial, `out` writable.
 */
int32_t sj_poly_to_string(const SjPoly *p, char **out);

/**
 * Stable JSON form; free with `sj_string_free`.
 *
 * # Safety
 * `p` must be a live polynomial, `out` writable.
 */
int32_t sj_poly_to_json(const SjPoly *p, char **out);

/**
 * Schouten bracket of `∫p` and `∫q`; the result is a density representative.
 *
 * # Safety
 * `p`, `q` must be live polynomials of the same context, `out` writable.
 */
int32_t sj_schouten(const SjPoly *p, const SjPoly *q, SjPoly **out);

/**
 * Whether `∫p` vanishes (p is a total derivative).
 *
 * # Safety
 * `p` must be a live polynomial, `out` writable.
 */
int32_t sj_functional_is_zero(const SjPoly *p, bool *out);

/**
 * Run a command and return its JSON report (schema 1) in `json_out`.
 *
 * `verb` is one of `kdv-super`, `wdvv-check`, `virasoro-ops`,
 * `virasoro-solve-1d`, `verify-example`, `scenario`. `arg` is the
 * Frobenius TOML text, the `c` value, the example name or the scenario
 * TOML text respectively (ignored for `kdv-super`). Returns `SJ_OK` when
 * every check passes and `SJ_CHECK_FAILED` otherwise; the report is
 * written in both cases.
 *
 * # Safety
 * Strings must be NUL-terminated (`arg` may be null), `json_out` writable.
 */
int32_t sj_run(const char *verb, const char *arg, uint32_t cutoff, char **json_out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SUPERJET_H */

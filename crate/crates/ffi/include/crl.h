#ifndef CRL_H
#define CRL_H

/* Generated by cbindgen; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Success.
 */
#define CRL_OK 0

/**
 * Generic failure (bad model, bad argument, guard exceeded, ...).
 */
#define CRL_ERR 1

/**
 * Parse error; `crl_last_error` includes line and column.
 */
#define CRL_ERR_PARSE 2

/**
 * Conditioning event has probability zero.
 */
#define CRL_ERR_ZERO_EVIDENCE 3

/**
 * Query level unsupported by the model kind.
 */
#define CRL_ERR_UNSUPPORTED 4

/**
 * Value system is singular.
 */
#define CRL_ERR_UNSOLVABLE 5

/**
 * Policy depends on latent state.
 */
#define CRL_ERR_NOT_EXECUTABLE 6

/**
 * Model kinds returned by `crl_model_kind`.
 */
#define CRL_KIND_CBN 0

#define CRL_KIND_SCM 1

#define CRL_KIND_DDN 2

/**
 * An opaque parsed model.
 */
typedef struct CrlModel CrlModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static string; never freed by the caller.
 */
const char *crl_version(void);

/**
 * Message for the most recent error on this thread; valid until the next
 * failing call, never freed by the caller.
 */
const char *crl_last_error(void);

/**
 * Parses model text into a handle. On success stores the handle in `out`
 * and returns `CRL_OK`; the handle must be released with `crl_model_free`.
 * `relax_a3` nonzero permits action-to-state edges within a slice.
 */
int crl_model_parse(const char *text, int relax_a3, struct CrlModel **out);

/**
 * Releases a model handle. A null handle is a no-op.
 */
void crl_model_free(struct CrlModel *model);

/**
 * Model kind (`CRL_KIND_*`), or a negative value on a null handle.
 */
int crl_model_kind(const struct CrlModel *model);

/**
 * Structural checks: acyclicity is implied by a successful parse; for
 * dynamic models the two-slice constraints were verified at parse time, so
 * a live handle always passes.
 */
int crl_model_check(const struct CrlModel *model);

/**
 * Evaluates one probability query (same grammar as the CLI, e.g.
 * `P(SC=1 | CG=1, do(SH=1))`) and stores the exact rational answer as a
 * string in `out_value`; free it with `crl_string_free`. `canonical_scm`
 * nonzero consents to answering counterfactuals on a plain network via the
 * canonical structural conversion.
 */
int crl_query_eval(const struct CrlModel *model,
                   const char *query,
                   int canonical_scm,
                   char **out_value);

/**
 * Frees a string returned by this library. A null pointer is a no-op.
 */
void crl_string_free(char *s);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* CRL_H */

#ifndef HYPERDISC_H
#define HYPERDISC_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum HdStatus {
  HD_STATUS_OK = 0,
  /**
   * Null pointer, invalid UTF-8 or an out-of-range enum value.
   */
  HD_STATUS_INVALID_ARGUMENT = 1,
  HD_STATUS_PARSE = 2,
  HD_STATUS_VALIDATION = 3,
  HD_STATUS_DOMAIN = 4,
  HD_STATUS_LOOKUP = 5,
  HD_STATUS_IO = 6,
  /**
   * A Rust panic was caught at the boundary.
   */
  HD_STATUS_PANIC = 7,
} HdStatus;

typedef enum HdNodeKind {
  HD_NODE_KIND_AUTHOR = 0,
  HD_NODE_KIND_MATERIAL = 1,
  HD_NODE_KIND_PROPERTY = 2,
} HdNodeKind;

typedef enum HdFusionMethod {
  HD_FUSION_METHOD_VDW_Z = 0,
  HD_FUSION_METHOD_GEOMETRIC = 1,
  HD_FUSION_METHOD_HARMONIC = 2,
  HD_FUSION_METHOD_LINEAR_LAMBDA = 3,
} HdFusionMethod;

typedef struct HdCorpus HdCorpus;

typedef struct HdHypergraph HdHypergraph;

typedef struct HdTransition HdTransition;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. The pointer
 * stays valid until the next `hd_*` call on the same thread.
 */
const char *hd_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *hd_version(void);

/**
 * Parses JSON-lines records; `keywords` holds one property keyword per line.
 *
 * # Safety
 * `jsonl` and `keywords` must be NUL-terminated strings; `out` must be writable.
 */
enum HdStatus hd_corpus_parse(const char *jsonl, const char *keywords, struct HdCorpus **out);

/**
 * # Safety
 * `c` must be null or a handle from [`hd_corpus_parse`] not yet freed.
 */
void hd_corpus_free(struct HdCorpus *c);

/**
 * # Safety
 * `c` must be a live corpus handle; `out` must be writable.
 */
enum HdStatus hd_corpus_len(const struct HdCorpus *c, size_t *out);

/**
 * # Safety
 * `c` must be a live corpus handle; `out` must be writable.
 */
enum HdStatus hd_hypergraph_build(const struct HdCorpus *c, struct HdHypergraph **out);

/**
 * # Safety
 * `h` must be null or a live hypergraph handle.
 */
void hd_hypergraph_free(struct HdHypergraph *h);

/**
 * # Safety
 * `h` must be a live hypergraph handle; `out` must be writable.
 */
enum HdStatus hd_hypergraph_node_count(const struct HdHypergraph *h, size_t *out);

/**
 * # Safety
 * `h` must be a live hypergraph handle; `out` must be writable.
 */
enum HdStatus hd_hypergraph_edge_count(const struct HdHypergraph *h, size_t *out);

/**
 * Looks up a node by kind (an `HdNodeKind` value) and label. Returns `Lookup` when absent.
 *
 * # Safety
 * `h` must be a live hypergraph handle, `label` a NUL-terminated string and
 * `out` writable.
 */
enum HdStatus hd_hypergraph_find_node(const struct HdHypergraph *h,
                                      uint32_t kind,
                                      const char *label,
                                      uint32_t *out);

/**
 * # Safety
 * `h` must be a live hypergraph handle; `out` must be writable.
 */
enum HdStatus hd_transition_build(const struct HdHypergraph *h,
                                  bool exclude_self,
                                  struct HdTransition **out);

/**
 * # Safety
 * `t` must be null or a live transition handle.
 */
void hd_transition_free(struct HdTransition *t);

/**
 * Probability of reaching `target` from `source` in `steps` hops whose
 * intermediate nodes are all authors.
 *
 * # Safety
 * `t` must be a live transition handle; `out` must be writable.
 */
enum HdStatus hd_transition_author_mediated(const struct HdTransition *t,
                                            uint32_t source,
                                            uint32_t target,
                                            size_t steps,
                                            double *out);

/**
 * Standard normal quantile; NaN outside [0, 1].
 */
double hd_normal_quantile(double p);

/**
 * Van der Waerden normal scores (average ranks for ties) of `n` values.
 *
 * # Safety
 * `values` and `out` must each point to `n` doubles.
 */
enum HdStatus hd_van_der_waerden(const double *values, size_t n, double *out);

/**
 * Fuses two aligned score vectors of length `n` with an `HdFusionMethod`. Larger fused values rank
 * first.
 *
 * # Safety
 * `s1`, `s2` and `out` must each point to `n` doubles.
 */
enum HdStatus hd_combine_scores(const double *s1,
                                const double *s2,
                                size_t n,
                                double beta,
                                uint32_t method,
                                double *out);

/**
 * Social density of two author-id sets: |A∩B| / (|A|+|B|), or the Jaccard
 * index when `jaccard` is true. Duplicate ids are ignored; 0 when both are
 * empty.
 *
 * # Safety
 * `a` must point to `na` ids and `b` to `nb` ids.
 */
enum HdStatus hd_social_density(const uint32_t *a,
                                size_t na,
                                const uint32_t *b,
                                size_t nb,
                                bool jaccard,
                                double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HYPERDISC_H */

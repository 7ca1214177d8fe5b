#ifndef ALERTLAB_H
#define ALERTLAB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stddef.h>
#include <stdint.h>

typedef enum AlertlabComparator {
  ALERTLAB_COMPARATOR_GT = 0,
  ALERTLAB_COMPARATOR_GE = 1,
  ALERTLAB_COMPARATOR_LT = 2,
  ALERTLAB_COMPARATOR_LE = 3,
} AlertlabComparator;

/**
 * Result code of every fallible call.
 */
typedef enum AlertlabStatus {
  ALERTLAB_STATUS_OK = 0,
  ALERTLAB_STATUS_NULL_ARGUMENT = 1,
  ALERTLAB_STATUS_INVALID_UTF8 = 2,
  ALERTLAB_STATUS_PARSE_ERROR = 3,
  ALERTLAB_STATUS_VALIDATION_ERROR = 4,
  ALERTLAB_STATUS_IO_ERROR = 5,
  ALERTLAB_STATUS_RUNTIME_ERROR = 6,
  ALERTLAB_STATUS_OUT_OF_RANGE = 7,
  ALERTLAB_STATUS_PANIC = 8,
} AlertlabStatus;

/**
 * A parsed alert rule.
 */
typedef struct AlertlabRule AlertlabRule;

/**
 * The result of running an experiment.
 */
typedef struct AlertlabRun AlertlabRun;

/**
 * A validated experiment spec.
 */
typedef struct AlertlabSpec AlertlabSpec;

/**
 * Numeric fields of a parsed rule.
 */
typedef struct AlertlabRuleInfo {
  uint64_t window_seconds;
  uint64_t for_seconds;
  double threshold;
  enum AlertlabComparator comparator;
} AlertlabRuleInfo;

/**
 * Counts from one rule's detection report. `precision` and `recall` are NaN
 * when undefined.
 */
typedef struct AlertlabReportSummary {
  uint64_t tp;
  uint64_t fp;
  uint64_t fn_count;
  uint64_t duplicate_tp;
  uint64_t episodes;
  double precision;
  double recall;
  /**
   * NaN when no unit was detected.
   */
  double median_ttd;
} AlertlabReportSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread, or null. The pointer
 * stays valid until the next alertlab call on the same thread.
 */
const char *alertlab_last_error(void);

/**
 * Library version as a static string.
 */
const char *alertlab_version(void);

void alertlab_string_free(char *s);

enum AlertlabStatus alertlab_rule_parse(const char *text, struct AlertlabRule **out);

void alertlab_rule_free(struct AlertlabRule *rule);

/**
 * Canonical text of the rule.
 */
enum AlertlabStatus alertlab_rule_format(const struct AlertlabRule *rule, char **out);

enum AlertlabStatus alertlab_rule_name(const struct AlertlabRule *rule, char **out);

enum AlertlabStatus alertlab_rule_metric(const struct AlertlabRule *rule, char **out);

enum AlertlabStatus alertlab_rule_info(const struct AlertlabRule *rule,
                                       struct AlertlabRuleInfo *out);

/**
 * Lints a `---`-separated rule file held in memory, treating `errorRate`
 * as a ratio metric. Diagnostics are counted, not returned.
 */
enum AlertlabStatus alertlab_lint(const char *text, size_t *errors, size_t *warnings);

enum AlertlabStatus alertlab_spec_load(const char *path, struct AlertlabSpec **out);

/**
 * Parses a spec from TOML text. Relative replay paths resolve against the
 * current directory.
 */
enum AlertlabStatus alertlab_spec_parse(const char *text, struct AlertlabSpec **out);

void alertlab_spec_free(struct AlertlabSpec *spec);

enum AlertlabStatus alertlab_spec_set_seed(struct AlertlabSpec *spec, uint64_t seed);

/**
 * Hex SHA-256 of the canonical spec.
 */
enum AlertlabStatus alertlab_spec_digest(const struct AlertlabSpec *spec, char **out);

enum AlertlabStatus alertlab_run(const struct AlertlabSpec *spec, struct AlertlabRun **out);

void alertlab_run_free(struct AlertlabRun *run);

enum AlertlabStatus alertlab_run_rule_count(const struct AlertlabRun *run, size_t *out);

enum AlertlabStatus alertlab_run_rule_name(const struct AlertlabRun *run, size_t index, char **out);

enum AlertlabStatus alertlab_run_report_summary(const struct AlertlabRun *run,
                                                size_t index,
                                                struct AlertlabReportSummary *out);

/**
 * The rule's detection report as JSON.
 */
enum AlertlabStatus alertlab_run_report_json(const struct AlertlabRun *run,
                                             size_t index,
                                             char **out);

/**
 * Writes the full output directory for a run.
 */
enum AlertlabStatus alertlab_run_emit(const struct AlertlabRun *run, const char *dir);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ALERTLAB_H */

/* C interface to the MCG attack toolkit. All functionality is reached
 * through an opaque session: set flat-key config overrides, then run one
 * of the pipeline verbs against an optional config file. */
#ifndef MCG_MCG_H
#define MCG_MCG_H

#ifdef __cplusplus
extern "C" {
#endif

typedef struct mcg_session mcg_session;

/* Return codes shared by every fallible call:
 *   0  success
 *   1  runtime failure (data, checkpoint, numerical, ...)
 *   2  configuration error
 *   3  oracle protocol error */
enum {
  MCG_OK = 0,
  MCG_ERR_RUNTIME = 1,
  MCG_ERR_CONFIG = 2,
  MCG_ERR_ORACLE_PROTOCOL = 3
};

const char* mcg_version(void);

mcg_session* mcg_session_new(void);
void mcg_session_free(mcg_session* s);

/* Message of the last failed call on this session; empty string when the
 * last call succeeded. The pointer stays valid until the next call. */
const char* mcg_last_error(const mcg_session* s);

/* Queue a "key=value" config override, applied on top of the config file
 * at run time. Overrides accumulate until the session is freed. */
int mcg_set_option(mcg_session* s, const char* assignment);

/* Run one verb: "zoo-train", "pgd-corpus", "pretrain", "meta-train",
 * "attack", "report" or "curve". config_path may be NULL to run from
 * overrides alone. */
int mcg_run(mcg_session* s, const char* verb, const char* config_path);

#ifdef __cplusplus
}
#endif

#endif /* MCG_MCG_H */

#ifndef KUDOS_H
#define KUDOS_H

/* Generated by cbindgen from crates/ffi. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Result of every call.
 */
typedef enum KudosStatus {
  KUDOS_STATUS_OK = 0,
  KUDOS_STATUS_NULL_ARGUMENT = 1,
  KUDOS_STATUS_INVALID_UTF8 = 2,
  KUDOS_STATUS_INVALID_INPUT = 3,
  KUDOS_STATUS_UNSUPPORTED = 4,
  KUDOS_STATUS_NOT_FOUND = 5,
  KUDOS_STATUS_CONFLICT = 6,
  KUDOS_STATUS_STORAGE = 7,
  KUDOS_STATUS_CORRUPT = 8,
  KUDOS_STATUS_PANIC = 9,
} KudosStatus;

/*
 Opaque ledger handle.
 */
typedef struct KudosLedger KudosLedger;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message for the most recent failure on this thread, or null. The caller
 owns the returned string.
 */
char *kudos_last_error(void);

/*
 Releases a string returned by this library. Null is ignored.

 # Safety
 `s` is null or came from this library and has not been freed.
 */
void kudos_string_free(char *s);

/*
 Scans `text` as `language` ("python", "javascript", "typescript") and
 writes the anchors as a JSON array to `out_json`.

 # Safety
 String arguments are NUL-terminated; `out_json` is valid for writes.
 */
enum KudosStatus kudos_scan(const char *language, const char *text, char **out_json);

/*
 Opens (creating if needed) a ledger file.

 # Safety
 `path` is NUL-terminated; `out` is valid for writes.
 */
enum KudosStatus kudos_ledger_open(const char *path, struct KudosLedger **out);

/*
 Creates a ledger that lives only in memory.

 # Safety
 `out` is valid for writes.
 */
enum KudosStatus kudos_ledger_open_memory(struct KudosLedger **out);

/*
 Releases a ledger handle. Null is ignored.

 # Safety
 `ledger` is null or a handle from this library that has not been freed.
 */
void kudos_ledger_free(struct KudosLedger *ledger);

/*
 Records a thanks given as a JSON object with the event fields except
 `event_id`, and writes the new id to `out_event_id`.

 # Safety
 `ledger` is live; `draft_json` is NUL-terminated; `out_event_id` is valid
 for writes.
 */
enum KudosStatus kudos_ledger_record(const struct KudosLedger *ledger,
                                     const char *draft_json,
                                     char **out_event_id);

/*
 Attaches a personal note to a recorded thanks.

 # Safety
 `ledger` is live; string arguments are NUL-terminated.
 */
enum KudosStatus kudos_ledger_attach_note(const struct KudosLedger *ledger,
                                          const char *event_id,
                                          const char *note);

/*
 Number of events in the ledger.

 # Safety
 `ledger` is live; `out_len` is valid for writes.
 */
enum KudosStatus kudos_ledger_len(const struct KudosLedger *ledger, size_t *out_len);

/*
 Thanked objects in `[start, end)` as a JSON array. Null bounds are open.

 # Safety
 `ledger` is live; `start` and `end` are null or NUL-terminated;
 `out_json` is valid for writes.
 */
enum KudosStatus kudos_ledger_objects(const struct KudosLedger *ledger,
                                      const char *start,
                                      const char *end,
                                      char **out_json);

/*
 All-time statistics for a package as a JSON object.

 # Safety
 `ledger` is live; strings are NUL-terminated; `out_json` is valid for
 writes.
 */
enum KudosStatus kudos_package_stats(const struct KudosLedger *ledger,
                                     const char *ecosystem_name,
                                     const char *package,
                                     char **out_json);

/*
 Badge endpoint document for a package.

 # Safety
 Same as [`kudos_package_stats`].
 */
enum KudosStatus kudos_badge(const struct KudosLedger *ledger,
                             const char *ecosystem_name,
                             const char *package,
                             char **out_json);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* KUDOS_H */

#ifndef GREETER_H
#define GREETER_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum GreeterStatus {
  GREETER_STATUS_OK = 0,
  GREETER_STATUS_NULL_POINTER = 1,
  GREETER_STATUS_INVALID_ARGUMENT = 2,
  GREETER_STATUS_NO_FACE = 3,
  GREETER_STATUS_STORAGE = 4,
  GREETER_STATUS_UNREACHABLE = 5,
  GREETER_STATUS_BUFFER_TOO_SMALL = 6,
  GREETER_STATUS_PANIC = 7,
} GreeterStatus;

typedef struct GreeterCostmap GreeterCostmap;

typedef struct GreeterEndpointer GreeterEndpointer;

typedef struct GreeterPath GreeterPath;

typedef struct GreeterRecognizer GreeterRecognizer;

typedef struct GreeterLatencyParams {
  double recording_duration;
  double chunk_duration;
  double upload_rate;
  double per_message_overhead;
  double per_chunk_processing;
  double finalization;
} GreeterLatencyParams;

typedef struct GreeterPose {
  double x;
  double y;
  double theta;
} GreeterPose;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Latest error message on this thread. Writes at most `len` bytes.
 *
 * # Safety
 * `buf` must be valid for `len` bytes; `needed` may be null.
 */
enum GreeterStatus greeter_last_error(char *buf, size_t len, size_t *needed);

/**
 * Default timing (0.2 s calibration, 1 s window, 0.2 s shift) with the given
 * tolerance and recording cap.
 *
 * # Safety
 * `out` must be valid for writing.
 */
enum GreeterStatus greeter_endpointer_new(double epsilon,
                                          double max_duration,
                                          struct GreeterEndpointer **out);

/**
 * Feeds the next `n` samples. `stop_time` receives the stop time in
 * seconds once the speaker has stopped, and a negative value before that.
 *
 * # Safety
 * `ep` must come from [`greeter_endpointer_new`]; `samples` must hold `n`
 * values.
 */
enum GreeterStatus greeter_endpointer_feed(struct GreeterEndpointer *ep,
                                           const int16_t *samples,
                                           size_t n,
                                           uint32_t sample_rate,
                                           double *stop_time);

/**
 * # Safety
 * `ep` must come from [`greeter_endpointer_new`] or be null.
 */
void greeter_endpointer_free(struct GreeterEndpointer *ep);

/**
 * Completion time of recognition after recording starts, for streamed
 * (`streaming` != 0) or whole-file upload.
 *
 * # Safety
 * `params` and `out` must be valid.
 */
enum GreeterStatus greeter_simulate_latency(const struct GreeterLatencyParams *params,
                                            int32_t streaming,
                                            double *out);

/**
 * Recognizer with an empty in-memory gallery.
 *
 * # Safety
 * `out` must be valid for writing.
 */
enum GreeterStatus greeter_recognizer_new(struct GreeterRecognizer **out);

/**
 * Recognizer backed by a gallery file; enrollments are written back to it.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be valid.
 */
enum GreeterStatus greeter_recognizer_open(const char *path, struct GreeterRecognizer **out);

/**
 * Enrolls the biggest face in an 8-bit grayscale image; the new entry id is
 * copied to `entry_id`.
 *
 * # Safety
 * `pixels` must hold `width * height` bytes; `label` must be NUL-terminated;
 * `entry_id` must be valid for `len` bytes.
 */
enum GreeterStatus greeter_recognizer_enroll(struct GreeterRecognizer *r,
                                             const uint8_t *pixels,
                                             uint32_t width,
                                             uint32_t height,
                                             const char *label,
                                             char *entry_id,
                                             size_t len);

/**
 * Identifies the biggest face. `known` is set to 1 when the best match
 * reaches `threshold`, in which case its label goes to `label`.
 *
 * # Safety
 * As for [`greeter_recognizer_enroll`]; `known` and `confidence` must be
 * valid.
 */
enum GreeterStatus greeter_recognizer_identify(const struct GreeterRecognizer *r,
                                               const uint8_t *pixels,
                                               uint32_t width,
                                               uint32_t height,
                                               double threshold,
                                               int32_t *known,
                                               double *confidence,
                                               char *label,
                                               size_t len);

/**
 * Number of enrolled entries.
 *
 * # Safety
 * `r` must be a live recognizer handle.
 */
size_t greeter_recognizer_len(const struct GreeterRecognizer *r);

/**
 * Writes the gallery as JSON.
 *
 * # Safety
 * `r` must be live; `path` must be NUL-terminated.
 */
enum GreeterStatus greeter_recognizer_save(const struct GreeterRecognizer *r, const char *path);

/**
 * # Safety
 * `r` must come from a recognizer constructor or be null.
 */
void greeter_recognizer_free(struct GreeterRecognizer *r);

/**
 * Inflated costmap from a row-major occupancy mask (row 0 at the bottom,
 * nonzero = occupied) with its origin at (0, 0).
 *
 * # Safety
 * `occupied` must hold `width * height` bytes; `out` must be valid.
 */
enum GreeterStatus greeter_costmap_new(const uint8_t *occupied,
                                       size_t width,
                                       size_t height,
                                       double resolution,
                                       double inflation_radius,
                                       double decay,
                                       struct GreeterCostmap **out);

/**
 * Cost of one cell (255 = lethal).
 *
 * # Safety
 * `c` must be live; `out` must be valid.
 */
enum GreeterStatus greeter_costmap_cost(const struct GreeterCostmap *c,
                                        size_t col,
                                        size_t row,
                                        uint8_t *out);

/**
 * Minimum-cost eight-connected path.
 *
 * # Safety
 * `c` must be live; `start`, `goal`, `out` must be valid.
 */
enum GreeterStatus greeter_plan(const struct GreeterCostmap *c,
                                const struct GreeterPose *start,
                                const struct GreeterPose *goal,
                                struct GreeterPath **out);

/**
 * # Safety
 * `p` must be a live path handle.
 */
size_t greeter_path_len(const struct GreeterPath *p);

/**
 * Accumulated edge cost in cell units.
 *
 * # Safety
 * `p` must be a live path handle.
 */
double greeter_path_cost(const struct GreeterPath *p);

/**
 * # Safety
 * `p` must be live; `out` must be valid.
 */
enum GreeterStatus greeter_path_waypoint(const struct GreeterPath *p,
                                         size_t i,
                                         struct GreeterPose *out);

/**
 * # Safety
 * `p` must come from [`greeter_plan`] or be null.
 */
void greeter_path_free(struct GreeterPath *p);

/**
 * # Safety
 * `c` must come from [`greeter_costmap_new`] or be null.
 */
void greeter_costmap_free(struct GreeterCostmap *c);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GREETER_H */

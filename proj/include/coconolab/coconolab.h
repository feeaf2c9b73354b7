#ifndef COCONOLAB_COCONOLAB_H
#define COCONOLAB_COCONOLAB_H

/* C interface to coconolab. Every call returns a status; on failure a
 * description is available from coconolab_last_error() on the same thread.
 * Strings returned through char** out-parameters are owned by the caller and
 * released with coconolab_string_free. Handles are immutable once created
 * and may be shared between threads. */

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define COCONOLAB_API __declspec(dllexport)
#elif defined(__GNUC__)
#define COCONOLAB_API __attribute__((visibility("default")))
#else
#define COCONOLAB_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum coconolab_status {
  COCONOLAB_OK = 0,
  COCONOLAB_INVALID_ARGUMENT = 1,
  COCONOLAB_SHAPE_MISMATCH = 2,
  COCONOLAB_DEGENERATE_INPUT = 3,
  COCONOLAB_CONVERGENCE_FAILURE = 4,
  COCONOLAB_IO_ERROR = 5,
  COCONOLAB_BAD_MAGIC = 6,
  COCONOLAB_UNSUPPORTED_VERSION = 7,
  COCONOLAB_TRUNCATED = 8,
  COCONOLAB_DUPLICATE_NAME = 9,
  COCONOLAB_MALFORMED = 10,
  COCONOLAB_PRODUCER_FAILURE = 11,
  COCONOLAB_NON_FINITE = 12,
  COCONOLAB_INTERNAL = 99
} coconolab_status;

COCONOLAB_API const char* coconolab_version(void);
COCONOLAB_API const char* coconolab_status_name(coconolab_status status);
/* Message of the last failed call on this thread; empty after a success. */
COCONOLAB_API const char* coconolab_last_error(void);
COCONOLAB_API void coconolab_string_free(char* s);

/* ---- scenarios ---------------------------------------------------------- */

typedef struct coconolab_scenario coconolab_scenario;

/* kind: "aligned", "neglect" or "interference"; latent_dim 0 means 2n. */
COCONOLAB_API coconolab_status coconolab_scenario_create(const char* kind, size_t n_subjects, size_t r,
                                                         size_t latent_dim, coconolab_scenario** out);
COCONOLAB_API coconolab_status coconolab_scenario_from_json(const char* json, coconolab_scenario** out);
COCONOLAB_API coconolab_status coconolab_scenario_to_json(const coconolab_scenario* scenario, char** out_json);
COCONOLAB_API void coconolab_scenario_destroy(coconolab_scenario* scenario);

/* ---- producers ---------------------------------------------------------- */

typedef struct coconolab_producer coconolab_producer;

/* Cross maps are laid out cell-major, cross[c * n + j] for cell c = row * r + col
 * and subject j; self is (r*r) x (r*r) row-major. */
typedef struct coconolab_producer_callbacks {
  void* user;
  size_t dimension;
  size_t r;
  size_t n_subjects;
  /* Fill cross (r*r*n) and self (r^4) for latent z; return 0 on success. */
  int (*evaluate)(void* user, const double* z, double* cross, double* self);
  /* Write d<cotangent, evaluate(z)>/dz into grad (dimension); may be NULL,
   * which makes the producer non-differentiable. */
  int (*vjp)(void* user, const double* z, const double* cross_cotangent, const double* self_cotangent,
             double* grad);
} coconolab_producer_callbacks;

COCONOLAB_API coconolab_status coconolab_producer_from_scenario(const coconolab_scenario* scenario,
                                                                coconolab_producer** out);
/* A non-differentiable producer serving the bundle in an ATNZ file;
 * latent_dim 0 means 2n. */
COCONOLAB_API coconolab_status coconolab_producer_from_atnz(const char* path, size_t latent_dim,
                                                            coconolab_producer** out);
COCONOLAB_API coconolab_status coconolab_producer_from_callbacks(const coconolab_producer_callbacks* callbacks,
                                                                 coconolab_producer** out);
COCONOLAB_API coconolab_status coconolab_producer_shape(const coconolab_producer* producer, size_t* dimension,
                                                        size_t* r, size_t* n_subjects);
COCONOLAB_API coconolab_status coconolab_producer_evaluate(const coconolab_producer* producer, const double* z,
                                                           size_t dimension, double* cross, size_t cross_len,
                                                           double* self, size_t self_len);
COCONOLAB_API void coconolab_producer_destroy(coconolab_producer* producer);

/* ---- losses ------------------------------------------------------------- */

/* Loss report (JSON) for one bundle at mu = 0, sigma = 1. weights_json and
 * loss_json may be NULL for defaults. */
COCONOLAB_API coconolab_status coconolab_evaluate_bundle(size_t r, size_t n_subjects, const double* cross,
                                                         const double* self, const char* weights_json,
                                                         const char* loss_json, char** out_json);

/* ---- optimization ------------------------------------------------------- */

typedef struct coconolab_result coconolab_result;

/* config_json holds optional "optimizer", "weights", "loss" and "seed" keys;
 * NULL selects defaults. */
COCONOLAB_API coconolab_status coconolab_optimize(const coconolab_producer* producer, const char* config_json,
                                                  coconolab_result** out);
COCONOLAB_API int coconolab_result_converged(const coconolab_result* result);
COCONOLAB_API coconolab_status coconolab_result_report(const coconolab_result* result, char** out_json);
COCONOLAB_API coconolab_status coconolab_result_best_latent(const coconolab_result* result, double* z,
                                                            size_t dimension);
COCONOLAB_API coconolab_status coconolab_result_write_atnz(const coconolab_result* result, const char* path);
COCONOLAB_API void coconolab_result_destroy(coconolab_result* result);

/* ---- commands ------------------------------------------------------------
 * Each takes a JSON request and returns a JSON document. */

/* {"config": run config, "dump": path?, "num_seeds": k?}; *converged is set to
 * 1 when every run converged. */
COCONOLAB_API coconolab_status coconolab_run_optimize(const char* request_json, char** out_json, int* converged);
/* {"atnz": path, "n_subjects": n, "weights"?: {...}, "loss"?: {...}} */
COCONOLAB_API coconolab_status coconolab_run_evaluate(const char* request_json, char** out_json);
/* {"atnz": path, "out_dir": path, "scale"?: k, "loss"?: {...}} */
COCONOLAB_API coconolab_status coconolab_run_render(const char* request_json, char** out_json);
/* {"scenario": {...}, "seed": s, "steps"?: [h...], "sigma"?: x, "weights"?: {...}};
 * *passed is set to 1 when every relative error is below tolerance. */
COCONOLAB_API coconolab_status coconolab_run_gradcheck(const char* request_json, char** out_json, int* passed);
/* {"scenario": {...}, "seed"?: s, "sample"?: bool, "with_masks"?: bool, "out": path} */
COCONOLAB_API coconolab_status coconolab_run_export(const char* request_json, char** out_json);

#ifdef __cplusplus
}
#endif

#endif

#ifndef RFUSE_RFUSE_H
#define RFUSE_RFUSE_H

/* C interface to the rfuse library. Every function that can fail returns an
 * rfuse_status; on failure rfuse_last_error() describes the problem for the
 * calling thread. Objects returned through out-parameters are owned by the
 * caller and released with the matching *_free function. */

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(RFUSE_BUILDING_LIBRARY)
#    define RFUSE_API __declspec(dllexport)
#  else
#    define RFUSE_API __declspec(dllimport)
#  endif
#else
#  define RFUSE_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum rfuse_status {
  RFUSE_OK = 0,
  RFUSE_NOT_CONVERGED = 1,
  RFUSE_INVALID_ARGUMENT = 2,
  RFUSE_INVALID_PROBLEM = 3,
  RFUSE_INVALID_WEIGHTING = 4,
  RFUSE_MISSING_COVARIANCE = 5,
  RFUSE_SINGULAR_SYSTEM = 6,
  RFUSE_INVALID_COVARIANCE = 7,
  RFUSE_INVALID_CONTRAST = 8,
  RFUSE_EMPTY_SELECTION = 9,
  RFUSE_INVALID_DESIGN = 10,
  RFUSE_PARSE_ERROR = 11,
  RFUSE_DIMENSION_MISMATCH = 12,
  RFUSE_NON_SPD_COVARIANCE = 13,
  RFUSE_IO_ERROR = 14,
  RFUSE_IDENTIFICATION_FAILURE = 15,
  RFUSE_INVALID_GROUND_TRUTH = 16,
  RFUSE_INTERNAL_ERROR = 99
} rfuse_status;

typedef enum rfuse_format {
  RFUSE_FORMAT_AUTO = 0, /* from the file extension */
  RFUSE_FORMAT_CSV = 1,
  RFUSE_FORMAT_JSON = 2
} rfuse_format;

typedef enum rfuse_weighting {
  RFUSE_VK_IDENTITY = 0,
  RFUSE_VK_INVCOV = 1
} rfuse_weighting;

typedef struct rfuse_problem rfuse_problem;
typedef struct rfuse_fit rfuse_fit;

RFUSE_API const char* rfuse_version(void);
RFUSE_API const char* rfuse_status_string(rfuse_status status);
/* Message for the most recent failure on this thread; never NULL. */
RFUSE_API const char* rfuse_last_error(void);

/* ---- problems ---- */

RFUSE_API rfuse_status rfuse_problem_load(const char* path, rfuse_format format,
                                          rfuse_weighting weighting, rfuse_problem** out);

/* theta is K*d row-major. ids and cov_tril may be NULL; cov_tril holds
 * K*d*(d+1)/2 values, each source's lower triangle in row-major order. */
RFUSE_API rfuse_status rfuse_problem_create(size_t num_sources, size_t dim,
                                            const char* const* ids, const int64_t* n,
                                            const double* theta, const double* cov_tril,
                                            rfuse_weighting weighting, rfuse_problem** out);

RFUSE_API rfuse_status rfuse_problem_write(const rfuse_problem* problem, const char* path,
                                           rfuse_format format);
RFUSE_API size_t rfuse_problem_num_sources(const rfuse_problem* problem);
RFUSE_API size_t rfuse_problem_dim(const rfuse_problem* problem);
RFUSE_API const char* rfuse_problem_source_id(const rfuse_problem* problem, size_t k);
RFUSE_API void rfuse_problem_free(rfuse_problem* problem);

/* ---- fusion ---- */

typedef struct rfuse_fuse_options {
  double lambda_c; /* lambda = lambda_c / total n */
  double alpha;    /* adaptive weight exponent */
  double tol;
  int max_iter; /* penalized solver sweep cap */
  double level; /* interval level */
} rfuse_fuse_options;

RFUSE_API void rfuse_fuse_options_default(rfuse_fuse_options* options);

/* Returns RFUSE_NOT_CONVERGED with *out still set when a solver stopped at
 * its iteration cap; the fit then holds the last iterate. */
RFUSE_API rfuse_status rfuse_fuse(const rfuse_problem* problem, const rfuse_fuse_options* options,
                                  rfuse_fit** out);

RFUSE_API int rfuse_fit_converged(const rfuse_fit* fit);
RFUSE_API size_t rfuse_fit_dim(const rfuse_fit* fit);
RFUSE_API rfuse_status rfuse_fit_theta_hat(const rfuse_fit* fit, double* out, size_t len);
RFUSE_API rfuse_status rfuse_fit_theta_initial(const rfuse_fit* fit, double* out, size_t len);
RFUSE_API rfuse_status rfuse_fit_bias(const rfuse_fit* fit, size_t k, double* out, size_t len);
RFUSE_API size_t rfuse_fit_num_selected(const rfuse_fit* fit);
/* Writes up to len selected source indices (0-based, ascending). */
RFUSE_API size_t rfuse_fit_selected(const rfuse_fit* fit, size_t* out, size_t len);
RFUSE_API int rfuse_fit_has_inference(const rfuse_fit* fit);
RFUSE_API rfuse_status rfuse_fit_interval(const rfuse_fit* fit, size_t coord, double* lower,
                                          double* upper);
/* d*d row-major covariance of the fused estimate. */
RFUSE_API rfuse_status rfuse_fit_cov(const rfuse_fit* fit, double* out, size_t len);
RFUSE_API int rfuse_fit_iterations(const rfuse_fit* fit);
RFUSE_API double rfuse_fit_kkt_residual(const rfuse_fit* fit);
RFUSE_API double rfuse_fit_lambda(const rfuse_fit* fit);
/* Human-readable (as_json = 0) or JSON report; free with rfuse_string_free. */
RFUSE_API rfuse_status rfuse_fit_report(const rfuse_fit* fit, int as_json, char** out);
RFUSE_API void rfuse_fit_free(rfuse_fit* fit);

/* ---- simulation ---- */

typedef struct rfuse_sim_options {
  const char* design; /* table1..table5 or counterexample */
  int d;              /* 0 keeps the design default */
  int K;
  int n_star;
  int replicates;
  uint64_t seed;
  int threads;
  double lambda_c;
  double alpha;
  rfuse_weighting weighting;
  int total_n; /* counterexample */
  double tau;  /* counterexample */
  double level;
  int lambda_sweep; /* nonzero: run lambda_c in {0.5, 1, 2, 5} */
  int pretty;       /* nonzero: tables instead of CSV */
} rfuse_sim_options;

RFUSE_API void rfuse_sim_options_default(rfuse_sim_options* options);
RFUSE_API rfuse_status rfuse_simulate(const rfuse_sim_options* options, char** out);

RFUSE_API void rfuse_string_free(char* str);

#ifdef __cplusplus
}
#endif

#endif /* RFUSE_RFUSE_H */

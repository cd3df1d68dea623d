/*
 * Copyright 2026 The aqsim Authors
 * SPDX-License-Identifier: Apache-2.0
 */

#ifndef AQSIM_H
#define AQSIM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum {
  AQSIM_STATUS_OK = 0,
  AQSIM_STATUS_NULL_POINTER = 1,
  AQSIM_STATUS_INVALID_UTF8 = 2,
  AQSIM_STATUS_CONFIG_ERROR = 3,
  AQSIM_STATUS_INVALID_ARGUMENT = 4,
  AQSIM_STATUS_CAPACITY_EXCEEDED = 5,
  AQSIM_STATUS_NOT_FOUND = 6,
  AQSIM_STATUS_BUFFER_TOO_SMALL = 7,
  AQSIM_STATUS_RUN_FAILED = 8,
  AQSIM_STATUS_PANIC = 99,
} AqsimStatus;

/**
 * Admission controller kinds, passed as `uint32_t`.
 */
enum AqsimControllerKind
#if defined(__cplusplus) || __STDC_VERSION__ >= 202311L
  : uint32_t
#endif // defined(__cplusplus) || __STDC_VERSION__ >= 202311L
 {
  AQSIM_CONTROLLER_KIND_NONE = 0,
  AQSIM_CONTROLLER_KIND_QUALITY_PID = 1,
  AQSIM_CONTROLLER_KIND_TIMEOUT_FREQ_PID = 2,
  AQSIM_CONTROLLER_KIND_NO_SHARING = 3,
  AQSIM_CONTROLLER_KIND_FULL_SHARING = 4,
};
#ifndef __cplusplus
#if __STDC_VERSION__ >= 202311L
typedef enum AqsimControllerKind AqsimControllerKind;
#else
typedef uint32_t AqsimControllerKind;
#endif // __STDC_VERSION__ >= 202311L
#endif // __cplusplus

/**
 * Query priorities, passed as `uint32_t`.
 */
enum AqsimPriority
#if defined(__cplusplus) || __STDC_VERSION__ >= 202311L
  : uint32_t
#endif // defined(__cplusplus) || __STDC_VERSION__ >= 202311L
 {
  AQSIM_PRIORITY_LOW = 0,
  AQSIM_PRIORITY_HIGH = 1,
};
#ifndef __cplusplus
#if __STDC_VERSION__ >= 202311L
typedef enum AqsimPriority AqsimPriority;
#else
typedef uint32_t AqsimPriority;
#endif // __STDC_VERSION__ >= 202311L
#endif // __cplusplus

/**
 * A memo cache of recorded replies.
 */
typedef struct AqsimCache AqsimCache;

/**
 * A parsed run configuration.
 */
typedef struct AqsimConfig AqsimConfig;

/**
 * An admission controller with its own random stream.
 */
typedef struct AqsimController AqsimController;

/**
 * Controller tuning. Fill with [`aqsim_controller_params_default`] first.
 */
typedef struct {
  double target;
  double kp;
  double ki;
  double kd;
  double integral_limit;
  uint64_t evaluation_interval;
  uint64_t quality_window;
} AqsimControllerParams;

/**
 * Headline numbers of a run. Undefined ratios are NaN.
 */
typedef struct {
  uint64_t queries;
  uint64_t admitted;
  uint64_t low_admitted;
  uint64_t sampled;
  uint64_t mature_success;
  uint64_t mature_failed;
  double throughput;
  double mature_failure_rate;
  double mean_quality;
  double timeout_frequency;
} AqsimRunSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *aqsim_version(void);

/**
 * Length in bytes of this thread's last error message, 0 if none.
 */
size_t aqsim_last_error_length(void);

/**
 * Copies this thread's last error message into `buf` (truncated to
 * `capacity - 1` bytes, always NUL-terminated when `capacity > 0`).
 * Returns the full message length.
 */
size_t aqsim_last_error_message(char *buf, size_t capacity);

/**
 * Parses a configuration document.
 */
AqsimStatus aqsim_config_parse(const char *text, AqsimConfig **out);

void aqsim_config_free(AqsimConfig *config);

AqsimStatus aqsim_config_set_seed(AqsimConfig *config, uint64_t seed);

/**
 * Overrides the sampling rate, e.g. `"20%"` or `"8 per minute"`.
 */
AqsimStatus aqsim_config_set_samples(AqsimConfig *config, const char *samples);

/**
 * True positive rate of an online answer against a mature one, both given
 * as item ids. Duplicate ids are an error.
 */
AqsimStatus aqsim_tpr(const uint64_t *online,
                      size_t online_len,
                      const uint64_t *mature,
                      size_t mature_len,
                      double *out);

/**
 * Creates a cache holding at most `capacity_bytes` whose entries live `ttl_ns`.
 */
AqsimStatus aqsim_cache_new(uint64_t capacity_bytes, uint64_t ttl_ns, AqsimCache **out);

void aqsim_cache_free(AqsimCache *cache);

/**
 * Appends one reply under the 128-bit key `(key_hi, key_lo)`. On
 * `CapacityExceeded` the whole entry for the key has been dropped.
 */
AqsimStatus aqsim_cache_append(const AqsimCache *cache,
                               uint64_t key_hi,
                               uint64_t key_lo,
                               uint64_t context,
                               const uint8_t *data,
                               size_t len,
                               uint64_t now_ns);

/**
 * Number of replies recorded under the key; 0 when absent or expired.
 */
AqsimStatus aqsim_cache_reply_count(const AqsimCache *cache,
                                    uint64_t key_hi,
                                    uint64_t key_lo,
                                    uint64_t now_ns,
                                    size_t *out);

/**
 * Copies reply `index` of the key into `buf`. `out_len` always receives the
 * reply's length; `BufferTooSmall` is returned if it exceeds `capacity`.
 */
AqsimStatus aqsim_cache_copy_reply(const AqsimCache *cache,
                                   uint64_t key_hi,
                                   uint64_t key_lo,
                                   uint64_t now_ns,
                                   size_t index,
                                   uint8_t *buf,
                                   size_t capacity,
                                   size_t *out_len);

AqsimStatus aqsim_cache_used_bytes(const AqsimCache *cache, uint64_t *out);

/**
 * Drops expired entries; `removed` (nullable) receives how many.
 */
AqsimStatus aqsim_cache_evict_expired(const AqsimCache *cache, uint64_t now_ns, size_t *removed);

AqsimStatus aqsim_controller_params_default(AqsimControllerParams *out);

/**
 * Creates an admission controller; `kind` is an [`AqsimControllerKind`].
 */
AqsimStatus aqsim_controller_new(uint32_t kind,
                                 const AqsimControllerParams *params,
                                 uint64_t seed,
                                 AqsimController **out);

void aqsim_controller_free(AqsimController *controller);

/**
 * Feeds one answer-quality sample in [0, 1].
 */
AqsimStatus aqsim_controller_observe_quality(AqsimController *controller, double score);

/**
 * Feeds one completed online execution.
 */
AqsimStatus aqsim_controller_observe_online(AqsimController *controller, bool had_timeout);

/**
 * Admission decision for an arriving query; `priority` is an [`AqsimPriority`].
 */
AqsimStatus aqsim_controller_admit(AqsimController *controller,
                                   uint32_t priority,
                                   uint64_t now_ns,
                                   bool *admitted);

AqsimStatus aqsim_controller_shed_probability(const AqsimController *controller, double *out);

/**
 * Runs one experiment. `mode` and `controller` are names as accepted by the
 * CLI (`"ubora"`, `"quality-pid"`, ...). When `out_dir` is non-null the run
 * artifacts are written there.
 */
AqsimStatus aqsim_run(const AqsimConfig *config,
                      const char *mode,
                      const char *controller,
                      const char *out_dir,
                      AqsimRunSummary *summary);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* AQSIM_H */

#ifndef ADVPAINT_ADVPAINT_H
#define ADVPAINT_ADVPAINT_H

#include <stddef.h>
#include <stdint.h>

#if defined(ADVPAINT_BUILDING)
#define ADVPAINT_API __attribute__((visibility("default")))
#else
#define ADVPAINT_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Status codes. Every fallible call returns one; on failure the message for
   the calling thread is available from advpaint_last_error(). */
typedef enum advpaint_status {
  ADVPAINT_OK = 0,
  ADVPAINT_E_INVALID_ARGUMENT = 1,
  ADVPAINT_E_DIMENSION = 2,
  ADVPAINT_E_CONTRACT = 3,
  ADVPAINT_E_NUMERIC = 4,
  ADVPAINT_E_CONFIG = 5,
  ADVPAINT_E_IO = 6,
  ADVPAINT_E_FORMAT = 7,
  ADVPAINT_E_TRUNCATED = 8,
  ADVPAINT_E_BAD_MAGIC = 9,
  ADVPAINT_E_BAD_VERSION = 10,
  ADVPAINT_E_DUPLICATE_NAME = 11,
  ADVPAINT_E_SIZE_OVERFLOW = 12,
  ADVPAINT_E_CHECKPOINT = 13,
  ADVPAINT_E_TRAINING = 14,
  ADVPAINT_E_ATTACK = 15,
  ADVPAINT_E_NULL_POINTER = 16,
  ADVPAINT_E_INTERNAL = 99
} advpaint_status;

ADVPAINT_API const char* advpaint_version(void);
ADVPAINT_API const char* advpaint_status_name(advpaint_status status);
/* Message of the last failed call on this thread; "" if none. */
ADVPAINT_API const char* advpaint_last_error(void);

/* ---- images ------------------------------------------------------------ */

/* C x H x W array of doubles, row-major. Masks are 1 x H x W with
   1 = keep and 0 = hole. */
typedef struct advpaint_image advpaint_image;

ADVPAINT_API advpaint_status advpaint_image_create(size_t channels, size_t height, size_t width,
                                                   const double* data, advpaint_image** out);
/* Reads binary PPM (P6) or PGM (P5); header comments are kept. */
ADVPAINT_API advpaint_status advpaint_image_read(const char* path, advpaint_image** out);
/* Writes P6 for 3 channels, P5 for 1; comment may be NULL. */
ADVPAINT_API advpaint_status advpaint_image_write(const advpaint_image* image, const char* path,
                                                  const char* comment);
ADVPAINT_API void advpaint_image_free(advpaint_image* image);
ADVPAINT_API size_t advpaint_image_channels(const advpaint_image* image);
ADVPAINT_API size_t advpaint_image_height(const advpaint_image* image);
ADVPAINT_API size_t advpaint_image_width(const advpaint_image* image);
ADVPAINT_API const double* advpaint_image_data(const advpaint_image* image);
ADVPAINT_API size_t advpaint_image_comment_count(const advpaint_image* image);
ADVPAINT_API const char* advpaint_image_comment(const advpaint_image* image, size_t index);
ADVPAINT_API double advpaint_psnr(const advpaint_image* a, const advpaint_image* b);

/* ---- configuration ----------------------------------------------------- */

typedef struct advpaint_train_config {
  size_t steps;
  size_t batch_size;
  double learning_rate;
  double beta1;
  double beta2;
  double adam_eps;
  double cond_dropout;
  uint64_t seed;
  size_t checkpoint_every;
} advpaint_train_config;

typedef struct advpaint_attack_config {
  double eta;
  double alpha0;
  size_t iters;
  const char* objective; /* attn, cross-only, self-only, noise-max, noise-min, latent-min */
  const char* stages;    /* single, two, multi */
  double rho;
  int64_t timestep; /* < 0: last training timestep */
  uint64_t seed;
  const int* layers; /* 1-based block indices; NULL or 0 entries: all */
  size_t layer_count;
  const int* prompt; /* conditioning tokens of the attack pass; empty: null prompt */
  size_t prompt_length;
} advpaint_attack_config;

typedef struct advpaint_sampler_config {
  size_t inference_steps;
  double guidance_scale;
  uint64_t seed;
  int clip_sample;
} advpaint_sampler_config;

ADVPAINT_API void advpaint_train_config_init(advpaint_train_config* config);
ADVPAINT_API void advpaint_attack_config_init(advpaint_attack_config* config);
ADVPAINT_API void advpaint_sampler_config_init(advpaint_sampler_config* config);

/* Applies the train/attack/sampler sections of a JSON run config on top of
   the given structs; any of them may be NULL. Unknown keys are rejected.
   String fields written into attack point into storage owned by the library
   and stay valid until the next call on the same thread. */
ADVPAINT_API advpaint_status advpaint_config_load(const char* path, advpaint_train_config* train,
                                                  advpaint_attack_config* attack,
                                                  advpaint_sampler_config* sampler);

/* Parses "x0,y0,x1,y1[,x0,y0,x1,y1...]" into boxes (4 ints each). Pass
   boxes = NULL to query the count. */
ADVPAINT_API advpaint_status advpaint_parse_boxes(const char* text, int* boxes, size_t capacity,
                                                  size_t* box_count);
/* Parses "1,4" or "1 4"; "" or "null" yields zero tokens. */
ADVPAINT_API advpaint_status advpaint_parse_prompt(const char* text, int* tokens, size_t capacity,
                                                   size_t* length);

/* ---- data and training ------------------------------------------------- */

ADVPAINT_API advpaint_status advpaint_dataset_generate(const char* out_dir, size_t count,
                                                       uint64_t seed, size_t image_size);

/* Called after every training step. */
typedef void (*advpaint_train_progress_fn)(size_t step, double loss, void* user);

typedef struct advpaint_model advpaint_model;

/* model_preset: "standard" or "toy". out_path may be NULL (no files). */
ADVPAINT_API advpaint_status advpaint_train(const char* data_dir, const char* model_preset,
                                            const advpaint_train_config* config,
                                            const char* out_path,
                                            advpaint_train_progress_fn progress, void* user,
                                            advpaint_model** out);
ADVPAINT_API advpaint_status advpaint_model_load(const char* path, advpaint_model** out);
ADVPAINT_API advpaint_status advpaint_model_save(const advpaint_model* model, const char* path);
ADVPAINT_API void advpaint_model_free(advpaint_model* model);
ADVPAINT_API uint64_t advpaint_model_train_step(const advpaint_model* model);
ADVPAINT_API size_t advpaint_model_parameter_count(const advpaint_model* model);
ADVPAINT_API size_t advpaint_model_image_size(const advpaint_model* model);

/* ---- protection -------------------------------------------------------- */

typedef struct advpaint_protection advpaint_protection;

/* Called after every PGD update with the running perturbation and image. */
typedef void (*advpaint_iteration_fn)(size_t stage, size_t iteration, const double* delta,
                                      const double* adversarial, size_t count, void* user);

/* boxes holds box_count boxes of 4 ints (x0, y0, x1, y1, end-exclusive). */
ADVPAINT_API advpaint_status advpaint_protect(const advpaint_model* model,
                                              const advpaint_image* image, const int* boxes,
                                              size_t box_count,
                                              const advpaint_attack_config* config,
                                              advpaint_iteration_fn hook, void* user,
                                              advpaint_protection** out);
ADVPAINT_API void advpaint_protection_free(advpaint_protection* protection);
/* Borrowed views, valid while the protection lives. */
ADVPAINT_API const advpaint_image* advpaint_protection_adversarial(const advpaint_protection* p);
ADVPAINT_API const advpaint_image* advpaint_protection_delta(const advpaint_protection* p);
ADVPAINT_API const advpaint_image* advpaint_protection_initial_delta(const advpaint_protection* p);
ADVPAINT_API size_t advpaint_protection_stage_count(const advpaint_protection* p);
ADVPAINT_API const char* advpaint_protection_stage_label(const advpaint_protection* p, size_t stage);
/* Loss before each update; length = iterations. */
ADVPAINT_API const double* advpaint_protection_stage_losses(const advpaint_protection* p,
                                                            size_t stage, size_t* length);
ADVPAINT_API double advpaint_protection_stage_final_loss(const advpaint_protection* p, size_t stage);
/* Full-precision tensor container with delta, adversarial image and traces. */
ADVPAINT_API advpaint_status advpaint_protection_save(const advpaint_protection* p,
                                                      const char* path);

/* ---- inpainting and analysis ------------------------------------------- */

ADVPAINT_API advpaint_status advpaint_inpaint(const advpaint_model* model,
                                              const advpaint_image* image,
                                              const advpaint_image* mask, const int* prompt,
                                              size_t prompt_length,
                                              const advpaint_sampler_config* config,
                                              advpaint_image** out);

/* 16 x 16 principal-component heat map of one block's attention output.
   branch: "self" or "cross"; layer 1-based; timestep < 0: last training
   timestep. degenerate (may be NULL) is set to 1 for flat features. */
ADVPAINT_API advpaint_status advpaint_attention_map(const advpaint_model* model,
                                                    const advpaint_image* image,
                                                    const advpaint_image* mask, const int* prompt,
                                                    size_t prompt_length, size_t layer,
                                                    const char* branch, int64_t timestep,
                                                    uint64_t seed, advpaint_image** out,
                                                    int* degenerate);

/* Runs an experiment plan and writes rows.csv and summary.json to out_dir. */
ADVPAINT_API advpaint_status advpaint_evaluate(const advpaint_model* model, const char* plan_path,
                                               const char* out_dir, size_t* rows,
                                               size_t* failures);

/* ---- masks ------------------------------------------------------------- */

/* Translates the hole of mask by a seeded random offset and classifies the
   result against the box enlarged by rho. in_out is set to 1 for inside. */
ADVPAINT_API advpaint_status advpaint_shift_mask(const advpaint_image* mask, const int* box,
                                                 double rho, uint64_t seed, int max_shift,
                                                 advpaint_image** out, int* in_out);

/* ---- gradient check ---------------------------------------------------- */

/* Called once per checked item with its maximum relative error. */
typedef void (*advpaint_gradcheck_fn)(const char* item, double max_rel_error, void* user);

ADVPAINT_API advpaint_status advpaint_gradcheck(uint64_t seed, double step,
                                                advpaint_gradcheck_fn report, void* user,
                                                double* max_rel_error);

#ifdef __cplusplus
}
#endif

#endif

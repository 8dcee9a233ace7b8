#ifndef RSAT_H
#define RSAT_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status code returned by every fallible call.
 */
typedef enum RsatStatus {
  RSAT_STATUS_OK = 0,
  RSAT_STATUS_NULL_ARGUMENT = 1,
  RSAT_STATUS_INVALID_UTF8 = 2,
  RSAT_STATUS_PARSE_ERROR = 3,
  RSAT_STATUS_RENDER_ERROR = 4,
  RSAT_STATUS_BUFFER_TOO_SMALL = 5,
  RSAT_STATUS_GENERATE_ERROR = 6,
} RsatStatus;

/**
 * Opaque rigged-avatar handle: mesh, blendshape rig and bound Gaussians.
 */
typedef struct RsatAvatar RsatAvatar;

/**
 * Opaque camera handle.
 */
typedef struct RsatCamera RsatCamera;

/**
 * Opaque Gaussian scene handle.
 */
typedef struct RsatScene RsatScene;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version string; static storage, never freed.
 */
const char *rsat_version(void);

/**
 * Message for the most recent failure on this thread. Valid until the next
 * failing call on the same thread.
 */
const char *rsat_last_error(void);

/**
 * Load a scene JSON. On success writes a heap handle into `out`; release
 * it with `rsat_scene_free`.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum RsatStatus rsat_scene_load(const char *path, struct RsatScene **out);

/**
 * # Safety
 * `scene` must be a handle returned by this library, freed at most once.
 */
void rsat_scene_free(struct RsatScene *scene);

/**
 * # Safety
 * `scene` must be null or a live handle from this library.
 */
uintptr_t rsat_scene_gaussian_count(const struct RsatScene *scene);

/**
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum RsatStatus rsat_camera_load(const char *path, struct RsatCamera **out);

/**
 * # Safety
 * `camera` must be a handle returned by this library, freed at most once.
 */
void rsat_camera_free(struct RsatCamera *camera);

/**
 * # Safety
 * `camera` must be null or a live handle from this library.
 */
uint32_t rsat_camera_width(const struct RsatCamera *camera);

/**
 * # Safety
 * `camera` must be null or a live handle from this library.
 */
uint32_t rsat_camera_height(const struct RsatCamera *camera);

/**
 * Render the scene into a caller-owned interleaved RGB8 buffer of at least
 * width·height·3 bytes.
 *
 * # Safety
 * `buffer` must point to `buffer_len` writable bytes.
 */
enum RsatStatus rsat_render_rgb8(const struct RsatScene *scene,
                                 const struct RsatCamera *camera,
                                 uint8_t *buffer,
                                 uintptr_t buffer_len);

/**
 * Load a rigged avatar: mesh (OBJ), blendshape basis (BSB1), bound-set
 * checkpoint (JSON + sibling payload), and the EXP/JAW/POSE group sizes of
 * the rig (they must sum to the basis parameter count).
 * # Safety
 * All path arguments must be NUL-terminated strings and `out` valid.
 */
enum RsatStatus rsat_avatar_load(const char *mesh_path,
                                 const char *basis_path,
                                 const char *boundset_path,
                                 uintptr_t exp_dims,
                                 uintptr_t jaw_dims,
                                 uintptr_t pose_dims,
                                 struct RsatAvatar **out);

/**
 * # Safety
 * `avatar` must be a handle returned by this library, freed at most once.
 */
void rsat_avatar_free(struct RsatAvatar *avatar);

/**
 * Pose the avatar with one motion-parameter frame and render it.
 *
 * # Safety
 * `params` must point to `param_count` readable doubles, `background` to 3
 * readable doubles, and `buffer` to `buffer_len` writable bytes.
 */
enum RsatStatus rsat_avatar_render_rgb8(const struct RsatAvatar *avatar,
                                        const struct RsatCamera *camera,
                                        const double *params,
                                        uintptr_t param_count,
                                        const double *background,
                                        uint8_t *buffer,
                                        uintptr_t buffer_len);

/**
 * Run motion generation end to end on files: loads a model checkpoint,
 * both speakers' audio features (AFT1) and speaker-A motion (MSQ1), and
 * writes speaker-B's predicted motion (MSQ1) to `out_path`. `blood` and
 * `equal` select the relationship class (0 or 1 each).
 * # Safety
 * All path arguments must be NUL-terminated strings.
 */
enum RsatStatus rsat_generate_motion(const char *ckpt_path,
                                     const char *audio_a_path,
                                     const char *audio_b_path,
                                     const char *motion_a_path,
                                     int32_t blood,
                                     int32_t equal,
                                     const char *out_path);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RSAT_H */

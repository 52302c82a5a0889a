#pragma once

// Analysis-by-synthesis: plain gradient descent on one parameter block against a
// reference image, and the recovery metrics used to score the result.

#include "shseed/render.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace shseed {

enum class TaskKind { Texture, Lighting, Pose, Geometry, Shadow };

const char* task_kind_name(TaskKind kind);
/// Accepts texture, light (or lighting), pose, geometry and shadow.
TaskKind parse_task_kind(const std::string& name);
/// Block a task optimizes.
ParamKind task_block(TaskKind kind);

struct TaskConfig {
  TaskKind kind = TaskKind::Texture;
  int object = -1;          // block owner; -1: object 0 for texture, 1 otherwise
  double step = 1e-2;
  int iterations = 500;
  int band_count = 8;
  bool shadow_mask = false;          // restrict the loss to the shadow region
  bool direct_illumination = false;  // V = 1 baseline
  bool start_from_scene = false;     // else white albedo / zero light for those tasks
  double divergence_ratio = 1e6;     // stop when the loss exceeds this multiple of its start

  /// Defaults tuned per task (step, iterations).
  static TaskConfig defaults(TaskKind kind);
  int block_object() const;
  void validate() const;
};

/// Mean over masked pixels of the per-pixel squared RGB distance. An empty mask (or a
/// mask with zero everywhere) means the full image; otherwise pixels with mask > 0 count.
double l2_loss(const Image& rendered, const Image& reference, const Image& mask = {});
/// d l2_loss / d rendered.
Image l2_loss_gradient(const Image& rendered, const Image& reference, const Image& mask = {});

/// Single-channel mask of pixels darkened by shadows by more than `threshold`
/// (relative to the unshadowed render), grown by `dilate` pixels.
Image shadow_region(const Scene& scene, double threshold = 0.02, int dilate = 2);

struct SolveResult {
  ParamBlock block;             // final values
  std::vector<double> loss;     // before each step, then the final loss
  Image final_render;
  Image mask;                   // loss mask used (empty for the full image)
  bool diverged = false;
  int steps = 0;
};

/// Copy of `scene` adjusted to the config's band count and illumination mode.
Scene task_scene(const Scene& scene, const TaskConfig& config);
/// Starting block for a task: white albedo or zero light unless start_from_scene.
ParamBlock initial_block(const Scene& scene, const TaskConfig& config);

/// Runs `config.iterations` fixed-size gradient steps on the task's block. Albedo is
/// clamped to [0, 1] and pose quaternions renormalized after each step. Throws
/// NumericalError with a dump of the block on a non-finite loss or gradient.
SolveResult solve(const Scene& scene, const Image& reference, const TaskConfig& config);

// ---- Metrics --------------------------------------------------------------------

struct Metrics {
  double texture_mse = 0.0;
  double mde_percent = 0.0;         // mean vertex distance, % of the bbox diagonal
  double rotation_error = 0.0;      // radians
  double translation_error = 0.0;   // squared distance
  double lighting_mse = 0.0;        // relit probe render
  std::string json() const;
};

/// Per-texel bilinear weight summed over the pixels that show the texture.
Image texel_coverage(const Scene& scene, int object);
/// MSE over texels whose coverage is at least `min_coverage` (all channels).
double texture_mse(const Image& recovered, const Image& truth, const Image& coverage, double min_coverage = 0.5);
/// Mean distance between posed vertices as a percentage of the rest bounding-box diagonal.
double mean_distance_error(const Scene& recovered, const Scene& truth, int object);
/// Angle between two rotations.
double rotation_error(const Quat& a, const Quat& b);
/// Renders the probe (a unit sphere on a ground plane) under both lights at
/// `probe_bands` bands and returns the per-pixel per-channel MSE.
double lighting_probe_mse(const EnvironmentLight& recovered, const EnvironmentLight& truth, int probe_bands = 8,
                          int resolution = 64);
/// Light padded with zeros or truncated to `band_count` bands.
EnvironmentLight resize_bands(const EnvironmentLight& light, int band_count);

/// Task-appropriate metrics of the recovered scene against the ground truth.
Metrics evaluate(const Scene& recovered, const Scene& truth, const TaskConfig& config);

}  // namespace shseed

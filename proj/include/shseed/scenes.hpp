#pragma once

// Procedural test scenes: an occluder above a ground plane under a smooth sky.

#include "shseed/scene.hpp"

namespace shseed {

/// Sky of uniform radiance `sky` plus a broad lobe ((1 + w.s) / 2)^sharpness of peak
/// `sun` around `sun_direction`, projected to `band_count` bands.
EnvironmentLight sky_light(int band_count, const Vec3& sun_direction, const Vec3& sun, const Vec3& sky,
                           double sharpness = 8.0);
/// The default light used by the procedural scenes.
EnvironmentLight default_sky(int band_count);

enum class OccluderShape { Sphere, Box, Torus };

struct ShadowSceneOptions {
  int band_count = 8;
  int width = 64;
  int height = 64;
  OccluderShape shape = OccluderShape::Sphere;
  int resolution = 12;       // rings / segments scale of the occluder mesh
  int plane_segments = 8;
  double plane_size = 4.0;
  double occluder_size = 0.5;  // sphere radius, box half-extent, torus major radius
  double elevation = 0.8;      // occluder center height above the plane
  int sphere_count = 1;        // 1 uses the analytic bounding sphere; more runs the fitter
  std::uint64_t seed = 1;
  bool textured_plane = false;
  int texture_size = 64;
  bool shadows = true;
  bool overhead_camera = false;  // straight down from 5 units, framing the whole plane
};

/// Object 0 is the ground plane (y = 0, receives shadows); object 1 the occluder.
/// The camera looks down at the origin from the +z side. Returns a prepared scene.
Scene make_shadow_scene(const ShadowSceneOptions& options);

/// Color pattern used as ground-truth albedo: a smooth two-tone checker in [0.2, 0.9].
Vec3 pattern_albedo(const Vec3& p, double frequency);

}  // namespace shseed

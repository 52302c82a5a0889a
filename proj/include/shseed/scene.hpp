#pragma once

// In-memory scene: objects with rest geometry, occluder spheres, albedo, pose and
// deformation, plus the environment light, camera and render settings.

#include "shseed/geometry.hpp"
#include "shseed/image.hpp"
#include "shseed/raster.hpp"
#include "shseed/shading.hpp"
#include "shseed/visibility.hpp"

#include <array>
#include <string>
#include <vector>

namespace shseed {

struct SceneObject {
  std::string name;
  TriangleMesh mesh;     // rest pose
  SphereSet spheres;     // rest centers and radii; node transforms hold the deformation
  std::vector<Vec3> albedo;  // per vertex, used when `texture` is empty
  Image texture;             // 2D albedo sampled through mesh.uvs
  RigidPose pose;
  bool casts_shadows = true;

  // Derived by Scene::prepare().
  EmbeddedGraph graph;
  Vec3 pivot = Vec3::Zero();
  std::vector<std::vector<int>> exclusion;  // own sphere indices per vertex

  bool textured() const { return !texture.empty(); }
};

struct RenderSettings {
  int band_count = 8;
  double epsilon = kDefaultEpsilon;
  double exclusion_tau = kDefaultExclusionTau;
  int graph_k = kDefaultGraphK;
  bool shadows = true;  // false: direct illumination only (V = 1)
  RasterOptions raster;
};

struct Scene {
  std::vector<SceneObject> objects;
  EnvironmentLight light;
  Camera camera;
  RenderSettings settings;

  /// Validates inputs and derives pivots, deformation graphs and exclusion sets.
  /// Call after changing rest geometry or spheres.
  void prepare();
  std::size_t vertex_count() const;
  std::size_t sphere_count() const;
};

enum class ParamKind { Albedo, Lighting, RigidPose, GraphDeformation };

const char* param_kind_name(ParamKind kind);
ParamKind parse_param_kind(const std::string& name);

struct ParamBlock {
  ParamKind kind = ParamKind::Lighting;
  int object = 0;  // ignored for lighting
  std::vector<double> values;
  std::vector<double> grad;

  std::string label() const;
};

/// Current values of one block, gradient zeroed.
ParamBlock extract_block(const Scene& scene, ParamKind kind, int object = 0);
/// Writes block values back into the scene (renormalizing quaternions is left to the caller).
void apply_block(Scene& scene, const ParamBlock& block);
/// Number of values a block of this kind holds for the scene.
std::size_t block_size(const Scene& scene, ParamKind kind, int object = 0);

/// Flat rigid parameters [w, x, y, z, tx, ty, tz].
std::array<double, 7> pose_params(const RigidPose& pose);
RigidPose pose_from_params(std::span<const double> params);

}  // namespace shseed

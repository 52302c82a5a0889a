#pragma once

// Monte Carlo reference renderer: single-bounce Lambertian shading under a lat-long
// environment map with binary shadow rays. Not differentiable.

#include "shseed/bvh.hpp"
#include "shseed/image.hpp"
#include "shseed/raster.hpp"
#include "shseed/scene.hpp"

#include <cstdint>
#include <vector>

namespace shseed {

/// What shadow rays test against.
enum class ShadowGeometry { Mesh, Spheres };

struct RayScene {
  std::vector<Vec3> vertices, normals, albedo;  // world space, per vertex
  std::vector<Vec2> uvs;                        // per vertex (zero when absent)
  std::vector<Triangle> triangles;
  std::vector<int> triangle_object, triangle_texture;
  std::vector<Image> textures;
  Bvh bvh;         // every triangle, for primary rays
  Bvh shadow_bvh;  // triangles of shadow-casting objects
  SphereSet spheres;                  // world-space occluder spheres
  std::vector<int> sphere_object;
  double exclusion_tau = kDefaultExclusionTau;
  ShadowGeometry shadows = ShadowGeometry::Mesh;
  Image envmap;  // lat-long radiance, width = 2 height
  Camera camera;
  Vec3 background = Vec3::Zero();

  /// Posed geometry of a prepared scene. With sphere shadows a hit point ignores the
  /// spheres of its own object that it is attached to, as the SH renderer does.
  static RayScene from_scene(const Scene& scene, Image envmap, ShadowGeometry shadows);

  /// Whether a shadow ray from `point` along unit `direction` is blocked; `object` owns
  /// the point (-1 for none).
  bool occluded(const Vec3& point, const Vec3& direction, int object) const;
};

/// Per pixel: a primary ray through the pixel center, then `spp` cosine-weighted
/// directions, stratified on a floor(sqrt(spp))^2 grid unless `stratified` is false;
/// value = albedo / pi * integral(L V cos). Per-pixel random streams derive from
/// (seed, pixel index), so the thread count never matters.
Image trace(const RayScene& scene, int spp, std::uint64_t seed, bool stratified = true);

/// Exact ray-sphere test from `origin` along unit `direction`; a point inside counts as blocked.
bool ray_hits_sphere(const Vec3& origin, const Vec3& direction, const Vec3& center, double radius);

struct VisibilitySample {
  Vec3 direction;
  double value = 1.0;
};

/// Uniform directions with exact visibility against analytic spheres. Blocked samples
/// are 0, or e^-epsilon when epsilon > 0 (the finite-log variant).
std::vector<VisibilitySample> sampled_visibility(const Vec3& point, const SphereSet& blockers, std::size_t samples,
                                                 std::uint64_t seed, double epsilon = 0.0);
/// Same against a triangle mesh.
std::vector<VisibilitySample> sampled_visibility(const Vec3& point, const Bvh& mesh, std::size_t samples,
                                                 std::uint64_t seed, double epsilon = 0.0);

/// Fraction of (point, direction) pairs where shadow rays against the mesh and against
/// the sphere set disagree. Points are drawn in the 1.5x bounding box outside both.
double visibility_disagreement(const TriangleMesh& mesh, const SphereSet& spheres, std::size_t points,
                               std::size_t directions, std::uint64_t seed);

}  // namespace shseed

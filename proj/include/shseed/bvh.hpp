#pragma once

#include "shseed/geometry.hpp"

#include <optional>

namespace shseed {

struct Ray {
  Vec3 origin;
  Vec3 direction;  // need not be unit; t is in units of |direction|
};

struct RayHit {
  double t = 0.0;
  int triangle = -1;
  double u = 0.0, v = 0.0;  // barycentrics of vertices 1 and 2
};

struct ClosestPoint {
  Vec3 point;
  double distance = 0.0;
  int triangle = -1;
};

/// Bounding volume hierarchy over a triangle soup (median split, small leaves).
class Bvh {
 public:
  Bvh() = default;
  Bvh(std::vector<Vec3> vertices, std::vector<Triangle> triangles);
  explicit Bvh(const TriangleMesh& mesh) : Bvh(mesh.vertices, mesh.triangles) {}

  std::optional<RayHit> intersect(const Ray& ray, double t_min, double t_max) const;
  bool occluded(const Ray& ray, double t_min, double t_max) const;
  /// Number of crossings along the ray (every hit counted once).
  int count_hits(const Ray& ray, double t_min) const;
  ClosestPoint closest_point(const Vec3& p) const;
  /// Inside test by majority parity over three skewed rays; meaningful for closed meshes.
  bool inside(const Vec3& p) const;

  std::size_t triangle_count() const { return triangles_.size(); }
  const Aabb& bounds() const { return nodes_.front().box; }

 private:
  struct Node {
    Aabb box;
    int left = -1, right = -1;  // children, or -1 for a leaf
    int first = 0, count = 0;   // leaf range in order_
  };
  int build(int first, int count);
  template <typename Visit>
  void traverse_ray(const Ray& ray, double t_min, double& t_max, Visit&& visit) const;

  std::vector<Vec3> vertices_;
  std::vector<Triangle> triangles_;
  std::vector<int> order_;
  std::vector<Node> nodes_;
};

/// Möller-Trumbore; returns t and barycentrics (u, v) when the ray hits within range.
std::optional<RayHit> intersect_triangle(const Ray& ray, const Vec3& a, const Vec3& b, const Vec3& c,
                                         double t_min, double t_max);
Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c);

}  // namespace shseed

#pragma once

// Triangle meshes, sphere sets, rigid poses and the embedded deformation graph whose
// nodes are the sphere centers. World convention: +y is up.

#include "shseed/common.hpp"

#include <array>
#include <limits>
#include <span>
#include <vector>

namespace shseed {

using Triangle = std::array<int, 3>;

struct Aabb {
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = Vec3::Constant(-std::numeric_limits<double>::infinity());

  void extend(const Vec3& p) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  Vec3 center() const { return 0.5 * (lo + hi); }
  double diagonal() const { return (hi - lo).norm(); }
};

Aabb bounds(std::span<const Vec3> points);

struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<Triangle> triangles;
  std::vector<Vec3> normals;
  std::vector<Vec2> uvs;  // empty, or one per vertex

  std::size_t vertex_count() const { return vertices.size(); }
  std::size_t triangle_count() const { return triangles.size(); }
  bool has_uvs() const { return !uvs.empty(); }

  /// Throws ConfigError on out-of-range indices, degenerate faces, bad normals or UVs.
  void validate() const;
};

inline constexpr double kMinTriangleArea = 1e-12;

/// For each vertex, the smallest index of a vertex at the identical position.
/// Seams (duplicated positions with distinct UVs) then share one normal.
std::vector<int> weld_map(std::span<const Vec3> vertices);

/// Area-weighted vertex normals over welded positions, with their adjoint.
class NormalBuilder {
 public:
  NormalBuilder() = default;
  NormalBuilder(std::vector<Triangle> triangles, std::vector<int> weld);
  explicit NormalBuilder(const TriangleMesh& mesh);

  void forward(std::span<const Vec3> positions, std::span<Vec3> normals) const;
  /// Accumulates into grad_positions.
  void backward(std::span<const Vec3> positions, std::span<const Vec3> grad_normals,
                std::span<Vec3> grad_positions) const;

 private:
  std::vector<Triangle> triangles_;
  std::vector<int> weld_;
  std::size_t vertex_count_ = 0;
};

void compute_normals(TriangleMesh& mesh);

// ---- Primitives (all with UVs and outward normals) ----------------------------

/// Square in the xz-plane at y = 0 facing +y, centered at the origin.
TriangleMesh make_plane(double size, int segments);
TriangleMesh make_uv_sphere(double radius, int rings, int segments);
/// Axis-aligned box centered at the origin; each face split into segments^2 quads.
TriangleMesh make_box(const Vec3& extents, int segments);
/// Torus around the y axis.
TriangleMesh make_torus(double major_radius, double minor_radius, int rings, int segments);

void translate(TriangleMesh& mesh, const Vec3& offset);
void scale(TriangleMesh& mesh, double factor);

// ---- Rotations ------------------------------------------------------------------

using Vec4 = Eigen::Vector4d;

/// Rotation matrix of q / |q|, q stored as (w, x, y, z).
Mat3 quat_to_matrix(const Vec4& q);
/// Adjoint of quat_to_matrix including the normalization: returns dL/dq given dL/dR.
Vec4 quat_to_matrix_vjp(const Vec4& q, const Mat3& grad_matrix);
Vec4 quat_coeffs(const Quat& q);
Quat quat_from_coeffs(const Vec4& q);

// ---- Sphere sets ----------------------------------------------------------------

/// Occluder spheres. Each sphere is also a deformation node with a rotation and a
/// translation; the deformed center is center + translation.
struct SphereSet {
  std::vector<Vec3> centers;
  std::vector<double> radii;
  std::vector<Quat> rotations;
  std::vector<Vec3> translations;

  static SphereSet from_spheres(std::vector<Vec3> centers, std::vector<double> radii);
  std::size_t size() const { return centers.size(); }
  bool empty() const { return centers.empty(); }
  void validate() const;
  /// Spheres at their deformed centers with identity node transforms.
  SphereSet deformed() const;
};

struct RigidPose {
  Quat rotation = Quat::Identity();
  Vec3 translation = Vec3::Zero();

  /// R (p - pivot) + pivot + t.
  Vec3 apply(const Vec3& p, const Vec3& pivot = Vec3::Zero()) const;
  RigidPose inverse() const;
};

/// Rigidly transforms vertices, normals (rotation only) and sphere centers about `pivot`.
std::pair<TriangleMesh, SphereSet> apply_rigid(const TriangleMesh& mesh, const SphereSet& spheres,
                                               const RigidPose& pose, const Vec3& pivot = Vec3::Zero());

/// Flat rigid parameters [w, x, y, z, tx, ty, tz] applied to points about `pivot`.
void rigid_points(std::span<const double> params, const Vec3& pivot, std::span<const Vec3> in,
                  std::span<Vec3> out);
/// Accumulates into grad_params (7 values) and, if non-empty, grad_in.
void rigid_points_vjp(std::span<const double> params, const Vec3& pivot, std::span<const Vec3> in,
                      std::span<const Vec3> grad_out, std::span<double> grad_params,
                      std::span<Vec3> grad_in);

// ---- Embedded deformation graph -------------------------------------------------

inline constexpr int kDefaultGraphK = 4;

struct EmbeddedGraph {
  int k = 0;
  std::vector<int> nodes;        // vertex_count * k
  std::vector<double> weights;   // vertex_count * k
  std::vector<Vec3> rest_nodes;  // g_j

  std::size_t vertex_count() const { return k == 0 ? 0 : nodes.size() / static_cast<std::size_t>(k); }
};

/// K nearest sphere centers per vertex with weights (1 - d_j / d_{K+1})^2, normalized.
/// Ties are broken by node index.
EmbeddedGraph build_graph(const TriangleMesh& mesh, const SphereSet& spheres, int k);

/// v' = sum_j w_j [R_j (v - g_j) + g_j + t_j], normals recomputed from the deformed faces.
TriangleMesh deform(const TriangleMesh& mesh, const EmbeddedGraph& graph, const SphereSet& spheres);

/// Flat node parameters, 7 per node: [w, x, y, z, tx, ty, tz].
std::vector<double> node_params(const SphereSet& spheres);
void set_node_params(SphereSet& spheres, std::span<const double> params);

void deform_points(const EmbeddedGraph& graph, std::span<const Vec3> rest, std::span<const double> params,
                   std::span<Vec3> out);
/// Accumulates into grad_params (7 per node).
void deform_points_vjp(const EmbeddedGraph& graph, std::span<const Vec3> rest,
                       std::span<const double> params, std::span<const Vec3> grad_out,
                       std::span<double> grad_params);

}  // namespace shseed

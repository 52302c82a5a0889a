#pragma once

// Z-buffer rasterization of per-vertex attributes with perspective-correct
// interpolation, plus a soft band outside silhouette edges that makes coverage
// differentiable with respect to vertex positions.

#include "shseed/geometry.hpp"
#include "shseed/image.hpp"

#include <span>
#include <vector>

namespace shseed {

/// Pinhole camera. Camera space: x right, y down, z forward; pixel centers at +0.5.
struct Camera {
  double fx = 1.0, fy = 1.0, cx = 0.0, cy = 0.0;
  int width = 0, height = 0;
  Mat3 rotation = Mat3::Identity();  // world to camera
  Vec3 translation = Vec3::Zero();

  static Camera look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double fov_y_degrees, int width,
                        int height);
  Vec3 to_camera(const Vec3& p) const { return rotation * p + translation; }
  Vec3 position() const { return -rotation.transpose() * translation; }
  /// Pixel coordinates of a camera-space point.
  Vec2 project(const Vec3& pc) const { return Vec2(fx * pc.x() / pc.z() + cx, fy * pc.y() / pc.z() + cy); }
  /// Camera-space direction (z = 1) through the pixel-space point.
  Vec3 ray(const Vec2& pixel) const { return Vec3((pixel.x() - cx) / fx, (pixel.y() - cy) / fy, 1.0); }
  /// World-space unit ray direction through the pixel-space point.
  Vec3 world_ray(const Vec2& pixel) const { return (rotation.transpose() * ray(pixel)).normalized(); }
  void validate() const;
};

/// sigmoid(signed_distance / sigma), signed distance positive inside.
double soft_coverage(double signed_distance, double sigma);

struct RasterOptions {
  double sigma = 1.0;       // pixels
  double band = 2.0;        // pixels outside silhouettes that receive the soft blend
  bool soft = true;
  double near = 1e-4;       // triangles with a vertex closer than this are culled
  Vec3 background = Vec3::Zero();
};

/// Per-triangle shading source: the interpolated vertex attribute is multiplied by a
/// bilinear texture lookup when the triangle has a texture.
struct RasterMaterial {
  std::vector<Vec2> uvs;                // per vertex; required when any texture is used
  std::vector<int> triangle_texture;    // per triangle, -1 for none; empty means none
  std::vector<const Image*> textures;
  int texture_of(std::size_t triangle) const {
    return triangle_texture.empty() ? -1 : triangle_texture[triangle];
  }
};

/// Connectivity used to find silhouette edges. Built once per topology.
class RasterTopology {
 public:
  RasterTopology() = default;
  /// `weld` maps duplicated seam vertices to one id (identity if empty).
  RasterTopology(std::vector<Triangle> triangles, std::vector<int> weld);

  struct Edge {
    int faces[2];      // adjacent triangles (faces[1] = -1 on a boundary)
    int corners[2][3]; // per face: edge start, edge end and opposite vertex ids
    bool manifold;
  };
  const std::vector<Triangle>& triangles() const { return triangles_; }
  const std::vector<Edge>& edges() const { return edges_; }

 private:
  std::vector<Triangle> triangles_;
  std::vector<Edge> edges_;
};

struct Framebuffer {
  int width = 0, height = 0;
  std::vector<int> triangle;    // -1 where uncovered
  std::vector<double> depth;    // camera z, +inf where uncovered
  std::vector<Vec3> bary;       // perspective-correct barycentrics
  // soft band
  struct Soft {
    int edge = -1;
    int triangle = -1;  // triangle the edge belongs to
    int a = -1, b = -1; // endpoint vertex ids
    double lambda = 0.0, distance = 0.0, weight = 0.0;
  };
  std::vector<Soft> soft;
  std::vector<Vec3> camera_positions;

  std::size_t covered_count() const;
};

class Rasterizer {
 public:
  explicit Rasterizer(RasterOptions options = {}) : options_(options) {}
  const RasterOptions& options() const { return options_; }

  /// Geometry pass: which surface each pixel sees and the soft-band assignments.
  void coverage(const Camera& camera, std::span<const Vec3> positions, const RasterTopology& topology,
                Framebuffer& fb) const;
  /// Color pass; `attributes` holds one RGB value per vertex.
  void shade(const Framebuffer& fb, const RasterTopology& topology, std::span<const Vec3> attributes,
             const RasterMaterial& material, Image& out) const;
  /// Accumulates into whichever gradient spans are non-empty. grad_textures has one
  /// entry per material texture (each null or an image of matching shape).
  void backward(const Camera& camera, const Framebuffer& fb, const RasterTopology& topology,
                std::span<const Vec3> attributes, const RasterMaterial& material, const Image& grad_image,
                std::span<Vec3> grad_attributes, std::span<Image*> grad_textures,
                std::span<Vec3> grad_positions) const;

  /// coverage + shade.
  Image render(const Camera& camera, std::span<const Vec3> positions, const RasterTopology& topology,
               std::span<const Vec3> attributes, const RasterMaterial& material = {}) const;

 private:
  double band_weight(double distance, double* derivative) const;

  RasterOptions options_;
};

}  // namespace shseed

#pragma once

// Sphere-set approximation of a closed mesh by gradient descent on
//   E = SOV + lambda_cov * Coverage
// SOV: mean over sphere-volume samples of max(sdf, 0)^2 (sdf > 0 outside the mesh).
// Coverage: mean over surface samples of min_i (|s - c_i| - r_i)^2.

#include "shseed/bvh.hpp"
#include "shseed/geometry.hpp"

#include <cstdint>

namespace shseed {

/// Signed distance sampled on a regular grid over the padded mesh bounds, trilinearly
/// interpolated. Outside the grid the distance to the grid box is added.
class SdfGrid {
 public:
  SdfGrid(const TriangleMesh& mesh, int resolution);

  double value(const Vec3& p) const;
  /// Value and gradient of the trilinear interpolant.
  double value(const Vec3& p, Vec3& gradient) const;
  int resolution() const { return resolution_; }

 private:
  double at(int i, int j, int k) const { return values_[(k * resolution_ + j) * resolution_ + i]; }

  int resolution_;
  Vec3 origin_;
  Vec3 cell_;
  std::vector<double> values_;
};

struct SphereFitOptions {
  double lambda_cov = 1.0;
  int grid_resolution = 48;
  int surface_samples = 4096;
  int volume_samples = 64;  // per sphere
  int kmeans_iterations = 10;
};

struct SphereFitReport {
  std::vector<double> objective;  // after initialization, then per accepted step
  int accepted_steps = 0;
};

class SphereFitter {
 public:
  SphereFitter(const TriangleMesh& mesh, std::uint64_t seed, SphereFitOptions options = {});

  /// k-means++ centers on surface samples, Lloyd refinement, radius = median distance
  /// to the assigned samples.
  SphereSet initialize(int sphere_count) const;
  /// Gradient descent with backtracking, so the objective never increases.
  SphereSet optimize(SphereSet spheres, int iterations, SphereFitReport* report = nullptr) const;

  double objective(const SphereSet& spheres) const;
  /// Objective and gradients (per sphere center and radius).
  double objective(const SphereSet& spheres, std::vector<Vec3>& grad_centers,
                   std::vector<double>& grad_radii) const;

  const std::vector<Vec3>& surface_samples() const { return surface_; }

 private:
  const TriangleMesh* mesh_;
  SphereFitOptions options_;
  std::uint64_t seed_;
  SdfGrid sdf_;
  std::vector<Vec3> surface_;
  std::vector<Vec3> ball_;  // unit-ball sample offsets
  double min_radius_;
};

SphereSet fit_spheres(const TriangleMesh& mesh, int sphere_count, int iterations, std::uint64_t seed,
                      const SphereFitOptions& options = {});

/// Area-weighted random points on the surface.
std::vector<Vec3> sample_surface(const TriangleMesh& mesh, int count, std::uint64_t seed);

}  // namespace shseed

#pragma once

// Per-point visibility V(x) from sphere blockers: log-blockers summed in SH space,
// then exponentiated.

#include "shseed/geometry.hpp"
#include "shseed/sh.hpp"
#include "shseed/sh_exp.hpp"

#include <span>
#include <vector>

namespace shseed {

inline constexpr double kDefaultEpsilon = 3.0;
inline constexpr double kDefaultExclusionTau = 0.3;

/// log V'_i for one sphere seen from x, oriented toward the sphere center.
SHVector log_blocker_sh(const Vec3& x, const Vec3& center, double radius, int band_count,
                        double epsilon = kDefaultEpsilon);

/// sh_exp of the summed log-blockers, skipping the sphere indices in `excluded`.
SHVector visibility_sh(const Vec3& x, const SphereSet& spheres, int band_count,
                       double epsilon = kDefaultEpsilon, std::span<const int> excluded = {});

/// Per vertex, the spheres whose surface lies within tau * radius of it, counting
/// vertices inside a sphere (signed distance |v - c| - r <= tau r). Sorted indices.
std::vector<std::vector<int>> attached_sphere_mask(const TriangleMesh& mesh, const SphereSet& spheres,
                                                   double tau = kDefaultExclusionTau);

/// Blocker spheres in world space with a canonical summation order (lexicographic in
/// center, then radius), so permuting the input leaves every result bit-identical.
struct BlockerSet {
  std::vector<Vec3> centers;
  std::vector<double> radii;
  std::vector<int> order;

  BlockerSet() = default;
  BlockerSet(std::vector<Vec3> centers, std::vector<double> radii);
  explicit BlockerSet(const SphereSet& spheres);
  std::size_t size() const { return centers.size(); }
};

/// Allocation-free visibility evaluation with the adjoint, for batch use.
class VisibilityKernel {
 public:
  VisibilityKernel(int band_count, double epsilon);

  struct Workspace {
    std::vector<double> log_sum;
    std::vector<double> grad_log;
    std::vector<double> basis;
    std::vector<double> zonal, d_distance, d_radius, weights;
    ShExp::Workspace exp;
  };

  int band_count() const { return band_count_; }
  double epsilon() const { return epsilon_; }

  /// `skip` lists sphere indices to leave out (small, any order).
  void forward(const Vec3& x, const BlockerSet& blockers, std::span<const int> skip, std::span<double> v,
               Workspace& ws) const;
  /// Requires the workspace from forward() at the same inputs. Accumulates into
  /// grad_x, grad_centers and grad_radii.
  void backward(const Vec3& x, const BlockerSet& blockers, std::span<const int> skip, std::span<const double> v,
                Workspace& ws, std::span<const double> grad_v, Vec3& grad_x, std::span<Vec3> grad_centers,
                std::span<double> grad_radii) const;

 private:
  void log_sum(const Vec3& x, const BlockerSet& blockers, std::span<const int> skip, Workspace& ws) const;

  int band_count_;
  double epsilon_;
  ShExp exp_;
};

}  // namespace shseed

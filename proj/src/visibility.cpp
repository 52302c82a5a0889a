#include "shseed/visibility.hpp"

#include <algorithm>
#include <numeric>
#include <tuple>

namespace shseed {

namespace {

bool skipped(std::span<const int> skip, int index) {
  return std::find(skip.begin(), skip.end(), index) != skip.end();
}

}  // namespace

SHVector log_blocker_sh(const Vec3& x, const Vec3& center, double radius, int band_count, double epsilon) {
  const Vec3 offset = center - x;
  const double d = offset.norm();
  const ZonalVector z = zonal_log_blocker(d, radius, epsilon, band_count).coeffs;
  if (!(d > 0.0)) return embed(z);  // at the center the clamped cap has no preferred axis
  return rotate_zonal(z, offset / d);
}

SHVector visibility_sh(const Vec3& x, const SphereSet& spheres, int band_count, double epsilon,
                       std::span<const int> excluded) {
  const VisibilityKernel kernel(band_count, epsilon);
  const BlockerSet blockers(spheres);
  VisibilityKernel::Workspace ws;
  SHVector v(band_count);
  kernel.forward(x, blockers, excluded, v.coeffs(), ws);
  return v;
}

std::vector<std::vector<int>> attached_sphere_mask(const TriangleMesh& mesh, const SphereSet& spheres,
                                                   double tau) {
  std::vector<std::vector<int>> mask(mesh.vertex_count());
  for (std::size_t v = 0; v < mesh.vertex_count(); ++v) {
    for (std::size_t j = 0; j < spheres.size(); ++j) {
      const double gap = (mesh.vertices[v] - spheres.centers[j]).norm() - spheres.radii[j];
      if (gap <= tau * spheres.radii[j]) mask[v].push_back(static_cast<int>(j));
    }
  }
  return mask;
}

BlockerSet::BlockerSet(std::vector<Vec3> c, std::vector<double> r) : centers(std::move(c)), radii(std::move(r)) {
  if (centers.size() != radii.size()) throw ConfigError("blocker center and radius counts differ");
  order.resize(centers.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    return std::make_tuple(centers[a].x(), centers[a].y(), centers[a].z(), radii[a]) <
           std::make_tuple(centers[b].x(), centers[b].y(), centers[b].z(), radii[b]);
  });
}

BlockerSet::BlockerSet(const SphereSet& spheres) {
  const SphereSet moved = spheres.deformed();
  *this = BlockerSet(moved.centers, moved.radii);
}

VisibilityKernel::VisibilityKernel(int band_count, double epsilon)
    : band_count_(band_count), epsilon_(epsilon), exp_(band_count) {}

void VisibilityKernel::log_sum(const Vec3& x, const BlockerSet& blockers, std::span<const int> skip,
                               Workspace& ws) const {
  const int n = band_count_;
  const int count = sh_count(n);
  ws.log_sum.assign(count, 0.0);
  ws.basis.resize(count);
  ws.zonal.resize(n);
  ws.d_distance.resize(n);
  ws.d_radius.resize(n);
  const auto scale = [](int l) { return zonal_rotation_scale(l); };
  for (int j : blockers.order) {
    if (!skip.empty() && skipped(skip, j)) continue;
    const Vec3 offset = blockers.centers[j] - x;
    const double d = offset.norm();
    zonal_log_blocker(d, blockers.radii[j], epsilon_, n, ws.zonal, ws.d_distance, ws.d_radius);
    if (d > 0.0) {
      eval_basis(offset / d, n, ws.basis);
      for (int l = 0; l < n; ++l) {
        const double f = scale(l) * ws.zonal[l];
        for (int i = l * l; i < (l + 1) * (l + 1); ++i) ws.log_sum[i] += f * ws.basis[i];
      }
    } else {
      for (int l = 0; l < n; ++l) ws.log_sum[sh_index(l, 0)] += ws.zonal[l];
    }
  }
}

void VisibilityKernel::forward(const Vec3& x, const BlockerSet& blockers, std::span<const int> skip,
                               std::span<double> v, Workspace& ws) const {
  log_sum(x, blockers, skip, ws);
  exp_.forward(ws.log_sum, v, ws.exp);
}

void VisibilityKernel::backward(const Vec3& x, const BlockerSet& blockers, std::span<const int> skip,
                                std::span<const double> v, Workspace& ws, std::span<const double> grad_v,
                                Vec3& grad_x, std::span<Vec3> grad_centers, std::span<double> grad_radii) const {
  const int n = band_count_;
  const int count = sh_count(n);
  ws.grad_log.resize(count);
  exp_.backward(ws.log_sum, v, ws.exp, grad_v, ws.grad_log);
  ws.weights.resize(count);
  for (int j : blockers.order) {
    if (!skip.empty() && skipped(skip, j)) continue;
    const Vec3 offset = blockers.centers[j] - x;
    const double d = offset.norm();
    if (!(d > 0.0)) continue;
    const Vec3 u = offset / d;
    zonal_log_blocker(d, blockers.radii[j], epsilon_, n, ws.zonal, ws.d_distance, ws.d_radius);
    eval_basis(u, n, ws.basis);
    double g_d = 0.0, g_r = 0.0;
    for (int l = 0; l < n; ++l) {
      const double s = zonal_rotation_scale(l);
      double acc = 0.0;
      for (int i = l * l; i < (l + 1) * (l + 1); ++i) {
        acc += ws.grad_log[i] * ws.basis[i];
        ws.weights[i] = ws.grad_log[i] * s * ws.zonal[l];
      }
      const double g_zonal = acc * s;
      g_d += g_zonal * ws.d_distance[l];
      g_r += g_zonal * ws.d_radius[l];
    }
    const Vec3 g_u = eval_basis_gradient(u, n, ws.weights);
    const Vec3 g_offset = g_u / d + u * g_d;
    grad_x -= g_offset;
    grad_centers[j] += g_offset;
    grad_radii[j] += g_r;
  }
}

}  // namespace shseed

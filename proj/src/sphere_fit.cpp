#include "shseed/sphere_fit.hpp"

#include "shseed/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

namespace shseed {

namespace {

double halton(std::uint32_t index, std::uint32_t base) {
  double f = 1.0, r = 0.0;
  while (index > 0) {
    f /= base;
    r += f * (index % base);
    index /= base;
  }
  return r;
}

std::vector<Vec3> unit_ball_samples(int count) {
  std::vector<Vec3> out;
  out.reserve(count);
  for (std::uint32_t i = 1; static_cast<int>(out.size()) < count; ++i) {
    const Vec3 p(2 * halton(i, 2) - 1, 2 * halton(i, 3) - 1, 2 * halton(i, 5) - 1);
    if (p.squaredNorm() <= 1.0) out.push_back(p);
  }
  return out;
}

}  // namespace

std::vector<Vec3> sample_surface(const TriangleMesh& mesh, int count, std::uint64_t seed) {
  if (mesh.triangles.empty()) throw ConfigError("cannot sample an empty mesh");
  std::vector<double> cdf(mesh.triangle_count());
  double total = 0.0;
  for (std::size_t t = 0; t < mesh.triangle_count(); ++t) {
    const Triangle& tri = mesh.triangles[t];
    total += 0.5 * (mesh.vertices[tri[1]] - mesh.vertices[tri[0]])
                       .cross(mesh.vertices[tri[2]] - mesh.vertices[tri[0]])
                       .norm();
    cdf[t] = total;
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::vector<Vec3> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) {
    const double pick = uni(rng) * total;
    const std::size_t t = std::min<std::size_t>(
        std::lower_bound(cdf.begin(), cdf.end(), pick) - cdf.begin(), cdf.size() - 1);
    double a = uni(rng), b = uni(rng);
    if (a + b > 1.0) {
      a = 1.0 - a;
      b = 1.0 - b;
    }
    const Triangle& tri = mesh.triangles[t];
    const Vec3& p0 = mesh.vertices[tri[0]];
    out.push_back(p0 + a * (mesh.vertices[tri[1]] - p0) + b * (mesh.vertices[tri[2]] - p0));
  }
  return out;
}

// ---- SdfGrid ---------------------------------------------------------------------

SdfGrid::SdfGrid(const TriangleMesh& mesh, int resolution) : resolution_(resolution) {
  if (resolution < 2) throw ConfigError("SDF grid resolution must be at least 2");
  const Bvh bvh(mesh);
  const Aabb box = bounds(mesh.vertices);
  const double pad = 0.1 * box.diagonal() + 1e-9;
  origin_ = box.lo - Vec3::Constant(pad);
  cell_ = (box.hi - box.lo + Vec3::Constant(2 * pad)) / (resolution - 1);
  values_.resize(static_cast<std::size_t>(resolution) * resolution * resolution);
  const std::size_t slab = static_cast<std::size_t>(resolution) * resolution;
  parallel_for(static_cast<std::size_t>(resolution), 1, [&](std::size_t begin, std::size_t end, std::size_t) {
    for (std::size_t k = begin; k < end; ++k) {
      for (int j = 0; j < resolution; ++j) {
        for (int i = 0; i < resolution; ++i) {
          const Vec3 p = origin_ + Vec3(i * cell_.x(), j * cell_.y(), k * cell_.z());
          const double d = bvh.closest_point(p).distance;
          values_[k * slab + j * resolution + i] = bvh.inside(p) ? -d : d;
        }
      }
    }
  });
}

double SdfGrid::value(const Vec3& p) const {
  Vec3 g;
  return value(p, g);
}

double SdfGrid::value(const Vec3& p, Vec3& gradient) const {
  const Vec3 hi = origin_ + cell_ * (resolution_ - 1);
  const Vec3 q = p.cwiseMax(origin_).cwiseMin(hi);
  const Vec3 outside = p - q;
  const Vec3 f = (q - origin_).cwiseQuotient(cell_);
  int idx[3];
  double t[3];
  for (int a = 0; a < 3; ++a) {
    idx[a] = std::clamp(static_cast<int>(std::floor(f[a])), 0, resolution_ - 2);
    t[a] = f[a] - idx[a];
  }
  const auto [i, j, k] = idx;
  const double c000 = at(i, j, k), c100 = at(i + 1, j, k), c010 = at(i, j + 1, k), c110 = at(i + 1, j + 1, k);
  const double c001 = at(i, j, k + 1), c101 = at(i + 1, j, k + 1), c011 = at(i, j + 1, k + 1),
               c111 = at(i + 1, j + 1, k + 1);
  const double x = t[0], y = t[1], z = t[2];
  const double c00 = c000 + x * (c100 - c000), c10 = c010 + x * (c110 - c010);
  const double c01 = c001 + x * (c101 - c001), c11 = c011 + x * (c111 - c011);
  const double c0 = c00 + y * (c10 - c00), c1 = c01 + y * (c11 - c01);
  double value = c0 + z * (c1 - c0);
  const double dx = (1 - z) * ((1 - y) * (c100 - c000) + y * (c110 - c010)) +
                    z * ((1 - y) * (c101 - c001) + y * (c111 - c011));
  const double dy = (1 - z) * (c10 - c00) + z * (c11 - c01);
  const double dz = c1 - c0;
  gradient = Vec3(dx / cell_.x(), dy / cell_.y(), dz / cell_.z());
  const double out = outside.norm();
  if (out > 0.0) {
    // Clamped coordinates have no in-grid gradient; the box distance takes over.
    for (int a = 0; a < 3; ++a) {
      if (outside[a] != 0.0) gradient[a] = 0.0;
    }
    value += out;
    gradient += outside / out;
  }
  return value;
}

// ---- SphereFitter ------------------------------------------------------------------

SphereFitter::SphereFitter(const TriangleMesh& mesh, std::uint64_t seed, SphereFitOptions options)
    : mesh_(&mesh),
      options_(options),
      seed_(seed),
      sdf_(mesh, options.grid_resolution),
      surface_(sample_surface(mesh, options.surface_samples, seed)),
      ball_(unit_ball_samples(options.volume_samples)),
      min_radius_(1e-3 * bounds(mesh.vertices).diagonal()) {}

SphereSet SphereFitter::initialize(int sphere_count) const {
  if (sphere_count < 1) throw ConfigError("sphere count must be at least 1");
  if (static_cast<std::size_t>(sphere_count) > mesh_->vertex_count()) {
    throw ConfigError("sphere count " + std::to_string(sphere_count) + " exceeds vertex count " +
                      std::to_string(mesh_->vertex_count()));
  }
  const std::size_t m = surface_.size();
  std::mt19937_64 rng(seed_ ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::vector<Vec3> centers;
  centers.push_back(surface_[std::min<std::size_t>(static_cast<std::size_t>(uni(rng) * m), m - 1)]);
  std::vector<double> d2(m, std::numeric_limits<double>::infinity());
  while (static_cast<int>(centers.size()) < sphere_count) {
    double total = 0.0;
    for (std::size_t s = 0; s < m; ++s) {
      d2[s] = std::min(d2[s], (surface_[s] - centers.back()).squaredNorm());
      total += d2[s];
    }
    double pick = uni(rng) * total;
    std::size_t chosen = m - 1;
    for (std::size_t s = 0; s < m; ++s) {
      pick -= d2[s];
      if (pick <= 0.0) {
        chosen = s;
        break;
      }
    }
    centers.push_back(surface_[chosen]);
  }
  std::vector<int> assign(m, 0);
  auto assign_all = [&] {
    for (std::size_t s = 0; s < m; ++s) {
      double best = std::numeric_limits<double>::infinity();
      for (int c = 0; c < sphere_count; ++c) {
        const double d = (surface_[s] - centers[c]).squaredNorm();
        if (d < best) {
          best = d;
          assign[s] = c;
        }
      }
    }
  };
  for (int it = 0; it < options_.kmeans_iterations; ++it) {
    assign_all();
    std::vector<Vec3> sum(sphere_count, Vec3::Zero());
    std::vector<int> count(sphere_count, 0);
    for (std::size_t s = 0; s < m; ++s) {
      sum[assign[s]] += surface_[s];
      ++count[assign[s]];
    }
    for (int c = 0; c < sphere_count; ++c) {
      if (count[c] > 0) centers[c] = sum[c] / count[c];
    }
  }
  assign_all();
  std::vector<std::vector<double>> dists(sphere_count);
  for (std::size_t s = 0; s < m; ++s) dists[assign[s]].push_back((surface_[s] - centers[assign[s]]).norm());
  std::vector<double> radii(sphere_count);
  for (int c = 0; c < sphere_count; ++c) {
    auto& d = dists[c];
    if (d.empty()) {
      radii[c] = std::max(min_radius_, std::abs(sdf_.value(centers[c])));
      continue;
    }
    std::nth_element(d.begin(), d.begin() + d.size() / 2, d.end());
    radii[c] = std::max(min_radius_, d[d.size() / 2]);
  }
  return SphereSet::from_spheres(std::move(centers), std::move(radii));
}

double SphereFitter::objective(const SphereSet& spheres) const {
  std::vector<Vec3> gc;
  std::vector<double> gr;
  return objective(spheres, gc, gr);
}

double SphereFitter::objective(const SphereSet& spheres, std::vector<Vec3>& grad_centers,
                               std::vector<double>& grad_radii) const {
  const std::size_t n = spheres.size();
  grad_centers.assign(n, Vec3::Zero());
  grad_radii.assign(n, 0.0);
  const double sov_norm = 1.0 / static_cast<double>(n * ball_.size());
  double sov = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (const Vec3& b : ball_) {
      Vec3 g;
      const double d = sdf_.value(spheres.centers[i] + spheres.radii[i] * b, g);
      if (d <= 0.0) continue;
      sov += d * d;
      grad_centers[i] += 2.0 * d * sov_norm * g;
      grad_radii[i] += 2.0 * d * sov_norm * g.dot(b);
    }
  }
  sov *= sov_norm;
  if (options_.lambda_cov == 0.0) return sov;
  const double cov_norm = options_.lambda_cov / static_cast<double>(surface_.size());
  double cov = 0.0;
  for (const Vec3& s : surface_) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t arg = 0;
    double len = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double l = (s - spheres.centers[i]).norm();
      const double e = l - spheres.radii[i];
      if (e * e < best) {
        best = e * e;
        arg = i;
        len = l;
      }
    }
    cov += best;
    const double e = len - spheres.radii[arg];
    if (len > 0.0) grad_centers[arg] -= 2.0 * e * cov_norm * (s - spheres.centers[arg]) / len;
    grad_radii[arg] -= 2.0 * e * cov_norm;
  }
  return sov + cov * cov_norm;
}

SphereSet SphereFitter::optimize(SphereSet spheres, int iterations, SphereFitReport* report) const {
  std::vector<Vec3> gc;
  std::vector<double> gr;
  double energy = objective(spheres, gc, gr);
  if (report) report->objective.push_back(energy);
  double step = 1.0;
  for (int it = 0; it < iterations; ++it) {
    double gnorm2 = 0.0;
    for (std::size_t i = 0; i < spheres.size(); ++i) gnorm2 += gc[i].squaredNorm() + gr[i] * gr[i];
    if (gnorm2 == 0.0) break;
    bool accepted = false;
    for (int tries = 0; tries < 40 && !accepted; ++tries) {
      SphereSet trial = spheres;
      for (std::size_t i = 0; i < spheres.size(); ++i) {
        trial.centers[i] -= step * gc[i];
        trial.radii[i] = std::max(min_radius_, trial.radii[i] - step * gr[i]);
      }
      std::vector<Vec3> tgc;
      std::vector<double> tgr;
      const double e = objective(trial, tgc, tgr);
      if (e <= energy) {
        spheres = std::move(trial);
        energy = e;
        gc = std::move(tgc);
        gr = std::move(tgr);
        step *= 1.5;
        accepted = true;
      } else {
        step *= 0.5;
      }
    }
    if (!accepted) break;
    if (report) {
      report->objective.push_back(energy);
      ++report->accepted_steps;
    }
  }
  return spheres;
}

SphereSet fit_spheres(const TriangleMesh& mesh, int sphere_count, int iterations, std::uint64_t seed,
                      const SphereFitOptions& options) {
  const SphereFitter fitter(mesh, seed, options);
  return fitter.optimize(fitter.initialize(sphere_count), iterations);
}

}  // namespace shseed

#include "shseed/oracle.hpp"

#include "shseed/parallel.hpp"
#include "shseed/render.hpp"
#include "shseed/shading.hpp"
#include "shseed/sh.hpp"

#include <cmath>
#include <limits>
#include <random>

namespace shseed {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Orthonormal frame with n as the third axis.
void frame(const Vec3& n, Vec3& t, Vec3& b) {
  const Vec3 a = std::abs(n.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
  t = n.cross(a).normalized();
  b = n.cross(t);
}

}  // namespace

RayScene RayScene::from_scene(const Scene& scene, Image envmap, ShadowGeometry shadows) {
  if (envmap.height < 1 || envmap.width != 2 * envmap.height || envmap.channels != 3) {
    throw ConfigError("environment map must be RGB lat-long with width = 2 * height");
  }
  RayScene rs;
  rs.envmap = std::move(envmap);
  rs.camera = scene.camera;
  rs.background = scene.settings.raster.background;
  rs.shadows = shadows;
  rs.exclusion_tau = scene.settings.exclusion_tau;
  const PosedScene posed = pose_scene(scene);
  std::vector<Vec3> casting_vertices;
  std::vector<Triangle> casting_triangles;
  for (std::size_t o = 0; o < scene.objects.size(); ++o) {
    const SceneObject& obj = scene.objects[o];
    const int base = static_cast<int>(rs.vertices.size());
    int texture = -1;
    if (obj.textured()) {
      texture = static_cast<int>(rs.textures.size());
      rs.textures.push_back(obj.texture);
    }
    for (std::size_t v = 0; v < obj.mesh.vertex_count(); ++v) {
      rs.vertices.push_back(posed.positions[o][v]);
      rs.normals.push_back(posed.normals[o][v]);
      rs.albedo.push_back(obj.textured() ? Vec3::Ones() : obj.albedo[v]);
      rs.uvs.push_back(obj.mesh.has_uvs() ? obj.mesh.uvs[v] : Vec2::Zero());
    }
    for (const Triangle& t : obj.mesh.triangles) {
      rs.triangles.push_back({t[0] + base, t[1] + base, t[2] + base});
      rs.triangle_object.push_back(static_cast<int>(o));
      rs.triangle_texture.push_back(texture);
    }
    if (obj.casts_shadows) {
      const int cbase = static_cast<int>(casting_vertices.size());
      casting_vertices.insert(casting_vertices.end(), posed.positions[o].begin(), posed.positions[o].end());
      for (const Triangle& t : obj.mesh.triangles) casting_triangles.push_back({t[0] + cbase, t[1] + cbase, t[2] + cbase});
      const SphereSet& s = posed.spheres[o];
      for (std::size_t j = 0; j < s.size(); ++j) {
        rs.spheres.centers.push_back(s.centers[j]);
        rs.spheres.radii.push_back(s.radii[j]);
        rs.spheres.rotations.push_back(Quat::Identity());
        rs.spheres.translations.push_back(Vec3::Zero());
        rs.sphere_object.push_back(static_cast<int>(o));
      }
    }
  }
  rs.bvh = Bvh(rs.vertices, rs.triangles);
  if (!casting_triangles.empty()) rs.shadow_bvh = Bvh(std::move(casting_vertices), std::move(casting_triangles));
  return rs;
}

bool RayScene::occluded(const Vec3& point, const Vec3& direction, int object) const {
  if (shadows == ShadowGeometry::Mesh) {
    return shadow_bvh.triangle_count() > 0 && shadow_bvh.occluded({point, direction}, 0.0, kInf);
  }
  for (std::size_t j = 0; j < spheres.size(); ++j) {
    const double r = spheres.radii[j];
    if (sphere_object[j] == object && (point - spheres.centers[j]).norm() - r <= exclusion_tau * r) continue;
    if (ray_hits_sphere(point, direction, spheres.centers[j], r)) return true;
  }
  return false;
}

bool ray_hits_sphere(const Vec3& origin, const Vec3& direction, const Vec3& center, double radius) {
  const Vec3 oc = origin - center;
  const double c = oc.squaredNorm() - radius * radius;
  if (c <= 0.0) return true;
  const double b = oc.dot(direction);
  return b < 0.0 && b * b - c >= 0.0;
}

Image trace(const RayScene& scene, int spp, std::uint64_t seed, bool stratified) {
  if (spp < 1) throw ConfigError("samples per pixel must be at least 1");
  const Camera& cam = scene.camera;
  Image out(cam.width, cam.height);
  const Vec3 eye = cam.position();
  const int strata = stratified ? static_cast<int>(std::floor(std::sqrt(static_cast<double>(spp)))) : 0;
  const Aabb box = scene.bvh.triangle_count() > 0 ? scene.bvh.bounds() : Aabb{};
  const double offset = 1e-7 * std::max(1.0, scene.bvh.triangle_count() > 0 ? box.diagonal() : 1.0);

  parallel_for(static_cast<std::size_t>(cam.height), 1, [&](std::size_t begin, std::size_t end, std::size_t) {
    for (std::size_t y = begin; y < end; ++y) {
      for (int x = 0; x < cam.width; ++x) {
        const std::uint64_t index = y * static_cast<std::size_t>(cam.width) + x;
        const Ray primary{eye, cam.world_ray(Vec2(x + 0.5, y + 0.5))};
        const auto hit = scene.bvh.triangle_count() > 0 ? scene.bvh.intersect(primary, 0.0, kInf) : std::nullopt;
        if (!hit) {
          out.set_rgb(x, static_cast<int>(y), scene.background);
          continue;
        }
        const Triangle& tri = scene.triangles[hit->triangle];
        const double w0 = 1.0 - hit->u - hit->v, w1 = hit->u, w2 = hit->v;
        const Vec3 p = primary.origin + hit->t * primary.direction;
        Vec3 n = (w0 * scene.normals[tri[0]] + w1 * scene.normals[tri[1]] + w2 * scene.normals[tri[2]]).normalized();
        Vec3 ng = (scene.vertices[tri[1]] - scene.vertices[tri[0]]).cross(scene.vertices[tri[2]] - scene.vertices[tri[0]]).normalized();
        if (ng.dot(n) < 0.0) ng = -ng;
        Vec3 albedo = w0 * scene.albedo[tri[0]] + w1 * scene.albedo[tri[1]] + w2 * scene.albedo[tri[2]];
        const int texture = scene.triangle_texture[hit->triangle];
        if (texture >= 0) {
          const Vec2 uv = w0 * scene.uvs[tri[0]] + w1 * scene.uvs[tri[1]] + w2 * scene.uvs[tri[2]];
          albedo = albedo.cwiseProduct(sample_bilinear(scene.textures[texture], uv));
        }
        const int object = scene.triangle_object[hit->triangle];
        const Vec3 origin = p + offset * ng;
        Vec3 t, b;
        frame(n, t, b);

        std::mt19937_64 rng(splitmix64(seed ^ splitmix64(index)));
        std::uniform_real_distribution<double> uniform(0.0, 1.0);
        Vec3 sum = Vec3::Zero();
        for (int i = 0; i < spp; ++i) {
          double u1, u2;
          if (i < strata * strata) {
            u1 = ((i % strata) + uniform(rng)) / strata;
            u2 = ((i / strata) + uniform(rng)) / strata;
          } else {
            u1 = uniform(rng);
            u2 = uniform(rng);
          }
          const double r = std::sqrt(u1), phi = 2.0 * kPi * u2;
          const Vec3 d = (r * std::cos(phi) * t + r * std::sin(phi) * b + std::sqrt(std::max(0.0, 1.0 - u1)) * n).normalized();
          if (!scene.occluded(origin, d, object)) sum += sample_envmap(scene.envmap, d);
        }
        out.set_rgb(x, static_cast<int>(y), albedo.cwiseProduct(sum / spp));
      }
    }
  });
  return out;
}

std::vector<VisibilitySample> sampled_visibility(const Vec3& point, const SphereSet& blockers, std::size_t samples,
                                                 std::uint64_t seed, double epsilon) {
  if (samples < 1) throw ConfigError("sample count must be at least 1");
  const double blocked = epsilon > 0.0 ? std::exp(-epsilon) : 0.0;
  std::vector<VisibilitySample> out;
  out.reserve(samples);
  for (const Vec3& d : uniform_sphere_directions(samples, seed)) {
    bool hit = false;
    for (std::size_t j = 0; j < blockers.size() && !hit; ++j) hit = ray_hits_sphere(point, d, blockers.centers[j], blockers.radii[j]);
    out.push_back({d, hit ? blocked : 1.0});
  }
  return out;
}

std::vector<VisibilitySample> sampled_visibility(const Vec3& point, const Bvh& mesh, std::size_t samples,
                                                 std::uint64_t seed, double epsilon) {
  if (samples < 1) throw ConfigError("sample count must be at least 1");
  const double blocked = epsilon > 0.0 ? std::exp(-epsilon) : 0.0;
  std::vector<VisibilitySample> out;
  out.reserve(samples);
  for (const Vec3& d : uniform_sphere_directions(samples, seed)) {
    const bool hit = mesh.triangle_count() > 0 && mesh.occluded({point, d}, 0.0, kInf);
    out.push_back({d, hit ? blocked : 1.0});
  }
  return out;
}

double visibility_disagreement(const TriangleMesh& mesh, const SphereSet& spheres, std::size_t points,
                               std::size_t directions, std::uint64_t seed) {
  const Bvh bvh(mesh);
  const Aabb box = bounds(mesh.vertices);
  const Vec3 center = box.center(), half = 0.75 * (box.hi - box.lo);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uniform(-1.0, 1.0);
  std::size_t mismatches = 0, total = 0, accepted = 0;
  while (accepted < points) {
    const Vec3 p = center + Vec3(uniform(rng) * half.x(), uniform(rng) * half.y(), uniform(rng) * half.z());
    if (bvh.inside(p)) continue;
    bool in_sphere = false;
    for (std::size_t j = 0; j < spheres.size() && !in_sphere; ++j) in_sphere = (p - spheres.centers[j]).norm() <= spheres.radii[j];
    if (in_sphere) continue;
    for (const Vec3& d : uniform_sphere_directions(directions, seed + 1 + accepted)) {
      const bool a = bvh.occluded({p, d}, 0.0, kInf);
      bool b = false;
      for (std::size_t j = 0; j < spheres.size() && !b; ++j) b = ray_hits_sphere(p, d, spheres.centers[j], spheres.radii[j]);
      mismatches += a != b;
      ++total;
    }
    ++accepted;
  }
  return total == 0 ? 0.0 : static_cast<double>(mismatches) / static_cast<double>(total);
}

}  // namespace shseed

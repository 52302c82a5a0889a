#include "shseed/scenes.hpp"

#include "shseed/sphere_fit.hpp"

#include <cmath>

namespace shseed {

EnvironmentLight sky_light(int band_count, const Vec3& sun_direction, const Vec3& sun, const Vec3& sky,
                           double sharpness) {
  const Vec3 s = sun_direction.normalized();
  const QuadratureGrid grid = quadrature_for_degree(2 * band_count + static_cast<int>(std::ceil(sharpness)) + 2);
  const SHVector lobe = project_function(
      [&](const Vec3& w) { return std::pow(0.5 * (1.0 + w.dot(s)), sharpness); }, band_count, grid);
  EnvironmentLight light(band_count);
  for (int c = 0; c < 3; ++c) light.channels[c] = sun[c] * lobe + SHVector::constant(band_count, sky[c]);
  return light;
}

EnvironmentLight default_sky(int band_count) {
  return sky_light(band_count, Vec3(0.4, 1.0, 0.5), Vec3(2.4, 2.2, 1.9), Vec3(0.25, 0.28, 0.35));
}

Vec3 pattern_albedo(const Vec3& p, double frequency) {
  const double t = 0.5 + 0.5 * std::sin(frequency * p.x()) * std::sin(frequency * p.z()) * std::cos(0.7 * frequency * p.y());
  const Vec3 a(0.85, 0.35, 0.2), b(0.2, 0.45, 0.9);
  return a + t * (b - a);
}

namespace {

TriangleMesh occluder_mesh(const ShadowSceneOptions& o) {
  const int r = o.resolution;
  switch (o.shape) {
    case OccluderShape::Box: return make_box(Vec3::Constant(2.0 * o.occluder_size), std::max(1, r / 4));
    case OccluderShape::Torus: return make_torus(o.occluder_size, 0.4 * o.occluder_size, r, 2 * r);
    case OccluderShape::Sphere: break;
  }
  return make_uv_sphere(o.occluder_size, r, 2 * r);
}

double bounding_radius(const ShadowSceneOptions& o) {
  switch (o.shape) {
    case OccluderShape::Box: return o.occluder_size * std::sqrt(3.0);
    case OccluderShape::Torus: return 1.4 * o.occluder_size;
    case OccluderShape::Sphere: break;
  }
  return o.occluder_size;
}

}  // namespace

Scene make_shadow_scene(const ShadowSceneOptions& o) {
  Scene scene;
  scene.settings.band_count = o.band_count;
  scene.settings.shadows = o.shadows;
  scene.light = default_sky(o.band_count);

  SceneObject plane;
  plane.name = "ground";
  plane.mesh = make_plane(o.plane_size, o.plane_segments);
  plane.casts_shadows = false;
  if (o.textured_plane) {
    plane.texture = Image(o.texture_size, o.texture_size);
    for (int y = 0; y < o.texture_size; ++y) {
      for (int x = 0; x < o.texture_size; ++x) {
        const double u = (x + 0.5) / o.texture_size, v = 1.0 - (y + 0.5) / o.texture_size;
        plane.texture.set_rgb(x, y, pattern_albedo(Vec3(8.0 * u, 0.0, 8.0 * v), 2.0));
      }
    }
  } else {
    for (const Vec3& p : plane.mesh.vertices) plane.albedo.push_back(pattern_albedo(p, 2.5));
  }
  scene.objects.push_back(std::move(plane));

  SceneObject occ;
  occ.name = "occluder";
  occ.mesh = occluder_mesh(o);
  if (o.sphere_count <= 1) {
    occ.spheres = SphereSet::from_spheres({Vec3::Zero()}, {bounding_radius(o)});
  } else {
    occ.spheres = fit_spheres(occ.mesh, o.sphere_count, 40, o.seed);
  }
  for (const Vec3& p : occ.mesh.vertices) occ.albedo.push_back(pattern_albedo(p, 9.0));
  const Vec3 lift(0.0, o.elevation, 0.0);
  translate(occ.mesh, lift);
  for (Vec3& c : occ.spheres.centers) c += lift;
  scene.objects.push_back(std::move(occ));

  if (o.overhead_camera) {
    scene.camera = Camera::look_at(Vec3(0.0, 5.0, 0.0), Vec3::Zero(), Vec3(0, 0, -1), 45.0, o.width, o.height);
  } else {
    scene.camera = Camera::look_at(Vec3(0.0, 3.2, 3.6), Vec3(0.0, 0.2, 0.0), Vec3(0, 1, 0), 45.0, o.width, o.height);
  }
  scene.prepare();
  return scene;
}

}  // namespace shseed

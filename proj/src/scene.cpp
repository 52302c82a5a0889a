#include "shseed/scene.hpp"

#include <cmath>

namespace shseed {

void Scene::prepare() {
  const int n = settings.band_count;
  if (n < 1 || n > TripleProductTensor::kMaxBandCount) throw ConfigError("band count out of range");
  if (light.band_count() != n) throw ConfigError("light band count does not match the render settings");
  if (!(settings.epsilon > 0.0)) throw ConfigError("epsilon must be positive");
  if (!(settings.exclusion_tau >= 0.0)) throw ConfigError("exclusion tau must be non-negative");
  if (!(settings.raster.sigma > 0.0) || !(settings.raster.band > 0.0)) {
    throw ConfigError("raster sigma and band must be positive");
  }
  camera.validate();
  for (auto& o : objects) {
    o.mesh.validate();
    o.spheres.validate();
    if (o.textured()) {
      if (!o.mesh.has_uvs()) throw ConfigError("object '" + o.name + "' has a texture but no UVs");
    } else if (o.albedo.size() != o.mesh.vertex_count()) {
      throw ConfigError("object '" + o.name + "' albedo count does not match its vertex count");
    }
    o.pivot = bounds(o.mesh.vertices).center();
    if (o.spheres.empty()) {
      o.graph = EmbeddedGraph{};
      o.exclusion.assign(o.mesh.vertex_count(), {});
    } else {
      o.graph = build_graph(o.mesh, o.spheres, std::min<int>(settings.graph_k, static_cast<int>(o.spheres.size())));
      o.exclusion = attached_sphere_mask(o.mesh, o.spheres, settings.exclusion_tau);
    }
  }
}

std::size_t Scene::vertex_count() const {
  std::size_t n = 0;
  for (const auto& o : objects) n += o.mesh.vertex_count();
  return n;
}

std::size_t Scene::sphere_count() const {
  std::size_t n = 0;
  for (const auto& o : objects) n += o.spheres.size();
  return n;
}

const char* param_kind_name(ParamKind kind) {
  switch (kind) {
    case ParamKind::Albedo: return "albedo";
    case ParamKind::Lighting: return "lighting";
    case ParamKind::RigidPose: return "pose";
    case ParamKind::GraphDeformation: return "deformation";
  }
  return "?";
}

ParamKind parse_param_kind(const std::string& name) {
  if (name == "albedo") return ParamKind::Albedo;
  if (name == "lighting") return ParamKind::Lighting;
  if (name == "pose") return ParamKind::RigidPose;
  if (name == "deformation") return ParamKind::GraphDeformation;
  throw ConfigError("unknown parameter block '" + name + "'");
}

std::string ParamBlock::label() const {
  if (kind == ParamKind::Lighting) return "lighting";
  return std::string(param_kind_name(kind)) + "[" + std::to_string(object) + "]";
}

std::array<double, 7> pose_params(const RigidPose& pose) {
  const Vec4 q = quat_coeffs(pose.rotation);
  return {q[0], q[1], q[2], q[3], pose.translation.x(), pose.translation.y(), pose.translation.z()};
}

RigidPose pose_from_params(std::span<const double> p) {
  if (p.size() != 7) throw ConfigError("pose needs 7 values");
  RigidPose pose;
  pose.rotation = quat_from_coeffs(Vec4(p[0], p[1], p[2], p[3])).normalized();
  pose.translation = Vec3(p[4], p[5], p[6]);
  return pose;
}

namespace {

const SceneObject& object_at(const Scene& scene, int object) {
  if (object < 0 || object >= static_cast<int>(scene.objects.size())) throw ConfigError("object index out of range");
  return scene.objects[object];
}

}  // namespace

std::size_t block_size(const Scene& scene, ParamKind kind, int object) {
  switch (kind) {
    case ParamKind::Lighting: return 3 * static_cast<std::size_t>(sh_count(scene.settings.band_count));
    case ParamKind::RigidPose: object_at(scene, object); return 7;
    case ParamKind::GraphDeformation: return 7 * object_at(scene, object).spheres.size();
    case ParamKind::Albedo: {
      const auto& o = object_at(scene, object);
      return o.textured() ? o.texture.data.size() : 3 * o.mesh.vertex_count();
    }
  }
  return 0;
}

ParamBlock extract_block(const Scene& scene, ParamKind kind, int object) {
  ParamBlock b;
  b.kind = kind;
  b.object = kind == ParamKind::Lighting ? 0 : object;
  switch (kind) {
    case ParamKind::Lighting: b.values = scene.light.flat(); break;
    case ParamKind::RigidPose: {
      const auto p = pose_params(object_at(scene, object).pose);
      b.values.assign(p.begin(), p.end());
      break;
    }
    case ParamKind::GraphDeformation:
      if (object_at(scene, object).spheres.empty()) throw ConfigError("object has no deformation graph");
      b.values = node_params(scene.objects[object].spheres);
      break;
    case ParamKind::Albedo: {
      const auto& o = object_at(scene, object);
      if (o.textured()) {
        if (o.texture.channels != 3) throw ConfigError("albedo textures must be RGB");
        b.values = o.texture.data;
      } else {
        for (const Vec3& a : o.albedo) b.values.insert(b.values.end(), {a.x(), a.y(), a.z()});
      }
      break;
    }
  }
  b.grad.assign(b.values.size(), 0.0);
  return b;
}

void apply_block(Scene& scene, const ParamBlock& b) {
  if (b.values.size() != block_size(scene, b.kind, b.object)) throw ConfigError("parameter block " + b.label() + " has the wrong size");
  switch (b.kind) {
    case ParamKind::Lighting:
      scene.light = EnvironmentLight::from_flat(scene.settings.band_count, b.values);
      break;
    case ParamKind::RigidPose: {
      auto& pose = scene.objects[b.object].pose;
      pose.rotation = quat_from_coeffs(Vec4(b.values[0], b.values[1], b.values[2], b.values[3]));
      pose.translation = Vec3(b.values[4], b.values[5], b.values[6]);
      break;
    }
    case ParamKind::GraphDeformation: set_node_params(scene.objects[b.object].spheres, b.values); break;
    case ParamKind::Albedo: {
      auto& o = scene.objects[b.object];
      if (o.textured()) {
        o.texture.data = b.values;
      } else {
        for (std::size_t v = 0; v < o.albedo.size(); ++v) o.albedo[v] = Vec3(b.values[3 * v], b.values[3 * v + 1], b.values[3 * v + 2]);
      }
      break;
    }
  }
}

}  // namespace shseed

#include "shseed/render.hpp"

#include "shseed/parallel.hpp"

#include <algorithm>
#include <cmath>

namespace shseed {

static_assert(sizeof(Vec3) == 3 * sizeof(double), "Vec3 must be three packed doubles");

namespace {

std::span<Vec3> as_vec3(std::span<double> s) { return {reinterpret_cast<Vec3*>(s.data()), s.size() / 3}; }
std::span<const Vec3> as_vec3(std::span<const double> s) {
  return {reinterpret_cast<const Vec3*>(s.data()), s.size() / 3};
}

constexpr std::size_t kVertexGrain = 32;

}  // namespace

void pose_object(const SceneObject& object, std::span<const double> pose, std::span<const double> deformation,
                 std::span<Vec3> positions, std::span<Vec3> centers) {
  const auto& rest = object.mesh.vertices;
  const std::size_t spheres = object.spheres.size();
  std::vector<Vec3> moved(spheres);
  if (spheres > 0) {
    std::vector<Vec3> deformed(rest.size());
    deform_points(object.graph, rest, deformation, deformed);
    rigid_points(pose, object.pivot, deformed, positions);
    for (std::size_t j = 0; j < spheres; ++j) {
      moved[j] = object.spheres.centers[j] + Vec3(deformation[7 * j + 4], deformation[7 * j + 5], deformation[7 * j + 6]);
    }
    rigid_points(pose, object.pivot, moved, centers);
  } else {
    rigid_points(pose, object.pivot, rest, positions);
  }
}

void pose_object_vjp(const SceneObject& object, std::span<const double> pose, std::span<const double> deformation,
                     std::span<const Vec3> grad_positions, std::span<const Vec3> grad_centers,
                     std::span<double> grad_pose, std::span<double> grad_deformation) {
  const auto& rest = object.mesh.vertices;
  const std::size_t spheres = object.spheres.size();
  std::vector<double> scratch_pose;
  if (grad_pose.empty()) {
    scratch_pose.assign(7, 0.0);
    grad_pose = scratch_pose;
  }
  if (spheres == 0) {
    rigid_points_vjp(pose, object.pivot, rest, grad_positions, grad_pose, {});
    return;
  }
  const bool want_def = !grad_deformation.empty();
  std::vector<Vec3> deformed(rest.size());
  deform_points(object.graph, rest, deformation, deformed);
  std::vector<Vec3> grad_deformed(want_def ? rest.size() : 0, Vec3::Zero());
  rigid_points_vjp(pose, object.pivot, deformed, grad_positions, grad_pose, grad_deformed);
  if (want_def) deform_points_vjp(object.graph, rest, deformation, grad_deformed, grad_deformation);

  std::vector<Vec3> moved(spheres);
  for (std::size_t j = 0; j < spheres; ++j) {
    moved[j] = object.spheres.centers[j] + Vec3(deformation[7 * j + 4], deformation[7 * j + 5], deformation[7 * j + 6]);
  }
  std::vector<Vec3> grad_moved(want_def ? spheres : 0, Vec3::Zero());
  rigid_points_vjp(pose, object.pivot, moved, grad_centers, grad_pose, grad_moved);
  if (want_def) {
    for (std::size_t j = 0; j < spheres; ++j) {
      for (int a = 0; a < 3; ++a) grad_deformation[7 * j + 4 + a] += grad_moved[j][a];
    }
  }
}

// Stage implementations shared by render() and the taped renderer.
class RenderPipeline {
 public:
  struct Views {
    std::vector<std::span<const Vec3>> positions, normals, centers;
  };
  struct Grads {
    std::vector<std::span<Vec3>> positions, normals, centers;
  };

  explicit RenderPipeline(const Scene& s)
      : scene(s),
        bands(s.settings.band_count),
        coeffs(sh_count(bands)),
        visibility_kernel(bands, s.settings.epsilon),
        shading_kernel(bands),
        rasterizer(s.settings.raster) {
    const std::size_t objects = scene.objects.size();
    vertex_offset.assign(objects + 1, 0);
    sphere_offset.assign(objects, -1);
    std::vector<Triangle> triangles;
    std::vector<int> weld;
    int blockers = 0;
    for (std::size_t o = 0; o < objects; ++o) {
      const SceneObject& obj = scene.objects[o];
      const int base = static_cast<int>(vertex_offset[o]);
      vertex_offset[o + 1] = vertex_offset[o] + obj.mesh.vertex_count();
      const int texture = obj.textured() ? static_cast<int>(textures.size()) : -1;
      if (obj.textured()) {
        textures.push_back(obj.texture);
        texture_object.push_back(static_cast<int>(o));
      }
      for (const Triangle& t : obj.mesh.triangles) {
        triangles.push_back({t[0] + base, t[1] + base, t[2] + base});
        material.triangle_texture.push_back(texture);
      }
      for (int w : weld_map(obj.mesh.vertices)) weld.push_back(w + base);
      for (std::size_t v = 0; v < obj.mesh.vertex_count(); ++v) {
        material.uvs.push_back(obj.mesh.has_uvs() ? obj.mesh.uvs[v] : Vec2::Zero());
        vertex_object.push_back(static_cast<int>(o));
        vertex_local.push_back(static_cast<int>(v));
      }
      normal_builders.emplace_back(obj.mesh);
      if (obj.casts_shadows && !obj.spheres.empty()) {
        sphere_offset[o] = blockers;
        for (std::size_t j = 0; j < obj.spheres.size(); ++j) {
          blocker_object.push_back(static_cast<int>(o));
          blocker_local.push_back(static_cast<int>(j));
        }
        blockers += static_cast<int>(obj.spheres.size());
      }
    }
    topology = RasterTopology(std::move(triangles), std::move(weld));
    const std::size_t vertices = vertex_offset.back();
    exclusion.resize(vertices);
    for (std::size_t o = 0; o < objects; ++o) {
      if (sphere_offset[o] < 0) continue;
      for (std::size_t v = 0; v < scene.objects[o].exclusion.size(); ++v) {
        for (int j : scene.objects[o].exclusion[v]) exclusion[vertex_offset[o] + v].push_back(j + sphere_offset[o]);
      }
    }
    if (scene.settings.shadows && blockers > 0) {
      visibility.assign(vertices * coeffs, 0.0);
      visibility_ws.resize(vertices);
    }
  }

  std::size_t vertex_count() const { return vertex_offset.back(); }
  bool shadowed() const { return !visibility.empty(); }

  void normals(std::size_t o, std::span<const Vec3> positions, std::span<Vec3> out) const {
    normal_builders[o].forward(positions, out);
  }

  void transfer_forward(const Views& g, std::span<double> out) {
    if (shadowed()) {
      std::vector<Vec3> c;
      std::vector<double> r;
      for (std::size_t b = 0; b < blocker_object.size(); ++b) {
        c.push_back(g.centers[blocker_object[b]][blocker_local[b]]);
        r.push_back(scene.objects[blocker_object[b]].spheres.radii[blocker_local[b]]);
      }
      blockers = BlockerSet(std::move(c), std::move(r));
    }
    parallel_for(vertex_count(), kVertexGrain, [&](std::size_t begin, std::size_t end, std::size_t) {
      ShadingKernel::Workspace sws;
      for (std::size_t v = begin; v < end; ++v) {
        const int o = vertex_object[v], l = vertex_local[v];
        const std::span<double> w = out.subspan(v * coeffs, coeffs);
        if (shadowed()) {
          const std::span<double> vis(visibility.data() + v * coeffs, coeffs);
          visibility_kernel.forward(g.positions[o][l], blockers, exclusion[v], vis, visibility_ws[v]);
          shading_kernel.transfer(g.normals[o][l], vis, w, sws);
        } else {
          shading_kernel.transfer(g.normals[o][l], {}, w, sws);
        }
      }
    });
  }

  void transfer_backward(const Views& g, std::span<const double> grad_transfer, const Grads& grads) {
    const bool want_vis = shadowed() && (!grads.positions.empty() || !grads.centers.empty());
    const std::size_t chunks = chunk_count(vertex_count(), kVertexGrain);
    std::vector<std::vector<Vec3>> center_acc(want_vis ? chunks : 0);
    parallel_for(vertex_count(), kVertexGrain, [&](std::size_t begin, std::size_t end, std::size_t chunk) {
      ShadingKernel::Workspace sws;
      std::vector<double> grad_vis(coeffs), grad_radii;
      if (want_vis) {
        center_acc[chunk].assign(blockers.size(), Vec3::Zero());
        grad_radii.assign(blockers.size(), 0.0);
      }
      for (std::size_t v = begin; v < end; ++v) {
        const int o = vertex_object[v], l = vertex_local[v];
        const std::span<const double> gw = grad_transfer.subspan(v * coeffs, coeffs);
        if (std::all_of(gw.begin(), gw.end(), [](double x) { return x == 0.0; })) continue;
        std::span<const double> vis;
        if (shadowed()) vis = std::span<const double>(visibility.data() + v * coeffs, coeffs);
        std::fill(grad_vis.begin(), grad_vis.end(), 0.0);
        const Vec3 gn = shading_kernel.transfer_backward(g.normals[o][l], vis, gw, want_vis ? std::span<double>(grad_vis) : std::span<double>(), sws);
        if (!grads.normals.empty()) grads.normals[o][l] += gn;
        if (!want_vis) continue;
        Vec3 gx = Vec3::Zero();
        visibility_kernel.backward(g.positions[o][l], blockers, exclusion[v], vis, visibility_ws[v], grad_vis, gx,
                                   center_acc[chunk], grad_radii);
        if (!grads.positions.empty()) grads.positions[o][l] += gx;
      }
    });
    if (!want_vis || grads.centers.empty()) return;
    for (const auto& acc : center_acc) {
      if (acc.empty()) continue;
      for (std::size_t b = 0; b < acc.size(); ++b) grads.centers[blocker_object[b]][blocker_local[b]] += acc[b];
    }
  }

  void irradiance_forward(std::span<const double> light_flat, std::span<const double> transfer,
                          std::span<double> out) const {
    const EnvironmentLight light = EnvironmentLight::from_flat(bands, light_flat);
    for (std::size_t v = 0; v < vertex_count(); ++v) {
      const Vec3 e = ShadingKernel::irradiance(light, transfer.subspan(v * coeffs, coeffs));
      for (int c = 0; c < 3; ++c) out[3 * v + c] = e[c];
    }
  }

  void irradiance_backward(std::span<const double> light_flat, std::span<const double> transfer,
                           std::span<const double> grad_e, std::span<double> grad_transfer,
                           std::span<double> grad_light) const {
    const EnvironmentLight light = EnvironmentLight::from_flat(bands, light_flat);
    for (std::size_t v = 0; v < vertex_count(); ++v) {
      const Vec3 g(grad_e[3 * v], grad_e[3 * v + 1], grad_e[3 * v + 2]);
      if (g.isZero()) continue;
      ShadingKernel::irradiance_backward(light, transfer.subspan(v * coeffs, coeffs), g,
                                         grad_transfer.empty() ? grad_transfer : grad_transfer.subspan(v * coeffs, coeffs),
                                         grad_light);
    }
  }

  // attribute = albedo * E, or E for textured objects (the texture multiplies per pixel).
  void attributes_forward(const std::vector<std::span<const double>>& albedo, std::span<const double> e,
                          std::span<double> out) const {
    for (std::size_t v = 0; v < vertex_count(); ++v) {
      const int o = vertex_object[v], l = vertex_local[v];
      for (int c = 0; c < 3; ++c) {
        out[3 * v + c] = scene.objects[o].textured() ? e[3 * v + c] : albedo[o][3 * l + c] * e[3 * v + c];
      }
    }
  }

  void attributes_backward(const std::vector<std::span<const double>>& albedo, std::span<const double> e,
                           std::span<const double> grad_attr, std::span<double> grad_e,
                           const std::vector<std::span<double>>& grad_albedo) const {
    for (std::size_t v = 0; v < vertex_count(); ++v) {
      const int o = vertex_object[v], l = vertex_local[v];
      const bool textured = scene.objects[o].textured();
      for (int c = 0; c < 3; ++c) {
        const double g = grad_attr[3 * v + c];
        if (!grad_e.empty()) grad_e[3 * v + c] += textured ? g : g * albedo[o][3 * l + c];
        if (!textured && !grad_albedo.empty() && !grad_albedo[o].empty()) grad_albedo[o][3 * l + c] += g * e[3 * v + c];
      }
    }
  }

  void coverage(const std::vector<std::span<const Vec3>>& positions) {
    gather(positions);
    rasterizer.coverage(scene.camera, all_positions, topology, framebuffer);
  }

  void shade(std::span<const double> attributes, const std::vector<std::span<const double>>& texture_values,
             Image& out) {
    bind_textures(texture_values);
    rasterizer.shade(framebuffer, topology, as_vec3(attributes), material, out);
  }

  void shade_backward(std::span<const double> attributes, const std::vector<std::span<const double>>& texture_values,
                      const Image& grad_image, std::span<double> grad_attributes,
                      const std::vector<std::span<double>>& grad_textures,
                      const std::vector<std::span<Vec3>>& grad_positions) {
    bind_textures(texture_values);
    std::vector<Image> tex_grads;
    std::vector<Image*> tex_ptrs;
    for (std::size_t t = 0; t < textures.size(); ++t) {
      const bool want = !grad_textures.empty() && !grad_textures[t].empty();
      tex_grads.emplace_back(want ? Image(textures[t].width, textures[t].height, textures[t].channels) : Image());
    }
    for (std::size_t t = 0; t < textures.size(); ++t) tex_ptrs.push_back(tex_grads[t].empty() ? nullptr : &tex_grads[t]);
    std::vector<Vec3> grad_all(grad_positions.empty() ? 0 : vertex_count(), Vec3::Zero());
    rasterizer.backward(scene.camera, framebuffer, topology, as_vec3(attributes), material, grad_image,
                        grad_attributes.empty() ? std::span<Vec3>() : as_vec3(grad_attributes), tex_ptrs, grad_all);
    for (std::size_t t = 0; t < textures.size(); ++t) {
      if (tex_ptrs[t] == nullptr) continue;
      for (std::size_t i = 0; i < tex_grads[t].data.size(); ++i) grad_textures[t][i] += tex_grads[t].data[i];
    }
    if (grad_positions.empty()) return;
    for (std::size_t v = 0; v < vertex_count(); ++v) {
      const auto& target = grad_positions[vertex_object[v]];
      if (!target.empty()) target[vertex_local[v]] += grad_all[v];
    }
  }

  Scene scene;
  int bands;
  std::size_t coeffs;
  VisibilityKernel visibility_kernel;
  ShadingKernel shading_kernel;
  Rasterizer rasterizer;
  std::vector<std::size_t> vertex_offset;
  std::vector<int> sphere_offset;
  std::vector<int> vertex_object, vertex_local;
  std::vector<int> blocker_object, blocker_local;
  std::vector<std::vector<int>> exclusion;
  std::vector<NormalBuilder> normal_builders;
  RasterTopology topology;
  RasterMaterial material;
  std::vector<Image> textures;
  std::vector<int> texture_object;

  BlockerSet blockers;
  std::vector<double> visibility;
  std::vector<VisibilityKernel::Workspace> visibility_ws;
  std::vector<Vec3> all_positions;
  Framebuffer framebuffer;

 private:
  void gather(const std::vector<std::span<const Vec3>>& positions) {
    all_positions.resize(vertex_count());
    for (std::size_t v = 0; v < vertex_count(); ++v) all_positions[v] = positions[vertex_object[v]][vertex_local[v]];
  }
  void bind_textures(const std::vector<std::span<const double>>& values) {
    material.textures.clear();
    for (std::size_t t = 0; t < textures.size(); ++t) {
      if (!values.empty()) std::copy(values[t].begin(), values[t].end(), textures[t].data.begin());
      material.textures.push_back(&textures[t]);
    }
  }
};

namespace {

std::vector<double> flat_albedo(const SceneObject& o) {
  std::vector<double> out;
  if (o.textured()) return o.texture.data;
  for (const Vec3& a : o.albedo) out.insert(out.end(), {a.x(), a.y(), a.z()});
  return out;
}

}  // namespace

PosedScene pose_scene(const Scene& scene) {
  PosedScene posed;
  for (const auto& o : scene.objects) {
    const auto pose = pose_params(o.pose);
    const auto def = node_params(o.spheres);
    std::vector<Vec3> positions(o.mesh.vertex_count()), normals(o.mesh.vertex_count()), centers(o.spheres.size());
    pose_object(o, pose, def, positions, centers);
    NormalBuilder(o.mesh).forward(positions, normals);
    posed.positions.push_back(std::move(positions));
    posed.normals.push_back(std::move(normals));
    posed.spheres.push_back(SphereSet::from_spheres(std::move(centers), o.spheres.radii));
  }
  return posed;
}

Image render(const Scene& scene) {
  RenderPipeline p(scene);
  const std::size_t objects = scene.objects.size();
  std::vector<std::vector<Vec3>> positions(objects), normals(objects), centers(objects);
  RenderPipeline::Views views;
  for (std::size_t o = 0; o < objects; ++o) {
    const SceneObject& obj = scene.objects[o];
    positions[o].resize(obj.mesh.vertex_count());
    normals[o].resize(obj.mesh.vertex_count());
    centers[o].resize(obj.spheres.size());
    const auto pose = pose_params(obj.pose);
    pose_object(obj, pose, node_params(obj.spheres), positions[o], centers[o]);
    p.normals(o, positions[o], normals[o]);
    views.positions.emplace_back(positions[o]);
    views.normals.emplace_back(normals[o]);
    views.centers.emplace_back(centers[o]);
  }
  const std::size_t n = p.vertex_count();
  std::vector<double> transfer(n * p.coeffs), e(3 * n), attributes(3 * n);
  p.transfer_forward(views, transfer);
  p.irradiance_forward(scene.light.flat(), transfer, e);
  std::vector<std::vector<double>> albedo_store;
  std::vector<std::span<const double>> albedo, textures;
  for (const auto& o : scene.objects) albedo_store.push_back(flat_albedo(o));
  for (const auto& a : albedo_store) albedo.emplace_back(a);
  p.attributes_forward(albedo, e, attributes);
  p.coverage(views.positions);
  Image out;
  p.shade(attributes, textures, out);
  return out;
}

DifferentiableRenderer::DifferentiableRenderer(const Scene& scene)
    : pipeline_(std::make_unique<RenderPipeline>(scene)) {
  RenderPipeline& p = *pipeline_;
  const Scene& s = p.scene;
  const std::size_t objects = s.objects.size();
  const std::size_t n = p.vertex_count();

  light_slot_ = tape_.add_slot("lighting", 3 * p.coeffs, true);
  tape_.assign(light_slot_, s.light.flat());
  std::vector<int> positions(objects), normals(objects), centers(objects);
  for (std::size_t o = 0; o < objects; ++o) {
    const SceneObject& obj = s.objects[o];
    const std::string tag = "[" + std::to_string(o) + "]";
    pose_slots_.push_back(tape_.add_slot("pose" + tag, 7, true));
    const auto pose = pose_params(obj.pose);
    tape_.assign(pose_slots_.back(), pose);
    deformation_slots_.push_back(tape_.add_slot("deformation" + tag, 7 * obj.spheres.size(), true));
    tape_.assign(deformation_slots_.back(), node_params(obj.spheres));
    const auto albedo = flat_albedo(obj);
    albedo_slots_.push_back(tape_.add_slot("albedo" + tag, albedo.size(), true));
    tape_.assign(albedo_slots_.back(), albedo);
    positions[o] = tape_.add_slot("positions" + tag, 3 * obj.mesh.vertex_count());
    normals[o] = tape_.add_slot("normals" + tag, 3 * obj.mesh.vertex_count());
    centers[o] = tape_.add_slot("centers" + tag, 3 * obj.spheres.size());
  }

  Tape* tape = &tape_;
  for (std::size_t o = 0; o < objects; ++o) {
    const int ps = pose_slots_[o], ds = deformation_slots_[o], pos = positions[o], cen = centers[o], nor = normals[o];
    const SceneObject* obj = &s.objects[o];
    tape_.add_op(
        "pose[" + std::to_string(o) + "]", {ps, ds}, {pos, cen},
        [=] { pose_object(*obj, tape->value(ps), tape->value(ds), as_vec3(tape->value(pos)), as_vec3(tape->value(cen))); },
        [=] {
          pose_object_vjp(*obj, tape->value(ps), tape->value(ds), as_vec3(tape->grad(pos)), as_vec3(tape->grad(cen)),
                          tape->requires_grad(ps) ? tape->grad(ps) : std::span<double>(),
                          tape->requires_grad(ds) ? tape->grad(ds) : std::span<double>());
        });
    tape_.add_op(
        "normals[" + std::to_string(o) + "]", {pos}, {nor},
        [=, &p] { p.normals(o, as_vec3(tape->value(pos)), as_vec3(tape->value(nor))); },
        [=, &p] {
          p.normal_builders[o].backward(as_vec3(tape->value(pos)), as_vec3(tape->grad(nor)), as_vec3(tape->grad(pos)));
        });
  }

  const auto views = [=, &p] {
    RenderPipeline::Views v;
    for (std::size_t o = 0; o < p.scene.objects.size(); ++o) {
      v.positions.push_back(as_vec3(std::span<const double>(tape->value(positions[o]))));
      v.normals.push_back(as_vec3(std::span<const double>(tape->value(normals[o]))));
      v.centers.push_back(as_vec3(std::span<const double>(tape->value(centers[o]))));
    }
    return v;
  };

  const int transfer = tape_.add_slot("transfer", n * p.coeffs);
  std::vector<int> geometry;
  for (std::size_t o = 0; o < objects; ++o) geometry.insert(geometry.end(), {positions[o], normals[o], centers[o]});
  tape_.add_op(
      "transfer", geometry, {transfer}, [=, &p] { p.transfer_forward(views(), tape->value(transfer)); },
      [=, &p] {
        RenderPipeline::Grads g;
        for (std::size_t o = 0; o < p.scene.objects.size(); ++o) {
          g.positions.push_back(as_vec3(tape->grad(positions[o])));
          g.normals.push_back(as_vec3(tape->grad(normals[o])));
          g.centers.push_back(as_vec3(tape->grad(centers[o])));
        }
        p.transfer_backward(views(), tape->grad(transfer), g);
      });

  const int irradiance = tape_.add_slot("irradiance", 3 * n);
  const int light = light_slot_;
  tape_.add_op(
      "irradiance", {transfer, light}, {irradiance},
      [=, &p] { p.irradiance_forward(tape->value(light), tape->value(transfer), tape->value(irradiance)); },
      [=, &p] {
        p.irradiance_backward(tape->value(light), tape->value(transfer), tape->grad(irradiance),
                              tape->requires_grad(transfer) ? tape->grad(transfer) : std::span<double>(),
                              tape->requires_grad(light) ? tape->grad(light) : std::span<double>());
      });

  const int attributes = tape_.add_slot("attributes", 3 * n);
  std::vector<int> albedo_inputs{irradiance};
  std::vector<int> texture_slots;
  for (std::size_t o = 0; o < objects; ++o) {
    if (s.objects[o].textured()) {
      texture_slots.push_back(albedo_slots_[o]);
    } else {
      albedo_inputs.push_back(albedo_slots_[o]);
    }
  }
  const std::vector<int> albedo_slots = albedo_slots_;
  const auto albedo_views = [=] {
    std::vector<std::span<const double>> a;
    for (int id : albedo_slots) a.emplace_back(tape->value(id));
    return a;
  };
  tape_.add_op(
      "attributes", albedo_inputs, {attributes},
      [=, &p] { p.attributes_forward(albedo_views(), tape->value(irradiance), tape->value(attributes)); },
      [=, &p] {
        std::vector<std::span<double>> ga;
        for (int id : albedo_slots) ga.push_back(tape->requires_grad(id) ? tape->grad(id) : std::span<double>());
        p.attributes_backward(albedo_views(), tape->value(irradiance), tape->grad(attributes),
                              tape->requires_grad(irradiance) ? tape->grad(irradiance) : std::span<double>(), ga);
      });

  const int coverage = tape_.add_slot("coverage", 0);
  tape_.add_op(
      "coverage", positions, {coverage},
      [=, &p] {
        std::vector<std::span<const Vec3>> pos;
        for (int id : positions) pos.push_back(as_vec3(std::span<const double>(tape->value(id))));
        p.coverage(pos);
      },
      nullptr);

  image_slot_ = tape_.add_slot("image", 3 * static_cast<std::size_t>(s.camera.width) * s.camera.height);
  const int image = image_slot_;
  std::vector<int> shade_inputs{coverage, attributes};
  shade_inputs.insert(shade_inputs.end(), texture_slots.begin(), texture_slots.end());
  shade_inputs.insert(shade_inputs.end(), positions.begin(), positions.end());
  const auto texture_views = [=] {
    std::vector<std::span<const double>> t;
    for (int id : texture_slots) t.emplace_back(tape->value(id));
    return t;
  };
  const int width = s.camera.width, height = s.camera.height;
  tape_.add_op(
      "shade", shade_inputs, {image},
      [=, &p] {
        Image out;
        p.shade(tape->value(attributes), texture_views(), out);
        std::copy(out.data.begin(), out.data.end(), tape->value(image).begin());
      },
      [=, &p] {
        Image grad(width, height);
        const auto g = tape->grad(image);
        std::copy(g.begin(), g.end(), grad.data.begin());
        std::vector<std::span<double>> gt;
        for (int id : texture_slots) gt.push_back(tape->requires_grad(id) ? tape->grad(id) : std::span<double>());
        std::vector<std::span<Vec3>> gp;
        bool any = false;
        for (int id : positions) {
          gp.push_back(tape->requires_grad(id) ? as_vec3(tape->grad(id)) : std::span<Vec3>());
          any = any || tape->requires_grad(id);
        }
        if (!any) gp.clear();
        p.shade_backward(tape->value(attributes), texture_views(), grad,
                         tape->requires_grad(attributes) ? tape->grad(attributes) : std::span<double>(), gt, gp);
      });
  image_ = Image(width, height);
}

DifferentiableRenderer::~DifferentiableRenderer() = default;

const Scene& DifferentiableRenderer::scene() const { return pipeline_->scene; }

const Framebuffer& DifferentiableRenderer::framebuffer() const { return pipeline_->framebuffer; }

int DifferentiableRenderer::param_slot(ParamKind kind, int object) const {
  if (kind == ParamKind::Lighting) return light_slot_;
  if (object < 0 || object >= static_cast<int>(pose_slots_.size())) throw ConfigError("object index out of range");
  switch (kind) {
    case ParamKind::RigidPose: return pose_slots_[object];
    case ParamKind::GraphDeformation:
      if (pipeline_->scene.objects[object].spheres.empty()) throw ConfigError("object has no deformation graph");
      return deformation_slots_[object];
    case ParamKind::Albedo: return albedo_slots_[object];
    default: return -1;
  }
}

const Image& DifferentiableRenderer::forward(std::span<const ParamBlock> params) {
  for (const ParamBlock& b : params) {
    const int id = param_slot(b.kind, b.object);
    if (b.values.size() != tape_.slot(id).value.size()) throw ConfigError("parameter block " + b.label() + " has the wrong size");
    if (!std::all_of(b.values.begin(), b.values.end(), [](double x) { return std::isfinite(x); })) {
      throw NumericalError("parameter block " + b.label() + " has non-finite values");
    }
  }
  // Blocks not passed revert to the scene values.
  const Scene& s = pipeline_->scene;
  for (const auto& [kind, object] : active_) {
    const bool kept = std::any_of(params.begin(), params.end(), [&](const ParamBlock& b) {
      return b.kind == kind && b.object == object;
    });
    if (kept) continue;
    const int id = param_slot(kind, object);
    tape_.assign(id, extract_block(s, kind, object).values);
    tape_.set_requires_grad(id, false);
  }
  active_.clear();
  for (const ParamBlock& b : params) {
    const int id = param_slot(b.kind, b.object);
    tape_.assign(id, b.values);
    tape_.set_requires_grad(id, true);
    active_.emplace_back(b.kind, b.kind == ParamKind::Lighting ? 0 : b.object);
  }
  last_ops_ = tape_.forward();
  const auto v = tape_.value(image_slot_);
  std::copy(v.begin(), v.end(), image_.data.begin());
  return image_;
}

void DifferentiableRenderer::backward(const Image& grad_image, std::span<ParamBlock> params) {
  if (!grad_image.same_shape(image_)) throw ConfigError("image gradient shape does not match the render");
  for (const ParamBlock& b : params) {
    const bool active = std::any_of(active_.begin(), active_.end(), [&](const auto& a) {
      return a.first == b.kind && a.second == (b.kind == ParamKind::Lighting ? 0 : b.object);
    });
    if (!active) throw ConfigError("parameter block " + b.label() + " was not part of the last forward pass");
  }
  tape_.backward(image_slot_, grad_image.data);
  for (ParamBlock& b : params) {
    const auto g = tape_.grad(param_slot(b.kind, b.object));
    b.grad.assign(g.begin(), g.end());
  }
}

}  // namespace shseed

#include "shseed/scene_io.hpp"

#include "shseed/io.hpp"
#include "shseed/scenes.hpp"
#include "shseed/shading.hpp"
#include "shseed/sphere_fit.hpp"

#include <cmath>

namespace shseed {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& where, const std::string& what) { throw ConfigError(where + ": " + what); }

double number(const json& j, const std::string& where) {
  if (!j.is_number()) fail(where, "expected a number");
  return j.get<double>();
}

int integer(const json& j, const std::string& where) {
  if (!j.is_number_integer()) fail(where, "expected an integer");
  return j.get<int>();
}

bool boolean(const json& j, const std::string& where) {
  if (!j.is_boolean()) fail(where, "expected true or false");
  return j.get<bool>();
}

Vec3 vec3(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 3) fail(where, "expected [x, y, z]");
  return Vec3(number(j[0], where), number(j[1], where), number(j[2], where));
}

std::vector<double> numbers(const json& j, const std::string& where) {
  if (!j.is_array()) fail(where, "expected an array of numbers");
  std::vector<double> out;
  out.reserve(j.size());
  for (const json& v : j) out.push_back(number(v, where));
  return out;
}

template <typename T, typename Read>
T field(const json& object, const char* key, T fallback, const std::string& where, Read read) {
  const auto it = object.find(key);
  return it == object.end() ? fallback : read(*it, where + "." + key);
}

double number_or(const json& o, const char* key, double fallback, const std::string& where) {
  return field(o, key, fallback, where, number);
}
int integer_or(const json& o, const char* key, int fallback, const std::string& where) {
  return field(o, key, fallback, where, integer);
}
bool boolean_or(const json& o, const char* key, bool fallback, const std::string& where) {
  return field(o, key, fallback, where, boolean);
}

json to_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

// Image with exact doubles, used where a lossy PFM or PNG would break round trips.
json image_to_json(const Image& image) {
  return json{{"width", image.width}, {"height", image.height}, {"channels", image.channels}, {"data", image.data}};
}

Image image_from_json(const json& j, const std::string& where) {
  if (!j.is_object()) fail(where, "expected an image object");
  Image image(integer_or(j, "width", 0, where), integer_or(j, "height", 0, where), integer_or(j, "channels", 3, where));
  if (image.width < 1 || image.height < 1 || image.channels < 1) fail(where, "bad image size");
  image.data = numbers(j.at("data"), where + ".data");
  if (image.data.size() != image.pixel_count() * image.channels) fail(where, "pixel count does not match the size");
  return image;
}

class Loader {
 public:
  explicit Loader(fs::path base) : base_(std::move(base)) {}

  std::vector<AssetRecord> assets;

  fs::path resolve(const std::string& name, const std::string& where) {
    const fs::path p = fs::path(name).is_absolute() ? fs::path(name) : base_ / name;
    if (!fs::exists(p)) fail(where, "missing file '" + p.string() + "'");
    assets.push_back({p.string(), hex64(fnv1a64_file(p))});
    return p;
  }

  Image image(const std::string& name, const std::string& where) {
    const fs::path p = resolve(name, where);
    if (p.extension() == ".json") return image_from_json(json::parse(read_text(p)), p.string());
    return read_image(p);
  }

  TriangleMesh mesh(const json& j, const std::string& where) {
    if (j.is_string()) return read_obj(resolve(j.get<std::string>(), where));
    if (!j.is_object() || !j.contains("primitive")) fail(where, "expected a file name or {\"primitive\": ...}");
    const std::string kind = j["primitive"].is_string() ? j["primitive"].get<std::string>() : "";
    if (kind == "plane") {
      return make_plane(number_or(j, "size", 4.0, where), integer_or(j, "segments", 8, where));
    }
    if (kind == "sphere") {
      return make_uv_sphere(number_or(j, "radius", 0.5, where), integer_or(j, "rings", 12, where),
                            integer_or(j, "segments", 24, where));
    }
    if (kind == "box") {
      const Vec3 extents = j.contains("extents") ? vec3(j["extents"], where + ".extents")
                                                 : Vec3::Constant(number_or(j, "size", 1.0, where));
      return make_box(extents, integer_or(j, "segments", 2, where));
    }
    if (kind == "torus") {
      return make_torus(number_or(j, "major", 0.5, where), number_or(j, "minor", 0.2, where),
                        integer_or(j, "rings", 12, where), integer_or(j, "segments", 24, where));
    }
    fail(where + ".primitive", "unknown primitive '" + kind + "' (plane, sphere, box, torus)");
  }

  EnvironmentLight light(const json& j, int bands, Image& envmap, const std::string& where) {
    if (j.is_string() && j.get<std::string>() == "default_sky") return default_sky(bands);
    if (!j.is_object()) fail(where, "expected a light object");
    if (j.contains("envmap")) {
      if (!j["envmap"].is_string()) fail(where + ".envmap", "expected a file name");
      envmap = image(j["envmap"].get<std::string>(), where + ".envmap");
      if (envmap.channels != 3 || envmap.width != 2 * envmap.height) {
        fail(where + ".envmap", "environment map must be RGB lat-long with width = 2 * height");
      }
      return project_envmap(envmap, bands);
    }
    if (j.contains("constant")) return EnvironmentLight::constant(bands, vec3(j["constant"], where + ".constant"));
    if (j.contains("coefficients")) {
      const json& c = j["coefficients"];
      if (!c.is_array() || c.size() != 3) fail(where + ".coefficients", "expected three channel arrays");
      EnvironmentLight light(bands);
      for (int ch = 0; ch < 3; ++ch) {
        const std::vector<double> v = numbers(c[ch], where + ".coefficients");
        if (v.size() != static_cast<std::size_t>(bands * bands)) {
          fail(where + ".coefficients", "expected " + std::to_string(bands * bands) + " values per channel");
        }
        for (int i = 0; i < bands * bands; ++i) light.channels[ch][i] = v[i];
      }
      return light;
    }
    if (j.contains("sky")) {
      const json& s = j["sky"];
      const std::string w = where + ".sky";
      return sky_light(bands, field(s, "sun_direction", Vec3(0.4, 1.0, 0.5), w, vec3),
                       field(s, "sun", Vec3(2.4, 2.2, 1.9), w, vec3), field(s, "sky", Vec3(0.25, 0.28, 0.35), w, vec3),
                       number_or(s, "sharpness", 8.0, w));
    }
    fail(where, "expected envmap, constant, coefficients or sky");
  }

 private:
  fs::path base_;
};

RenderSettings settings_from_json(const json& j) {
  RenderSettings s;
  if (j.is_null()) return s;
  const std::string w = "settings";
  if (!j.is_object()) fail(w, "expected an object");
  s.band_count = integer_or(j, "band_count", s.band_count, w);
  s.epsilon = number_or(j, "epsilon", s.epsilon, w);
  s.exclusion_tau = number_or(j, "exclusion_tau", s.exclusion_tau, w);
  s.graph_k = integer_or(j, "graph_k", s.graph_k, w);
  s.shadows = boolean_or(j, "shadows", s.shadows, w);
  if (j.contains("raster")) {
    const json& r = j["raster"];
    const std::string rw = w + ".raster";
    s.raster.sigma = number_or(r, "sigma", s.raster.sigma, rw);
    s.raster.band = number_or(r, "band", s.raster.band, rw);
    s.raster.soft = boolean_or(r, "soft", s.raster.soft, rw);
    s.raster.near = number_or(r, "near", s.raster.near, rw);
    s.raster.background = field(r, "background", s.raster.background, rw, vec3);
  }
  return s;
}

json settings_to_json(const RenderSettings& s) {
  return json{{"band_count", s.band_count},
              {"epsilon", s.epsilon},
              {"exclusion_tau", s.exclusion_tau},
              {"graph_k", s.graph_k},
              {"shadows", s.shadows},
              {"raster",
               {{"sigma", s.raster.sigma},
                {"band", s.raster.band},
                {"soft", s.raster.soft},
                {"near", s.raster.near},
                {"background", to_json(s.raster.background)}}}};
}

Camera camera_from_json(const json& j) {
  const std::string w = "camera";
  if (!j.is_object()) fail(w, "expected an object");
  const int width = integer_or(j, "width", 64, w), height = integer_or(j, "height", 64, w);
  if (width < 1 || height < 1) fail(w, "width and height must be positive");
  if (j.contains("rotation")) {
    Camera c;
    c.width = width;
    c.height = height;
    c.fx = number_or(j, "fx", 0.0, w);
    c.fy = number_or(j, "fy", 0.0, w);
    c.cx = number_or(j, "cx", 0.5 * width, w);
    c.cy = number_or(j, "cy", 0.5 * height, w);
    const std::vector<double> r = numbers(j["rotation"], w + ".rotation");
    if (r.size() != 9) fail(w + ".rotation", "expected 9 row-major values");
    for (int k = 0; k < 9; ++k) c.rotation(k / 3, k % 3) = r[k];
    c.translation = field(j, "translation", Vec3(Vec3::Zero()), w, vec3);
    c.validate();
    return c;
  }
  if (!j.contains("eye") || !j.contains("target")) fail(w, "expected eye and target, or an explicit rotation");
  const Vec3 eye = vec3(j["eye"], w + ".eye"), target = vec3(j["target"], w + ".target");
  const Vec3 up = field(j, "up", Vec3(Vec3::UnitY()), w, vec3);
  const double fov = number_or(j, "fov", 45.0, w);
  if (!((target - eye).norm() > 0.0)) fail(w, "eye and target coincide");
  if (!(fov > 0.0 && fov < 180.0)) fail(w + ".fov", "must be in (0, 180) degrees");
  if ((target - eye).normalized().cross(up).norm() < 1e-9) fail(w + ".up", "parallel to the view direction");
  return Camera::look_at(eye, target, up, fov, width, height);
}

json camera_to_json(const Camera& c) {
  json r = json::array();
  for (int k = 0; k < 9; ++k) r.push_back(c.rotation(k / 3, k % 3));
  return json{{"width", c.width}, {"height", c.height}, {"fx", c.fx},       {"fy", c.fy},
              {"cx", c.cx},       {"cy", c.cy},         {"rotation", r}, {"translation", to_json(c.translation)}};
}

SphereSet bounding_sphere(const TriangleMesh& mesh) {
  const Vec3 c = bounds(mesh.vertices).center();
  double r = 0.0;
  for (const Vec3& v : mesh.vertices) r = std::max(r, (v - c).norm());
  return SphereSet::from_spheres({c}, {r});
}

SceneObject object_from_json(const json& j, int index, Loader& loader) {
  const std::string w = "objects[" + std::to_string(index) + "]";
  if (!j.is_object()) fail(w, "expected an object");
  SceneObject o;
  o.name = j.contains("name") && j["name"].is_string() ? j["name"].get<std::string>() : "object" + std::to_string(index);
  if (!j.contains("mesh")) fail(w, "missing mesh");
  o.mesh = loader.mesh(j["mesh"], w + ".mesh");
  if (j.contains("translate")) translate(o.mesh, vec3(j["translate"], w + ".translate"));

  const json albedo = j.contains("albedo") ? j["albedo"] : json::array({0.8, 0.8, 0.8});
  const std::string aw = w + ".albedo";
  if (albedo.is_array() && !albedo.empty() && albedo[0].is_number()) {
    o.albedo.assign(o.mesh.vertex_count(), vec3(albedo, aw));
  } else if (albedo.is_array()) {
    if (albedo.size() != o.mesh.vertex_count()) fail(aw, "needs one color per vertex");
    for (const json& a : albedo) o.albedo.push_back(vec3(a, aw));
  } else if (albedo.is_object() && albedo.contains("texture")) {
    if (!albedo["texture"].is_string()) fail(aw + ".texture", "expected a file name");
    o.texture = loader.image(albedo["texture"].get<std::string>(), aw + ".texture");
    if (o.texture.channels != 3) fail(aw + ".texture", "texture must be RGB");
  } else if (albedo.is_object() && albedo.contains("pattern")) {
    const double f = number(albedo["pattern"], aw + ".pattern");
    for (const Vec3& p : o.mesh.vertices) o.albedo.push_back(pattern_albedo(p, f));
  } else {
    fail(aw, "expected [r, g, b], per-vertex colors, {\"texture\": file} or {\"pattern\": frequency}");
  }

  if (j.contains("spheres")) {
    const json& s = j["spheres"];
    const std::string sw = w + ".spheres";
    if (s.is_string() && s.get<std::string>() == "bounding") {
      o.spheres = bounding_sphere(o.mesh);
    } else if (s.is_string()) {
      o.spheres = read_spheres(loader.resolve(s.get<std::string>(), sw));
    } else if (s.is_array()) {
      std::vector<Vec3> centers;
      std::vector<double> radii;
      for (const json& e : s) {
        const std::vector<double> v = numbers(e, sw);
        if (v.size() != 4) fail(sw, "expected [x, y, z, r] entries");
        centers.emplace_back(v[0], v[1], v[2]);
        radii.push_back(v[3]);
      }
      o.spheres = SphereSet::from_spheres(std::move(centers), std::move(radii));
    } else if (s.is_object() && s.contains("fit")) {
      const json& f = s["fit"];
      const std::string fw = sw + ".fit";
      o.spheres = fit_spheres(o.mesh, integer_or(f, "count", 50, fw), integer_or(f, "iterations", 40, fw),
                              static_cast<std::uint64_t>(integer_or(f, "seed", 1, fw)));
    } else {
      fail(sw, "expected a file name, [[x, y, z, r], ...], {\"fit\": {...}} or \"bounding\"");
    }
  }

  if (j.contains("pose")) {
    const json& p = j["pose"];
    const std::string pw = w + ".pose";
    if (p.contains("rotation")) {
      const std::vector<double> q = numbers(p["rotation"], pw + ".rotation");
      if (q.size() != 4) fail(pw + ".rotation", "expected [w, x, y, z]");
      o.pose.rotation = Quat(q[0], q[1], q[2], q[3]);
      if (!(o.pose.rotation.norm() > 0.0)) fail(pw + ".rotation", "zero quaternion");
      if (std::abs(o.pose.rotation.norm() - 1.0) > 1e-12) o.pose.rotation.normalize();
    }
    o.pose.translation = field(p, "translation", Vec3(Vec3::Zero()), pw, vec3);
  }
  o.casts_shadows = boolean_or(j, "casts_shadows", true, w);
  return o;
}

}  // namespace

TaskConfig task_from_json(const json& j) {
  const std::string w = "task";
  if (!j.is_object() || !j.contains("kind") || !j["kind"].is_string()) fail(w, "expected {\"kind\": ...}");
  TaskConfig c = TaskConfig::defaults(parse_task_kind(j["kind"].get<std::string>()));
  c.object = integer_or(j, "object", c.object, w);
  c.step = number_or(j, "step", c.step, w);
  c.iterations = integer_or(j, "iterations", c.iterations, w);
  c.band_count = integer_or(j, "bands", integer_or(j, "band_count", c.band_count, w), w);
  c.shadow_mask = boolean_or(j, "shadow_mask", c.shadow_mask, w);
  c.direct_illumination = boolean_or(j, "direct_illumination", c.direct_illumination, w);
  c.start_from_scene = boolean_or(j, "start_from_scene", c.start_from_scene, w);
  c.divergence_ratio = number_or(j, "divergence_ratio", c.divergence_ratio, w);
  c.validate();
  return c;
}

json task_to_json(const TaskConfig& c) {
  return json{{"kind", task_kind_name(c.kind)},
              {"object", c.object},
              {"step", c.step},
              {"iterations", c.iterations},
              {"bands", c.band_count},
              {"shadow_mask", c.shadow_mask},
              {"direct_illumination", c.direct_illumination},
              {"start_from_scene", c.start_from_scene},
              {"divergence_ratio", c.divergence_ratio}};
}

SceneFile scene_from_json(const json& document, const fs::path& base) {
  if (!document.is_object()) throw ConfigError("scene document must be a JSON object");
  SceneFile file;
  file.document = document;
  file.base = base;
  Loader loader(base);
  Scene& scene = file.scene;
  scene.settings = settings_from_json(document.contains("settings") ? document["settings"] : json());
  if (!document.contains("camera")) fail("camera", "missing");
  scene.camera = camera_from_json(document["camera"]);
  const int bands = scene.settings.band_count;
  if (bands < 1 || bands > TripleProductTensor::kMaxBandCount) fail("settings.band_count", "out of range");
  scene.light = loader.light(document.contains("light") ? document["light"] : json("default_sky"), bands, file.envmap,
                             "light");
  if (!document.contains("objects") || !document["objects"].is_array() || document["objects"].empty()) {
    fail("objects", "expected a non-empty array");
  }
  for (std::size_t i = 0; i < document["objects"].size(); ++i) {
    scene.objects.push_back(object_from_json(document["objects"][i], static_cast<int>(i), loader));
  }
  scene.prepare();
  for (std::size_t i = 0; i < document["objects"].size(); ++i) {
    const json& o = document["objects"][i];
    if (o.contains("deformation")) {
      ParamBlock b = extract_block(scene, ParamKind::GraphDeformation, static_cast<int>(i));
      const std::vector<double> v = numbers(o["deformation"], "objects[" + std::to_string(i) + "].deformation");
      if (v.size() != b.values.size()) fail("objects[" + std::to_string(i) + "].deformation", "wrong value count");
      b.values = v;
      apply_block(scene, b);
    }
  }
  if (document.contains("task")) {
    json task = document["task"];
    if (task.is_object() && !task.contains("bands") && !task.contains("band_count")) task["bands"] = bands;
    file.task = task_from_json(task);
  }
  file.assets = std::move(loader.assets);
  return file;
}

SceneFile load_scene(const fs::path& path) {
  json document;
  try {
    document = json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  SceneFile file = scene_from_json(document, path.has_parent_path() ? path.parent_path() : fs::path("."));
  file.assets.insert(file.assets.begin(), {path.string(), hex64(fnv1a64_file(path))});
  return file;
}

void save_scene(const Scene& scene, const fs::path& dir) {
  json doc;
  doc["settings"] = settings_to_json(scene.settings);
  doc["camera"] = camera_to_json(scene.camera);
  json coeffs = json::array();
  for (const SHVector& ch : scene.light.channels) coeffs.push_back(std::vector<double>(ch.coeffs().begin(), ch.coeffs().end()));
  doc["light"] = {{"coefficients", coeffs}};
  doc["objects"] = json::array();
  for (std::size_t i = 0; i < scene.objects.size(); ++i) {
    const SceneObject& o = scene.objects[i];
    const std::string stem = "object" + std::to_string(i);
    json j{{"name", o.name}, {"mesh", stem + ".obj"}, {"casts_shadows", o.casts_shadows}};
    write_obj(o.mesh, dir / (stem + ".obj"));
    if (o.textured()) {
      write_text(dir / (stem + ".texture.json"), image_to_json(o.texture).dump());
      j["albedo"] = {{"texture", stem + ".texture.json"}};
    } else {
      json a = json::array();
      for (const Vec3& c : o.albedo) a.push_back(to_json(c));
      j["albedo"] = a;
    }
    if (!o.spheres.empty()) {
      write_spheres(o.spheres, dir / (stem + ".spheres"));
      j["spheres"] = stem + ".spheres";
      j["deformation"] = extract_block(scene, ParamKind::GraphDeformation, static_cast<int>(i)).values;
    }
    const Quat& q = o.pose.rotation;
    j["pose"] = {{"rotation", {q.w(), q.x(), q.y(), q.z()}}, {"translation", to_json(o.pose.translation)}};
    doc["objects"].push_back(j);
  }
  write_text(dir / "scene.json", doc.dump(2));
}

std::vector<SceneInstance> enumerate_instances(const json& document) {
  std::vector<SceneInstance> out;
  if (!document.is_object() || !document.contains("matrix")) return out;
  const json& m = document["matrix"];
  if (!m.is_object() || !m.contains("meshes") || !m.contains("lights") || !m["meshes"].is_array() ||
      !m["lights"].is_array()) {
    fail("matrix", "expected {\"object\": name, \"meshes\": [...], \"lights\": [...]}");
  }
  for (std::size_t i = 0; i < m["meshes"].size(); ++i) {
    for (std::size_t k = 0; k < m["lights"].size(); ++k) {
      out.push_back({std::to_string(i) + "-" + std::to_string(k), static_cast<int>(i), static_cast<int>(k)});
    }
  }
  return out;
}

SceneFile load_instance(const SceneFile& file, const SceneInstance& instance) {
  json doc = file.document;
  const json& m = doc.at("matrix");
  const std::string target = m.contains("object") && m["object"].is_string() ? m["object"].get<std::string>() : "";
  if (instance.mesh < 0 || instance.mesh >= static_cast<int>(m["meshes"].size()) || instance.light < 0 ||
      instance.light >= static_cast<int>(m["lights"].size())) {
    fail("matrix", "instance " + instance.name + " out of range");
  }
  bool found = false;
  for (json& o : doc["objects"]) {
    if (o.contains("name") && o["name"] == target) {
      o["mesh"] = m["meshes"][instance.mesh];
      found = true;
    }
  }
  if (!found) fail("matrix.object", "no object named '" + target + "'");
  doc["light"] = m["lights"][instance.light];
  doc.erase("matrix");
  return scene_from_json(doc, file.base);
}

// ---- Results --------------------------------------------------------------------

namespace {

std::string block_stem(const ParamBlock& b) {
  switch (b.kind) {
    case ParamKind::Lighting: return "lighting";
    case ParamKind::RigidPose: return "pose_" + std::to_string(b.object);
    case ParamKind::GraphDeformation: return "deformation_" + std::to_string(b.object);
    case ParamKind::Albedo: return "albedo_" + std::to_string(b.object);
  }
  return "block";
}

Image texture_image(const Scene& scene, const ParamBlock& b) {
  const Image& tex = scene.objects.at(b.object).texture;
  Image out(tex.width, tex.height, tex.channels);
  if (b.values.size() != out.data.size()) throw ConfigError("texture block does not match the scene texture");
  out.data = b.values;
  return out;
}

}  // namespace

void save_results(const fs::path& dir, const Scene& scene, const ResultSet& results) {
  std::vector<std::string> written;
  auto record = [&](const std::string& name) { written.push_back(name); };
  for (const auto& [name, image] : results.renders) {
    write_pfm(image, dir / (name + ".pfm"));
    write_png(image, dir / (name + ".png"));
    record(name + ".pfm");
    record(name + ".png");
  }
  for (const ParamBlock& b : results.params) {
    const std::string stem = block_stem(b);
    if (b.kind == ParamKind::Albedo && scene.objects.at(b.object).textured()) {
      const Image tex = texture_image(scene, b);
      write_pfm(tex, dir / (stem + ".pfm"));
      write_png(tex, dir / (stem + ".png"));
      record(stem + ".pfm");
      record(stem + ".png");
      continue;
    }
    json j{{"kind", param_kind_name(b.kind)}, {"object", b.object}, {"values", b.values}};
    if (b.kind == ParamKind::Lighting) j["band_count"] = scene.settings.band_count;
    if (b.kind == ParamKind::RigidPose && b.values.size() == 7) {
      j["rotation"] = {b.values[0], b.values[1], b.values[2], b.values[3]};
      j["translation"] = {b.values[4], b.values[5], b.values[6]};
    }
    write_text(dir / (stem + ".json"), j.dump(2));
    record(stem + ".json");
  }
  json log = results.log;
  log["loss"] = results.loss;
  write_text(dir / "log.json", log.dump(2));
  record("log.json");

  json manifest = results.manifest;
  manifest["outputs"] = json::array();
  for (const std::string& name : written) {
    manifest["outputs"].push_back({{"path", name}, {"fnv1a64", hex64(fnv1a64_file(dir / name))}});
  }
  write_text(dir / "manifest.json", manifest.dump(2));
}

ParamBlock load_block(const fs::path& dir, const Scene& scene, ParamKind kind, int object) {
  ParamBlock b = extract_block(scene, kind, object);
  const std::string stem = block_stem(b);
  if (kind == ParamKind::Albedo && scene.objects.at(object).textured()) {
    const Image tex = read_pfm(dir / (stem + ".pfm"));
    if (tex.data.size() != b.values.size()) throw ConfigError(stem + ".pfm does not match the scene texture");
    b.values = tex.data;
    return b;
  }
  const fs::path path = dir / (stem + ".json");
  const json j = json::parse(read_text(path));
  const std::vector<double> v = numbers(j.at("values"), path.string());
  if (v.size() != b.values.size()) throw ConfigError(path.string() + ": wrong value count");
  b.values = v;
  return b;
}

}  // namespace shseed

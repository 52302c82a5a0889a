#include "shseed/optimize.hpp"

#include "shseed/scenes.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace shseed {

const char* task_kind_name(TaskKind kind) {
  switch (kind) {
    case TaskKind::Texture: return "texture";
    case TaskKind::Lighting: return "light";
    case TaskKind::Pose: return "pose";
    case TaskKind::Geometry: return "geometry";
    case TaskKind::Shadow: return "shadow";
  }
  return "?";
}

TaskKind parse_task_kind(const std::string& name) {
  if (name == "texture") return TaskKind::Texture;
  if (name == "light" || name == "lighting") return TaskKind::Lighting;
  if (name == "pose") return TaskKind::Pose;
  if (name == "geometry") return TaskKind::Geometry;
  if (name == "shadow") return TaskKind::Shadow;
  throw ConfigError("unknown task '" + name + "'");
}

ParamKind task_block(TaskKind kind) {
  switch (kind) {
    case TaskKind::Texture: return ParamKind::Albedo;
    case TaskKind::Lighting: return ParamKind::Lighting;
    case TaskKind::Pose: return ParamKind::RigidPose;
    case TaskKind::Geometry:
    case TaskKind::Shadow: return ParamKind::GraphDeformation;
  }
  return ParamKind::Lighting;
}

TaskConfig TaskConfig::defaults(TaskKind kind) {
  TaskConfig c;
  c.kind = kind;
  switch (kind) {
    case TaskKind::Texture: c.step = 5e3; c.iterations = 500; break;
    case TaskKind::Lighting: c.step = 1.0; c.iterations = 500; break;
    case TaskKind::Pose: c.step = 3e-2; c.iterations = 1000; break;
    case TaskKind::Geometry: c.step = 3e-2; c.iterations = 500; break;
    case TaskKind::Shadow: c.step = 3e-2; c.iterations = 500; c.shadow_mask = false; break;
  }
  return c;
}

int TaskConfig::block_object() const {
  if (object >= 0) return object;
  return kind == TaskKind::Texture ? 0 : 1;
}

void TaskConfig::validate() const {
  if (!(step > 0.0) || !std::isfinite(step)) throw ConfigError("step size must be positive");
  if (iterations < 1) throw ConfigError("iteration count must be at least 1");
  if (band_count < 1 || band_count > TripleProductTensor::kMaxBandCount) throw ConfigError("band count out of range");
  if (!(divergence_ratio > 1.0)) throw ConfigError("divergence ratio must exceed 1");
}

namespace {

void check_shapes(const Image& rendered, const Image& reference, const Image& mask) {
  if (!rendered.same_shape(reference)) throw ConfigError("rendered and reference images differ in size");
  if (!mask.empty() && (mask.width != rendered.width || mask.height != rendered.height || mask.channels != 1)) {
    throw ConfigError("loss mask must be single-channel and match the image size");
  }
}

std::size_t masked_count(const Image& image, const Image& mask) {
  if (mask.empty()) return image.pixel_count();
  return static_cast<std::size_t>(std::count_if(mask.data.begin(), mask.data.end(), [](double m) { return m > 0.0; }));
}

bool included(const Image& mask, std::size_t pixel) { return mask.empty() || mask.data[pixel] > 0.0; }

}  // namespace

double l2_loss(const Image& rendered, const Image& reference, const Image& mask) {
  check_shapes(rendered, reference, mask);
  std::size_t count = masked_count(rendered, mask);
  const Image& m = count == 0 ? Image() : mask;
  if (count == 0) count = rendered.pixel_count();
  double sum = 0.0;
  const int ch = rendered.channels;
  for (std::size_t p = 0; p < rendered.pixel_count(); ++p) {
    if (!included(m, p)) continue;
    for (int c = 0; c < ch; ++c) {
      const double d = rendered.data[p * ch + c] - reference.data[p * ch + c];
      sum += d * d;
    }
  }
  return count == 0 ? 0.0 : sum / static_cast<double>(count);
}

Image l2_loss_gradient(const Image& rendered, const Image& reference, const Image& mask) {
  check_shapes(rendered, reference, mask);
  std::size_t count = masked_count(rendered, mask);
  const Image& m = count == 0 ? Image() : mask;
  if (count == 0) count = rendered.pixel_count();
  Image grad(rendered.width, rendered.height, rendered.channels);
  const double scale = count == 0 ? 0.0 : 2.0 / static_cast<double>(count);
  const int ch = rendered.channels;
  for (std::size_t p = 0; p < rendered.pixel_count(); ++p) {
    if (!included(m, p)) continue;
    for (int c = 0; c < ch; ++c) grad.data[p * ch + c] = scale * (rendered.data[p * ch + c] - reference.data[p * ch + c]);
  }
  return grad;
}

Image shadow_region(const Scene& scene, double threshold, int dilate) {
  Scene lit = scene;
  lit.settings.shadows = false;
  const Image shadowed = render(scene), unshadowed = render(lit);
  Image mask(scene.camera.width, scene.camera.height, 1);
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      const double s = shadowed.rgb(x, y).sum(), u = unshadowed.rgb(x, y).sum();
      if (u > 0.0 && s < (1.0 - threshold) * u) mask.at(x, y, 0) = 1.0;
    }
  }
  Image grown = mask;
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      if (mask.at(x, y, 0) == 0.0) continue;
      for (int dy = -dilate; dy <= dilate; ++dy) {
        for (int dx = -dilate; dx <= dilate; ++dx) {
          const int xx = x + dx, yy = y + dy;
          if (xx >= 0 && yy >= 0 && xx < mask.width && yy < mask.height) grown.at(xx, yy, 0) = 1.0;
        }
      }
    }
  }
  return grown;
}

EnvironmentLight resize_bands(const EnvironmentLight& light, int band_count) {
  EnvironmentLight out(band_count);
  const std::size_t keep = std::min<std::size_t>(sh_count(band_count), sh_count(light.band_count()));
  for (int c = 0; c < 3; ++c) {
    for (std::size_t i = 0; i < keep; ++i) out.channels[c][i] = light.channels[c][i];
  }
  return out;
}

Scene task_scene(const Scene& scene, const TaskConfig& config) {
  Scene s = scene;
  if (s.settings.band_count != config.band_count) {
    s.settings.band_count = config.band_count;
    s.light = resize_bands(s.light, config.band_count);
  }
  if (config.direct_illumination) s.settings.shadows = false;
  s.prepare();
  return s;
}

ParamBlock initial_block(const Scene& scene, const TaskConfig& config) {
  ParamBlock b = extract_block(scene, task_block(config.kind), config.block_object());
  if (!config.start_from_scene) {
    if (config.kind == TaskKind::Texture) std::fill(b.values.begin(), b.values.end(), 1.0);
    if (config.kind == TaskKind::Lighting) std::fill(b.values.begin(), b.values.end(), 0.0);
  }
  return b;
}

namespace {

std::string dump_block(const ParamBlock& b, int step, double loss) {
  std::ostringstream out;
  std::size_t nonfinite = 0, first_bad = b.values.size();
  double lo = INFINITY, hi = -INFINITY, gmax = 0.0;
  for (std::size_t i = 0; i < b.values.size(); ++i) {
    const double v = b.values[i], g = i < b.grad.size() ? b.grad[i] : 0.0;
    if (!std::isfinite(v) || !std::isfinite(g)) {
      ++nonfinite;
      first_bad = std::min(first_bad, i);
      continue;
    }
    lo = std::min(lo, v);
    hi = std::max(hi, v);
    gmax = std::max(gmax, std::abs(g));
  }
  out << "non-finite loss or gradient at step " << step << " (loss " << loss << ")\n"
      << "block " << b.label() << ": " << b.values.size() << " values in [" << lo << ", " << hi
      << "], max |grad| " << gmax << ", " << nonfinite << " non-finite entries";
  if (first_bad < b.values.size()) out << ", first at index " << first_bad;
  out << "\nleading values:";
  for (std::size_t i = 0; i < std::min<std::size_t>(8, b.values.size()); ++i) out << ' ' << b.values[i];
  return out.str();
}

void project_block(ParamBlock& b) {
  if (b.kind == ParamKind::Albedo) {
    for (double& v : b.values) v = std::clamp(v, 0.0, 1.0);
  } else if (b.kind == ParamKind::RigidPose) {
    const double n = std::sqrt(b.values[0] * b.values[0] + b.values[1] * b.values[1] + b.values[2] * b.values[2] +
                               b.values[3] * b.values[3]);
    if (n > 0.0) {
      for (int i = 0; i < 4; ++i) b.values[i] /= n;
    }
  }
}

}  // namespace

SolveResult solve(const Scene& scene, const Image& reference, const TaskConfig& config) {
  config.validate();
  const Scene work = task_scene(scene, config);
  if (reference.width != work.camera.width || reference.height != work.camera.height || reference.channels != 3) {
    throw ConfigError("reference image does not match the camera resolution");
  }
  SolveResult result;
  if (config.shadow_mask) result.mask = shadow_region(work);
  DifferentiableRenderer renderer(work);
  std::vector<ParamBlock> params{initial_block(work, config)};
  ParamBlock& block = params[0];

  for (int step = 0; step < config.iterations; ++step) {
    const Image& image = renderer.forward(params);
    const double loss = l2_loss(image, reference, result.mask);
    if (!std::isfinite(loss)) throw NumericalError(dump_block(block, step, loss));
    result.loss.push_back(loss);
    if (loss > config.divergence_ratio * std::max(result.loss.front(), 1e-300)) {
      result.diverged = true;
      break;
    }
    renderer.backward(l2_loss_gradient(image, reference, result.mask), params);
    if (!std::all_of(block.grad.begin(), block.grad.end(), [](double g) { return std::isfinite(g); })) {
      throw NumericalError(dump_block(block, step, loss));
    }
    for (std::size_t i = 0; i < block.values.size(); ++i) block.values[i] -= config.step * block.grad[i];
    project_block(block);
    ++result.steps;
  }
  result.final_render = renderer.forward(params);
  const double final_loss = l2_loss(result.final_render, reference, result.mask);
  if (!std::isfinite(final_loss)) throw NumericalError(dump_block(block, result.steps, final_loss));
  result.loss.push_back(final_loss);
  result.block = block;
  return result;
}

// ---- Metrics --------------------------------------------------------------------

std::string Metrics::json() const {
  nlohmann::json j{{"texture_mse", texture_mse},
                   {"mde_percent", mde_percent},
                   {"rotation_error", rotation_error},
                   {"translation_error", translation_error},
                   {"lighting_mse", lighting_mse}};
  return j.dump(2);
}

Image texel_coverage(const Scene& scene, int object) {
  if (object < 0 || object >= static_cast<int>(scene.objects.size()) || !scene.objects[object].textured()) {
    throw ConfigError("texel coverage needs a textured object");
  }
  // Unit irradiance everywhere: the DC light value times the DC of the cosine lobe is 1.
  Scene s = scene;
  s.settings.shadows = false;
  s.light = EnvironmentLight(s.settings.band_count);
  for (int c = 0; c < 3; ++c) s.light.channels[c][0] = 2.0 / std::sqrt(std::numbers::pi);
  s.prepare();
  DifferentiableRenderer r(s);
  std::vector<ParamBlock> params{extract_block(s, ParamKind::Albedo, object)};
  r.forward(params);
  r.backward(Image(s.camera.width, s.camera.height, 3, 1.0), params);
  const Image& tex = s.objects[object].texture;
  Image coverage(tex.width, tex.height, 1);
  for (std::size_t p = 0; p < coverage.pixel_count(); ++p) coverage.data[p] = params[0].grad[3 * p];
  return coverage;
}

double texture_mse(const Image& recovered, const Image& truth, const Image& coverage, double min_coverage) {
  if (!recovered.same_shape(truth) || coverage.width != truth.width || coverage.height != truth.height) {
    throw ConfigError("texture shapes differ");
  }
  double sum = 0.0;
  std::size_t count = 0;
  const int ch = truth.channels;
  for (std::size_t p = 0; p < truth.pixel_count(); ++p) {
    if (coverage.data[p] < min_coverage) continue;
    for (int c = 0; c < ch; ++c) {
      const double d = recovered.data[p * ch + c] - truth.data[p * ch + c];
      sum += d * d;
    }
    count += ch;
  }
  return count == 0 ? 0.0 : sum / static_cast<double>(count);
}

double mean_distance_error(const Scene& recovered, const Scene& truth, int object) {
  if (recovered.objects.size() != truth.objects.size() || object < 0 ||
      object >= static_cast<int>(truth.objects.size()) ||
      recovered.objects[object].mesh.vertex_count() != truth.objects[object].mesh.vertex_count()) {
    throw ConfigError("metric scenes have different topology");
  }
  const auto a = pose_scene(recovered).positions[object];
  const auto b = pose_scene(truth).positions[object];
  const double diagonal = bounds(truth.objects[object].mesh.vertices).diagonal();
  double sum = 0.0;
  for (std::size_t v = 0; v < a.size(); ++v) sum += (a[v] - b[v]).norm();
  return 100.0 * sum / static_cast<double>(a.size()) / diagonal;
}

double rotation_error(const Quat& a, const Quat& b) {
  const double d = std::min(1.0, std::abs(a.normalized().dot(b.normalized())));
  return 2.0 * std::acos(d);
}

double lighting_probe_mse(const EnvironmentLight& recovered, const EnvironmentLight& truth, int probe_bands,
                          int resolution) {
  ShadowSceneOptions o;
  o.band_count = probe_bands;
  o.width = resolution;
  o.height = resolution;
  o.occluder_size = 1.0;
  o.elevation = 1.0;
  o.plane_size = 6.0;
  o.resolution = 16;
  Scene probe = make_shadow_scene(o);
  for (auto& object : probe.objects) std::fill(object.albedo.begin(), object.albedo.end(), Vec3::Constant(0.8));
  probe.camera = Camera::look_at(Vec3(0.0, 3.5, 5.0), Vec3(0.0, 0.8, 0.0), Vec3(0, 1, 0), 45.0, resolution, resolution);
  probe.light = resize_bands(truth, probe_bands);
  const Image a = render(probe);
  probe.light = resize_bands(recovered, probe_bands);
  const Image b = render(probe);
  double sum = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) sum += (a.data[i] - b.data[i]) * (a.data[i] - b.data[i]);
  return sum / static_cast<double>(a.data.size());
}

Metrics evaluate(const Scene& recovered, const Scene& truth, const TaskConfig& config) {
  Metrics m;
  const int object = config.block_object();
  switch (config.kind) {
    case TaskKind::Texture:
      if (recovered.objects.at(object).textured()) {
        m.texture_mse = texture_mse(recovered.objects[object].texture, truth.objects.at(object).texture,
                                    texel_coverage(truth, object));
      } else {
        double sum = 0.0;
        const auto& a = recovered.objects.at(object).albedo;
        const auto& b = truth.objects.at(object).albedo;
        if (a.size() != b.size()) throw ConfigError("albedo sizes differ");
        for (std::size_t v = 0; v < a.size(); ++v) sum += (a[v] - b[v]).squaredNorm();
        m.texture_mse = a.empty() ? 0.0 : sum / (3.0 * static_cast<double>(a.size()));
      }
      break;
    case TaskKind::Lighting: m.lighting_mse = lighting_probe_mse(recovered.light, truth.light); break;
    case TaskKind::Pose:
      m.mde_percent = mean_distance_error(recovered, truth, object);
      m.rotation_error = rotation_error(recovered.objects[object].pose.rotation, truth.objects[object].pose.rotation);
      m.translation_error =
          (recovered.objects[object].pose.translation - truth.objects[object].pose.translation).squaredNorm();
      break;
    case TaskKind::Geometry:
    case TaskKind::Shadow: m.mde_percent = mean_distance_error(recovered, truth, object); break;
  }
  return m;
}

}  // namespace shseed

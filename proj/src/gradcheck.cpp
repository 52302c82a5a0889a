#include "shseed/gradcheck.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <sstream>

namespace shseed {

bool GradCheckReport::passed() const { return failures() == 0; }

std::size_t GradCheckReport::failures() const {
  return static_cast<std::size_t>(std::count_if(entries.begin(), entries.end(), [](const auto& e) { return !e.pass; }));
}

double GradCheckReport::max_relative_error() const {
  double m = 0.0;
  for (const auto& e : entries) m = std::max(m, e.relative_error);
  return m;
}

std::string GradCheckReport::table() const {
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof line, "block %s[%d]  h=%.1e  tol=%.1e  silhouette tol=%.1e\n", param_kind_name(kind),
                object, h, tolerance, silhouette_tolerance);
  out << line;
  std::snprintf(line, sizeof line, "%8s %14s %14s %11s %4s %s\n", "index", "analytic", "numeric", "rel.err", "sil", "result");
  out << line;
  for (const auto& e : entries) {
    std::snprintf(line, sizeof line, "%8zu %14.6e %14.6e %11.3e %4s %s\n", e.index, e.analytic, e.numeric,
                  e.relative_error, e.silhouette ? "*" : "", e.pass ? "PASS" : "FAIL");
    out << line;
  }
  std::snprintf(line, sizeof line, "%zu/%zu passed, max rel.err %.3e\n", entries.size() - failures(), entries.size(),
                max_relative_error());
  out << line;
  return out.str();
}

std::string GradCheckReport::json() const {
  nlohmann::json j;
  j["block"] = param_kind_name(kind);
  j["object"] = object;
  j["h"] = h;
  j["tolerance"] = tolerance;
  j["silhouette_tolerance"] = silhouette_tolerance;
  j["passed"] = passed();
  j["entries"] = nlohmann::json::array();
  for (const auto& e : entries) {
    j["entries"].push_back({{"index", e.index},
                            {"value", e.value},
                            {"analytic", e.analytic},
                            {"numeric", e.numeric},
                            {"relative_error", e.relative_error},
                            {"silhouette", e.silhouette},
                            {"pass", e.pass}});
  }
  return j.dump(2);
}

double default_tolerance(ParamKind kind) {
  return kind == ParamKind::Lighting || kind == ParamKind::Albedo ? 1e-4 : 1e-3;
}

Image loss_weights(int width, int height, std::uint64_t seed) {
  Image w(width, height);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.5, 1.5);
  for (double& x : w.data) x = u(rng);
  return w;
}

std::vector<std::size_t> random_coordinates(std::size_t block_size, std::size_t count, std::uint64_t seed) {
  std::vector<std::size_t> all(block_size);
  for (std::size_t i = 0; i < block_size; ++i) all[i] = i;
  if (count >= block_size) return all;
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < count; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, block_size - 1);
    std::swap(all[i], all[pick(rng)]);
  }
  all.resize(count);
  std::sort(all.begin(), all.end());
  return all;
}

namespace {

double weighted_sum(const Image& image, const Image& weights) {
  double s = 0.0;
  for (std::size_t i = 0; i < image.data.size(); ++i) s += weights.data[i] * image.data[i];
  return s;
}

bool same_coverage(const Framebuffer& a, const Framebuffer& b) {
  if (a.triangle != b.triangle) return false;
  for (std::size_t i = 0; i < a.soft.size(); ++i) {
    if (a.soft[i].edge != b.soft[i].edge) return false;
  }
  return true;
}

}  // namespace

GradCheckReport grad_check(const Scene& scene, ParamKind kind, int object, const std::vector<std::size_t>& coords,
                           const GradCheckOptions& options) {
  if (!(options.h >= 1e-7 && options.h <= 1e-2)) throw ConfigError("grad_check step must lie in [1e-7, 1e-2]");
  GradCheckReport report;
  report.kind = kind;
  report.object = kind == ParamKind::Lighting ? 0 : object;
  report.h = options.h;
  report.tolerance = options.tolerance < 0.0 ? default_tolerance(kind) : options.tolerance;
  report.silhouette_tolerance = options.silhouette_tolerance;

  DifferentiableRenderer renderer(scene);
  const ParamBlock base = extract_block(scene, kind, object);
  for (std::size_t c : coords) {
    if (c >= base.values.size()) throw ConfigError("grad_check coordinate out of range for " + base.label());
  }
  const Image weights = loss_weights(scene.camera.width, scene.camera.height, options.seed);
  std::vector<ParamBlock> params{base};
  renderer.forward(params);
  const Framebuffer reference = renderer.framebuffer();
  renderer.backward(weights, params);
  const std::vector<double> analytic = params[0].grad;

  for (std::size_t c : coords) {
    GradCheckEntry e;
    e.index = c;
    e.value = base.values[c];
    e.analytic = analytic[c];
    double loss[2];
    for (int side = 0; side < 2; ++side) {
      params[0].values = base.values;
      params[0].values[c] += side == 0 ? options.h : -options.h;
      loss[side] = weighted_sum(renderer.forward(params), weights);
      e.silhouette = e.silhouette || !same_coverage(reference, renderer.framebuffer());
    }
    e.numeric = (loss[0] - loss[1]) / (2.0 * options.h);
    const double scale = std::max(std::abs(e.analytic), std::abs(e.numeric));
    if (scale < options.zero_threshold) {
      e.relative_error = 0.0;
    } else {
      e.relative_error = std::abs(e.analytic - e.numeric) / scale;
    }
    e.pass = e.relative_error < (e.silhouette ? report.silhouette_tolerance : report.tolerance);
    report.entries.push_back(e);
  }
  return report;
}

}  // namespace shseed

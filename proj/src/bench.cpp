#include "shseed/bench.hpp"

#include "shseed/render.hpp"
#include "shseed/scenes.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>

namespace shseed {

namespace {

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

BenchRow bench_iteration(int sphere_count, const BenchOptions& options) {
  if (sphere_count < 1 || options.repeats < 1) throw ConfigError("bench: sphere count and repeats must be positive");
  ShadowSceneOptions o;
  o.width = options.width;
  o.height = options.height;
  o.resolution = options.resolution;
  o.plane_segments = options.plane_segments;
  o.band_count = options.band_count;
  o.sphere_count = sphere_count;
  const Scene scene = make_shadow_scene(o);

  BenchRow row;
  row.sphere_count = static_cast<int>(scene.sphere_count());
  row.vertex_count = scene.vertex_count();
  row.width = options.width;
  row.height = options.height;

  DifferentiableRenderer renderer(scene);
  const int object = options.kind == ParamKind::Lighting ? 0 : 1;
  std::vector<ParamBlock> params{extract_block(scene, options.kind, object)};
  Image grad = renderer.forward(params);
  for (double& v : grad.data) v = 1.0;
  renderer.backward(grad, params);

  for (int i = 0; i < options.repeats; ++i) {
    // Perturb so nothing downstream can be reused between iterations.
    params[0].values[0] += 1e-4;
    auto start = std::chrono::steady_clock::now();
    renderer.forward(params);
    row.forward_seconds += seconds_since(start);
    start = std::chrono::steady_clock::now();
    renderer.backward(grad, params);
    row.backward_seconds += seconds_since(start);
  }
  row.forward_seconds /= options.repeats;
  row.backward_seconds /= options.repeats;
  return row;
}

std::vector<BenchRow> run_benchmark(const std::vector<int>& sphere_counts, const BenchOptions& options) {
  std::vector<BenchRow> rows;
  for (int n : sphere_counts) rows.push_back(bench_iteration(n, options));
  return rows;
}

double scaling_exponent(const std::vector<BenchRow>& rows) {
  if (rows.size() < 2) return 0.0;
  double mx = 0.0, my = 0.0;
  for (const BenchRow& r : rows) {
    mx += std::log(r.sphere_count);
    my += std::log(r.total_seconds());
  }
  mx /= rows.size();
  my /= rows.size();
  double sxy = 0.0, sxx = 0.0;
  for (const BenchRow& r : rows) {
    const double dx = std::log(r.sphere_count) - mx;
    sxy += dx * (std::log(r.total_seconds()) - my);
    sxx += dx * dx;
  }
  return sxx > 0.0 ? sxy / sxx : 0.0;
}

std::string format_bench_table(const std::vector<BenchRow>& rows) {
  std::string out = "spheres  vertices  resolution  forward_s  backward_s  total_s\n";
  char line[128];
  for (const BenchRow& r : rows) {
    std::snprintf(line, sizeof line, "%7d  %8zu  %4dx%-5d  %9.3f  %10.3f  %7.3f\n", r.sphere_count, r.vertex_count,
                  r.width, r.height, r.forward_seconds, r.backward_seconds, r.total_seconds());
    out += line;
  }
  return out;
}

}  // namespace shseed

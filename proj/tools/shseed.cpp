// shseed: command-line front end. Exit codes: 0 success, 2 configuration or I/O error,
// 3 numerical failure.

#include "shseed/bench.hpp"
#include "shseed/gradcheck.hpp"
#include "shseed/io.hpp"
#include "shseed/optimize.hpp"
#include "shseed/oracle.hpp"
#include "shseed/render.hpp"
#include "shseed/scene_io.hpp"
#include "shseed/shading.hpp"
#include "shseed/sphere_fit.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <sstream>

using namespace shseed;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "0.1.0";

json asset_list(const std::vector<AssetRecord>& assets) {
  json out = json::array();
  for (const AssetRecord& a : assets) out.push_back({{"path", a.path}, {"fnv1a64", a.hash}});
  return out;
}

json base_manifest(const std::string& command, const std::vector<std::string>& argv) {
  json m{{"tool", "shseed"}, {"version", kVersion}, {"command", command}, {"argv", argv}};
  if (const char* cache = std::getenv("SHSEED_CACHE_DIR")) m["cache_dir"] = cache;
  return m;
}

SceneFile open_scene(const std::string& path, const std::string& instance) {
  SceneFile file = load_scene(path);
  if (instance.empty()) return file;
  for (const SceneInstance& i : enumerate_instances(file.document)) {
    if (i.name == instance) {
      SceneFile chosen = load_instance(file, i);
      chosen.assets.insert(chosen.assets.begin(), file.assets.front());
      return chosen;
    }
  }
  throw ConfigError("--instance: no instance '" + instance + "' in " + path);
}

void write_manifest_file(const fs::path& path, const json& manifest) { write_text(path, manifest.dump(2)); }

// ---- fit-spheres ------------------------------------------------------------------

struct FitArgs {
  std::string mesh, scene, object, out;
  int count = 100, iterations = 40;
  std::uint64_t seed = 1;
  int disagreement_points = 0;
};

int run_fit(const FitArgs& a, const std::vector<std::string>& argv) {
  TriangleMesh mesh;
  std::vector<AssetRecord> assets;
  if (!a.mesh.empty()) {
    mesh = read_obj(a.mesh);
    assets.push_back({a.mesh, hex64(fnv1a64_file(a.mesh))});
  } else {
    const SceneFile file = load_scene(a.scene);
    assets = file.assets;
    const SceneObject* found = nullptr;
    for (const SceneObject& o : file.scene.objects) {
      if (o.name == a.object) found = &o;
    }
    if (found == nullptr) throw ConfigError("--object: no object '" + a.object + "' in " + a.scene);
    mesh = found->mesh;
  }
  const SphereSet spheres = fit_spheres(mesh, a.count, a.iterations, a.seed);
  write_spheres(spheres, a.out);
  json manifest = base_manifest("fit-spheres", argv);
  manifest["seed"] = a.seed;
  manifest["config"] = {{"count", a.count}, {"iterations", a.iterations}};
  manifest["inputs"] = asset_list(assets);
  manifest["outputs"] = json::array({{{"path", a.out}, {"fnv1a64", hex64(fnv1a64_file(a.out))}}});
  if (a.disagreement_points > 0) {
    const double d = visibility_disagreement(mesh, spheres, a.disagreement_points, 256, a.seed);
    manifest["visibility_disagreement"] = d;
    std::printf("visibility disagreement: %.4f\n", d);
  }
  write_manifest_file(a.out + ".manifest.json", manifest);
  std::printf("wrote %zu spheres to %s\n", spheres.size(), a.out.c_str());
  return 0;
}

// ---- render -------------------------------------------------------------------------

struct RenderArgs {
  std::string scene, instance, out, name = "render", geometry = "mesh";
  int bands = 0, spp = 1024, envmap_height = 128;
  std::uint64_t seed = 1;
  bool oracle = false, di = false, stratified = true;
};

int run_render(const RenderArgs& a, const std::vector<std::string>& argv) {
  SceneFile file = open_scene(a.scene, a.instance);
  Scene& scene = file.scene;
  if (a.bands > 0) {
    scene.settings.band_count = a.bands;
    scene.light = resize_bands(scene.light, a.bands);
  }
  if (a.di) scene.settings.shadows = false;
  json manifest = base_manifest("render", argv);
  manifest["inputs"] = asset_list(file.assets);
  manifest["config"] = {{"bands", scene.settings.band_count}, {"direct_illumination", a.di}, {"oracle", a.oracle}};
  Image image;
  if (a.oracle) {
    if (a.geometry != "mesh" && a.geometry != "spheres") throw ConfigError("--geometry: expected mesh or spheres");
    Image envmap = file.envmap.empty() ? render_envmap(scene.light, a.envmap_height) : file.envmap;
    const RayScene rays = RayScene::from_scene(
        scene, std::move(envmap), a.geometry == "mesh" ? ShadowGeometry::Mesh : ShadowGeometry::Spheres);
    image = trace(rays, a.spp, a.seed, a.stratified);
    // The tracer returns albedo / pi * integral(L V cos); the SH renderer's unit is albedo * E.
    for (double& v : image.data) v *= kPi;
    manifest["seed"] = a.seed;
    manifest["config"]["spp"] = a.spp;
    manifest["config"]["stratified"] = a.stratified;
    manifest["config"]["shadow_geometry"] = a.geometry;
  } else {
    image = render(scene);
  }
  ResultSet results;
  results.renders.push_back({a.name, std::move(image)});
  results.manifest = manifest;
  save_results(a.out, scene, results);
  std::printf("wrote %s/%s.pfm and .png\n", a.out.c_str(), a.name.c_str());
  return 0;
}

// ---- solve --------------------------------------------------------------------------

struct SolveArgs {
  std::string task, scene, instance, ref, out, truth;
  int steps = -1, bands = -1, object = -1;
  double lr = -1.0;
  bool di = false, shadow_mask = false, start_from_scene = false;
};

int run_solve(const SolveArgs& a, const std::vector<std::string>& argv) {
  SceneFile file = open_scene(a.scene, a.instance);
  TaskConfig config = file.task.value_or(TaskConfig::defaults(parse_task_kind(a.task.empty() ? "texture" : a.task)));
  if (!file.task) config.band_count = file.scene.settings.band_count;
  if (!a.task.empty() && parse_task_kind(a.task) != config.kind) {
    const TaskConfig defaults = TaskConfig::defaults(parse_task_kind(a.task));
    config.kind = defaults.kind;
    config.step = defaults.step;
    config.iterations = defaults.iterations;
  }
  if (a.steps >= 0) config.iterations = a.steps;
  if (a.lr > 0.0) config.step = a.lr;
  if (a.bands > 0) config.band_count = a.bands;
  if (a.object >= 0) config.object = a.object;
  config.direct_illumination = config.direct_illumination || a.di;
  config.shadow_mask = config.shadow_mask || a.shadow_mask;
  config.start_from_scene = config.start_from_scene || a.start_from_scene;
  config.validate();

  const Image reference = read_image(a.ref);
  std::vector<AssetRecord> inputs = file.assets;
  inputs.push_back({a.ref, hex64(fnv1a64_file(a.ref))});

  json manifest = base_manifest("solve", argv);
  manifest["config"] = task_to_json(config);
  manifest["inputs"] = asset_list(inputs);

  const SolveResult result = solve(file.scene, reference, config);

  ResultSet results;
  results.params.push_back(result.block);
  results.renders.push_back({"final", result.final_render});
  if (!result.mask.empty()) results.renders.push_back({"mask", result.mask});
  results.loss = result.loss;
  results.log = {{"task", task_kind_name(config.kind)}, {"steps", result.steps}, {"diverged", result.diverged}};
  if (!a.truth.empty()) {
    SceneFile truth = load_scene(a.truth);
    manifest["inputs"].push_back({{"path", a.truth}, {"fnv1a64", hex64(fnv1a64_file(a.truth))}});
    Scene recovered = task_scene(file.scene, config);
    apply_block(recovered, result.block);
    results.log["metrics"] = json::parse(evaluate(recovered, truth.scene, config).json());
  }
  results.manifest = manifest;
  save_results(a.out, task_scene(file.scene, config), results);
  std::printf("loss %.6g -> %.6g after %d steps%s\n", result.loss.front(), result.loss.back(), result.steps,
              result.diverged ? " (diverged)" : "");
  return result.diverged ? 3 : 0;
}

// ---- gradcheck ------------------------------------------------------------------------

struct GradArgs {
  std::string scene, instance, kind = "deformation", out;
  int object = 1, coords = 20;
  double h = 1e-4;
  std::uint64_t seed = 7;
};

int run_gradcheck(const GradArgs& a, const std::vector<std::string>& argv) {
  const SceneFile file = open_scene(a.scene, a.instance);
  const ParamKind kind = parse_param_kind(a.kind);
  const int object = kind == ParamKind::Lighting ? 0 : a.object;
  GradCheckOptions options;
  options.h = a.h;
  options.seed = a.seed;
  const std::size_t size = block_size(file.scene, kind, object);
  const GradCheckReport report = grad_check(file.scene, kind, object,
                                            random_coordinates(size, std::min<std::size_t>(a.coords, size), a.seed),
                                            options);
  std::cout << report.table();
  if (!a.out.empty()) {
    write_text(fs::path(a.out) / "gradcheck.json", report.json());
    json manifest = base_manifest("gradcheck", argv);
    manifest["seed"] = a.seed;
    manifest["inputs"] = asset_list(file.assets);
    write_manifest_file(fs::path(a.out) / "manifest.json", manifest);
  }
  return report.passed() ? 0 : 3;
}

// ---- bench ------------------------------------------------------------------------------

struct BenchArgs {
  std::vector<int> spheres{50, 100, 200};
  BenchOptions options;
  std::string out;
};

int run_bench(const BenchArgs& a, const std::vector<std::string>& argv) {
  const std::vector<BenchRow> rows = run_benchmark(a.spheres, a.options);
  const std::string table = format_bench_table(rows);
  std::cout << table;
  std::printf("scaling exponent (log time vs log spheres): %.3f\n", scaling_exponent(rows));
  if (!a.out.empty()) {
    write_text(fs::path(a.out) / "bench.txt", table);
    json manifest = base_manifest("bench", argv);
    manifest["config"] = {{"width", a.options.width}, {"height", a.options.height},
                          {"resolution", a.options.resolution}, {"repeats", a.options.repeats}};
    write_manifest_file(fs::path(a.out) / "manifest.json", manifest);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::string> args(argv, argv + argc);
  CLI::App app{"Differentiable SH soft-shadow renderer and inverse-rendering solvers"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  FitArgs fit;
  auto* fit_cmd = app.add_subcommand("fit-spheres", "Fit occluder spheres to a mesh");
  auto* mesh_opt = fit_cmd->add_option("--mesh", fit.mesh, "OBJ file");
  auto* scene_opt = fit_cmd->add_option("--scene", fit.scene, "Scene file (with --object)");
  mesh_opt->excludes(scene_opt);
  fit_cmd->add_option("--object", fit.object, "Object name in the scene")->needs(scene_opt);
  fit_cmd->add_option("--count", fit.count, "Number of spheres")->check(CLI::PositiveNumber);
  fit_cmd->add_option("--iterations", fit.iterations, "Optimization iterations")->check(CLI::NonNegativeNumber);
  fit_cmd->add_option("--seed", fit.seed, "Random seed");
  fit_cmd->add_option("--disagreement", fit.disagreement_points,
                      "Report ray visibility disagreement at this many surface points");
  fit_cmd->add_option("--out", fit.out, "Output sphere file")->required();

  RenderArgs rend;
  auto* render_cmd = app.add_subcommand("render", "Render a scene (SH renderer or ray-traced oracle)");
  render_cmd->add_option("--scene", rend.scene, "Scene file")->required()->check(CLI::ExistingFile);
  render_cmd->add_option("--instance", rend.instance, "Matrix instance name");
  render_cmd->add_option("--out", rend.out, "Output directory")->required();
  render_cmd->add_option("--name", rend.name, "Output file stem");
  render_cmd->add_option("--bands", rend.bands, "Override the SH band count");
  render_cmd->add_flag("--di", rend.di, "Direct illumination only (no shadows)");
  render_cmd->add_flag("--oracle", rend.oracle, "Monte Carlo ray tracing instead of the SH renderer");
  render_cmd->add_option("--spp", rend.spp, "Oracle samples per pixel")->check(CLI::PositiveNumber);
  render_cmd->add_option("--seed", rend.seed, "Oracle seed");
  render_cmd->add_option("--geometry", rend.geometry, "Oracle shadow geometry: mesh or spheres");
  render_cmd->add_option("--envmap-height", rend.envmap_height, "Lat-long height when the light is SH only");
  render_cmd->add_flag("!--iid", rend.stratified, "Independent oracle samples instead of stratified");

  SolveArgs sol;
  auto* solve_cmd = app.add_subcommand("solve", "Recover one parameter block from a reference image");
  solve_cmd->add_option("--task", sol.task, "texture | light | pose | geometry | shadow");
  solve_cmd->add_option("--scene", sol.scene, "Scene file")->required()->check(CLI::ExistingFile);
  solve_cmd->add_option("--instance", sol.instance, "Matrix instance name");
  solve_cmd->add_option("--ref", sol.ref, "Reference image (.pfm or .png)")->required()->check(CLI::ExistingFile);
  solve_cmd->add_option("--steps", sol.steps, "Iterations")->check(CLI::NonNegativeNumber);
  solve_cmd->add_option("--lr", sol.lr, "Gradient step")->check(CLI::PositiveNumber);
  solve_cmd->add_option("--bands", sol.bands, "SH band count")->check(CLI::PositiveNumber);
  solve_cmd->add_option("--object", sol.object, "Block owner object index");
  solve_cmd->add_option("--out", sol.out, "Output directory")->required();
  solve_cmd->add_option("--truth", sol.truth, "Ground-truth scene for metrics")->check(CLI::ExistingFile);
  solve_cmd->add_flag("--di", sol.di, "Direct illumination baseline (V = 1)");
  solve_cmd->add_flag("--shadow-mask", sol.shadow_mask, "Restrict the loss to the shadow region");
  solve_cmd->add_flag("--from-scene", sol.start_from_scene, "Start from the scene's values");

  GradArgs grad;
  auto* grad_cmd = app.add_subcommand("gradcheck", "Compare analytic and finite-difference gradients");
  grad_cmd->add_option("--scene", grad.scene, "Scene file")->required()->check(CLI::ExistingFile);
  grad_cmd->add_option("--instance", grad.instance, "Matrix instance name");
  grad_cmd->add_option("--kind", grad.kind, "albedo | lighting | pose | deformation");
  grad_cmd->add_option("--object", grad.object, "Block owner object index");
  grad_cmd->add_option("--coords", grad.coords, "Coordinates to check")->check(CLI::PositiveNumber);
  grad_cmd->add_option("--step", grad.h, "Finite-difference step");
  grad_cmd->add_option("--seed", grad.seed, "Seed for coordinates and loss weights");
  grad_cmd->add_option("--out", grad.out, "Directory for the JSON report");

  BenchArgs bench;
  auto* bench_cmd = app.add_subcommand("bench", "Time forward plus backward per iteration");
  bench_cmd->add_option("--spheres", bench.spheres, "Sphere counts")->delimiter(',');
  bench_cmd->add_option("--width", bench.options.width, "Image width");
  bench_cmd->add_option("--height", bench.options.height, "Image height");
  bench_cmd->add_option("--resolution", bench.options.resolution, "Occluder mesh resolution");
  bench_cmd->add_option("--repeats", bench.options.repeats, "Timed iterations")->check(CLI::PositiveNumber);
  bench_cmd->add_option("--out", bench.out, "Directory for the table");

  std::string list_scene;
  auto* list_cmd = app.add_subcommand("instances", "List the scene matrix instances");
  list_cmd->add_option("--scene", list_scene, "Scene file")->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*fit_cmd) {
      if (fit.mesh.empty() == fit.scene.empty()) throw ConfigError("fit-spheres: give --mesh or --scene");
      return run_fit(fit, args);
    }
    if (*render_cmd) return run_render(rend, args);
    if (*solve_cmd) return run_solve(sol, args);
    if (*grad_cmd) return run_gradcheck(grad, args);
    if (*bench_cmd) return run_bench(bench, args);
    if (*list_cmd) {
      for (const SceneInstance& i : enumerate_instances(load_scene(list_scene).document)) std::cout << i.name << '\n';
      return 0;
    }
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return 3;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}

#pragma once

// JSON scene documents, scene matrices and result directories.
//
// A scene document:
//   {
//     "settings": {"band_count": 8, "epsilon": 3, "exclusion_tau": 0.3, "graph_k": 4, "shadows": true,
//                  "raster": {"sigma": 1, "band": 2, "soft": true, "near": 1e-4, "background": [0, 0, 0]}},
//     "camera": {"eye": [..], "target": [..], "up": [0, 1, 0], "fov": 45, "width": 64, "height": 64},
//     "light": {"envmap": "sky.pfm"} | {"constant": [r, g, b]} | {"coefficients": [[..], [..], [..]]}
//              | {"sky": {"sun_direction": [..], "sun": [..], "sky": [..], "sharpness": 8}},
//     "objects": [{
//       "name": "occluder",
//       "mesh": "bunny.obj" | {"primitive": "plane" | "sphere" | "box" | "torus", ...},
//       "translate": [x, y, z],
//       "albedo": [r, g, b] | [[r, g, b], ...] | {"texture": "wood.png"} | {"pattern": 2.5},
//       "spheres": "bunny.spheres" | [[x, y, z, r], ...] | {"fit": {"count": 100, "iterations": 40, "seed": 1}}
//                  | "bounding",
//       "pose": {"rotation": [w, x, y, z], "translation": [x, y, z]},
//       "casts_shadows": true
//     }],
//     "task": {"kind": "pose", "step": 0.03, "iterations": 1000, "bands": 8, "object": 1,
//              "shadow_mask": false, "direct_illumination": false, "start_from_scene": false},
//     "matrix": {"object": "occluder", "meshes": [mesh, ...], "lights": [light, ...]}
//   }
// Relative paths resolve against the document's directory. Fields not given take the
// library defaults. "translate" moves the rest mesh before spheres are fitted or bounded;
// explicit spheres are in the translated frame.

#include "shseed/optimize.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace shseed {

struct AssetRecord {
  std::string path;  // as resolved
  std::string hash;  // FNV-1a 64, hex
};

struct SceneFile {
  Scene scene;
  Image envmap;                      // set when the light came from an environment map
  std::optional<TaskConfig> task;    // from "task"
  std::vector<AssetRecord> assets;   // every file read, in load order
  nlohmann::json document;           // the source document
  std::filesystem::path base;        // directory relative paths resolve against
};

/// Builds a prepared scene from a document. Throws ConfigError naming the offending
/// field or missing path.
SceneFile scene_from_json(const nlohmann::json& document, const std::filesystem::path& base);
SceneFile load_scene(const std::filesystem::path& path);

/// Writes `<dir>/scene.json` plus one OBJ, sphere file and exact JSON texture per object,
/// with the light stored as coefficients. Loading the result reproduces the scene exactly.
void save_scene(const Scene& scene, const std::filesystem::path& dir);

TaskConfig task_from_json(const nlohmann::json& j);
nlohmann::json task_to_json(const TaskConfig& config);

struct SceneInstance {
  std::string name;  // "<mesh index>-<light index>"
  int mesh = 0;
  int light = 0;
};

/// Mesh x light combinations of the document's "matrix" (empty without one).
std::vector<SceneInstance> enumerate_instances(const nlohmann::json& document);
/// The document with the matrix object's mesh and the light replaced by one combination.
SceneFile load_instance(const SceneFile& file, const SceneInstance& instance);

struct ResultSet {
  std::vector<ParamBlock> params;
  std::vector<std::pair<std::string, Image>> renders;
  std::vector<double> loss;
  nlohmann::json log = nlohmann::json::object();       // extra log fields
  nlohmann::json manifest = nlohmann::json::object();  // seed, config, inputs
};

/// Writes into `dir` (created if needed, files overwritten):
///   <render>.pfm and <render>.png for every render;
///   lighting.json, pose_<o>.json, deformation_<o>.json, albedo_<o>.json, or
///   albedo_<o>.pfm and albedo_<o>.png for texture blocks of `scene`;
///   log.json with the loss curve; manifest.json with the given manifest plus the
///   FNV-1a hash of every written file.
void save_results(const std::filesystem::path& dir, const Scene& scene, const ResultSet& results);

/// Reads a block written by save_results back. Textures come from the PFM.
ParamBlock load_block(const std::filesystem::path& dir, const Scene& scene, ParamKind kind, int object = 0);

}  // namespace shseed

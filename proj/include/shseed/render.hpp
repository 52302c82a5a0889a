#pragma once

// The differentiable render pipeline:
//   pose/deform -> normals -> transfer W = V * H -> irradiance E = max(L . W, 0)
//   -> vertex attributes (albedo * E, or E for textured objects) -> raster.
// render() evaluates it directly; DifferentiableRenderer records it on a Tape.

#include "shseed/raster.hpp"
#include "shseed/scene.hpp"
#include "shseed/tape.hpp"

#include <memory>
#include <span>
#include <string>
#include <vector>

namespace shseed {

/// World-space vertices and sphere centers of one object for flat pose (7) and
/// deformation (7 per sphere) parameters.
void pose_object(const SceneObject& object, std::span<const double> pose, std::span<const double> deformation,
                 std::span<Vec3> positions, std::span<Vec3> centers);
/// Accumulates into grad_pose and grad_deformation when they are non-empty.
void pose_object_vjp(const SceneObject& object, std::span<const double> pose, std::span<const double> deformation,
                     std::span<const Vec3> grad_positions, std::span<const Vec3> grad_centers,
                     std::span<double> grad_pose, std::span<double> grad_deformation);

/// World-space geometry of the whole scene at its current parameters.
struct PosedScene {
  std::vector<std::vector<Vec3>> positions;  // per object
  std::vector<std::vector<Vec3>> normals;
  std::vector<SphereSet> spheres;            // world-space, identity node transforms
};
PosedScene pose_scene(const Scene& scene);

/// Untaped render of a prepared scene.
Image render(const Scene& scene);

class RenderPipeline;

class DifferentiableRenderer {
 public:
  /// Copies the scene, which must be prepared.
  explicit DifferentiableRenderer(const Scene& scene);
  ~DifferentiableRenderer();
  DifferentiableRenderer(const DifferentiableRenderer&) = delete;
  DifferentiableRenderer& operator=(const DifferentiableRenderer&) = delete;

  const Scene& scene() const;

  /// Renders with the given blocks substituted for the scene values; those blocks
  /// become the ones backward() differentiates. Throws NumericalError on non-finite values.
  const Image& forward(std::span<const ParamBlock> params);
  /// Fills params[i].grad with dL/dvalues given dL/dimage. The blocks must match the
  /// last forward() call.
  void backward(const Image& grad_image, std::span<ParamBlock> params);

  /// Ops executed by the last forward().
  const std::vector<std::string>& last_ops() const { return last_ops_; }
  Tape& tape() { return tape_; }
  const Image& image() const { return image_; }
  /// Coverage of the last forward().
  const Framebuffer& framebuffer() const;

 private:
  int param_slot(ParamKind kind, int object) const;

  std::unique_ptr<RenderPipeline> pipeline_;
  Tape tape_;
  Image image_;
  int image_slot_ = -1;
  int light_slot_ = -1;
  std::vector<int> pose_slots_, deformation_slots_, albedo_slots_;
  std::vector<std::pair<ParamKind, int>> active_;
  std::vector<std::string> last_ops_;
};

}  // namespace shseed

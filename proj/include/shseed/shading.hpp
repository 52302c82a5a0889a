#pragma once

// Diffuse shading B = a * max(L . (V * H), 0) with H the clamped-cosine lobe about the
// normal. Environment maps are lat-long with +y up: row 0 looks along +y.

#include "shseed/image.hpp"
#include "shseed/sh.hpp"
#include "shseed/triple_product.hpp"

#include <array>
#include <memory>
#include <span>

namespace shseed {

struct EnvironmentLight {
  std::array<SHVector, 3> channels;

  EnvironmentLight() = default;
  explicit EnvironmentLight(int band_count);
  /// Uniform sky of the given radiance per channel.
  static EnvironmentLight constant(int band_count, const Vec3& radiance);

  int band_count() const { return channels[0].band_count(); }
  /// Channel-major flat coefficients (3 n^2).
  std::vector<double> flat() const;
  static EnvironmentLight from_flat(int band_count, std::span<const double> values);
  /// Radiance arriving from direction w.
  Vec3 evaluate(const Vec3& w) const;
};

/// Direction of the lat-long coordinate (s, t) in [0, 1]^2, t = 0 at +y.
Vec3 latlong_direction(double s, double t);
/// Inverse of latlong_direction.
Vec2 latlong_coords(const Vec3& direction);

/// Throws ConfigError unless width == 2 * height.
EnvironmentLight project_envmap(const Image& envmap, int band_count);
/// Lat-long image of a band-limited light, sampled at pixel centers.
Image render_envmap(const EnvironmentLight& light, int height);
/// Bilinear radiance lookup in a lat-long map (wrapping in longitude).
Vec3 sample_envmap(const Image& envmap, const Vec3& direction);

SHVector cosine_lobe_sh(const Vec3& normal, int band_count);

/// Outgoing radiance for one point.
Vec3 radiance(const Vec3& normal, const Vec3& albedo, const EnvironmentLight& light, const SHVector& visibility);

/// Per-point transfer W = V * H and its adjoint, allocation free after warm-up.
class ShadingKernel {
 public:
  explicit ShadingKernel(int band_count);

  struct Workspace {
    std::vector<double> lobe, basis, grad_lobe, weights;
  };

  int band_count() const { return band_count_; }
  const ZonalVector& lobe_zonal() const { return lobe_; }

  /// W = V * H(normal); an empty `visibility` gives W = H (unshadowed).
  void transfer(const Vec3& normal, std::span<const double> visibility, std::span<double> w, Workspace& ws) const;
  /// Accumulates dL/dV (if visibility is non-empty) and returns dL/dnormal (tangent part).
  Vec3 transfer_backward(const Vec3& normal, std::span<const double> visibility, std::span<const double> grad_w,
                         std::span<double> grad_visibility, Workspace& ws) const;

  /// max(L_c . W, 0) per channel.
  static Vec3 irradiance(const EnvironmentLight& light, std::span<const double> w);
  /// Given dL/dE per channel, accumulates dL/dW and dL/dlight (channel-major, may be empty).
  /// The clamp passes gradient where L_c . W >= 0, so an all-zero light still receives one.
  static void irradiance_backward(const EnvironmentLight& light, std::span<const double> w, const Vec3& grad_e,
                                  std::span<double> grad_w, std::span<double> grad_light);

 private:
  int band_count_;
  ZonalVector lobe_;
  std::shared_ptr<const TripleProductTensor> tensor_;
};

}  // namespace shseed

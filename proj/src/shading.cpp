#include "shseed/shading.hpp"

#include <algorithm>
#include <cmath>

namespace shseed {

EnvironmentLight::EnvironmentLight(int band_count) {
  for (auto& c : channels) c = SHVector(band_count);
}

EnvironmentLight EnvironmentLight::constant(int band_count, const Vec3& radiance) {
  EnvironmentLight light(band_count);
  for (int c = 0; c < 3; ++c) light.channels[c] = SHVector::constant(band_count, radiance[c]);
  return light;
}

std::vector<double> EnvironmentLight::flat() const {
  std::vector<double> out;
  out.reserve(3 * channels[0].size());
  for (const auto& c : channels) out.insert(out.end(), c.values().begin(), c.values().end());
  return out;
}

EnvironmentLight EnvironmentLight::from_flat(int band_count, std::span<const double> values) {
  const std::size_t count = sh_count(band_count);
  if (values.size() != 3 * count) throw ConfigError("light coefficient count does not match the band count");
  EnvironmentLight light;
  for (int c = 0; c < 3; ++c) {
    light.channels[c] = SHVector(band_count, {values.begin() + c * count, values.begin() + (c + 1) * count});
  }
  return light;
}

Vec3 EnvironmentLight::evaluate(const Vec3& w) const {
  return Vec3(reconstruct(channels[0], w), reconstruct(channels[1], w), reconstruct(channels[2], w));
}

Vec3 latlong_direction(double s, double t) {
  const double theta = t * kPi, phi = s * 2.0 * kPi;
  return Vec3(std::sin(theta) * std::sin(phi), std::cos(theta), std::sin(theta) * std::cos(phi));
}

Vec2 latlong_coords(const Vec3& direction) {
  const Vec3 d = direction.normalized();
  double phi = std::atan2(d.x(), d.z());
  if (phi < 0.0) phi += 2.0 * kPi;
  return Vec2(phi / (2.0 * kPi), std::acos(std::clamp(d.y(), -1.0, 1.0)) / kPi);
}

EnvironmentLight project_envmap(const Image& envmap, int band_count) {
  if (envmap.width != 2 * envmap.height || envmap.height == 0) {
    throw ConfigError("environment map must be lat-long with width == 2 * height");
  }
  const int count = sh_count(band_count);
  const double d_theta = kPi / envmap.height, d_phi = 2.0 * kPi / envmap.width;
  std::array<std::vector<double>, 3> acc;
  for (auto& a : acc) a.assign(count, 0.0);
  std::vector<double> basis(count);
  for (int y = 0; y < envmap.height; ++y) {
    const double t = (y + 0.5) / envmap.height;
    const double weight = std::sin(t * kPi) * d_theta * d_phi;
    for (int x = 0; x < envmap.width; ++x) {
      eval_basis(latlong_direction((x + 0.5) / envmap.width, t), band_count, basis);
      const Vec3 value = envmap.rgb(x, y);
      for (int c = 0; c < 3; ++c) {
        const double f = weight * value[c];
        for (int i = 0; i < count; ++i) acc[c][i] += f * basis[i];
      }
    }
  }
  EnvironmentLight light;
  for (int c = 0; c < 3; ++c) light.channels[c] = SHVector(band_count, std::move(acc[c]));
  return light;
}

Image render_envmap(const EnvironmentLight& light, int height) {
  Image image(2 * height, height);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < 2 * height; ++x) {
      image.set_rgb(x, y, light.evaluate(latlong_direction((x + 0.5) / (2.0 * height), (y + 0.5) / height)));
    }
  }
  return image;
}

Vec3 sample_envmap(const Image& envmap, const Vec3& direction) {
  const Vec2 st = latlong_coords(direction);
  const double fx = st.x() * envmap.width - 0.5;
  const double fy = std::clamp(st.y() * envmap.height - 0.5, 0.0, envmap.height - 1.0);
  const double x0f = std::floor(fx), y0f = std::floor(fy);
  const double tx = fx - x0f, ty = fy - y0f;
  const auto wrap = [&](int x) { return ((x % envmap.width) + envmap.width) % envmap.width; };
  const int x0 = wrap(static_cast<int>(x0f)), x1 = wrap(static_cast<int>(x0f) + 1);
  const int y0 = static_cast<int>(y0f), y1 = std::min(y0 + 1, envmap.height - 1);
  return (1 - ty) * ((1 - tx) * envmap.rgb(x0, y0) + tx * envmap.rgb(x1, y0)) +
         ty * ((1 - tx) * envmap.rgb(x0, y1) + tx * envmap.rgb(x1, y1));
}

SHVector cosine_lobe_sh(const Vec3& normal, int band_count) {
  return rotate_zonal(zonal_clamped_cosine(band_count), normal);
}

Vec3 radiance(const Vec3& normal, const Vec3& albedo, const EnvironmentLight& light, const SHVector& visibility) {
  const int n = light.band_count();
  if (visibility.band_count() != n) throw ConfigError("visibility and light band counts differ");
  const ShadingKernel kernel(n);
  ShadingKernel::Workspace ws;
  std::vector<double> w(sh_count(n));
  kernel.transfer(normal, visibility.coeffs(), w, ws);
  return albedo.cwiseProduct(ShadingKernel::irradiance(light, w));
}

ShadingKernel::ShadingKernel(int band_count)
    : band_count_(band_count), lobe_(zonal_clamped_cosine(band_count)), tensor_(TripleProductTensor::get(band_count)) {}

void ShadingKernel::transfer(const Vec3& normal, std::span<const double> visibility, std::span<double> w,
                             Workspace& ws) const {
  const int count = sh_count(band_count_);
  if (visibility.empty()) {
    rotate_zonal(lobe_.coeffs(), normal, band_count_, w);
    return;
  }
  ws.lobe.resize(count);
  rotate_zonal(lobe_.coeffs(), normal, band_count_, ws.lobe);
  tensor_->product(visibility, ws.lobe, w);
}

Vec3 ShadingKernel::transfer_backward(const Vec3& normal, std::span<const double> visibility,
                                      std::span<const double> grad_w, std::span<double> grad_visibility,
                                      Workspace& ws) const {
  const int count = sh_count(band_count_);
  std::span<const double> grad_lobe = grad_w;
  if (!visibility.empty()) {
    ws.lobe.resize(count);
    ws.grad_lobe.resize(count);
    ws.basis.resize(count);
    rotate_zonal(lobe_.coeffs(), normal, band_count_, ws.lobe);
    tensor_->product(grad_w, visibility, ws.grad_lobe);
    if (!grad_visibility.empty()) {
      tensor_->product(grad_w, ws.lobe, ws.basis);
      for (int i = 0; i < count; ++i) grad_visibility[i] += ws.basis[i];
    }
    grad_lobe = ws.grad_lobe;
  }
  ws.weights.resize(count);
  for (int l = 0; l < band_count_; ++l) {
    const double f = zonal_rotation_scale(l) * lobe_[l];
    for (int i = l * l; i < (l + 1) * (l + 1); ++i) ws.weights[i] = grad_lobe[i] * f;
  }
  return eval_basis_gradient(normal, band_count_, ws.weights);
}

Vec3 ShadingKernel::irradiance(const EnvironmentLight& light, std::span<const double> w) {
  Vec3 e;
  for (int c = 0; c < 3; ++c) {
    const auto l = light.channels[c].coeffs();
    double s = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) s += l[i] * w[i];
    e[c] = std::max(s, 0.0);
  }
  return e;
}

void ShadingKernel::irradiance_backward(const EnvironmentLight& light, std::span<const double> w,
                                        const Vec3& grad_e, std::span<double> grad_w,
                                        std::span<double> grad_light) {
  const std::size_t count = w.size();
  for (int c = 0; c < 3; ++c) {
    const auto l = light.channels[c].coeffs();
    double s = 0.0;
    for (std::size_t i = 0; i < count; ++i) s += l[i] * w[i];
    if (!(s >= 0.0) || grad_e[c] == 0.0) continue;
    if (!grad_w.empty()) {
      for (std::size_t i = 0; i < count; ++i) grad_w[i] += grad_e[c] * l[i];
    }
    if (!grad_light.empty()) {
      for (std::size_t i = 0; i < count; ++i) grad_light[c * count + i] += grad_e[c] * w[i];
    }
  }
}

}  // namespace shseed

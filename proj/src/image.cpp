#include "shseed/image.hpp"

#include <algorithm>
#include <cmath>

namespace shseed {

Image::Image(int w, int h, int c, double fill) : width(w), height(h), channels(c) {
  if (w < 0 || h < 0 || c < 1) throw ConfigError("invalid image shape");
  data.assign(static_cast<std::size_t>(w) * h * c, fill);
}

Vec3 Image::rgb(int x, int y) const {
  const std::size_t o = offset(x, y);
  if (channels == 1) return Vec3::Constant(data[o]);
  return Vec3(data[o], data[o + 1], data[o + 2]);
}

void Image::set_rgb(int x, int y, const Vec3& value) {
  const std::size_t o = offset(x, y);
  for (int c = 0; c < std::min(channels, 3); ++c) data[o + c] = value[c];
}

BilinearTap bilinear_tap(int width, int height, const Vec2& uv) {
  BilinearTap tap;
  const double fx = uv.x() * width - 0.5;
  const double fy = (1.0 - uv.y()) * height - 0.5;
  const double x0f = std::floor(fx), y0f = std::floor(fy);
  const double tx = fx - x0f, ty = fy - y0f;
  const auto clamp_x = [&](double x) { return static_cast<std::size_t>(std::clamp(static_cast<int>(x), 0, width - 1)); };
  const auto clamp_y = [&](double y) { return static_cast<std::size_t>(std::clamp(static_cast<int>(y), 0, height - 1)); };
  const std::size_t x0 = clamp_x(x0f), x1 = clamp_x(x0f + 1), y0 = clamp_y(y0f), y1 = clamp_y(y0f + 1);
  tap.pixel = {y0 * width + x0, y0 * width + x1, y1 * width + x0, y1 * width + x1};
  tap.weight = {(1 - tx) * (1 - ty), tx * (1 - ty), (1 - tx) * ty, tx * ty};
  // dtx/du = width, dty/dv = -height
  const double w = width, h = height;
  tap.d_u = {-(1 - ty) * w, (1 - ty) * w, -ty * w, ty * w};
  tap.d_v = {(1 - tx) * h, tx * h, -(1 - tx) * h, -tx * h};
  return tap;
}

Vec3 sample_bilinear(const Image& image, const Vec2& uv) {
  const BilinearTap tap = bilinear_tap(image.width, image.height, uv);
  Vec3 out = Vec3::Zero();
  for (int t = 0; t < 4; ++t) {
    const std::size_t o = tap.pixel[t] * image.channels;
    for (int c = 0; c < 3; ++c) out[c] += tap.weight[t] * image.data[o + std::min(c, image.channels - 1)];
  }
  return out;
}

}  // namespace shseed

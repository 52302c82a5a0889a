#pragma once

// Linear-light float images, row-major from the top row, channels interleaved.

#include "shseed/common.hpp"

#include <array>
#include <vector>

namespace shseed {

struct Image {
  int width = 0;
  int height = 0;
  int channels = 3;
  std::vector<double> data;

  Image() = default;
  Image(int width, int height, int channels = 3, double fill = 0.0);

  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
  bool empty() const { return data.empty(); }
  std::size_t offset(int x, int y) const { return (static_cast<std::size_t>(y) * width + x) * channels; }
  double& at(int x, int y, int c) { return data[offset(x, y) + c]; }
  double at(int x, int y, int c) const { return data[offset(x, y) + c]; }
  Vec3 rgb(int x, int y) const;
  void set_rgb(int x, int y, const Vec3& value);
  bool same_shape(const Image& other) const {
    return width == other.width && height == other.height && channels == other.channels;
  }
};

/// Bilinear lookup with clamp-to-edge. uv in [0, 1]^2, v = 0 at the bottom row.
/// Weights depend only on uv, so the sample is linear in the texel values.
struct BilinearTap {
  std::array<std::size_t, 4> pixel{};  // pixel indices (y * width + x)
  std::array<double, 4> weight{};
  std::array<double, 4> d_u{};  // d weight / d u
  std::array<double, 4> d_v{};
};
BilinearTap bilinear_tap(int width, int height, const Vec2& uv);

Vec3 sample_bilinear(const Image& image, const Vec2& uv);

}  // namespace shseed

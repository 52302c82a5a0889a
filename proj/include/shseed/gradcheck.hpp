#pragma once

// Finite-difference verification of DifferentiableRenderer gradients.

#include "shseed/render.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace shseed {

struct GradCheckOptions {
  double h = 1e-4;
  double tolerance = -1.0;             // < 0: 1e-4 for linear blocks (lighting, albedo), else 1e-3
  double silhouette_tolerance = 5e-2;  // for coordinates whose +-h step changes pixel coverage
  double zero_threshold = 1e-8;        // both |analytic| and |numeric| below: PASS
  std::uint64_t seed = 7;              // loss weights
};

struct GradCheckEntry {
  std::size_t index = 0;
  double value = 0.0;
  double analytic = 0.0;
  double numeric = 0.0;
  double relative_error = 0.0;
  bool silhouette = false;
  bool pass = false;
};

struct GradCheckReport {
  ParamKind kind = ParamKind::Lighting;
  int object = 0;
  double h = 0.0;
  double tolerance = 0.0;
  double silhouette_tolerance = 0.0;
  std::vector<GradCheckEntry> entries;

  bool passed() const;
  std::size_t failures() const;
  double max_relative_error() const;
  std::string table() const;
  std::string json() const;
};

/// Default tolerance for a block kind.
double default_tolerance(ParamKind kind);

/// Fixed positive per-pixel weights; the checked loss is sum(weights * image).
Image loss_weights(int width, int height, std::uint64_t seed);

/// Central differences of sum(weights * image) against DifferentiableRenderer::backward
/// for the listed coordinates of one block. Throws ConfigError when h is outside [1e-7, 1e-2].
GradCheckReport grad_check(const Scene& scene, ParamKind kind, int object, const std::vector<std::size_t>& coords,
                           const GradCheckOptions& options = {});

/// `count` distinct coordinates of a block drawn uniformly, sorted.
std::vector<std::size_t> random_coordinates(std::size_t block_size, std::size_t count, std::uint64_t seed);

}  // namespace shseed

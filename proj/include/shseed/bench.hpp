#pragma once

// Wall-time benchmark of one optimization iteration (forward plus backward).

#include "shseed/scene.hpp"

#include <string>
#include <vector>

namespace shseed {

struct BenchOptions {
  int width = 128;
  int height = 128;
  int resolution = 70;      // occluder sphere mesh; 70 gives about 10k vertices in total
  int plane_segments = 20;
  int band_count = 8;
  int repeats = 2;          // timed iterations after one warm-up
  ParamKind kind = ParamKind::GraphDeformation;
};

struct BenchRow {
  int sphere_count = 0;
  std::size_t vertex_count = 0;
  int width = 0;
  int height = 0;
  double forward_seconds = 0.0;   // mean per iteration
  double backward_seconds = 0.0;
  double total_seconds() const { return forward_seconds + backward_seconds; }
};

BenchRow bench_iteration(int sphere_count, const BenchOptions& options = {});
std::vector<BenchRow> run_benchmark(const std::vector<int>& sphere_counts, const BenchOptions& options = {});

/// Least-squares slope of log(total time) against log(sphere count).
double scaling_exponent(const std::vector<BenchRow>& rows);

/// Fixed-width table with one line per row and a header.
std::string format_bench_table(const std::vector<BenchRow>& rows);

}  // namespace shseed

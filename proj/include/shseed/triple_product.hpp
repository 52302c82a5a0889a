#pragma once

#include "shseed/sh.hpp"

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <vector>

namespace shseed {

/// C_ijk = integral y_i y_j y_k over the sphere, for i, j, k < n^2.
///
/// Unique entries (i <= j <= k) are kept for storage and lookup. The product kernels use a
/// row layout: for each i, the unordered pairs {j, k} with C_ijk != 0.
class TripleProductTensor {
 public:
  struct Entry {
    std::uint32_t i, j, k;
    double value;
  };

  /// Entries with |value| below this are dropped.
  static constexpr double kDropThreshold = 1e-12;
  static constexpr int kMaxBandCount = 12;

  /// Quadrature evaluation; no caching.
  static TripleProductTensor compute(int band_count);

  /// Shared instance for `band_count`: memory cache, then the disk cache directory,
  /// then compute (and write back to disk when possible).
  static std::shared_ptr<const TripleProductTensor> get(int band_count);

  /// $SHSEED_CACHE_DIR, else $XDG_CACHE_HOME/shseed, else $HOME/.cache/shseed.
  static std::filesystem::path cache_directory();
  static std::filesystem::path cache_file(int band_count);

  /// Binary layout, little-endian: "SHC1", band_count u32, entry count u64, then
  /// (i u32, j u32, k u32, value f64) records sorted lexicographically.
  void save(const std::filesystem::path& path) const;
  static TripleProductTensor load(const std::filesystem::path& path);

  int band_count() const { return band_count_; }
  std::span<const Entry> entries() const { return entries_; }
  /// Number of nonzero (i, j, k) index triples counting every order.
  std::size_t expanded_size() const { return expanded_size_; }

  /// Value for any index order (symmetric lookup).
  double value(int i, int j, int k) const;

  /// out_i = sum_jk C_ijk a_j b_k. `out` must not alias the inputs.
  /// Symmetric in a and b bit for bit.
  void product(std::span<const double> a, std::span<const double> b, std::span<double> out) const;
  /// out = a * a.
  void square(std::span<const double> a, std::span<double> out) const;

 private:
  TripleProductTensor(int band_count, std::vector<Entry> entries);
  void build_rows();

  int band_count_ = 0;
  std::vector<Entry> entries_;
  std::vector<std::uint32_t> row_start_;
  std::vector<std::uint32_t> cols_j_;
  std::vector<std::uint32_t> cols_k_;
  std::vector<double> values_;
  std::vector<std::uint32_t> diag_start_;
  std::vector<std::uint32_t> diag_cols_;
  std::vector<double> diag_values_;
  std::size_t expanded_size_ = 0;
};

/// Band-limited projection of the pointwise product.
SHVector sh_product(const SHVector& a, const SHVector& b);

struct ShProductGrad {
  SHVector d_a;
  SHVector d_b;
};
/// Adjoints of sh_product; by tensor symmetry d_a = g * b and d_b = g * a.
ShProductGrad sh_product_vjp(const SHVector& a, const SHVector& b, const SHVector& grad_out);

}  // namespace shseed

#pragma once

// Real orthonormal spherical harmonics, bands 0..n-1, linear index l*l + l + m.
// No Condon-Shortley phase: y_{1,-1} ~ +y, y_{1,0} ~ +z, y_{1,1} ~ +x.

#include "shseed/common.hpp"

#include <atomic>
#include <cstdint>
#include <span>
#include <vector>

namespace shseed {

inline constexpr int sh_index(int l, int m) { return l * l + l + m; }
inline constexpr int sh_count(int band_count) { return band_count * band_count; }
inline constexpr int sh_band_of(int index) {
  int l = 0;
  while ((l + 1) * (l + 1) <= index) ++l;
  return l;
}

/// Largest band count supported by the precomputed basis constants.
inline constexpr int kMaxBandCount = 16;

class SHVector {
 public:
  SHVector() = default;
  explicit SHVector(int band_count);
  SHVector(int band_count, std::vector<double> coeffs);

  /// SH projection of the constant function `value` (only the DC slot is set).
  static SHVector constant(int band_count, double value);

  int band_count() const { return band_count_; }
  std::size_t size() const { return coeffs_.size(); }
  double& operator[](std::size_t i) { return coeffs_[i]; }
  double operator[](std::size_t i) const { return coeffs_[i]; }
  std::span<double> coeffs() { return coeffs_; }
  std::span<const double> coeffs() const { return coeffs_; }
  const std::vector<double>& values() const { return coeffs_; }

  double norm() const;
  bool all_finite() const;

  SHVector& operator+=(const SHVector& other);
  SHVector& operator-=(const SHVector& other);
  SHVector& operator*=(double s);
  friend SHVector operator+(SHVector a, const SHVector& b) { return a += b; }
  friend SHVector operator-(SHVector a, const SHVector& b) { return a -= b; }
  friend SHVector operator*(SHVector a, double s) { return a *= s; }
  friend SHVector operator*(double s, SHVector a) { return a *= s; }

 private:
  int band_count_ = 0;
  std::vector<double> coeffs_;
};

/// Coefficients of a function symmetric about +z: one m = 0 value per band.
class ZonalVector {
 public:
  ZonalVector() = default;
  explicit ZonalVector(int band_count) : coeffs_(static_cast<std::size_t>(band_count), 0.0) {}
  explicit ZonalVector(std::vector<double> coeffs) : coeffs_(std::move(coeffs)) {}

  int band_count() const { return static_cast<int>(coeffs_.size()); }
  double& operator[](std::size_t l) { return coeffs_[l]; }
  double operator[](std::size_t l) const { return coeffs_[l]; }
  std::span<double> coeffs() { return coeffs_; }
  std::span<const double> coeffs() const { return coeffs_; }

 private:
  std::vector<double> coeffs_;
};

/// Places zonal coefficients into the m = 0 slots of a full vector.
SHVector embed(const ZonalVector& z);

/// Counters for inputs the SH routines had to repair (non-unit directions, clamped caps).
struct ShDiagnostics {
  std::atomic<std::uint64_t> renormalized_directions{0};
  std::atomic<std::uint64_t> clamped_blockers{0};
};
ShDiagnostics& sh_diagnostics();

// ---- Basis evaluation -------------------------------------------------------

/// Writes y_i(u) for i < n^2 into `out`. `u` must be unit length.
void eval_basis(const Vec3& u, int band_count, std::span<double> out);

/// Gradient of sum_i weights_i * y_i at u, evaluated on the polynomial extension and
/// projected onto the tangent plane at u.
Vec3 eval_basis_gradient(const Vec3& u, int band_count, std::span<const double> weights);

SHVector sh_basis(const Vec3& direction, int band_count);

// ---- Projection / reconstruction ---------------------------------------------

struct SphericalSample {
  Vec3 direction;
  double value = 0.0;
  double weight = 0.0;  // solid angle represented by the sample
};

struct QuadratureGrid {
  std::vector<Vec3> directions;
  std::vector<double> weights;
  std::size_t size() const { return directions.size(); }
};

/// Gauss-Legendre in cos(theta) x uniform in phi.
QuadratureGrid product_quadrature(int theta_count, int phi_count);
/// Grid that integrates spherical polynomials up to `degree` exactly.
QuadratureGrid quadrature_for_degree(int degree);

/// Uniformly distributed directions (weight 4*pi/N each), deterministic in `seed`.
std::vector<Vec3> uniform_sphere_directions(std::size_t count, std::uint64_t seed);
/// Spherical Fibonacci lattice: equal-area, low-discrepancy uniform directions.
std::vector<Vec3> fibonacci_sphere_directions(std::size_t count);

/// Weighted-sum estimate of f_i = integral f(w) y_i(w) dw.
SHVector project(std::span<const SphericalSample> samples, int band_count);

template <typename F>
SHVector project_function(F&& f, int band_count, const QuadratureGrid& grid) {
  std::vector<SphericalSample> samples;
  samples.reserve(grid.size());
  for (std::size_t s = 0; s < grid.size(); ++s) {
    samples.push_back({grid.directions[s], f(grid.directions[s]), grid.weights[s]});
  }
  return project(samples, band_count);
}

double reconstruct(const SHVector& v, const Vec3& direction);
double sh_dot(const SHVector& a, const SHVector& b);

// ---- Zonal functions ---------------------------------------------------------

/// Zonal coefficients of max(cos(theta), 0).
ZonalVector zonal_clamped_cosine(int band_count);

/// Half-angle used when a point sits inside (or on) a blocker sphere.
inline constexpr double kMaxCapAngle = 89.5 * kPi / 180.0;

struct LogBlocker {
  ZonalVector coeffs;
  ZonalVector d_distance;
  ZonalVector d_radius;
  bool clamped = false;
};

/// Zonal coefficients of the function that is -epsilon inside the cap of half-angle
/// asin(radius / distance) around +z and 0 outside, with partial derivatives.
LogBlocker zonal_log_blocker(double distance, double radius, double epsilon, int band_count);

/// Allocation-free variant; returns true if the cap angle was clamped.
bool zonal_log_blocker(double distance, double radius, double epsilon, int band_count,
                       std::span<double> coeffs, std::span<double> d_distance,
                       std::span<double> d_radius);

// ---- Rotation of zonal functions ---------------------------------------------

/// Full SH vector of the zonal function re-oriented from +z to `direction`.
SHVector rotate_zonal(const ZonalVector& z, const Vec3& direction);
void rotate_zonal(std::span<const double> zonal, const Vec3& unit_direction, int band_count,
                  std::span<double> out);

struct RotateZonalGrad {
  ZonalVector d_zonal;
  Vec3 d_direction = Vec3::Zero();  // tangent to the unit sphere at `direction`
};
RotateZonalGrad rotate_zonal_vjp(const ZonalVector& z, const Vec3& direction,
                                 const SHVector& grad_out);

/// sqrt(4 pi / (2l + 1)): scale applied to y_{l,m}(d) when rotating band l.
double zonal_rotation_scale(int l);

}  // namespace shseed

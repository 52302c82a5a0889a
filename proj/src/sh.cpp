#include "shseed/sh.hpp"

#include <array>
#include <cmath>
#include <random>

namespace shseed {

namespace {

struct BasisConstants {
  // K[l][m] including the sqrt(2) factor for m > 0.
  std::array<std::array<double, kMaxBandCount>, kMaxBandCount> k{};
  std::array<double, kMaxBandCount> rotation_scale{};

  BasisConstants() {
    for (int l = 0; l < kMaxBandCount; ++l) {
      rotation_scale[l] = std::sqrt(kFourPi / (2.0 * l + 1.0));
      for (int m = 0; m <= l; ++m) {
        // (l - m)! / (l + m)!
        double ratio = 1.0;
        for (int f = l - m + 1; f <= l + m; ++f) ratio /= f;
        double value = std::sqrt((2.0 * l + 1.0) / kFourPi * ratio);
        k[l][m] = m == 0 ? value : std::sqrt(2.0) * value;
      }
    }
  }
};

const BasisConstants& constants() {
  static const BasisConstants c;
  return c;
}

void check_band_count(int band_count) {
  if (band_count < 1 || band_count > kMaxBandCount) {
    throw ConfigError("band count must be in [1, " + std::to_string(kMaxBandCount) + "], got " +
                      std::to_string(band_count));
  }
}

Vec3 normalized_direction(const Vec3& d) {
  const double n = d.norm();
  if (!(n > 0.0) || !std::isfinite(n)) throw NumericalError("direction has zero or non-finite length");
  if (std::abs(n - 1.0) > 1e-9) {
    sh_diagnostics().renormalized_directions.fetch_add(1, std::memory_order_relaxed);
    return d / n;
  }
  return d;
}

// Legendre polynomials P_0..P_{count-1} at t.
void legendre(double t, int count, std::span<double> out) {
  out[0] = 1.0;
  if (count > 1) out[1] = t;
  for (int l = 2; l < count; ++l) {
    out[l] = ((2.0 * l - 1.0) * t * out[l - 1] - (l - 1.0) * out[l - 2]) / l;
  }
}

}  // namespace

ShDiagnostics& sh_diagnostics() {
  static ShDiagnostics d;
  return d;
}

// ---- SHVector ------------------------------------------------------------------

SHVector::SHVector(int band_count) : band_count_(band_count) {
  if (band_count < 1) throw ConfigError("band count must be positive");
  coeffs_.assign(static_cast<std::size_t>(sh_count(band_count)), 0.0);
}

SHVector::SHVector(int band_count, std::vector<double> coeffs)
    : band_count_(band_count), coeffs_(std::move(coeffs)) {
  if (band_count < 1) throw ConfigError("band count must be positive");
  if (coeffs_.size() != static_cast<std::size_t>(sh_count(band_count))) {
    throw ConfigError("SH vector length " + std::to_string(coeffs_.size()) +
                      " does not match band count " + std::to_string(band_count));
  }
}

SHVector SHVector::constant(int band_count, double value) {
  SHVector v(band_count);
  v[0] = value * 2.0 * std::sqrt(kPi);
  return v;
}

double SHVector::norm() const {
  double s = 0.0;
  for (double c : coeffs_) s += c * c;
  return std::sqrt(s);
}

bool SHVector::all_finite() const {
  for (double c : coeffs_) {
    if (!std::isfinite(c)) return false;
  }
  return true;
}

SHVector& SHVector::operator+=(const SHVector& other) {
  if (other.band_count_ != band_count_) throw ConfigError("band count mismatch in SH addition");
  for (std::size_t i = 0; i < coeffs_.size(); ++i) coeffs_[i] += other.coeffs_[i];
  return *this;
}

SHVector& SHVector::operator-=(const SHVector& other) {
  if (other.band_count_ != band_count_) throw ConfigError("band count mismatch in SH subtraction");
  for (std::size_t i = 0; i < coeffs_.size(); ++i) coeffs_[i] -= other.coeffs_[i];
  return *this;
}

SHVector& SHVector::operator*=(double s) {
  for (double& c : coeffs_) c *= s;
  return *this;
}

SHVector embed(const ZonalVector& z) {
  SHVector v(z.band_count());
  for (int l = 0; l < z.band_count(); ++l) v[sh_index(l, 0)] = z[l];
  return v;
}

// ---- Basis -------------------------------------------------------------------------

// Cartesian form: y_lm = K_lm Q_l^m(z) {C_m(x, y) | S_m(x, y)} where
// C_m + i S_m = (x + i y)^m and Q_l^m = P_l^m(z) / (1 - z^2)^(m/2).
void eval_basis(const Vec3& u, int band_count, std::span<double> out) {
  const auto& K = constants().k;
  const double x = u.x(), y = u.y(), z = u.z();
  double c = 1.0, s = 0.0;  // C_m, S_m
  double qmm = 1.0;         // Q_m^m = (2m - 1)!!
  for (int m = 0; m < band_count; ++m) {
    if (m > 0) {
      const double cn = x * c - y * s;
      const double sn = x * s + y * c;
      c = cn;
      s = sn;
      qmm *= (2.0 * m - 1.0);
    }
    double q_prev2 = 0.0, q_prev = qmm;
    for (int l = m; l < band_count; ++l) {
      double q;
      if (l == m) {
        q = qmm;
      } else if (l == m + 1) {
        q = (2.0 * m + 1.0) * z * qmm;
      } else {
        q = ((2.0 * l - 1.0) * z * q_prev - (l + m - 1.0) * q_prev2) / (l - m);
      }
      if (l > m) {
        q_prev2 = q_prev;
        q_prev = q;
      }
      const double kq = K[l][m] * q;
      if (m == 0) {
        out[sh_index(l, 0)] = kq;
      } else {
        out[sh_index(l, m)] = kq * c;
        out[sh_index(l, -m)] = kq * s;
      }
    }
  }
}

Vec3 eval_basis_gradient(const Vec3& u, int band_count, std::span<const double> weights) {
  const auto& K = constants().k;
  const double x = u.x(), y = u.y(), z = u.z();
  double c = 1.0, s = 0.0, c_prev = 0.0, s_prev = 0.0;
  double qmm = 1.0;
  Vec3 g = Vec3::Zero();
  for (int m = 0; m < band_count; ++m) {
    if (m > 0) {
      c_prev = c;
      s_prev = s;
      c = x * c_prev - y * s_prev;
      s = x * s_prev + y * c_prev;
      qmm *= (2.0 * m - 1.0);
    }
    double q_prev2 = 0.0, q_prev = qmm;
    double dq_prev2 = 0.0, dq_prev = 0.0;
    for (int l = m; l < band_count; ++l) {
      double q, dq;
      if (l == m) {
        q = qmm;
        dq = 0.0;
      } else if (l == m + 1) {
        q = (2.0 * m + 1.0) * z * qmm;
        dq = (2.0 * m + 1.0) * qmm;
      } else {
        q = ((2.0 * l - 1.0) * z * q_prev - (l + m - 1.0) * q_prev2) / (l - m);
        dq = ((2.0 * l - 1.0) * (q_prev + z * dq_prev) - (l + m - 1.0) * dq_prev2) / (l - m);
      }
      if (l > m) {
        q_prev2 = q_prev;
        q_prev = q;
        dq_prev2 = dq_prev;
        dq_prev = dq;
      }
      const double k = K[l][m];
      if (m == 0) {
        g.z() += weights[sh_index(l, 0)] * k * dq;
      } else {
        const double wc = weights[sh_index(l, m)] * k;
        const double ws = weights[sh_index(l, -m)] * k;
        // d C_m / dx = m C_{m-1}, d C_m / dy = -m S_{m-1}
        // d S_m / dx = m S_{m-1}, d S_m / dy =  m C_{m-1}
        g.x() += q * m * (wc * c_prev + ws * s_prev);
        g.y() += q * m * (-wc * s_prev + ws * c_prev);
        g.z() += dq * (wc * c + ws * s);
      }
    }
  }
  return g - u * u.dot(g);
}

SHVector sh_basis(const Vec3& direction, int band_count) {
  check_band_count(band_count);
  const Vec3 u = normalized_direction(direction);
  SHVector v(band_count);
  eval_basis(u, band_count, v.coeffs());
  return v;
}

// ---- Quadrature --------------------------------------------------------------------

QuadratureGrid product_quadrature(int theta_count, int phi_count) {
  if (theta_count < 1 || phi_count < 1) throw ConfigError("quadrature sizes must be positive");
  // Gauss-Legendre nodes by Newton iteration on P_n.
  std::vector<double> nodes(theta_count), weights(theta_count);
  const int n = theta_count;
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double t = std::cos(kPi * (i + 0.75) / (n + 0.5));
    double dp = 1.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p1 = 1.0, p2 = 0.0;
      for (int k = 1; k <= n; ++k) {
        const double p3 = p2;
        p2 = p1;
        p1 = ((2.0 * k - 1.0) * t * p2 - (k - 1.0) * p3) / k;
      }
      dp = n * (t * p1 - p2) / (t * t - 1.0);
      const double step = p1 / dp;
      t -= step;
      if (std::abs(step) < 1e-15) break;
    }
    nodes[i] = t;
    nodes[n - 1 - i] = -t;
    weights[i] = weights[n - 1 - i] = 2.0 / ((1.0 - t * t) * dp * dp);
  }
  QuadratureGrid grid;
  grid.directions.reserve(static_cast<std::size_t>(theta_count) * phi_count);
  grid.weights.reserve(grid.directions.capacity());
  const double dphi = 2.0 * kPi / phi_count;
  for (int i = 0; i < theta_count; ++i) {
    const double z = nodes[i];
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    for (int j = 0; j < phi_count; ++j) {
      const double phi = (j + 0.5) * dphi;
      grid.directions.emplace_back(r * std::cos(phi), r * std::sin(phi), z);
      grid.weights.push_back(weights[i] * dphi);
    }
  }
  return grid;
}

QuadratureGrid quadrature_for_degree(int degree) {
  return product_quadrature(degree / 2 + 2, degree + 2);
}

std::vector<Vec3> uniform_sphere_directions(std::size_t count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::vector<Vec3> dirs;
  dirs.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const double z = 1.0 - 2.0 * uni(rng);
    const double phi = 2.0 * kPi * uni(rng);
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    dirs.emplace_back(r * std::cos(phi), r * std::sin(phi), z);
  }
  return dirs;
}

std::vector<Vec3> fibonacci_sphere_directions(std::size_t count) {
  const double golden = kPi * (3.0 - std::sqrt(5.0));
  std::vector<Vec3> dirs;
  dirs.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const double z = 1.0 - (2.0 * i + 1.0) / static_cast<double>(count);
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double phi = golden * static_cast<double>(i);
    dirs.emplace_back(r * std::cos(phi), r * std::sin(phi), z);
  }
  return dirs;
}

SHVector project(std::span<const SphericalSample> samples, int band_count) {
  check_band_count(band_count);
  if (samples.empty()) throw ConfigError("cannot project an empty sample set");
  SHVector v(band_count);
  std::vector<double> y(v.size());
  for (const auto& s : samples) {
    eval_basis(normalized_direction(s.direction), band_count, y);
    const double fw = s.value * s.weight;
    for (std::size_t i = 0; i < y.size(); ++i) v[i] += fw * y[i];
  }
  return v;
}

double reconstruct(const SHVector& v, const Vec3& direction) {
  std::vector<double> y(v.size());
  eval_basis(normalized_direction(direction), v.band_count(), y);
  double sum = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) sum += v[i] * y[i];
  return sum;
}

double sh_dot(const SHVector& a, const SHVector& b) {
  if (a.band_count() != b.band_count()) throw ConfigError("band count mismatch in sh_dot");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += a[i] * b[i];
  return sum;
}

// ---- Zonal -------------------------------------------------------------------------

double zonal_rotation_scale(int l) { return constants().rotation_scale[l]; }

ZonalVector zonal_clamped_cosine(int band_count) {
  check_band_count(band_count);
  // integral_0^1 P_k(t) dt = (P_{k-1}(0) - P_{k+1}(0)) / (2k + 1), and
  // t P_l = ((l + 1) P_{l+1} + l P_{l-1}) / (2l + 1).
  std::vector<double> p0(band_count + 2);
  legendre(0.0, band_count + 2, p0);
  auto half_integral = [&](int k) { return k == 0 ? 1.0 : (p0[k - 1] - p0[k + 1]) / (2.0 * k + 1.0); };
  ZonalVector z(band_count);
  for (int l = 0; l < band_count; ++l) {
    double moment = (l + 1.0) * half_integral(l + 1);
    if (l > 0) moment += l * half_integral(l - 1);
    moment /= (2.0 * l + 1.0);
    z[l] = 2.0 * kPi * std::sqrt((2.0 * l + 1.0) / kFourPi) * moment;
  }
  return z;
}

bool zonal_log_blocker(double distance, double radius, double epsilon, int band_count,
                       std::span<double> coeffs, std::span<double> d_distance,
                       std::span<double> d_radius) {
  if (radius < 0.0 || !std::isfinite(radius) || !std::isfinite(distance)) {
    throw ConfigError("blocker radius must be finite and non-negative");
  }
  double p[kMaxBandCount + 2];
  if (radius == 0.0) {
    for (int l = 0; l < band_count; ++l) coeffs[l] = d_distance[l] = d_radius[l] = 0.0;
    return false;
  }
  static const double kSinMax = std::sin(kMaxCapAngle);
  double rho = distance > 0.0 ? radius / distance : 2.0;
  bool clamped = false;
  double drho_dd = 0.0, drho_dr = 0.0;
  if (rho >= kSinMax) {
    rho = kSinMax;
    clamped = true;
  } else {
    drho_dd = -radius / (distance * distance);
    drho_dr = 1.0 / distance;
  }
  const double c = std::sqrt(1.0 - rho * rho);
  const double dc_drho = -rho / c;
  legendre(c, band_count + 1, std::span<double>(p, band_count + 1));
  for (int l = 0; l < band_count; ++l) {
    const double cap = l == 0 ? 1.0 - c : (p[l - 1] - p[l + 1]) / (2.0 * l + 1.0);
    const double scale = -epsilon * 2.0 * kPi * std::sqrt((2.0 * l + 1.0) / kFourPi);
    coeffs[l] = scale * cap;
    const double dcoeff_dc = -scale * p[l];
    d_distance[l] = dcoeff_dc * dc_drho * drho_dd;
    d_radius[l] = dcoeff_dc * dc_drho * drho_dr;
  }
  if (clamped) sh_diagnostics().clamped_blockers.fetch_add(1, std::memory_order_relaxed);
  return clamped;
}

LogBlocker zonal_log_blocker(double distance, double radius, double epsilon, int band_count) {
  check_band_count(band_count);
  LogBlocker out{ZonalVector(band_count), ZonalVector(band_count), ZonalVector(band_count), false};
  out.clamped = zonal_log_blocker(distance, radius, epsilon, band_count, out.coeffs.coeffs(),
                                  out.d_distance.coeffs(), out.d_radius.coeffs());
  return out;
}

// ---- Rotation ----------------------------------------------------------------------

void rotate_zonal(std::span<const double> zonal, const Vec3& unit_direction, int band_count,
                  std::span<double> out) {
  eval_basis(unit_direction, band_count, out);
  const auto& scale = constants().rotation_scale;
  for (int l = 0; l < band_count; ++l) {
    const double f = scale[l] * zonal[l];
    for (int i = l * l; i < (l + 1) * (l + 1); ++i) out[i] *= f;
  }
}

SHVector rotate_zonal(const ZonalVector& z, const Vec3& direction) {
  check_band_count(z.band_count());
  SHVector out(z.band_count());
  rotate_zonal(z.coeffs(), normalized_direction(direction), z.band_count(), out.coeffs());
  return out;
}

RotateZonalGrad rotate_zonal_vjp(const ZonalVector& z, const Vec3& direction,
                                 const SHVector& grad_out) {
  const int n = z.band_count();
  if (grad_out.band_count() != n) throw ConfigError("band count mismatch in rotate_zonal_vjp");
  const Vec3 u = normalized_direction(direction);
  RotateZonalGrad g{ZonalVector(n), Vec3::Zero()};
  std::vector<double> y(grad_out.size()), weights(grad_out.size());
  eval_basis(u, n, y);
  const auto& scale = constants().rotation_scale;
  for (int l = 0; l < n; ++l) {
    double acc = 0.0;
    for (int i = l * l; i < (l + 1) * (l + 1); ++i) {
      acc += grad_out[i] * y[i];
      weights[i] = grad_out[i] * scale[l] * z[l];
    }
    g.d_zonal[l] = acc * scale[l];
  }
  g.d_direction = eval_basis_gradient(u, n, weights);
  return g;
}

}  // namespace shseed

#include "shseed/sh.hpp"
#include "shseed/sh_exp.hpp"
#include "shseed/triple_product.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

using namespace shseed;

namespace {

// Independent reference: associated Legendre (no phase) by the textbook recurrence
// in theta/phi form, used to cross-check the Cartesian basis.
double ref_legendre(int l, int m, double x) {
  double pmm = 1.0;
  const double s = std::sqrt(std::max(0.0, 1.0 - x * x));
  for (int i = 1; i <= m; ++i) pmm *= (2.0 * i - 1.0) * s;
  if (l == m) return pmm;
  double pmmp1 = x * (2.0 * m + 1.0) * pmm;
  if (l == m + 1) return pmmp1;
  double pll = 0.0;
  for (int ll = m + 2; ll <= l; ++ll) {
    pll = ((2.0 * ll - 1.0) * x * pmmp1 - (ll + m - 1.0) * pmm) / (ll - m);
    pmm = pmmp1;
    pmmp1 = pll;
  }
  return pll;
}

double ref_basis(int l, int m, const Vec3& u) {
  const double theta = std::acos(std::clamp(u.z(), -1.0, 1.0));
  const double phi = std::atan2(u.y(), u.x());
  const int am = std::abs(m);
  double k = (2.0 * l + 1.0) / (4.0 * kPi);
  for (int i = l - am + 1; i <= l + am; ++i) k /= i;
  k = std::sqrt(k);
  const double p = ref_legendre(l, am, std::cos(theta));
  if (m == 0) return k * p;
  if (m > 0) return std::sqrt(2.0) * k * std::cos(am * phi) * p;
  return std::sqrt(2.0) * k * std::sin(am * phi) * p;
}

Vec3 random_direction(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Vec3 v(n(rng), n(rng), n(rng));
  return v.normalized();
}

SHVector random_vector(int bands, std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  SHVector v(bands);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = u(rng);
  return v;
}

double band_norm(const SHVector& v, int l) {
  double s = 0.0;
  for (int m = -l; m <= l; ++m) s += v[sh_index(l, m)] * v[sh_index(l, m)];
  return std::sqrt(s);
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8}); }

SHVector rotated_log_blocker(double d, double r, double eps, int bands, const Vec3& dir) {
  return rotate_zonal(zonal_log_blocker(d, r, eps, bands).coeffs, dir);
}

}  // namespace

// ---- basis -------------------------------------------------------------------

TEST(ShBasis, DcIsConstant) {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 20; ++t) {
    EXPECT_NEAR(sh_basis(random_direction(rng), 4)[0], 0.5 / std::sqrt(kPi), 1e-12);
  }
  EXPECT_NEAR(0.5 / std::sqrt(kPi), 0.282095, 1e-6);
}

TEST(ShBasis, PoleHasOnlyZonalTerms) {
  const SHVector y = sh_basis(Vec3(0, 0, 1), 8);
  for (int l = 0; l < 8; ++l) {
    for (int m = -l; m <= l; ++m) {
      if (m != 0) EXPECT_EQ(y[sh_index(l, m)], 0.0);
    }
    EXPECT_NEAR(y[sh_index(l, 0)], std::sqrt((2.0 * l + 1.0) / (4.0 * kPi)), 1e-12);
  }
}

TEST(ShBasis, SignConventionBandOne) {
  const double c = std::sqrt(3.0 / (4.0 * kPi));
  EXPECT_NEAR(sh_basis(Vec3(0, 1, 0), 2)[sh_index(1, -1)], c, 1e-12);
  EXPECT_NEAR(sh_basis(Vec3(0, 0, 1), 2)[sh_index(1, 0)], c, 1e-12);
  EXPECT_NEAR(sh_basis(Vec3(1, 0, 0), 2)[sh_index(1, 1)], c, 1e-12);
}

TEST(ShBasis, MatchesPolarReference) {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 50; ++t) {
    const Vec3 u = random_direction(rng);
    const SHVector y = sh_basis(u, 12);
    for (int l = 0; l < 12; ++l) {
      for (int m = -l; m <= l; ++m) EXPECT_NEAR(y[sh_index(l, m)], ref_basis(l, m, u), 1e-10);
    }
  }
}

TEST(ShBasis, NonUnitDirectionIsNormalized) {
  const auto before = sh_diagnostics().renormalized_directions.load();
  const SHVector a = sh_basis(Vec3(0, 0, 3), 3);
  const SHVector b = sh_basis(Vec3(0, 0, 1), 3);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-12);
  EXPECT_GT(sh_diagnostics().renormalized_directions.load(), before);
}

TEST(ShBasis, OrthonormalOverMillionUniformDirections) {
  constexpr int n = 8;
  constexpr int count = n * n;
  const std::vector<Vec3> dirs = fibonacci_sphere_directions(1000000);
  std::vector<double> gram(count * count, 0.0);
  std::vector<double> y(count);
  for (const Vec3& d : dirs) {
    eval_basis(d, n, y);
    for (int i = 0; i < count; ++i) {
      for (int j = i; j < count; ++j) gram[i * count + j] += y[i] * y[j];
    }
  }
  const double w = kFourPi / static_cast<double>(dirs.size());
  double worst = 0.0;
  for (int i = 0; i < count; ++i) {
    for (int j = i; j < count; ++j) {
      worst = std::max(worst, std::abs(gram[i * count + j] * w - (i == j ? 1.0 : 0.0)));
    }
  }
  EXPECT_LT(worst, 2e-3);
}

TEST(ShBasis, GradientMatchesFiniteDifference) {
  std::mt19937_64 rng(3);
  const int n = 6;
  for (int t = 0; t < 20; ++t) {
    const Vec3 u = random_direction(rng);
    const SHVector w = random_vector(n, rng);
    const Vec3 g = eval_basis_gradient(u, n, w.coeffs());
    EXPECT_NEAR(g.dot(u), 0.0, 1e-10);
    // Directional derivative along a tangent, moving on the sphere.
    Vec3 tangent = u.cross(random_direction(rng)).normalized();
    const double h = 1e-5;
    auto f = [&](double s) {
      const Vec3 p = (u + s * tangent).normalized();
      return sh_dot(w, sh_basis(p, n));
    };
    const double fd = (f(h) - f(-h)) / (2 * h);
    EXPECT_LT(rel_err(fd, g.dot(tangent)), 1e-4) << fd << " vs " << g.dot(tangent);
  }
}

// ---- projection / reconstruction --------------------------------------------

TEST(ShProject, ConstantFunction) {
  const QuadratureGrid grid = quadrature_for_degree(16);
  const SHVector v = project_function([](const Vec3&) { return 1.0; }, 8, grid);
  EXPECT_NEAR(v[0], 2.0 * std::sqrt(kPi), 1e-10);
  EXPECT_NEAR(v[0], 3.5449, 1e-4);
  for (std::size_t i = 1; i < v.size(); ++i) EXPECT_NEAR(v[i], 0.0, 1e-10);
}

TEST(ShProject, ClampedCosineMatchesAnalytic) {
  // The kink at the equator limits Gauss accuracy; an even node count keeps it symmetric.
  const QuadratureGrid grid = product_quadrature(2000, 32);
  const SHVector v = project_function([](const Vec3& w) { return std::max(w.z(), 0.0); }, 8, grid);
  const ZonalVector z = zonal_clamped_cosine(8);
  for (int l = 0; l < 8; ++l) {
    EXPECT_NEAR(v[sh_index(l, 0)], z[l], 1e-5) << "band " << l;
    for (int m = -l; m <= l; ++m) {
      if (m != 0) EXPECT_NEAR(v[sh_index(l, m)], 0.0, 1e-10);
    }
  }
}

TEST(ShProject, UpperHemisphereIndicator) {
  const QuadratureGrid grid = product_quadrature(64, 16);
  const SHVector v = project_function([](const Vec3& w) { return w.z() > 0.0 ? 1.0 : 0.0; }, 4, grid);
  EXPECT_NEAR(v[0], std::sqrt(kPi), 1e-10);
}

TEST(ShProject, EmptySamplesThrow) {
  std::vector<SphericalSample> none;
  EXPECT_THROW(project(none, 3), ConfigError);
}

TEST(ShProject, ProjectionIsIdempotent) {
  std::mt19937_64 rng(4);
  const QuadratureGrid grid = quadrature_for_degree(16);
  for (int n = 1; n <= 8; ++n) {
    const SHVector v = random_vector(n, rng);
    const SHVector back = project_function([&](const Vec3& w) { return reconstruct(v, w); }, n, grid);
    for (std::size_t i = 0; i < v.size(); ++i) EXPECT_NEAR(back[i], v[i], 1e-10);
  }
}

TEST(ShReconstruct, ConstantRoundTrip) {
  const QuadratureGrid grid = quadrature_for_degree(8);
  const SHVector v = project_function([](const Vec3&) { return 1.0; }, 4, grid);
  std::mt19937_64 rng(5);
  for (int t = 0; t < 20; ++t) EXPECT_NEAR(reconstruct(v, random_direction(rng)), 1.0, 1e-6);
}

TEST(ShReconstruct, SingleDcEntry) {
  SHVector v(5);
  v[0] = 2.5;
  std::mt19937_64 rng(6);
  for (int t = 0; t < 20; ++t) {
    EXPECT_NEAR(reconstruct(v, random_direction(rng)), 2.5 / (2.0 * std::sqrt(kPi)), 1e-12);
  }
}

TEST(ShReconstruct, ClampedCosineAtPole) {
  const SHVector v = embed(zonal_clamped_cosine(8));
  EXPECT_NEAR(reconstruct(v, Vec3(0, 0, 1)), 1.0, 0.05);
}

TEST(ShDot, ConstantOnesGiveFourPi) {
  const SHVector one = SHVector::constant(6, 1.0);
  EXPECT_NEAR(sh_dot(one, one), kFourPi, 1e-12);
}

TEST(ShDot, ZeroVector) {
  std::mt19937_64 rng(7);
  EXPECT_EQ(sh_dot(random_vector(4, rng), SHVector(4)), 0.0);
}

TEST(ShDot, BandMismatchThrows) { EXPECT_THROW(sh_dot(SHVector(3), SHVector(4)), ConfigError); }

TEST(ShDot, MatchesMillionSampleQuadrature) {
  std::mt19937_64 rng(8);
  const SHVector a = random_vector(4, rng);
  const SHVector b = random_vector(4, rng);
  const std::vector<Vec3> dirs = fibonacci_sphere_directions(1000000);
  double sum = 0.0;
  for (const Vec3& d : dirs) sum += reconstruct(a, d) * reconstruct(b, d);
  sum *= kFourPi / static_cast<double>(dirs.size());
  EXPECT_LT(rel_err(sum, sh_dot(a, b)), 1e-2);
}

// ---- triple product -----------------------------------------------------------

TEST(TripleProduct, DcCube) {
  const auto t = TripleProductTensor::get(8);
  EXPECT_NEAR(t->value(0, 0, 0), 0.5 / std::sqrt(kPi), 1e-12);
}

TEST(TripleProduct, OddParityVanishes) {
  const auto t = TripleProductTensor::get(6);
  const int count = sh_count(6);
  for (int i = 0; i < count; ++i) {
    for (int j = 0; j < count; ++j) {
      for (int k = 0; k < count; ++k) {
        if ((sh_band_of(i) + sh_band_of(j) + sh_band_of(k)) % 2 == 1) {
          EXPECT_NEAR(t->value(i, j, k), 0.0, 1e-10);
        }
      }
    }
  }
}

TEST(TripleProduct, SymmetricUnderPermutation) {
  const auto t = TripleProductTensor::get(8);
  std::mt19937_64 rng(9);
  std::uniform_int_distribution<int> idx(0, 63);
  for (int s = 0; s < 100; ++s) {
    const int i = idx(rng), j = idx(rng), k = idx(rng);
    const double v = t->value(i, j, k);
    EXPECT_EQ(v, t->value(k, j, i));
    EXPECT_EQ(v, t->value(j, i, k));
    EXPECT_EQ(v, t->value(j, k, i));
  }
}

TEST(TripleProduct, MatchesIndependentQuadrature) {
  constexpr int n = 5;
  const auto t = TripleProductTensor::get(n);
  // Polar-coordinate reference basis on a grid finer than the one used internally.
  const QuadratureGrid grid = product_quadrature(40, 80);
  const int count = sh_count(n);
  std::vector<double> y(grid.size() * count);
  for (std::size_t s = 0; s < grid.size(); ++s) {
    for (int l = 0; l < n; ++l) {
      for (int m = -l; m <= l; ++m) y[s * count + sh_index(l, m)] = ref_basis(l, m, grid.directions[s]);
    }
  }
  for (int i = 0; i < count; ++i) {
    for (int j = i; j < count; ++j) {
      for (int k = j; k < count; ++k) {
        double ref = 0.0;
        for (std::size_t s = 0; s < grid.size(); ++s) {
          ref += grid.weights[s] * y[s * count + i] * y[s * count + j] * y[s * count + k];
        }
        ASSERT_NEAR(t->value(i, j, k), ref, 1e-10) << i << " " << j << " " << k;
      }
    }
  }
}

TEST(TripleProduct, SelectionRuleSparsity) {
  const auto t = TripleProductTensor::get(8);
  for (const auto& e : t->entries()) {
    const int li = sh_band_of(e.i), lj = sh_band_of(e.j), lk = sh_band_of(e.k);
    EXPECT_LE(std::abs(lj - lk), li);
    EXPECT_LE(li, lj + lk);
    EXPECT_EQ((li + lj + lk) % 2, 0);
  }
  EXPECT_EQ(t->expanded_size(), 12868u);
}

TEST(TripleProduct, DiskCacheRoundTrip) {
  const auto path = std::filesystem::temp_directory_path() / "shseed_tp_roundtrip.shc";
  const TripleProductTensor a = TripleProductTensor::compute(4);
  a.save(path);
  const TripleProductTensor b = TripleProductTensor::load(path);
  std::filesystem::remove(path);
  ASSERT_EQ(a.entries().size(), b.entries().size());
  for (std::size_t e = 0; e < a.entries().size(); ++e) {
    EXPECT_EQ(a.entries()[e].i, b.entries()[e].i);
    EXPECT_EQ(a.entries()[e].j, b.entries()[e].j);
    EXPECT_EQ(a.entries()[e].k, b.entries()[e].k);
    EXPECT_EQ(a.entries()[e].value, b.entries()[e].value);
  }
  EXPECT_TRUE(std::filesystem::exists(TripleProductTensor::cache_file(8)));
}

TEST(TripleProduct, CorruptCacheRejected) {
  const auto path = std::filesystem::temp_directory_path() / "shseed_tp_corrupt.shc";
  {
    std::ofstream out(path, std::ios::binary);
    out << "NOPE";
  }
  EXPECT_ANY_THROW(TripleProductTensor::load(path));
  std::filesystem::remove(path);
}

TEST(ShProduct, MultiplyByOne) {
  std::mt19937_64 rng(10);
  const SHVector one = SHVector::constant(8, 1.0);
  const SHVector b = random_vector(8, rng);
  const SHVector p = sh_product(one, b);
  for (std::size_t i = 0; i < b.size(); ++i) EXPECT_NEAR(p[i], b[i], 1e-9);
  const SHVector oo = sh_product(one, one);
  for (std::size_t i = 0; i < oo.size(); ++i) EXPECT_NEAR(oo[i], one[i], 1e-9);
}

TEST(ShProduct, CommutesExactly) {
  std::mt19937_64 rng(11);
  for (int t = 0; t < 10; ++t) {
    const SHVector a = random_vector(8, rng);
    const SHVector b = random_vector(8, rng);
    const SHVector ab = sh_product(a, b);
    const SHVector ba = sh_product(b, a);
    for (std::size_t i = 0; i < ab.size(); ++i) EXPECT_EQ(ab[i], ba[i]);
  }
}

TEST(ShProduct, MatchesProjectedPointwiseProduct) {
  std::mt19937_64 rng(12);
  const SHVector a = random_vector(4, rng);
  const SHVector b = random_vector(4, rng);
  const SHVector ab = sh_product(a, b);
  const QuadratureGrid grid = quadrature_for_degree(12);
  const SHVector ref =
      project_function([&](const Vec3& w) { return reconstruct(a, w) * reconstruct(b, w); }, 4, grid);
  double worst = 0.0;
  for (const Vec3& w : fibonacci_sphere_directions(2000)) {
    worst = std::max(worst, std::abs(reconstruct(ab, w) - reconstruct(ref, w)));
  }
  EXPECT_LT(worst, 1e-3);
}

TEST(ShProduct, BandMismatchThrows) { EXPECT_THROW(sh_product(SHVector(3), SHVector(4)), ConfigError); }

TEST(ShProduct, VjpMatchesFiniteDifference) {
  std::mt19937_64 rng(13);
  const SHVector a = random_vector(4, rng);
  const SHVector b = random_vector(4, rng);
  const SHVector g = random_vector(4, rng);
  const ShProductGrad grad = sh_product_vjp(a, b, g);
  const double h = 1e-5;
  for (std::size_t i = 0; i < a.size(); ++i) {
    SHVector ap = a, am = a;
    ap[i] += h;
    am[i] -= h;
    const double fd = (sh_dot(g, sh_product(ap, b)) - sh_dot(g, sh_product(am, b))) / (2 * h);
    EXPECT_LT(rel_err(fd, grad.d_a[i]), 1e-4);
    SHVector bp = b, bm = b;
    bp[i] += h;
    bm[i] -= h;
    const double fdb = (sh_dot(g, sh_product(a, bp)) - sh_dot(g, sh_product(a, bm))) / (2 * h);
    EXPECT_LT(rel_err(fdb, grad.d_b[i]), 1e-4);
  }
}

// ---- zonal functions and rotation ---------------------------------------------

TEST(ZonalClampedCosine, LowBands) {
  const ZonalVector z = zonal_clamped_cosine(8);
  EXPECT_NEAR(z[0], std::sqrt(kPi) / 2.0, 1e-12);
  EXPECT_NEAR(z[0], 0.8862, 1e-4);
  EXPECT_NEAR(z[1], std::sqrt(kPi / 3.0), 1e-12);
  EXPECT_NEAR(z[1], 1.0233, 1e-4);
  for (int l = 3; l < 8; l += 2) EXPECT_NEAR(z[l], 0.0, 1e-10);
}

TEST(ZonalClampedCosine, MatchesHalfRangeQuadrature) {
  // Exact Gauss-Legendre on [0, 1] of t P_l(t), an independent route to the same integrals.
  const ZonalVector z = zonal_clamped_cosine(12);
  const QuadratureGrid g = product_quadrature(16, 1);
  for (int l = 0; l < 12; ++l) {
    double sum = 0.0;
    for (std::size_t s = 0; s < g.size(); ++s) {
      const double t = 0.5 * (g.directions[s].z() + 1.0);
      const double w = g.weights[s] / (2.0 * kPi) * 0.5;
      sum += w * t * ref_legendre(l, 0, t);
    }
    const double expected = 2.0 * kPi * std::sqrt((2.0 * l + 1.0) / (4.0 * kPi)) * sum;
    EXPECT_NEAR(z[l], expected, 1e-12) << "band " << l;
  }
}

TEST(RotateZonal, IdentityAtPole) {
  std::mt19937_64 rng(14);
  ZonalVector z(6);
  for (int l = 0; l < 6; ++l) z[l] = std::uniform_real_distribution<double>(-1, 1)(rng);
  const SHVector r = rotate_zonal(z, Vec3(0, 0, 1));
  const SHVector e = embed(z);
  for (std::size_t i = 0; i < r.size(); ++i) EXPECT_NEAR(r[i], e[i], 1e-12);
}

TEST(RotateZonal, PreservesBandNorms) {
  std::mt19937_64 rng(15);
  ZonalVector z(8);
  for (int l = 0; l < 8; ++l) z[l] = std::uniform_real_distribution<double>(-1, 1)(rng);
  for (int t = 0; t < 100; ++t) {
    const SHVector r = rotate_zonal(z, random_direction(rng));
    for (int l = 0; l < 8; ++l) EXPECT_NEAR(band_norm(r, l), std::abs(z[l]), 1e-9);
  }
}

TEST(RotateZonal, EqualsEvaluationInRotatedFrame) {
  std::mt19937_64 rng(16);
  ZonalVector z(6);
  for (int l = 0; l < 6; ++l) z[l] = std::uniform_real_distribution<double>(-1, 1)(rng);
  const SHVector flat = embed(z);
  for (int t = 0; t < 20; ++t) {
    const Vec3 d = random_direction(rng);
    // Any rotation taking +z to d; the zonal profile makes the twist irrelevant.
    const Mat3 rot = Eigen::Quaterniond::FromTwoVectors(Vec3(0, 0, 1), d).toRotationMatrix();
    const SHVector r = rotate_zonal(z, d);
    for (int s = 0; s < 20; ++s) {
      const Vec3 w = random_direction(rng);
      EXPECT_NEAR(reconstruct(r, w), reconstruct(flat, rot.transpose() * w), 1e-6);
    }
  }
}

TEST(RotateZonal, VjpMatchesFiniteDifference) {
  std::mt19937_64 rng(17);
  const int n = 6;
  ZonalVector z(n);
  for (int l = 0; l < n; ++l) z[l] = std::uniform_real_distribution<double>(-1, 1)(rng);
  for (int t = 0; t < 10; ++t) {
    const Vec3 d = random_direction(rng);
    const SHVector g = random_vector(n, rng);
    const RotateZonalGrad grad = rotate_zonal_vjp(z, d, g);
    const double h = 1e-5;
    for (int l = 0; l < n; ++l) {
      ZonalVector zp = z, zm = z;
      zp[l] += h;
      zm[l] -= h;
      const double fd = (sh_dot(g, rotate_zonal(zp, d)) - sh_dot(g, rotate_zonal(zm, d))) / (2 * h);
      EXPECT_LT(rel_err(fd, grad.d_zonal[l]), 1e-4);
    }
    const Vec3 tangent = d.cross(random_direction(rng)).normalized();
    auto f = [&](double s) { return sh_dot(g, rotate_zonal(z, (d + s * tangent).normalized())); };
    const double fd = (f(h) - f(-h)) / (2 * h);
    EXPECT_LT(rel_err(fd, grad.d_direction.dot(tangent)), 1e-4);
  }
}

// ---- log blockers -------------------------------------------------------------

TEST(LogBlocker, VanishingRadius) {
  const LogBlocker b = zonal_log_blocker(1.0, 1e-9, 3.0, 8);
  for (int l = 0; l < 8; ++l) EXPECT_NEAR(b.coeffs[l], 0.0, 1e-12);
}

TEST(LogBlocker, ThirtyDegreeCapDc) {
  const LogBlocker b = zonal_log_blocker(2.0, 1.0, 3.0, 8);
  const double expected = -3.0 * 2.0 * kPi * (1.0 - std::cos(kPi / 6.0)) * 0.5 / std::sqrt(kPi);
  EXPECT_NEAR(b.coeffs[0], expected, 1e-12);
  EXPECT_NEAR(b.coeffs[0], -0.7122, 1e-3);
  EXPECT_FALSE(b.clamped);
}

TEST(LogBlocker, MatchesMillionSampleProjection) {
  const double d = 2.0, r = 1.0, eps = 3.0;
  const double cos_c = std::sqrt(1.0 - (r / d) * (r / d));
  const std::vector<Vec3> dirs = fibonacci_sphere_directions(1000000);
  std::vector<SphericalSample> samples;
  samples.reserve(dirs.size());
  const double w = kFourPi / static_cast<double>(dirs.size());
  for (const Vec3& u : dirs) samples.push_back({u, u.z() >= cos_c ? -eps : 0.0, w});
  const SHVector sampled = project(samples, 8);
  const SHVector analytic = embed(zonal_log_blocker(d, r, eps, 8).coeffs);
  double worst = 0.0;
  for (std::size_t i = 0; i < sampled.size(); ++i) worst = std::max(worst, std::abs(sampled[i] - analytic[i]));
  EXPECT_LT(worst, 5e-3);
}

TEST(LogBlocker, InsideSphereClampsAndFlags) {
  const auto before = sh_diagnostics().clamped_blockers.load();
  const LogBlocker inside = zonal_log_blocker(0.5, 1.0, 3.0, 6);
  EXPECT_TRUE(inside.clamped);
  EXPECT_GT(sh_diagnostics().clamped_blockers.load(), before);
  const double cap = -3.0 * 2.0 * kPi * (1.0 - std::cos(kMaxCapAngle)) * 0.5 / std::sqrt(kPi);
  EXPECT_NEAR(inside.coeffs[0], cap, 1e-12);
  for (int l = 0; l < 6; ++l) {
    EXPECT_EQ(inside.d_distance[l], 0.0);
    EXPECT_EQ(inside.d_radius[l], 0.0);
  }
}

TEST(LogBlocker, DerivativesMatchFiniteDifference) {
  const double h = 1e-5;
  for (const auto& [d, r] : {std::pair{2.0, 1.0}, std::pair{3.0, 0.4}, std::pair{1.3, 1.0}}) {
    const LogBlocker b = zonal_log_blocker(d, r, 3.0, 8);
    const LogBlocker dp = zonal_log_blocker(d + h, r, 3.0, 8);
    const LogBlocker dm = zonal_log_blocker(d - h, r, 3.0, 8);
    const LogBlocker rp = zonal_log_blocker(d, r + h, 3.0, 8);
    const LogBlocker rm = zonal_log_blocker(d, r - h, 3.0, 8);
    for (int l = 0; l < 8; ++l) {
      EXPECT_LT(rel_err((dp.coeffs[l] - dm.coeffs[l]) / (2 * h), b.d_distance[l]), 1e-4);
      EXPECT_LT(rel_err((rp.coeffs[l] - rm.coeffs[l]) / (2 * h), b.d_radius[l]), 1e-4);
    }
  }
}

// ---- exponential --------------------------------------------------------------

TEST(ShExp, ZeroGivesOne) {
  const SHVector e = sh_exp(SHVector(8));
  EXPECT_NEAR(e[0], 2.0 * std::sqrt(kPi), 1e-6);
  for (std::size_t i = 1; i < e.size(); ++i) EXPECT_NEAR(e[i], 0.0, 1e-6);
}

TEST(ShExp, DcOnlyIsExact) {
  SHVector v(8);
  v[0] = -1.7;
  const SHVector e = sh_exp(v);
  EXPECT_NEAR(e[0], 2.0 * std::sqrt(kPi) * std::exp(-1.7 / (2.0 * std::sqrt(kPi))), 1e-10);
}

TEST(ShExp, BlockerVisibilityStaysInRange) {
  std::mt19937_64 rng(18);
  const double eps = 3.0;
  for (int t = 0; t < 10; ++t) {
    const SHVector v = rotated_log_blocker(2.0, 1.0, eps, 8, random_direction(rng));
    const SHVector e = sh_exp(v);
    for (const Vec3& w : fibonacci_sphere_directions(5000)) {
      const double value = reconstruct(e, w);
      EXPECT_GE(value, std::exp(-eps) - 0.15);
      EXPECT_LE(value, 1.0 + 0.15);
    }
  }
}

TEST(ShExp, ApproximatelyHomomorphic) {
  std::mt19937_64 rng(19);
  for (int t = 0; t < 5; ++t) {
    const SHVector a = rotated_log_blocker(2.0, 1.0, 3.0, 8, random_direction(rng));
    const SHVector b = rotated_log_blocker(3.0, 1.0, 3.0, 8, random_direction(rng));
    const SHVector lhs = sh_exp(a + b);
    const SHVector rhs = sh_product(sh_exp(a), sh_exp(b));
    EXPECT_LT((lhs - rhs).norm() / rhs.norm(), 5e-2);
  }
}

TEST(ShExp, VjpMatchesFiniteDifference) {
  std::mt19937_64 rng(20);
  // Inputs chosen away from the squaring-count switch points where exp is only C0.
  const SHVector a = rotated_log_blocker(2.0, 1.0, 3.0, 6, random_direction(rng)) +
                     rotated_log_blocker(2.5, 0.8, 3.0, 6, random_direction(rng));
  const SHVector small = random_vector(6, rng, 0.05);
  for (const SHVector& v : {a, small}) {
    const SHVector g = random_vector(6, rng);
    const SHVector grad = sh_exp_vjp(v, g);
    const double h = 1e-5;
    for (std::size_t i = 0; i < v.size(); ++i) {
      SHVector p = v, m = v;
      p[i] += h;
      m[i] -= h;
      const double fd = (sh_dot(g, sh_exp(p)) - sh_dot(g, sh_exp(m))) / (2 * h);
      EXPECT_LT(rel_err(fd, grad[i]), 1e-4) << "coeff " << i << " fd " << fd << " an " << grad[i];
    }
  }
}

TEST(ShExpTable, StartsAtIdentityAndIsSmooth) {
  const auto table = ExpLinearTable::get(8);
  const auto c0 = table->lookup(0.0);
  EXPECT_EQ(c0.a, 1.0);
  EXPECT_EQ(c0.b, 1.0);
  // The fit of a convex function lifts the intercept.
  EXPECT_GT(table->lookup(1.0).a, 1.0);
  for (std::size_t k = 1; k < table->knots_a().size(); ++k) {
    EXPECT_LT(std::abs(table->knots_a()[k] - table->knots_a()[k - 1]), 1e-2);
    EXPECT_LT(std::abs(table->knots_b()[k] - table->knots_b()[k - 1]), 1e-2);
  }
}

#include "shseed/shading.hpp"
#include "shseed/visibility.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace shseed;

namespace {

constexpr int kBands = 8;

Image make_envmap(int height, const auto& f) {
  Image image(2 * height, height);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < 2 * height; ++x) {
      image.set_rgb(x, y, f(latlong_direction((x + 0.5) / (2.0 * height), (y + 0.5) / height)));
    }
  }
  return image;
}

EnvironmentLight random_light(std::mt19937_64& rng, int n) {
  std::normal_distribution<double> gauss(0.0, 0.3);
  EnvironmentLight light(n);
  for (auto& c : light.channels) {
    for (std::size_t i = 0; i < c.size(); ++i) c[i] = gauss(rng);
    c[0] += 3.0;
  }
  return light;
}

}  // namespace

TEST(Image, BilinearReproducesTexelCenters) {
  Image tex(4, 2);
  for (std::size_t i = 0; i < tex.data.size(); ++i) tex.data[i] = static_cast<double>(i);
  // texel (x=1, y=0) has its center at u = 1.5/4, v = 1 - 0.5/2
  EXPECT_TRUE(sample_bilinear(tex, Vec2(1.5 / 4, 0.75)).isApprox(tex.rgb(1, 0)));
  const Vec3 mid = sample_bilinear(tex, Vec2(2.0 / 4, 0.5));
  const Vec3 expect = 0.25 * (tex.rgb(1, 0) + tex.rgb(2, 0) + tex.rgb(1, 1) + tex.rgb(2, 1));
  EXPECT_TRUE(mid.isApprox(expect));
  // clamp to edge
  EXPECT_TRUE(sample_bilinear(tex, Vec2(-1.0, 2.0)).isApprox(tex.rgb(0, 0)));
}

TEST(Envmap, LatLongRoundTrip) {
  EXPECT_NEAR((latlong_direction(0.3, 0.0) - Vec3(0, 1, 0)).norm(), 0.0, 1e-12);
  for (double s : {0.1, 0.4, 0.77}) {
    for (double t : {0.2, 0.5, 0.9}) {
      const Vec2 st = latlong_coords(latlong_direction(s, t));
      EXPECT_NEAR(st.x(), s, 1e-12);
      EXPECT_NEAR(st.y(), t, 1e-12);
    }
  }
}

TEST(Envmap, ConstantMap) {
  const Image map = make_envmap(256, [](const Vec3&) { return Vec3(1, 1, 1); });
  const EnvironmentLight light = project_envmap(map, kBands);
  for (int c = 0; c < 3; ++c) {
    EXPECT_NEAR(light.channels[c][0], 2.0 * std::sqrt(kPi), 1e-4);
    for (int i = 1; i < sh_count(kBands); ++i) EXPECT_LT(std::abs(light.channels[c][i]), 1e-3) << i;
  }
}

TEST(Envmap, ClampedCosineMatchesZonal) {
  const Image map = make_envmap(256, [](const Vec3& w) { return Vec3::Constant(std::max(w.z(), 0.0)); });
  const EnvironmentLight light = project_envmap(map, kBands);
  const SHVector expect = embed(zonal_clamped_cosine(kBands));
  for (int i = 0; i < sh_count(kBands); ++i) EXPECT_NEAR(light.channels[1][i], expect[i], 1e-3) << i;
}

TEST(Envmap, Linear) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 4.0);
  Image map(64, 32);
  for (double& v : map.data) v = u(rng);
  Image doubled = map;
  for (double& v : doubled.data) v *= 2.0;
  const auto a = project_envmap(map, kBands).flat();
  const auto b = project_envmap(doubled, kBands).flat();
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(2.0 * a[i], b[i]);
}

TEST(Envmap, RejectsWrongAspect) { EXPECT_THROW(project_envmap(Image(30, 20), kBands), ConfigError); }

TEST(Envmap, RenderedMapProjectsBack) {
  std::mt19937_64 rng(2);
  const EnvironmentLight light = random_light(rng, 4);
  const EnvironmentLight back = project_envmap(render_envmap(light, 128), 4);
  for (int c = 0; c < 3; ++c) {
    for (int i = 0; i < 16; ++i) EXPECT_NEAR(back.channels[c][i], light.channels[c][i], 2e-3);
  }
  const Vec3 w = Vec3(0.3, -0.2, 0.9).normalized();
  const Image map = render_envmap(light, 128);
  EXPECT_TRUE(sample_envmap(map, w).isApprox(light.evaluate(w), 1e-2));
}

TEST(CosineLobe, PlusZIsZonal) {
  const SHVector h = cosine_lobe_sh(Vec3::UnitZ(), kBands);
  const SHVector z = embed(zonal_clamped_cosine(kBands));
  for (std::size_t i = 0; i < h.size(); ++i) EXPECT_NEAR(h[i], z[i], 1e-15);
}

TEST(CosineLobe, IntegralIsPi) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g;
  const SHVector one = SHVector::constant(kBands, 1.0);
  for (int t = 0; t < 10; ++t) {
    const Vec3 n = Vec3(g(rng), g(rng), g(rng)).normalized();
    EXPECT_NEAR(sh_dot(cosine_lobe_sh(n, kBands), one), kPi, 1e-12);
  }
  // quadrature confirmation of the analytic value
  const QuadratureGrid grid = product_quadrature(2000, 4);
  double integral = 0.0;
  for (std::size_t s = 0; s < grid.size(); ++s) integral += grid.weights[s] * std::max(grid.directions[s].z(), 0.0);
  EXPECT_NEAR(integral, kPi, 1e-5);
}

TEST(CosineLobe, RingingBelowHorizon) {
  EXPECT_LT(std::abs(reconstruct(cosine_lobe_sh(Vec3::UnitZ(), kBands), -Vec3::UnitZ())), 0.06);
}

TEST(Radiance, Examples) {
  const EnvironmentLight ambient = EnvironmentLight::constant(kBands, Vec3(1, 1, 1));
  EXPECT_NEAR(ambient.channels[0][0], 2.0 * std::sqrt(kPi), 1e-12);
  const SHVector one = SHVector::constant(kBands, 1.0);
  const Vec3 n = Vec3(0.2, 0.9, -0.1).normalized();
  EXPECT_EQ(radiance(n, Vec3::Zero(), ambient, one), Vec3::Zero());
  const Vec3 albedo(0.2, 0.5, 0.9);
  EXPECT_LT((radiance(n, albedo, ambient, one) - albedo * kPi).cwiseAbs().maxCoeff(), 1e-3);
}

TEST(Radiance, LargeBlockerOverLobe) {
  const Vec3 n = Vec3::UnitY();
  const EnvironmentLight ambient = EnvironmentLight::constant(kBands, Vec3(1, 1, 1));
  const SphereSet blocker = SphereSet::from_spheres({2.0 * n}, {1.98});
  const SHVector v = visibility_sh(Vec3::Zero(), blocker, kBands);
  const double shadowed = radiance(n, Vec3::Ones(), ambient, v).x();
  const double open = radiance(n, Vec3::Ones(), ambient, SHVector::constant(kBands, 1.0)).x();
  EXPECT_LT(shadowed, 0.15 * open);
  // cosine-weighted ray sampling against the exact sphere
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int visible = 0;
  const int samples = 200000;
  for (int s = 0; s < samples; ++s) {
    const double r = std::sqrt(u(rng)), phi = 2.0 * kPi * u(rng);
    const Vec3 w(r * std::cos(phi), std::sqrt(std::max(0.0, 1.0 - r * r)), r * std::sin(phi));
    const double tc = w.dot(2.0 * n);
    if (!(tc > 0.0 && 4.0 - tc * tc < 1.98 * 1.98)) ++visible;
  }
  EXPECT_LT(static_cast<double>(visible) / samples, 0.15);
}

TEST(Radiance, LinearInLightAndAlbedo) {
  std::mt19937_64 rng(5);
  const EnvironmentLight light = random_light(rng, kBands);
  const SHVector v = visibility_sh(Vec3::Zero(), SphereSet::from_spheres({Vec3(1, 2, 0.5)}, {0.7}), kBands);
  const Vec3 n = Vec3(0.1, 0.8, 0.3).normalized();
  const Vec3 albedo(0.3, 0.6, 0.8);
  const Vec3 base = radiance(n, albedo, light, v);
  ASSERT_GT(base.minCoeff(), 0.0);
  for (double alpha : {0.5, 2.0, 4.0}) {
    EnvironmentLight scaled = light;
    for (auto& c : scaled.channels) c *= alpha;
    EXPECT_EQ(radiance(n, albedo, scaled, v), alpha * base);
    EXPECT_EQ(radiance(n, alpha * albedo, light, v), alpha * base);
  }
  EnvironmentLight scaled = light;
  for (auto& c : scaled.channels) c *= 0.37;
  EXPECT_LT((radiance(n, albedo, scaled, v) - 0.37 * base).norm(), 1e-14 * base.norm());
}

TEST(Radiance, UnshadowedMatchesDirectIllumination) {
  std::mt19937_64 rng(6);
  const EnvironmentLight light = random_light(rng, kBands);
  const ShadingKernel kernel(kBands);
  ShadingKernel::Workspace ws;
  std::vector<double> w_di(sh_count(kBands)), w_one(sh_count(kBands));
  const SHVector one = SHVector::constant(kBands, 1.0);
  for (int t = 0; t < 10; ++t) {
    std::normal_distribution<double> g;
    const Vec3 n = Vec3(g(rng), g(rng), g(rng)).normalized();
    kernel.transfer(n, {}, w_di, ws);
    kernel.transfer(n, one.coeffs(), w_one, ws);
    for (int c = 0; c < 3; ++c) {
      EXPECT_NEAR(sh_dot(light.channels[c], SHVector(kBands, w_one)), sh_dot(light.channels[c], SHVector(kBands, w_di)),
                  1e-6);
    }
  }
}

TEST(Radiance, AddingBlockersNeverBrightens) {
  const EnvironmentLight ambient = EnvironmentLight::constant(kBands, Vec3(1, 1, 1));
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> pos(-2.0, 2.0), rad(0.2, 0.6);
  const Vec3 n = Vec3::UnitY();
  SphereSet set;
  double previous = radiance(n, Vec3::Ones(), ambient, SHVector::constant(kBands, 1.0)).x();
  for (int k = 0; k < 10; ++k) {
    set.centers.emplace_back(pos(rng), pos(rng) + 2.5, pos(rng));
    set.radii.push_back(rad(rng));
    set = SphereSet::from_spheres(set.centers, set.radii);
    const double b = radiance(n, Vec3::Ones(), ambient, visibility_sh(Vec3::Zero(), set, kBands)).x();
    EXPECT_LE(b, previous + 1e-3) << k;
    previous = b;
  }
}

TEST(Radiance, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(8);
  const EnvironmentLight light = random_light(rng, kBands);
  const SHVector vis = visibility_sh(Vec3::Zero(), SphereSet::from_spheres({Vec3(0.5, 2, 0.2)}, {0.8}), kBands);
  const ShadingKernel kernel(kBands);
  ShadingKernel::Workspace ws;
  const Vec3 albedo(0.4, 0.7, 0.2);
  const Vec3 grad_b(0.3, -1.1, 0.7);
  const int count = sh_count(kBands);

  const auto loss = [&](const Vec3& n, const Vec3& a, const EnvironmentLight& l, const std::vector<double>& v) {
    std::vector<double> w(count);
    kernel.transfer(n.normalized(), v, w, ws);
    return grad_b.dot(a.cwiseProduct(ShadingKernel::irradiance(l, w)));
  };
  const Vec3 n = Vec3(0.3, 0.9, -0.2).normalized();
  const std::vector<double> v(vis.values());

  std::vector<double> w(count), gw(count, 0.0), gl(3 * count, 0.0), gv(count, 0.0);
  kernel.transfer(n, v, w, ws);
  const Vec3 e = ShadingKernel::irradiance(light, w);
  ASSERT_GT(e.minCoeff(), 0.0);
  const Vec3 ga = grad_b.cwiseProduct(e);
  ShadingKernel::irradiance_backward(light, w, grad_b.cwiseProduct(albedo), gw, gl);
  const Vec3 gn = kernel.transfer_backward(n, v, gw, gv, ws);

  const double h = 1e-5;
  const auto rel = [](double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8}); };
  for (int c = 0; c < 3; ++c) {
    Vec3 p = albedo, m = albedo;
    p[c] += h;
    m[c] -= h;
    EXPECT_LT(rel(ga[c], (loss(n, p, light, v) - loss(n, m, light, v)) / (2 * h)), 1e-4);
  }
  const auto flat = light.flat();
  for (int i = 0; i < 3 * count; i += 7) {
    auto p = flat, m = flat;
    p[i] += h;
    m[i] -= h;
    const double fd = (loss(n, albedo, EnvironmentLight::from_flat(kBands, p), v) -
                       loss(n, albedo, EnvironmentLight::from_flat(kBands, m), v)) / (2 * h);
    EXPECT_LT(std::abs(gl[i] - fd), 1e-4 * std::max(std::abs(fd), 1e-3)) << i;
  }
  for (int i = 0; i < count; i += 3) {
    auto p = v, m = v;
    p[i] += h;
    m[i] -= h;
    const double fd = (loss(n, albedo, light, p) - loss(n, albedo, light, m)) / (2 * h);
    EXPECT_LT(std::abs(gv[i] - fd), 1e-4 * std::max(std::abs(fd), 1e-3)) << i;
  }
  // the normal is renormalized inside the loss, so FD sees only the tangent part
  for (int c = 0; c < 3; ++c) {
    Vec3 p = n, m = n;
    p[c] += h;
    m[c] -= h;
    const double fd = (loss(p, albedo, light, v) - loss(m, albedo, light, v)) / (2 * h);
    const double analytic = gn[c] - n[c] * gn.dot(n);
    EXPECT_LT(std::abs(analytic - fd), 1e-4 * std::max(gn.norm(), 1e-3)) << c;
  }
}

#include "shseed/bvh.hpp"
#include "shseed/geometry.hpp"
#include "shseed/sphere_fit.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace shseed;

namespace {

Vec3 random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  return Vec3(n(rng), n(rng), n(rng)).normalized();
}

Vec4 random_quat(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  return Vec4(n(rng), n(rng), n(rng), n(rng));
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8}); }

SphereSet random_spheres(int count, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<Vec3> c;
  std::vector<double> r;
  for (int i = 0; i < count; ++i) {
    c.emplace_back(u(rng), u(rng), u(rng));
    r.push_back(0.2 + 0.1 * std::abs(u(rng)));
  }
  return SphereSet::from_spheres(c, r);
}

}  // namespace

// ---- meshes ---------------------------------------------------------------------

TEST(Primitives, ValidWithOutwardNormals) {
  for (const TriangleMesh& m : {make_uv_sphere(1.0, 12, 24), make_box(Vec3(2, 1, 1), 3)}) {
    EXPECT_NO_THROW(m.validate());
    const Vec3 c = bounds(m.vertices).center();
    for (const Triangle& t : m.triangles) {
      const Vec3 fn = (m.vertices[t[1]] - m.vertices[t[0]]).cross(m.vertices[t[2]] - m.vertices[t[0]]);
      const Vec3 centroid = (m.vertices[t[0]] + m.vertices[t[1]] + m.vertices[t[2]]) / 3.0;
      EXPECT_GT(fn.dot(centroid - c), 0.0);
    }
  }
  EXPECT_NO_THROW(make_torus(1.0, 0.3, 24, 12).validate());
  const TriangleMesh plane = make_plane(2.0, 4);
  for (const Vec3& n : plane.normals) EXPECT_NEAR(n.y(), 1.0, 1e-12);
}

TEST(Primitives, TorusFacesPointAwayFromTube) {
  const TriangleMesh m = make_torus(1.0, 0.3, 24, 12);
  for (const Triangle& t : m.triangles) {
    const Vec3 fn = (m.vertices[t[1]] - m.vertices[t[0]]).cross(m.vertices[t[2]] - m.vertices[t[0]]);
    const Vec3 p = (m.vertices[t[0]] + m.vertices[t[1]] + m.vertices[t[2]]) / 3.0;
    const Vec3 ring = Vec3(p.x(), 0, p.z()).normalized();
    EXPECT_GT(fn.dot(p - ring), 0.0);
  }
}

TEST(Primitives, SphereSeamsAreWelded) {
  const TriangleMesh m = make_uv_sphere(1.0, 16, 32);
  for (std::size_t v = 0; v < m.vertex_count(); ++v) {
    EXPECT_NEAR(m.normals[v].dot(m.vertices[v]), 1.0, 2e-2);
  }
}

TEST(Mesh, ValidateRejectsBadIndexAndDegenerateFace) {
  TriangleMesh m = make_plane(1.0, 1);
  m.triangles.push_back({0, 1, 99});
  EXPECT_THROW(m.validate(), ConfigError);
  m = make_plane(1.0, 1);
  m.triangles.push_back({0, 0, 1});
  EXPECT_THROW(m.validate(), ConfigError);
}

TEST(Normals, VjpMatchesFiniteDifference) {
  std::mt19937_64 rng(1);
  TriangleMesh m = make_uv_sphere(1.0, 6, 8);
  std::uniform_real_distribution<double> jitter(-0.05, 0.05);
  for (Vec3& v : m.vertices) v += Vec3(jitter(rng), jitter(rng), jitter(rng));
  // Re-weld after jitter would split seams; keep the original weld via the builder.
  const NormalBuilder nb(make_uv_sphere(1.0, 6, 8));
  std::vector<Vec3> g(m.vertex_count());
  for (Vec3& x : g) x = random_unit(rng);
  std::vector<Vec3> grad(m.vertex_count(), Vec3::Zero());
  nb.backward(m.vertices, g, grad);
  auto loss = [&](const std::vector<Vec3>& p) {
    std::vector<Vec3> n(p.size());
    nb.forward(p, n);
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) s += g[i].dot(n[i]);
    return s;
  };
  const double h = 1e-6;
  for (int v = 0; v < 20; ++v) {
    for (int a = 0; a < 3; ++a) {
      auto p = m.vertices, q = m.vertices;
      p[v][a] += h;
      q[v][a] -= h;
      const double fd = (loss(p) - loss(q)) / (2 * h);
      EXPECT_LT(rel_err(fd, grad[v][a]), 1e-4) << v << " " << a;
    }
  }
}

// ---- rotations and rigid poses -----------------------------------------------------

TEST(Quaternion, MatrixMatchesEigen) {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 20; ++t) {
    const Vec4 q = random_quat(rng);
    const Mat3 ref = quat_from_coeffs(q).normalized().toRotationMatrix();
    EXPECT_LT((quat_to_matrix(q) - ref).norm(), 1e-12);
  }
}

TEST(Quaternion, VjpMatchesFiniteDifference) {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 10; ++t) {
    const Vec4 q = random_quat(rng);
    Mat3 g = Mat3::Random();
    const Vec4 grad = quat_to_matrix_vjp(q, g);
    for (int c = 0; c < 4; ++c) {
      Vec4 p = q, m = q;
      p[c] += 1e-6;
      m[c] -= 1e-6;
      const double fd = ((quat_to_matrix(p) - quat_to_matrix(m)).cwiseProduct(g)).sum() / 2e-6;
      EXPECT_LT(rel_err(fd, grad[c]), 1e-5);
    }
  }
}

TEST(RigidPose, IdentityIsUnchanged) {
  const TriangleMesh m = make_box(Vec3(1, 2, 3), 2);
  const SphereSet s = SphereSet::from_spheres({Vec3(0.1, 0.2, 0.3)}, {0.4});
  const auto [m2, s2] = apply_rigid(m, s, RigidPose{});
  for (std::size_t v = 0; v < m.vertex_count(); ++v) EXPECT_EQ(m.vertices[v], m2.vertices[v]);
  EXPECT_EQ(s.centers[0], s2.centers[0]);
}

TEST(RigidPose, PureTranslationShiftsCenters) {
  const SphereSet s = SphereSet::from_spheres({Vec3(0.1, 0.2, 0.3), Vec3(-1, 0, 2)}, {0.4, 0.5});
  RigidPose pose;
  pose.translation = Vec3(0.5, -0.25, 2.0);
  const auto [m2, s2] = apply_rigid(make_plane(1, 1), s, pose);
  for (std::size_t i = 0; i < s.size(); ++i) {
    EXPECT_EQ(s2.centers[i], s.centers[i] + pose.translation);
    EXPECT_EQ(s2.radii[i], s.radii[i]);
  }
}

TEST(RigidPose, InverseRoundTrip) {
  std::mt19937_64 rng(4);
  const TriangleMesh m = make_torus(1.0, 0.3, 12, 8);
  const SphereSet s = random_spheres(5, rng);
  RigidPose pose;
  pose.rotation = quat_from_coeffs(random_quat(rng)).normalized();
  pose.translation = Vec3(0.3, -1.2, 0.7);
  const Vec3 pivot(0.2, 0.1, -0.4);
  const auto [m2, s2] = apply_rigid(m, s, pose, pivot);
  const auto [m3, s3] = apply_rigid(m2, s2, pose.inverse(), pivot);
  for (std::size_t v = 0; v < m.vertex_count(); ++v) {
    EXPECT_LT((m3.vertices[v] - m.vertices[v]).norm(), 1e-9);
    EXPECT_LT((m3.normals[v] - m.normals[v]).norm(), 1e-9);
  }
  for (std::size_t i = 0; i < s.size(); ++i) EXPECT_LT((s3.centers[i] - s.centers[i]).norm(), 1e-9);
}

TEST(RigidPose, FlatVjpMatchesFiniteDifference) {
  std::mt19937_64 rng(5);
  std::vector<Vec3> pts(10), g(10);
  for (auto& p : pts) p = random_unit(rng) * 2.0;
  for (auto& x : g) x = random_unit(rng);
  const Vec4 q = random_quat(rng);
  std::vector<double> params = {q[0], q[1], q[2], q[3], 0.1, 0.2, 0.3};
  const Vec3 pivot(0.5, 0.0, -0.5);
  std::vector<double> gp(7, 0.0);
  std::vector<Vec3> gin(10, Vec3::Zero());
  rigid_points_vjp(params, pivot, pts, g, gp, gin);
  auto loss = [&](const std::vector<double>& p, const std::vector<Vec3>& in) {
    std::vector<Vec3> out(in.size());
    rigid_points(p, pivot, in, out);
    double s = 0.0;
    for (std::size_t i = 0; i < in.size(); ++i) s += g[i].dot(out[i]);
    return s;
  };
  for (int c = 0; c < 7; ++c) {
    auto p = params, m = params;
    p[c] += 1e-6;
    m[c] -= 1e-6;
    EXPECT_LT(rel_err((loss(p, pts) - loss(m, pts)) / 2e-6, gp[c]), 1e-5);
  }
  for (int a = 0; a < 3; ++a) {
    auto p = pts, m = pts;
    p[3][a] += 1e-6;
    m[3][a] -= 1e-6;
    EXPECT_LT(rel_err((loss(params, p) - loss(params, m)) / 2e-6, gin[3][a]), 1e-5);
  }
}

// ---- embedded graph -----------------------------------------------------------------

TEST(Graph, SingleNodeGetsFullWeight) {
  const TriangleMesh m = make_uv_sphere(1.0, 8, 12);
  const SphereSet s = SphereSet::from_spheres({Vec3(0.1, 0, 0)}, {0.5});
  const EmbeddedGraph g = build_graph(m, s, 1);
  for (std::size_t v = 0; v < m.vertex_count(); ++v) {
    EXPECT_EQ(g.nodes[v], 0);
    EXPECT_EQ(g.weights[v], 1.0);
  }
}

TEST(Graph, CoincidentVertexDominates) {
  std::mt19937_64 rng(6);
  TriangleMesh m = make_uv_sphere(1.0, 8, 12);
  SphereSet s = random_spheres(8, rng);
  s.centers[3] = m.vertices[20];
  const EmbeddedGraph g = build_graph(m, s, 4);
  double w3 = -1.0, others = 0.0;
  for (int i = 0; i < 4; ++i) {
    if (g.nodes[20 * 4 + i] == 3) w3 = g.weights[20 * 4 + i];
    else others = std::max(others, g.weights[20 * 4 + i]);
  }
  EXPECT_GE(w3, others);
}

TEST(Graph, WeightsSumToOneOnLargeMesh) {
  std::mt19937_64 rng(7);
  const TriangleMesh m = make_uv_sphere(1.0, 80, 125);
  ASSERT_GE(m.vertex_count(), 10000u);
  const SphereSet s = random_spheres(30, rng);
  const EmbeddedGraph g = build_graph(m, s, 4);
  for (std::size_t v = 0; v < m.vertex_count(); ++v) {
    double sum = 0.0;
    for (int i = 0; i < 4; ++i) {
      EXPECT_GE(g.weights[v * 4 + i], 0.0);
      sum += g.weights[v * 4 + i];
    }
    EXPECT_NEAR(sum, 1.0, 1e-6);
  }
}

TEST(Graph, DuplicateCentersTieByIndex) {
  const TriangleMesh m = make_plane(1.0, 2);
  const SphereSet s = SphereSet::from_spheres({Vec3(0, 1, 0), Vec3(0, 1, 0), Vec3(5, 5, 5)}, {0.1, 0.1, 0.1});
  const EmbeddedGraph g = build_graph(m, s, 1);
  for (std::size_t v = 0; v < m.vertex_count(); ++v) EXPECT_EQ(g.nodes[v], 0);
}

TEST(Graph, KLargerThanSpheresThrows) {
  const SphereSet s = SphereSet::from_spheres({Vec3(0, 1, 0)}, {0.1});
  EXPECT_THROW(build_graph(make_plane(1.0, 1), s, 2), ConfigError);
}

TEST(Deform, IdentityIsBitwiseIdentity) {
  std::mt19937_64 rng(8);
  const TriangleMesh m = make_torus(1.0, 0.3, 16, 8);
  const SphereSet s = random_spheres(6, rng);
  const TriangleMesh d = deform(m, build_graph(m, s, 4), s);
  for (std::size_t v = 0; v < m.vertex_count(); ++v) EXPECT_EQ(d.vertices[v], m.vertices[v]);
}

TEST(Deform, SharedTranslationShiftsEverything) {
  std::mt19937_64 rng(9);
  const TriangleMesh m = make_torus(1.0, 0.3, 16, 8);
  SphereSet s = random_spheres(6, rng);
  const EmbeddedGraph g = build_graph(m, s, 4);
  const Vec3 t(0.25, -0.5, 0.125);
  for (auto& x : s.translations) x = t;
  const TriangleMesh d = deform(m, g, s);
  for (std::size_t v = 0; v < m.vertex_count(); ++v) EXPECT_LT((d.vertices[v] - m.vertices[v] - t).norm(), 1e-12);
}

TEST(Deform, SingleNodeRotationIsRigid) {
  const TriangleMesh m = make_box(Vec3(1, 1, 1), 2);
  SphereSet s = SphereSet::from_spheres({Vec3(0.2, 0.1, 0.0)}, {0.3});
  const EmbeddedGraph g = build_graph(m, s, 1);
  s.rotations[0] = Quat(Eigen::AngleAxisd(kPi / 2, Vec3::UnitZ()));
  const TriangleMesh d = deform(m, g, s);
  const Mat3 r = Eigen::AngleAxisd(kPi / 2, Vec3::UnitZ()).toRotationMatrix();
  for (std::size_t v = 0; v < m.vertex_count(); ++v) {
    const Vec3 expected = r * (m.vertices[v] - s.centers[0]) + s.centers[0];
    EXPECT_LT((d.vertices[v] - expected).norm(), 1e-6);
  }
}

TEST(Deform, TranslationJacobianEqualsWeights) {
  std::mt19937_64 rng(10);
  const TriangleMesh m = make_uv_sphere(1.0, 6, 8);
  SphereSet s = random_spheres(5, rng);
  for (auto& q : s.rotations) q = quat_from_coeffs(random_quat(rng)).normalized();
  const EmbeddedGraph g = build_graph(m, s, 3);
  const std::vector<double> params = node_params(s);
  // d v'_v / d t_j = w_vj I: probe with a one-hot adjoint per vertex and axis.
  for (std::size_t v = 0; v < m.vertex_count(); v += 7) {
    std::vector<Vec3> go(m.vertex_count(), Vec3::Zero());
    go[v] = Vec3(1, 0, 0);
    std::vector<double> gp(params.size(), 0.0);
    deform_points_vjp(g, m.vertices, params, go, gp);
    for (std::size_t j = 0; j < s.size(); ++j) {
      double w = 0.0;
      for (int i = 0; i < 3; ++i) {
        if (g.nodes[v * 3 + i] == static_cast<int>(j)) w = g.weights[v * 3 + i];
      }
      EXPECT_EQ(gp[7 * j + 4], w);
      EXPECT_EQ(gp[7 * j + 5], 0.0);
    }
  }
}

TEST(Deform, VjpMatchesFiniteDifference) {
  std::mt19937_64 rng(11);
  const TriangleMesh m = make_uv_sphere(1.0, 6, 8);
  SphereSet s = random_spheres(5, rng);
  for (auto& q : s.rotations) q = quat_from_coeffs(random_quat(rng)).normalized();
  const EmbeddedGraph g = build_graph(m, s, 3);
  const std::vector<double> params = node_params(s);
  std::vector<Vec3> go(m.vertex_count());
  for (auto& x : go) x = random_unit(rng);
  std::vector<double> gp(params.size(), 0.0);
  deform_points_vjp(g, m.vertices, params, go, gp);
  auto loss = [&](const std::vector<double>& p) {
    std::vector<Vec3> out(m.vertex_count());
    deform_points(g, m.vertices, p, out);
    double sum = 0.0;
    for (std::size_t v = 0; v < out.size(); ++v) sum += go[v].dot(out[v]);
    return sum;
  };
  for (std::size_t c = 0; c < params.size(); ++c) {
    auto p = params, q = params;
    p[c] += 1e-6;
    q[c] -= 1e-6;
    EXPECT_LT(rel_err((loss(p) - loss(q)) / 2e-6, gp[c]), 1e-5) << c;
  }
}

TEST(Deform, RigidEquivariance) {
  std::mt19937_64 rng(12);
  const TriangleMesh m = make_torus(1.0, 0.3, 12, 8);
  SphereSet s = random_spheres(5, rng);
  const EmbeddedGraph g = build_graph(m, s, 3);
  for (auto& q : s.rotations) q = quat_from_coeffs(random_quat(rng)).normalized();
  for (auto& t : s.translations) t = random_unit(rng) * 0.1;
  RigidPose pose;
  pose.rotation = quat_from_coeffs(random_quat(rng)).normalized();
  pose.translation = Vec3(1, 2, 3);
  // Transform the deformed output vs deform the transformed rest pose and parameters.
  const auto [lhs, unused] = apply_rigid(deform(m, g, s), s, pose);
  const auto [m2, s2] = apply_rigid(m, s, pose);
  const TriangleMesh rhs = deform(m2, build_graph(m2, s2, 3), s2);
  for (std::size_t v = 0; v < m.vertex_count(); ++v) EXPECT_LT((lhs.vertices[v] - rhs.vertices[v]).norm(), 1e-9);
}

// ---- BVH ----------------------------------------------------------------------------

TEST(Bvh, MatchesBruteForce) {
  std::mt19937_64 rng(13);
  const TriangleMesh m = make_torus(1.0, 0.3, 24, 12);
  const Bvh bvh(m);
  for (int t = 0; t < 200; ++t) {
    const Vec3 o = random_unit(rng) * 2.5;
    const Ray ray{o, random_unit(rng)};
    std::optional<RayHit> brute;
    for (std::size_t i = 0; i < m.triangle_count(); ++i) {
      const Triangle& tri = m.triangles[i];
      if (auto h = intersect_triangle(ray, m.vertices[tri[0]], m.vertices[tri[1]], m.vertices[tri[2]], 0.0, 1e30)) {
        if (!brute || h->t < brute->t) brute = h;
      }
    }
    const auto hit = bvh.intersect(ray, 0.0, 1e30);
    ASSERT_EQ(hit.has_value(), brute.has_value());
    if (hit) EXPECT_NEAR(hit->t, brute->t, 1e-12);
    EXPECT_EQ(bvh.occluded(ray, 0.0, 1e30), brute.has_value());

    double best = 1e30;
    for (const Triangle& tri : m.triangles) {
      best = std::min(best, (closest_point_on_triangle(o, m.vertices[tri[0]], m.vertices[tri[1]], m.vertices[tri[2]]) - o).norm());
    }
    EXPECT_NEAR(bvh.closest_point(o).distance, best, 1e-12);
  }
}

TEST(Bvh, InsideTest) {
  const Bvh bvh(make_uv_sphere(1.0, 16, 32));
  EXPECT_TRUE(bvh.inside(Vec3(0.1, 0.2, -0.1)));
  EXPECT_FALSE(bvh.inside(Vec3(1.5, 0.0, 0.0)));
}

// ---- sphere fitting -----------------------------------------------------------------

TEST(SphereFit, UnitSphereSingleSphere) {
  const TriangleMesh m = make_uv_sphere(1.0, 24, 48);
  const SphereSet s = fit_spheres(m, 1, 100, 1);
  ASSERT_EQ(s.size(), 1u);
  EXPECT_LT(s.centers[0].norm(), 0.05);
  EXPECT_NEAR(s.radii[0], 1.0, 0.05);
}

TEST(SphereFit, LongBoxSplitsAlongLongAxis) {
  const TriangleMesh m = make_box(Vec3(2, 1, 1), 8);
  const SphereSet s = fit_spheres(m, 2, 150, 3);
  ASSERT_EQ(s.size(), 2u);
  EXPECT_GT(std::abs(s.centers[0].x()), 0.2);
  EXPECT_GT(std::abs(s.centers[1].x()), 0.2);
  EXPECT_LT(s.centers[0].x() * s.centers[1].x(), 0.0);
}

TEST(SphereFit, InteriorSpheresWithoutCoverageDoNotMove) {
  const TriangleMesh m = make_box(Vec3(2, 1, 1), 4);
  SphereFitOptions opt;
  opt.lambda_cov = 0.0;
  const SphereFitter fitter(m, 5, opt);
  const SphereSet init = SphereSet::from_spheres({Vec3(0.5, 0, 0), Vec3(-0.5, 0, 0)}, {0.3, 0.3});
  EXPECT_EQ(fitter.objective(init), 0.0);
  const SphereSet out = fitter.optimize(init, 20);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(out.centers[i], init.centers[i]);
    EXPECT_EQ(out.radii[i], init.radii[i]);
  }
}

TEST(SphereFit, ObjectiveNeverIncreases) {
  const TriangleMesh m = make_torus(1.0, 0.35, 32, 16);
  const SphereFitter fitter(m, 7);
  SphereFitReport report;
  fitter.optimize(fitter.initialize(12), 60, &report);
  ASSERT_GT(report.objective.size(), 1u);
  for (std::size_t i = 1; i < report.objective.size(); ++i) EXPECT_LE(report.objective[i], report.objective[i - 1]);
  EXPECT_LT(report.objective.back(), report.objective.front());
}

TEST(SphereFit, GradientMatchesFiniteDifference) {
  const TriangleMesh m = make_box(Vec3(2, 1, 1), 4);
  const SphereFitter fitter(m, 9);
  const SphereSet s = SphereSet::from_spheres({Vec3(0.6, 0.1, 0.05), Vec3(-0.4, -0.1, 0.1)}, {0.55, 0.45});
  std::vector<Vec3> gc;
  std::vector<double> gr;
  fitter.objective(s, gc, gr);
  const double h = 1e-6;
  for (int i = 0; i < 2; ++i) {
    for (int a = 0; a < 3; ++a) {
      SphereSet p = s, q = s;
      p.centers[i][a] += h;
      q.centers[i][a] -= h;
      EXPECT_LT(rel_err((fitter.objective(p) - fitter.objective(q)) / (2 * h), gc[i][a]), 1e-3);
    }
    SphereSet p = s, q = s;
    p.radii[i] += h;
    q.radii[i] -= h;
    EXPECT_LT(rel_err((fitter.objective(p) - fitter.objective(q)) / (2 * h), gr[i]), 1e-3);
  }
}

TEST(SphereFit, TooManySpheresThrows) {
  const TriangleMesh m = make_box(Vec3(1, 1, 1), 1);
  EXPECT_THROW(fit_spheres(m, static_cast<int>(m.vertex_count()) + 1, 1, 0), ConfigError);
}

TEST(SphereFit, DeterministicForSeed) {
  const TriangleMesh m = make_torus(1.0, 0.35, 24, 12);
  const SphereSet a = fit_spheres(m, 6, 20, 42);
  const SphereSet b = fit_spheres(m, 6, 20, 42);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a.centers[i], b.centers[i]);
    EXPECT_EQ(a.radii[i], b.radii[i]);
  }
}

#include "shseed/optimize.hpp"
#include "shseed/scenes.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

using namespace shseed;

namespace {

ShadowSceneOptions small_options() {
  ShadowSceneOptions o;
  o.width = 32;
  o.height = 32;
  o.resolution = 8;
  o.plane_segments = 6;
  return o;
}

Scene small_scene(bool textured = false) {
  ShadowSceneOptions o = small_options();
  o.textured_plane = textured;
  o.texture_size = 16;
  return make_shadow_scene(o);
}

TaskConfig quick(TaskKind kind, int iterations) {
  TaskConfig c = TaskConfig::defaults(kind);
  c.iterations = iterations;
  // The texture default is sized for 256^2 texels; 16^2 texels each gather 256x the gradient.
  if (kind == TaskKind::Texture) c.step /= 256.0;
  c.start_from_scene = true;
  return c;
}

double max_abs_difference(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// Ground truth with the task's block nudged away from it.
Scene perturbed(const Scene& truth, TaskKind kind) {
  Scene s = truth;
  switch (kind) {
    case TaskKind::Texture: {
      Image& tex = s.objects[0].texture;
      for (std::size_t i = 0; i < tex.data.size(); ++i) tex.data[i] = std::clamp(tex.data[i] + (i % 2 ? 0.15 : -0.15), 0.0, 1.0);
      break;
    }
    case TaskKind::Lighting:
      for (auto& ch : s.light.channels) ch[0] *= 0.8;
      s.light.channels[0][2] += 0.2;
      break;
    case TaskKind::Pose:
      s.objects[1].pose.rotation = Quat(Eigen::AngleAxisd(0.04, Vec3(0.3, 1.0, 0.2).normalized()));
      s.objects[1].pose.translation = Vec3(0.04, 0.0, -0.03);
      break;
    case TaskKind::Geometry:
    case TaskKind::Shadow: {
      ParamBlock b = extract_block(s, ParamKind::GraphDeformation, 1);
      for (std::size_t i = 4; i < b.values.size(); i += 7) b.values[i] += 0.05;
      apply_block(s, b);
      break;
    }
  }
  return s;
}

}  // namespace

TEST(L2Loss, IdenticalImagesGiveZero) {
  const Image a(4, 3, 3, 0.4);
  EXPECT_EQ(l2_loss(a, a), 0.0);
}

TEST(L2Loss, UniformOffsetGivesThreeHundredths) {
  const Image ref(5, 4, 3, 0.2);
  Image r = ref;
  for (double& v : r.data) v += 0.1;
  EXPECT_NEAR(l2_loss(r, ref), 0.03, 1e-15);
}

TEST(L2Loss, HalfMaskMatchesCroppedHalf) {
  Image r(6, 4), ref(6, 4), mask(6, 4, 1);
  for (int y = 0; y < 4; ++y) {
    for (int x = 0; x < 6; ++x) {
      for (int c = 0; c < 3; ++c) {
        r.at(x, y, c) = 0.1 * x + 0.05 * y + 0.01 * c;
        ref.at(x, y, c) = 0.3 * std::sin(x + 2.0 * y + c);
      }
      mask.at(x, y, 0) = x < 3 ? 1.0 : 0.0;
    }
  }
  Image rc(3, 4), refc(3, 4);
  for (int y = 0; y < 4; ++y) {
    for (int x = 0; x < 3; ++x) {
      rc.set_rgb(x, y, r.rgb(x, y));
      refc.set_rgb(x, y, ref.rgb(x, y));
    }
  }
  EXPECT_NEAR(l2_loss(r, ref, mask), l2_loss(rc, refc), 1e-14);
}

TEST(L2Loss, DimensionMismatchThrows) {
  EXPECT_THROW(l2_loss(Image(4, 4), Image(4, 5)), ConfigError);
  EXPECT_THROW(l2_loss(Image(4, 4), Image(4, 4), Image(3, 4, 1)), ConfigError);
}

TEST(L2Loss, GradientMatchesFiniteDifference) {
  Image r(3, 2), ref(3, 2), mask(3, 2, 1);
  for (std::size_t i = 0; i < r.data.size(); ++i) {
    r.data[i] = 0.1 * static_cast<double>(i);
    ref.data[i] = std::cos(static_cast<double>(i));
  }
  for (std::size_t p = 0; p < mask.data.size(); ++p) mask.data[p] = p % 3 ? 1.0 : 0.0;
  const Image g = l2_loss_gradient(r, ref, mask);
  const double h = 1e-6;
  for (std::size_t i = 0; i < r.data.size(); ++i) {
    Image up = r, down = r;
    up.data[i] += h;
    down.data[i] -= h;
    EXPECT_NEAR(g.data[i], (l2_loss(up, ref, mask) - l2_loss(down, ref, mask)) / (2.0 * h), 1e-8);
  }
}

TEST(TaskConfig, ParsesNamesAndRejectsBadValues) {
  EXPECT_EQ(parse_task_kind("light"), TaskKind::Lighting);
  EXPECT_EQ(parse_task_kind("lighting"), TaskKind::Lighting);
  EXPECT_EQ(parse_task_kind("shadow"), TaskKind::Shadow);
  EXPECT_THROW(parse_task_kind("albedo"), ConfigError);
  TaskConfig c;
  c.step = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TaskConfig{};
  c.iterations = 0;
  EXPECT_THROW(c.validate(), ConfigError);
}

class AtGroundTruth : public testing::TestWithParam<TaskKind> {};

TEST_P(AtGroundTruth, LossAndParametersStayPut) {
  const TaskKind kind = GetParam();
  const Scene truth = small_scene(kind == TaskKind::Texture);
  const Image reference = render(truth);
  const TaskConfig config = quick(kind, 5);
  const SolveResult r = solve(truth, reference, config);
  for (double l : r.loss) EXPECT_NEAR(l, r.loss.front(), 1e-8);
  const ParamBlock start = extract_block(truth, task_block(kind), config.block_object());
  EXPECT_LT(max_abs_difference(r.block.values, start.values), 1e-6);
}

INSTANTIATE_TEST_SUITE_P(Tasks, AtGroundTruth,
                         testing::Values(TaskKind::Texture, TaskKind::Lighting, TaskKind::Pose, TaskKind::Geometry,
                                         TaskKind::Shadow),
                         [](const testing::TestParamInfo<TaskKind>& info) { return std::string(task_kind_name(info.param)); });

class SelfConsistency : public testing::TestWithParam<TaskKind> {};

TEST_P(SelfConsistency, LossDropsTenfold) {
  const TaskKind kind = GetParam();
  const Scene truth = small_scene(kind == TaskKind::Texture);
  const Image reference = render(truth);
  const int iterations = kind == TaskKind::Lighting || kind == TaskKind::Texture ? 200 : 400;
  const SolveResult r = solve(perturbed(truth, kind), reference, quick(kind, iterations));
  ASSERT_FALSE(r.diverged);
  EXPECT_GT(r.loss.front(), 0.0);
  EXPECT_LE(r.loss.back(), 0.1 * r.loss.front()) << "start " << r.loss.front() << " end " << r.loss.back();
}

INSTANTIATE_TEST_SUITE_P(Tasks, SelfConsistency,
                         testing::Values(TaskKind::Texture, TaskKind::Lighting, TaskKind::Pose, TaskKind::Geometry),
                         [](const testing::TestParamInfo<TaskKind>& info) { return std::string(task_kind_name(info.param)); });

TEST(Solve, LightingStartsFromZeroAndLoses) {
  const Scene truth = small_scene();
  TaskConfig c = TaskConfig::defaults(TaskKind::Lighting);
  c.iterations = 100;
  const ParamBlock start = initial_block(truth, c);
  for (double v : start.values) EXPECT_EQ(v, 0.0);
  const SolveResult r = solve(truth, render(truth), c);
  EXPECT_LT(r.loss.back(), 0.1 * r.loss.front());
}

TEST(Solve, TextureStartsWhite) {
  const Scene truth = small_scene(true);
  const ParamBlock start = initial_block(truth, TaskConfig::defaults(TaskKind::Texture));
  for (double v : start.values) EXPECT_EQ(v, 1.0);
}

TEST(Solve, DoubledBrightnessDoublesLight) {
  const Scene truth = small_scene();
  const Image reference = render(truth);
  Image doubled = reference;
  for (double& v : doubled.data) v *= 2.0;
  TaskConfig c = TaskConfig::defaults(TaskKind::Lighting);
  c.iterations = 50;
  const SolveResult a = solve(truth, reference, c);
  const SolveResult b = solve(truth, doubled, c);
  ASSERT_EQ(a.block.values.size(), b.block.values.size());
  for (std::size_t i = 0; i < a.block.values.size(); ++i) EXPECT_EQ(b.block.values[i], 2.0 * a.block.values[i]) << i;
}

TEST(Solve, NonFiniteLossAbortsWithDump) {
  const Scene truth = small_scene();
  Image reference = render(truth);
  reference.data[7] = std::numeric_limits<double>::quiet_NaN();
  TaskConfig c = TaskConfig::defaults(TaskKind::Lighting);
  c.iterations = 3;
  try {
    solve(truth, reference, c);
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("lighting"), std::string::npos) << what;
  }
}

TEST(Solve, ReferenceShapeMismatchRejected) {
  const Scene truth = small_scene();
  EXPECT_THROW(solve(truth, Image(8, 8), TaskConfig::defaults(TaskKind::Lighting)), ConfigError);
}

TEST(Solve, DirectIlluminationShadowTaskHasZeroGradient) {
  ShadowSceneOptions o = small_options();
  o.elevation = 1.2;
  Scene truth = make_shadow_scene(o);
  truth.camera = Camera::look_at(Vec3(0.0, 0.65, 0.0), Vec3::Zero(), Vec3(0, 0, -1), 110.0, 32, 32);
  const Image reference = render(truth);
  TaskConfig c = quick(TaskKind::Shadow, 5);
  c.direct_illumination = true;
  const SolveResult r = solve(perturbed(truth, TaskKind::Shadow), reference, c);
  const ParamBlock start = extract_block(perturbed(truth, TaskKind::Shadow), ParamKind::GraphDeformation, 1);
  EXPECT_EQ(r.block.values, start.values);
  for (double l : r.loss) EXPECT_EQ(l, r.loss.front());
}

TEST(Metrics, IdenticalScenesScoreZero) {
  const Scene truth = small_scene();
  for (TaskKind kind : {TaskKind::Lighting, TaskKind::Pose, TaskKind::Geometry}) {
    const Metrics m = evaluate(truth, truth, TaskConfig::defaults(kind));
    EXPECT_EQ(m.mde_percent, 0.0);
    EXPECT_EQ(m.rotation_error, 0.0);
    EXPECT_EQ(m.translation_error, 0.0);
    EXPECT_EQ(m.lighting_mse, 0.0);
  }
  const Scene textured = small_scene(true);
  EXPECT_EQ(evaluate(textured, textured, TaskConfig::defaults(TaskKind::Texture)).texture_mse, 0.0);
}

TEST(Metrics, PureTranslation) {
  const Scene truth = small_scene();
  Scene moved = truth;
  const Vec3 t(0.03, -0.02, 0.01);
  moved.objects[1].pose.translation += t;
  const Metrics m = evaluate(moved, truth, TaskConfig::defaults(TaskKind::Pose));
  EXPECT_NEAR(m.translation_error, t.squaredNorm(), 1e-15);
  EXPECT_EQ(m.rotation_error, 0.0);
}

TEST(Metrics, OnePercentTranslationGivesOnePercentMde) {
  const Scene truth = small_scene();
  const Aabb box = bounds(truth.objects[1].mesh.vertices);
  Scene moved = truth;
  moved.objects[1].pose.translation += 0.01 * box.diagonal() * Vec3(1.0, 2.0, 2.0) / 3.0;
  EXPECT_NEAR(mean_distance_error(moved, truth, 1), 1.0, 1e-12);
}

TEST(Metrics, RotationErrorIsTheAngleBetween) {
  const Quat a(Eigen::AngleAxisd(0.3, Vec3::UnitY()));
  const Quat b(Eigen::AngleAxisd(0.1, Vec3::UnitY()));
  EXPECT_NEAR(rotation_error(a, b), 0.2, 1e-12);
  EXPECT_NEAR(rotation_error(a, Quat(-a.coeffs())), 0.0, 1e-7);
}

TEST(Metrics, TopologyMismatchRejected) {
  const Scene truth = small_scene();
  Scene other = truth;
  other.objects[1].mesh = make_uv_sphere(0.5, 6, 12);
  other.objects[1].albedo.assign(other.objects[1].mesh.vertex_count(), Vec3::Constant(0.5));
  other.prepare();
  EXPECT_THROW(mean_distance_error(other, truth, 1), ConfigError);
}

TEST(Metrics, TextureMseCountsOnlyVisibleTexels) {
  const Image truth(4, 4, 3, 0.5);
  Image rec = truth;
  Image coverage(4, 4, 1, 1.0);
  rec.set_rgb(0, 0, Vec3::Constant(0.9));
  coverage.at(0, 0, 0) = 0.2;
  EXPECT_EQ(texture_mse(rec, truth, coverage), 0.0);
  coverage.at(0, 0, 0) = 0.5;
  EXPECT_NEAR(texture_mse(rec, truth, coverage), 0.16 / 16.0, 1e-15);
}

TEST(Metrics, ShadowRegionCoversTheCastShadow) {
  const Scene truth = small_scene();
  const Image mask = shadow_region(truth);
  ASSERT_EQ(mask.channels, 1);
  double covered = 0.0;
  for (double v : mask.data) covered += v > 0.0;
  EXPECT_GT(covered, 0.0);
  EXPECT_LT(covered, static_cast<double>(mask.pixel_count()));
  Scene lit = truth;
  lit.settings.shadows = false;
  const Image shaded = render(truth), unshadowed = render(lit);
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      if ((unshadowed.rgb(x, y) - shaded.rgb(x, y)).maxCoeff() > 0.05) EXPECT_GT(mask.at(x, y, 0), 0.0);
    }
  }
}

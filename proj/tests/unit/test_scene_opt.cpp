#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "fixtures.hpp"
#include "scenefit/scene_opt/floor_fit.hpp"
#include "scenefit/scene_opt/scene_opt.hpp"

using namespace scenefit;
using namespace scenefit::scene_opt;

namespace {

ObservationSet observe(const render::SceneModel& s) {
  const auto out = render::render(s);
  ObservationSet obs;
  obs.rgb = out.rgb;
  obs.depth = out.depth;
  obs.intrinsics = s.intrinsics;
  for (std::size_t k = 0; k < s.objects.size(); ++k) obs.masks.push_back(out.visibility(static_cast<int>(k)));
  return obs;
}

render::SceneModel truth_scene(int w = 128, int h = 96) { return fixtures::sphere_scene(w, h, 0.035, 0.03, -0.02); }

/// Truth with the sphere center moved 2 cm along (1, -1, 1).
render::SceneModel perturbed(const render::SceneModel& truth) {
  render::SceneModel s = truth;
  s.objects[0].sphere().center = s.objects[0].sphere().center + normalized(Vec3d{1, -1, 1}) * 0.02;
  return s;
}

SceneOptConfig short_config(int a, int b) {
  SceneOptConfig cfg;
  cfg.phase_a = default_phase_lbfgs(a);
  cfg.phase_b = default_phase_lbfgs(b);
  return cfg;
}

void expect_feasible(const render::Material& m, const BarrierConfig& b) {
  for (double v : {m.ambient, m.diffuse, m.specular, m.color.x, m.color.y, m.color.z}) {
    EXPECT_GT(v, 0.0);
    EXPECT_LT(v, 1.0);
  }
  EXPECT_GT(m.shininess, 1.0);
  EXPECT_LT(m.shininess, b.max_shininess);
}

}  // namespace

TEST(Barrier, Examples) {
  EXPECT_DOUBLE_EQ(barrier(0.0, 0.0, 1.0, 20.0), 1.0 + std::exp(-20.0));
  EXPECT_DOUBLE_EQ(barrier(0.5, 0.0, 1.0, 20.0), 2.0 * std::exp(-10.0));
  EXPECT_NEAR(barrier(0.5, 0.0, 1.0, 20.0), 9.0800e-5, 1e-8);
}

TEST(Barrier, SymmetricAboutMidpoint) {
  for (double d : {0.01, 0.1, 0.3}) {
    const double v = barrier(d, 0.0, 1.0, 20.0);
    EXPECT_NEAR(v, barrier(1.0 - d, 0.0, 1.0, 20.0), 1e-14 * v);
  }
}

TEST(Barrier, DerivativeMatchesFiniteDifference) {
  for (double x : {0.02, 0.4, 0.97}) {
    const double h = 1e-6;
    const double fd = (barrier(x + h, 0.0, 1.0, 20.0) - barrier(x - h, 0.0, 1.0, 20.0)) / (2 * h);
    EXPECT_NEAR(barrier_derivative(x, 0.0, 1.0, 20.0), fd, 1e-6 * std::max(1.0, std::fabs(fd)));
  }
}

TEST(MaskedMae, Examples) {
  Mask m(2, 2);
  m.data = {1, 0, 1, 0};
  const std::vector<double> a{0.5, 9.0, 0.0, 9.0}, b{0.0, 0.0, 0.25, 0.0};
  // smooth |x| sits 1e-6 below |x| away from zero.
  EXPECT_NEAR(masked_mae(a, b, m, 1), 0.375 - 1e-6, 1e-11);
  EXPECT_EQ(masked_mae(a, b, Mask(2, 2), 1), 0.0);
  EXPECT_THROW(masked_mae(a, std::vector<double>(3), m, 1), InvalidInput);
}

TEST(SceneLoss, GroundTruthRenderHasZeroDataTerms) {
  const auto s = truth_scene(64, 48);
  const auto obs = observe(s);
  const auto l = scene_loss(obs, s, render::render(s), {}, {});
  EXPECT_LE(l.data, 1e-9);
  EXPECT_LE(l.floor_mae_i, 1e-9);
  EXPECT_GT(l.barrier, 0.0);
  EXPECT_DOUBLE_EQ(l.total, l.data + l.barrier);
}

TEST(SceneLoss, MaskOnlyWeights) {
  const auto truth = truth_scene(64, 48);
  const auto obs = observe(truth);
  const auto s = perturbed(truth);
  LossWeights w;
  w.w_i = w.w_d = 0.0;
  w.w_m = 1.0;
  const auto l = scene_loss(obs, s, render::render(s), w, {});
  EXPECT_GT(l.objects[0].mae_m, 0.0);
  EXPECT_DOUBLE_EQ(l.data, l.objects[0].mae_m);
}

TEST(SceneLoss, DoublingWeightsDoublesData) {
  const auto truth = truth_scene(64, 48);
  const auto obs = observe(truth);
  const auto s = perturbed(truth);
  const auto out = render::render(s);
  LossWeights w, w2;
  w2.w_i = w2.w_d = w2.w_m = 2.0;
  EXPECT_NEAR(scene_loss(obs, s, out, w2, {}).data, 2.0 * scene_loss(obs, s, out, w, {}).data, 1e-12);
}

TEST(SceneLoss, TotalIsSumOfComponents) {
  const auto truth = truth_scene(64, 48);
  const auto obs = observe(truth);
  const auto s = perturbed(truth);
  const auto l = scene_loss(obs, s, render::render(s), {}, {});
  const auto& o = l.objects[0];
  EXPECT_NEAR(l.data, o.mae_i + o.mae_d + o.mae_m + l.floor_mae_i, 1e-12);
  EXPECT_NEAR(l.total, l.data + l.barrier, 1e-15);
}

TEST(LineConstraint, CentroidAtPrincipalPoint) {
  const CameraIntrinsics k{10, 10, 2, 2, 20, 5};
  Mask m(20, 5);
  m.at(1, 2) = m.at(3, 2) = m.at(2, 1) = m.at(2, 3) = 1;
  const auto l = make_line_constraint(m, k);
  EXPECT_EQ(l.direction, (Vec3d{0, 0, 1}));
  EXPECT_EQ(l.point(0.0), (Vec3d{0, 0, 0}));
}

TEST(LineConstraint, OffAxisCentroid) {
  const CameraIntrinsics k{10, 10, 2, 2, 20, 5};
  Mask m(20, 5);
  m.at(12, 2) = 1;
  const auto l = make_line_constraint(m, k);
  const double r = 1.0 / std::sqrt(2.0);
  EXPECT_NEAR(l.direction.x, r, 1e-15);
  EXPECT_NEAR(l.direction.y, 0.0, 1e-15);
  EXPECT_NEAR(l.direction.z, r, 1e-15);
}

TEST(LineConstraint, ProjectInvertsPoint) {
  const LineConstraint l{{0, 0, 0}, normalized(Vec3d{0.2, -0.1, 1.0})};
  EXPECT_NEAR(l.project(l.point(0.83)), 0.83, 1e-15);
}

TEST(LineConstraint, EmptyMaskThrows) {
  EXPECT_THROW(make_line_constraint(Mask(4, 4), CameraIntrinsics{10, 10, 2, 2, 4, 4}), EmptyMask);
}

TEST(FloorFit, PlaneThroughPoints) {
  std::vector<Vec3d> pts;
  const Vec3d up = normalized(Vec3d{0.1, -1.0, -0.5});
  const double h = 0.6;
  std::mt19937 rng(2);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const Vec3d a = normalized(cross(up, Vec3d{1, 0, 0})), b = cross(up, a);
  for (int i = 0; i < 200; ++i) pts.push_back(up * -h + a * u(rng) + b * u(rng));
  const auto f = fit_plane(pts);
  EXPECT_NEAR(norm(f.up - up), 0.0, 1e-9);
  EXPECT_NEAR(f.height, h, 1e-9);
  EXPECT_LE(f.rms, 1e-9);
  EXPECT_THROW(fit_plane({{0, 0, 1}, {1, 0, 1}}), EmptyCloud);
}

TEST(FloorFit, RecoversRenderedFloor) {
  const auto s = truth_scene(64, 48);
  const auto f = fit_floor_plane(observe(s));
  EXPECT_LE(norm(f.up - s.floor.up), 1e-9);
  EXPECT_NEAR(f.height, s.floor.height, 1e-9);
}

TEST(InitialScene, DefaultsAndMeanColors) {
  const auto truth = truth_scene(64, 48);
  const auto obs = observe(truth);
  const auto& sp = truth.objects[0].sphere();
  const ellipsoid::EllipsoidParams e{sp.center, {sp.radii.x * sp.radii.x, sp.radii.y * sp.radii.y, 0.0009}};
  SceneOptConfig cfg;
  const auto s = initial_scene(obs, {e}, truth.floor, cfg);
  const auto& m = s.objects[0].material;
  EXPECT_EQ(m.ambient, 0.1);
  EXPECT_EQ(m.diffuse, 0.1);
  EXPECT_EQ(m.specular, 0.1);
  EXPECT_EQ(m.shininess, 100.0);
  const Vec3d c = mean_masked_color(obs.rgb, obs.masks[0]);
  EXPECT_EQ(m.color, c);
  EXPECT_NEAR(s.objects[0].sphere().radii.z, 0.03, 1e-15);
  EXPECT_GE(s.light.intensity, cfg.init_intensity_min);
  EXPECT_LE(s.light.intensity, cfg.init_intensity_max);
  const Vec3d box_center = sp.center + truth.floor.up * cfg.light_box_lift;
  for (int j = 0; j < 3; ++j) EXPECT_LE(std::fabs(s.light.position[j] - box_center[j]), 0.5 * cfg.light_box_size);
  EXPECT_EQ(initial_scene(obs, {e}, truth.floor, cfg).light.position, s.light.position);
  cfg.seed = 2;
  EXPECT_NE(initial_scene(obs, {e}, truth.floor, cfg).light.position, s.light.position);
}

TEST(InitialScene, RadiusReadings) {
  EXPECT_EQ(radii_from_scale({0.04, 0.09, 0.01}, RadiusReading::SquaredSemiAxis), (Vec3d{0.2, 0.3, 0.1}));
  EXPECT_EQ(radii_from_scale({0.04, 0.09, 0.01}, RadiusReading::Linear), (Vec3d{0.04, 0.09, 0.01}));
}

TEST(SceneObjective, GradientMatchesFiniteDifferences) {
  const auto truth = truth_scene(48, 36);
  const auto obs = observe(truth);
  auto s = truth;
  s.objects[0].sphere().center = s.objects[0].sphere().center + Vec3d{0.003, -0.002, 0.004};
  s.objects[0].material = {0.15, 0.5, 0.2, 80, {0.6, 0.3, 0.3}};
  s.light.position = s.light.position + Vec3d{0.05, 0.02, -0.03};
  const std::vector<LineConstraint> lines{make_line_constraint(obs.masks[0], obs.intrinsics)};
  SceneOptConfig cfg;
  for (Phase ph : {Phase::A, Phase::B}) {
    for (const auto* l : {static_cast<const std::vector<LineConstraint>*>(nullptr), &lines}) {
      const SceneParameterization par(s, ph, l, cfg.position_unit, cfg.shininess_unit);
      SceneObjective obj(obs, s, par, cfg);
      const auto x = par.pack(s);
      std::vector<double> g(x.size()), tmp(x.size());
      obj(x, g);
      for (std::size_t i = 0; i < x.size(); ++i) {
        const double h = 1e-6;
        auto xp = x, xm = x;
        xp[i] += h;
        xm[i] -= h;
        const double fd = (obj(xp, tmp) - obj(xm, tmp)) / (2 * h);
        EXPECT_NEAR(g[i], fd, 1e-4 * std::max(1.0, std::fabs(fd)))
            << phase_name(ph) << " " << par.layout().segment_of(i).name;
      }
    }
  }
}

TEST(SceneParameterization, PackUnpackRoundTrip) {
  const auto s = truth_scene(32, 24);
  for (Phase ph : {Phase::A, Phase::B}) {
    const SceneParameterization par(s, ph, nullptr, 0.1, 100.0);
    render::SceneModel t = s;
    par.unpack(par.pack(s), t);
    EXPECT_LE(norm(t.objects[0].sphere().center - s.objects[0].sphere().center), 1e-15);
    EXPECT_LE(norm(t.objects[0].sphere().radii - s.objects[0].sphere().radii), 1e-15);
    EXPECT_NEAR(t.objects[0].material.shininess, s.objects[0].material.shininess, 1e-12);
    EXPECT_EQ(t.light.position, s.light.position);
  }
}

TEST(OptimizeScene, RoundTripFromPerturbedCenter) {
  const auto truth = truth_scene();
  const auto obs = observe(truth);
  for (bool line : {false, true}) {
    SceneOptConfig cfg;
    cfg.line_constraint = line;
    const auto fit = optimize_scene(obs, perturbed(truth), cfg);
    EXPECT_FALSE(fit.diverged);
    EXPECT_LT(fit.final_loss.total, fit.initial_loss.total);
    const auto& got = fit.scene.objects[0];
    EXPECT_LE(norm(got.sphere().center - truth.objects[0].sphere().center), 5e-3) << "line " << line;
    for (int j = 0; j < 3; ++j)
      EXPECT_LE(std::fabs(got.material.color[j] - truth.objects[0].material.color[j]), 0.05) << "line " << line;
    expect_feasible(got.material, cfg.barrier);
    expect_feasible(fit.scene.floor.material, cfg.barrier);
    EXPECT_LE(fit.phase_a.iterations + fit.phase_b.iterations, 300);

    // Accepted steps never increase the loss within a phase.
    for (std::size_t i = 1; i < fit.trace.size(); ++i)
      if (fit.trace[i].phase == fit.trace[i - 1].phase)
        EXPECT_LE(fit.trace[i].breakdown.total, fit.trace[i - 1].breakdown.total) << i;

    if (line) {
      ASSERT_EQ(fit.lines.size(), 1u);
      EXPECT_LE(norm(got.sphere().center - fit.lines[0].point(fit.line_t[0])), 1e-9);
      // One position parameter per object.
      const SceneParameterization par(fit.scene, Phase::B, &fit.lines, cfg.position_unit, cfg.shininess_unit);
      EXPECT_EQ(par.layout().total(), 1u + 3u + render::Material::kSize);
    }
  }
}

TEST(OptimizeScene, FromEllipsoidInitialization) {
  const auto truth = truth_scene();
  const auto obs = observe(truth);
  const auto parts = partition_by_masks(backproject(obs.depth, obs.intrinsics), obs.masks);
  const auto e = ellipsoid::fit_map(parts[0].cloud, {});
  SceneOptConfig cfg;
  cfg.line_constraint = true;
  const auto fit = optimize_scene(obs, {e.params}, estimate_floor(obs, truth.floor), cfg);
  EXPECT_FALSE(fit.diverged);
  EXPECT_LE(norm(fit.scene.objects[0].sphere().center - truth.objects[0].sphere().center), 5e-3);
  EXPECT_LT(fit.final_loss.total, 0.1 * fit.initial_loss.total);
  EXPECT_EQ(fit.seed, cfg.seed);
}

TEST(OptimizeScene, CommonWeightScaleLeavesArgminUnchanged) {
  const auto truth = truth_scene(64, 48);
  const auto obs = observe(truth);
  SceneOptConfig a = short_config(15, 25), b = a;
  b.weights.w_i = b.weights.w_d = b.weights.w_m = 3.0;
  const auto fa = optimize_scene(obs, perturbed(truth), a);
  const auto fb = optimize_scene(obs, perturbed(truth), b);
  const auto& pa = fa.scene.objects[0];
  const auto& pb = fb.scene.objects[0];
  EXPECT_LE(norm(pa.sphere().center - pb.sphere().center), 1e-6);
  EXPECT_LE(norm(pa.sphere().radii - pb.sphere().radii), 1e-6);
  EXPECT_LE(norm(pa.material.color - pb.material.color), 1e-6);
  EXPECT_LE(norm(fa.scene.light.position - fb.scene.light.position), 1e-6);
  EXPECT_NEAR(fb.final_loss.total, 3.0 * fa.final_loss.total, 1e-9);
}

TEST(OptimizeScene, FarOffInitializationEndsWithHighLoss) {
  const auto truth = truth_scene(64, 48);
  const auto obs = observe(truth);
  const SceneOptConfig cfg = short_config(30, 60);
  const auto good = optimize_scene(obs, perturbed(truth), cfg);
  render::SceneModel bad = truth;
  bad.objects[0].sphere().center = Vec3d{0.25, 0.15, 1.5};
  const auto fit = optimize_scene(obs, bad, cfg);
  EXPECT_TRUE(fit.diverged || fit.final_loss.total >= 10.0 * good.final_loss.total)
      << fit.final_loss.total << " vs " << good.final_loss.total;
}

TEST(OptimizeScene, DivergenceReturnsInitialization) {
  const auto truth = truth_scene(32, 24);
  const auto obs = observe(truth);
  // The ground truth is a minimum; nothing can improve it.
  const auto fit = optimize_scene(obs, truth, short_config(5, 5));
  EXPECT_LE(fit.final_loss.total, fit.initial_loss.total);
  if (fit.diverged) EXPECT_EQ(fit.scene.objects[0].sphere().center, truth.objects[0].sphere().center);
}

TEST(OptimizeScene, ObjectCountMismatchThrows) {
  const auto truth = truth_scene(32, 24);
  auto obs = observe(truth);
  obs.masks.push_back(obs.masks[0]);
  EXPECT_THROW(optimize_scene(obs, truth, SceneOptConfig{}), InvalidInput);
}

TEST(TraceJsonl, OneRecordPerLine) {
  std::vector<TraceRecord> tr(3);
  tr[1].phase = 'B';
  tr[1].iteration = 4;
  tr[1].breakdown.objects.resize(1);
  const std::string s = trace_jsonl(tr);
  EXPECT_EQ(std::count(s.begin(), s.end(), '\n'), 3);
  const auto second = nlohmann::json::parse(s.substr(s.find('\n') + 1, s.find('\n', s.find('\n') + 1) - s.find('\n') - 1));
  EXPECT_EQ(second["phase"], "B");
  EXPECT_EQ(second["step"], 4);
  EXPECT_EQ(second["objects"].size(), 1u);
}

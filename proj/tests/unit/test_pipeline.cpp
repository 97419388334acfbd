#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "scenefit/pipeline/benchmark.hpp"
#include "scenefit/pipeline/gradcheck.hpp"

using namespace scenefit;
using namespace scenefit::pipeline;

namespace {

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("scenefit_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

PipelineConfig fast_config() {
  PipelineConfig c;
  c.mesh_stage = false;
  c.metric_samples = 800;
  return c;
}

}  // namespace

TEST(Png, RgbRoundTripIsExactOnTheQuantizationGrid) {
  const fs::path d = temp_dir("png_rgb");
  ImageD img(7, 5, 3);
  std::mt19937 rng(1);
  for (double& v : img.data) v = std::uniform_int_distribution<int>(0, 255)(rng) / 255.0;
  save_rgb(d / "a.png", img);
  EXPECT_EQ(load_rgb(d / "a.png"), img);
}

TEST(Png, DepthIsStoredInMillimeters) {
  const fs::path d = temp_dir("png_depth");
  ImageD depth(3, 2, 1);
  depth.data = {0.0, 0.5, 0.6374, 1.0, 65.535, 70.0};
  save_depth(d / "d.png", depth);
  const RawImage raw = read_png(d / "d.png");
  EXPECT_EQ(raw.bit_depth, 16);
  EXPECT_EQ(raw.samples, (std::vector<std::uint16_t>{0, 500, 637, 1000, 65535, 65535}));
  EXPECT_DOUBLE_EQ(load_depth(d / "d.png").data[2], 0.637);
}

TEST(Png, MaskThresholdIsAbove127) {
  const fs::path d = temp_dir("png_mask");
  write_png(d / "m.png", {4, 1, 1, 8, {0, 127, 128, 255}});
  EXPECT_EQ(load_mask(d / "m.png").data, (std::vector<std::uint8_t>{0, 0, 1, 1}));
  Mask m(2, 2, 1);
  m.data = {1, 0, 0, 1};
  save_mask(d / "m2.png", m);
  EXPECT_EQ(load_mask(d / "m2.png"), m);
}

TEST(Png, NotAPngIsInvalidInput) {
  const fs::path d = temp_dir("png_bad");
  write_text(d / "x.png", "hello world");
  EXPECT_THROW(read_png(d / "x.png"), InvalidInput);
  EXPECT_THROW(read_png(d / "missing.png"), InvalidInput);
}

TEST(TextFiles, WritingCreatesMissingDirectories) {
  const fs::path d = temp_dir("nested");
  write_json(d / "a" / "b" / "x.json", json{{"k", 1}});
  EXPECT_EQ(read_text(d / "a" / "b" / "x.json"), "{\n  \"k\": 1\n}\n");
}

TEST(ObservationFiles, RoundTripEqualsQuantize) {
  const GeneratedScene g = generate_scene(3);
  const fs::path d = temp_dir("obs");
  save_observation(d, g.obs);
  const ObservationSet back =
      load_observation(d / "rgb.png", d / "depth.png", d / "masks.json", d / "intrinsics.json");
  const ObservationSet q = quantize(g.obs);
  EXPECT_EQ(back.rgb, q.rgb);
  EXPECT_EQ(back.depth, q.depth);
  EXPECT_EQ(back.masks, q.masks);
  EXPECT_EQ(back.intrinsics, q.intrinsics);
}

TEST(Obj, RoundTripIsExact) {
  const fs::path d = temp_dir("obj");
  TriMesh m = icosphere(1);
  for (auto& v : m.vertices) v = v * 0.0371 + Vec3d{0.1, -0.2, 0.63};
  write_obj(d / "m.obj", m);
  const TriMesh back = read_obj(d / "m.obj");
  EXPECT_EQ(back.vertices, m.vertices);
  EXPECT_EQ(back.faces, m.faces);
}

TEST(Obj, QuadsAreFannedAndSlashesIgnored) {
  const fs::path d = temp_dir("obj_quad");
  write_text(d / "q.obj", "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1/1/1 2/2/2 3/3/3 4/4/4\n");
  const TriMesh m = read_obj(d / "q.obj");
  EXPECT_EQ(m.faces, (std::vector<Face>{{0, 1, 2}, {0, 2, 3}}));
  write_text(d / "bad.obj", "v 0 0 0\nf 1 2 3\n");
  EXPECT_THROW(read_obj(d / "bad.obj"), InvalidInput);
}

TEST(PoseJson, RowMajorWithHomogeneousRow) {
  mesh_opt::Pose p;
  p.rotation << 0, -1, 0, 1, 0, 0, 0, 0, 1;
  p.translation = {0.1, 0.2, 0.3};
  const json j = pose_json(p);
  EXPECT_EQ(j[0], json({0.0, -1.0, 0.0, 0.1}));
  EXPECT_EQ(j[3], json({0.0, 0.0, 0.0, 1.0}));
  const mesh_opt::Pose back = pose_from_json(j);
  EXPECT_EQ(back.rotation, p.rotation);
  EXPECT_EQ(back.translation, p.translation);
}

TEST(Config, JsonRoundTripAndPartialFiles) {
  PipelineConfig c;
  c.resolution_fraction = 0.4;
  c.adamw.steps = 123;
  c.prior.sigma_p = {0.2, 0.3, 0.4};
  const PipelineConfig back = json(c).get<PipelineConfig>();
  EXPECT_EQ(json(back), json(c));
  const PipelineConfig partial = json::parse(R"({"seed": 9, "phase_a": {"max_iters": 5}})").get<PipelineConfig>();
  EXPECT_EQ(partial.seed, 9u);
  EXPECT_EQ(partial.phase_a.max_iters, 5);
  EXPECT_EQ(partial.phase_a.plateau_window, 0);  // an explicit block starts from LbfgsConfig defaults
  EXPECT_EQ(partial.phase_b.max_iters, 200);
  EXPECT_EQ(partial.adamw.steps, 4000);
}

TEST(Config, HashIsStableAndSensitive) {
  PipelineConfig a, b;
  EXPECT_EQ(config_hash(a), config_hash(b));
  EXPECT_EQ(config_hash(a).size(), 16u);
  b.seed = 2;
  EXPECT_NE(config_hash(a), config_hash(b));
}

TEST(Config, Validation) {
  PipelineConfig c;
  c.resolution_fraction = 0.0;
  EXPECT_THROW(c.validate(), InvalidInput);
  c.resolution_fraction = 1.5;
  EXPECT_THROW(c.validate(), InvalidInput);
  c = {};
  c.adamw.lr = -1.0;
  EXPECT_THROW(c.validate(), InvalidInput);
}

TEST(Downsample, PicksNearestPixelsAndScalesIntrinsics) {
  ObservationSet obs;
  obs.intrinsics = {100.0, 100.0, 4.0, 2.0, 8, 4};
  obs.rgb = ImageD(8, 4, 3);
  obs.depth = ImageD(8, 4, 1);
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 8; ++c) obs.depth.at(c, r) = 1.0 + c + 10.0 * r;
  obs.masks.push_back(Mask(8, 4, 1));
  obs.masks[0].at(6, 2) = 1;
  const ObservationSet d = downsample(obs, 0.5);
  EXPECT_EQ(d.intrinsics, (CameraIntrinsics{50.0, 50.0, 2.0, 1.0, 4, 2}));
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 4; ++c) EXPECT_EQ(d.depth.at(c, r), obs.depth.at(2 * c, 2 * r));
  EXPECT_EQ(d.masks[0].at(3, 1), 1);
  EXPECT_EQ(mask_count(d.masks[0]), 1u);
  EXPECT_EQ(downsample(obs, 1.0).depth, obs.depth);
}

TEST(Downsample, ScaledRaysMatchTheSourcePixelRays) {
  const CameraIntrinsics k{1000.0, 1000.0, 320.0, 240.0, 640, 480};
  const CameraIntrinsics s = k.scaled(0.2);
  for (int c : {0, 17, 127})
    for (int r : {0, 50, 95}) {
      const Vec3d a = s.unproject(c, r), b = k.unproject(c / 0.2, r / 0.2);
      EXPECT_NEAR(a.x, b.x, 1e-12);
      EXPECT_NEAR(a.y, b.y, 1e-12);
    }
}

TEST(Generator, FixedSeedIsByteIdentical) {
  const GeneratedScene a = generate_scene(11), b = generate_scene(11);
  EXPECT_EQ(a.obs.rgb, b.obs.rgb);
  EXPECT_EQ(a.obs.depth, b.obs.depth);
  EXPECT_EQ(a.obs.masks, b.obs.masks);
  EXPECT_EQ(json(a.spec), json(b.spec));
  EXPECT_NE(json(generate_scene(12).spec), json(a.spec));
}

TEST(Generator, SingleSphereHasExactlyOneNonEmptyMask) {
  GeneratorConfig g;
  g.shapes = {Shape::Sphere};
  const GeneratedScene s = generate_scene(4, g, 1);
  ASSERT_EQ(s.obs.masks.size(), 1u);
  EXPECT_GT(mask_count(s.obs.masks[0]), 0u);
  EXPECT_TRUE(s.scene.objects[0].is_sphere());
}

TEST(Generator, ObjectsAreSeparatedRestOnTheFloorAndInView) {
  for (std::uint64_t seed = 1; seed <= 12; ++seed) {
    const SceneSpec s = sample_scene(seed);
    ASSERT_GE(s.objects.size(), 1u);
    ASSERT_LE(s.objects.size(), 5u);
    for (std::size_t i = 0; i < s.objects.size(); ++i) {
      const ObjectSpec& a = s.objects[i];
      EXPECT_NEAR(dot(s.floor.up, a.center) + s.floor.height, a.size / 2.0, 1e-12);
      const Projection p = project(a.center, s.intrinsics);
      EXPECT_TRUE(p.u > 0 && p.u < s.intrinsics.width && p.v > 0 && p.v < s.intrinsics.height);
      for (std::size_t j = i + 1; j < s.objects.size(); ++j)
        EXPECT_GE(norm(a.center - s.objects[j].center), a.bounding_radius() + s.objects[j].bounding_radius());
    }
  }
}

TEST(Generator, MasksAreNearestHitsAndNonEmpty) {
  const GeneratedScene g = generate_scene(7, {}, 4);
  for (std::size_t i = 0; i < g.obs.depth.pixels(); ++i) {
    int owners = 0;
    for (const auto& m : g.obs.masks) owners += m.data[i];
    EXPECT_LE(owners, 1);
  }
  for (const auto& m : g.obs.masks) EXPECT_GT(mask_count(m), 0u);
}

TEST(Generator, ImpossibleLayoutThrowsPlacementFailed) {
  GeneratorConfig g;
  g.spread_u = g.spread_v = 0.0;
  g.max_attempts = 20;
  EXPECT_THROW(sample_scene(1, g, 3), PlacementFailed);
}

TEST(Generator, MaterialPresets) {
  EXPECT_EQ(preset_material(MaterialPreset::Rubber, {}).specular, 0.05);
  EXPECT_EQ(preset_material(MaterialPreset::Metal, {}).specular, 0.8);
  EXPECT_EQ(preset_material(MaterialPreset::Metal, {}).shininess, 100.0);
  EXPECT_THROW(material_from_string("glass"), InvalidInput);
}

TEST(Shapes, CubeAndCylinderAreClosedWithExpectedVolume) {
  const Frame f = floor_frame({0.1, 0.2, 0.6}, normalized(Vec3d{0, -1, -1}), {1, 0, 0}, 0.7);
  const TriMesh cube = cube_mesh(f, 0.05);
  EXPECT_EQ(boundary_edge_count(cube), 0u);
  EXPECT_NEAR(signed_volume(cube.vertices, cube.faces), 0.05 * 0.05 * 0.05, 1e-15);
  const TriMesh cyl = cylinder_mesh(f, 0.02, 0.05, 64);
  EXPECT_EQ(boundary_edge_count(cyl), 0u);
  // Inscribed 64-gon area times height.
  const double area = 0.5 * 64 * 0.02 * 0.02 * std::sin(2 * std::numbers::pi / 64);
  EXPECT_NEAR(signed_volume(cyl.vertices, cyl.faces), area * 0.05, 1e-12);
}

TEST(EllipsoidFallback, MomentSphereAndTriggers) {
  CloudStats st{{0.0, 0.0, 0.5}, {0.01, 0.02, 0.005}};
  const auto e = moment_sphere(st);
  EXPECT_NEAR(e.position.z, 0.515, 1e-15);
  EXPECT_NEAR(e.scale.x, 0.0009, 1e-15);
  ellipsoid::EllipsoidFit fit;
  fit.params = {{0.0, 0.0, 0.52}, {0.0009, 0.0009, 0.0009}};
  const ellipsoid::PriorConfig prior;
  EXPECT_FALSE(needs_fallback(fit, st, prior));
  fit.params.scale.z = 0.2 * 0.2;  // semi-axis 0.2 > 3 × 0.03
  EXPECT_TRUE(needs_fallback(fit, st, prior));
  fit.params.scale.z = 0.0009;
  fit.params.position.z = 0.7;
  EXPECT_TRUE(needs_fallback(fit, st, prior));
  fit.params.position.z = 0.52;
  fit.diverged = true;
  EXPECT_TRUE(needs_fallback(fit, st, prior));
}

TEST(Reconstruct, SingleSphereCenterWithinOneCentimeter) {
  GeneratorConfig g;
  g.shapes = {Shape::Sphere};
  g.sizes = {0.05};
  const GeneratedScene s = generate_scene(21, g, 1);
  const Reconstruction rec = reconstruct(quantize(s.obs), fast_config(), &s.scene);
  ASSERT_TRUE(rec.objects[0].ok());
  EXPECT_EQ(rec.obs.intrinsics.width, 128);
  EXPECT_LE(rec.objects[0].center_error, 0.01);
  EXPECT_FALSE(rec.partial());
}

TEST(Reconstruct, EmptyMaskIsIsolated) {
  const GeneratedScene s = generate_scene(5, {}, 2);
  ObservationSet obs = quantize(s.obs);
  obs.masks[0] = Mask(obs.intrinsics.width, obs.intrinsics.height, 1);
  const Reconstruction rec = reconstruct(obs, fast_config(), &s.scene);
  EXPECT_EQ(rec.objects[0].status, "empty_object_cloud");
  EXPECT_FALSE(rec.objects[0].pose.has_value());
  ASSERT_TRUE(rec.objects[1].ok());
  EXPECT_LE(rec.objects[1].center_error, 0.01);
  EXPECT_EQ(rec.active, std::vector<int>{1});
  EXPECT_TRUE(rec.partial());
}

TEST(Reconstruct, RejectsObservationsWithoutMasks) {
  ObservationSet obs = generate_scene(5).obs;
  obs.masks.clear();
  EXPECT_THROW(reconstruct(obs, fast_config()), InvalidInput);
}

TEST(Reconstruct, WrittenOutputsAreComplete) {
  GeneratorConfig g;
  g.shapes = {Shape::Cube};
  const GeneratedScene s = generate_scene(8, g, 1);
  PipelineConfig cfg = fast_config();
  cfg.mesh_stage = true;
  cfg.adamw.steps = 5;
  const Reconstruction rec = reconstruct(quantize(s.obs), cfg, &s.scene);
  const fs::path d = temp_dir("rec_out");
  write_reconstruction(d, rec, cfg);
  for (const char* f : {"scene.json", "poses.json", "materials.json", "light.json", "report.json", "config.json",
                        "provenance.json", "timings.json", "preview.png", "preview_spheres.png", "trace_scene.jsonl",
                        "trace_mesh.jsonl", "meshes/object_0.obj"})
    EXPECT_TRUE(fs::exists(d / f)) << f;
  const json prov = read_json(d / "provenance.json");
  EXPECT_EQ(prov["config_hash"], config_hash(cfg));
  EXPECT_EQ(prov["seed"], cfg.seed);
  const render::SceneModel back = read_json(d / "scene.json").get<render::SceneModel>();
  EXPECT_EQ(back.objects.size(), 1u);
  EXPECT_EQ(read_obj(d / "meshes/object_0.obj").vertices, back.objects[0].mesh().vertices);
  EXPECT_EQ(read_json(d / "report.json")["seed"], cfg.seed);
}

TEST(Benchmark, MeanStd) {
  const MeanStd m = mean_std({1.0, 2.0, 3.0, 4.0});
  EXPECT_DOUBLE_EQ(m.mean, 2.5);
  EXPECT_DOUBLE_EQ(m.std, std::sqrt(1.25));
  EXPECT_EQ(mean_std({}).n, 0u);
}

TEST(Benchmark, RejectsZeroScenes) {
  BenchmarkConfig b;
  b.n_scenes = 0;
  EXPECT_THROW(run_benchmark(b, fast_config()), InvalidInput);
}

TEST(GradCheck, ParamRefsFollowTheRendererLayout) {
  auto [truth, s] = gradcheck_scene({}, 1);
  EXPECT_EQ(scene_param_refs(s).size(), render::ParamIndex(s).total());
  auto [t0, s0] = gradcheck_scene({}, 0);
  EXPECT_EQ(scene_param_refs(s0).size(), render::ParamIndex(s0).total());
}

TEST(SceneJson, RoundTripKeepsSpheresAndMeshes) {
  const GeneratedScene g = generate_scene(2);
  const render::SceneModel back = json(g.scene).get<render::SceneModel>();
  EXPECT_EQ(json(back), json(g.scene));
  EXPECT_THROW(json::parse(R"({"intrinsics": {"fx": -1}})").get<render::SceneModel>(), InvalidInput);
}

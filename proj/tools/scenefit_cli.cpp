// scenefit command-line interface.
// Exit codes: 0 success, 2 partial (a stage or check failed), 1 invalid input.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "scenefit/pipeline/benchmark.hpp"
#include "scenefit/pipeline/gradcheck.hpp"

using namespace scenefit;
using namespace scenefit::pipeline;

namespace {

constexpr int kOk = 0, kInvalid = 1, kPartial = 2;

PipelineConfig load_config(const std::string& path) {
  if (path.empty()) return {};
  try {
    return read_json(path).get<PipelineConfig>();
  } catch (const json::exception& e) {
    throw InvalidInput("bad config '" + path + "': " + e.what());
  }
}

render::SceneModel load_scene(const std::string& path) {
  try {
    return read_json(path).get<render::SceneModel>();
  } catch (const json::exception& e) {
    throw InvalidInput("bad scene '" + path + "': " + e.what());
  }
}

int cmd_generate(std::uint64_t seed, int n, int objects, const std::string& out) {
  if (n < 1) throw InvalidInput("--n must be at least 1");
  for (int i = 0; i < n; ++i) {
    const std::uint64_t s = seed + static_cast<std::uint64_t>(i);
    const GeneratedScene g = generate_scene(s, {}, objects);
    const fs::path dir = fs::path(out) / ("scene_" + std::to_string(s));
    save_observation(dir, g.obs);
    write_json(dir / "scene.json", g.scene);
    write_json(dir / "ground_truth.json", g.spec);
    write_json(dir / "provenance.json", {{"seed", s}, {"threads", thread_count()}});
    std::cout << dir.string() << ": " << g.spec.objects.size() << " objects\n";
  }
  return kOk;
}

int cmd_reconstruct(const std::string& rgb, const std::string& depth, const std::string& masks,
                    const std::string& intrinsics, const std::string& config, const std::string& out,
                    const std::string& gt_path) {
  PipelineConfig cfg = load_config(config);
  cfg.output_dir = out;
  const ObservationSet obs = load_observation(rgb, depth, masks, intrinsics);
  std::optional<render::SceneModel> gt;
  if (!gt_path.empty()) {
    gt = load_scene(gt_path);
    if (gt->intrinsics != obs.intrinsics) throw InvalidInput("ground-truth intrinsics differ from the input");
  }
  const Reconstruction rec = reconstruct(obs, cfg, gt ? &*gt : nullptr);
  write_reconstruction(out, rec, cfg);
  for (std::size_t k = 0; k < rec.objects.size(); ++k) {
    const ObjectResult& o = rec.objects[k];
    std::cout << "object " << k << ": " << o.status;
    if (o.metrics)
      std::cout << "  center error " << o.center_error << " m, chamfer(x1e3) " << o.metrics->chamfer_e3
                << ", AR_VSD " << o.metrics->ar_vsd;
    std::cout << '\n';
  }
  if (!rec.failed_stage.empty()) std::cerr << "stage '" << rec.failed_stage << "' failed: " << rec.failure << '\n';
  return rec.partial() ? kPartial : kOk;
}

int cmd_render(const std::string& scene_path, const std::string& out, double fraction) {
  render::SceneModel s = load_scene(scene_path);
  if (fraction != 1.0) s.intrinsics = s.intrinsics.scaled(fraction);
  save_observation(out, observe(s));
  return kOk;
}

int cmd_evaluate(const std::string& pred, const std::string& gt_path, const std::string& out,
                 const std::string& config) {
  const PipelineConfig cfg = load_config(config);
  const json pj = read_json(pred);
  const render::SceneModel est = pj.get<render::SceneModel>();
  std::vector<int> index;
  if (pj.contains("mask_index"))
    index = pj.at("mask_index").get<std::vector<int>>();
  else
    for (std::size_t j = 0; j < est.objects.size(); ++j) index.push_back(static_cast<int>(j));
  const render::SceneModel gt = load_scene(gt_path);
  std::vector<ObjectResult> results(gt.objects.size());
  for (auto& r : results) r.status = "missing";
  for (int k : index)
    if (k >= 0 && k < static_cast<int>(results.size())) results[k].status = "ok";
  evaluate_objects(est, index, gt, cfg, results);
  json objs = json::array();
  std::vector<double> vsd, ch, hd, ce;
  for (std::size_t k = 0; k < results.size(); ++k) {
    const ObjectResult& r = results[k];
    objs.push_back({{"object", k}, {"status", r.status}, {"metrics", metric_json(r.metrics)},
                    {"center_error", r.metrics ? json(r.center_error) : json(nullptr)}});
    if (!r.metrics) continue;
    vsd.push_back(r.metrics->ar_vsd);
    ch.push_back(r.metrics->chamfer_e3);
    hd.push_back(r.metrics->hausdorff);
    ce.push_back(r.center_error);
  }
  const json report{{"objects", objs},
                    {"ar_vsd", to_json_value(mean_std(vsd))},
                    {"chamfer_e3", to_json_value(mean_std(ch))},
                    {"hausdorff", to_json_value(mean_std(hd))},
                    {"center_error", to_json_value(mean_std(ce))}};
  write_json(out, report);
  std::cout << report.dump(2) << '\n';
  return vsd.size() == results.size() ? kOk : kPartial;
}

int cmd_gradcheck(const std::string& config) {
  GradCheckConfig c;
  if (!config.empty()) c = read_json(config).get<GradCheckConfig>();
  const GradCheckResult r = run_gradcheck(c);
  std::printf("shading/light: %d/%d within %g (worst %.3g at %s)\n", r.shading_pass, r.shading_total, c.shading_tol,
              r.worst_shading_error, r.worst_shading_param.c_str());
  std::printf("geometry: %d/%d within %g (%.1f%%, need %.0f%%)\n", r.geometry_pass, r.geometry_total, c.geometry_tol,
              100.0 * r.geometry_pass_fraction(), 100.0 * c.geometry_fraction);
  return r.passed(c) ? kOk : kPartial;
}

int cmd_benchmark(int n, std::uint64_t seed, int objects, const std::string& config, const std::string& out) {
  PipelineConfig cfg = load_config(config);
  cfg.output_dir = out;
  BenchmarkConfig b;
  b.n_scenes = n;
  b.first_seed = seed;
  b.n_objects = objects;
  b.output_dir = out;
  const BenchmarkResult r = run_benchmark(b, cfg);
  json s = summary_json(r.summary);
  s["timings"] = summary_timings_json(r.summary);
  std::cout << s.dump(2) << '\n';
  return r.summary.scene_failures + r.summary.object_failures > 0 ? kPartial : kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Scene reconstruction from RGB-D images and object masks"};
  app.require_subcommand(1);

  std::uint64_t seed = 1;
  int n = 1, objects = 0;
  double fraction = 1.0;
  std::string out, rgb, depth, masks, intrinsics, config, scene, pred, gt;

  auto* gen = app.add_subcommand("generate", "Render synthetic tabletop scenes with ground truth");
  gen->add_option("--seed", seed, "First scene seed");
  gen->add_option("--n", n, "Number of scenes");
  gen->add_option("--objects", objects, "Objects per scene (0 samples 1-5)")->check(CLI::Range(0, 5));
  gen->add_option("--out", out, "Output directory")->required();

  auto* rec = app.add_subcommand("reconstruct", "Fit spheres, meshes, materials and light to an observation");
  rec->add_option("--rgb", rgb, "8-bit RGB PNG")->required()->check(CLI::ExistingFile);
  rec->add_option("--depth", depth, "16-bit depth PNG in millimeters")->required()->check(CLI::ExistingFile);
  rec->add_option("--masks", masks, "Mask manifest JSON")->required()->check(CLI::ExistingFile);
  rec->add_option("--intrinsics", intrinsics, "Intrinsics JSON")->required()->check(CLI::ExistingFile);
  rec->add_option("--config", config, "Pipeline config JSON")->check(CLI::ExistingFile);
  rec->add_option("--gt", gt, "Ground-truth scene JSON for metrics")->check(CLI::ExistingFile);
  rec->add_option("--out", out, "Output directory")->required();

  auto* ren = app.add_subcommand("render", "Render a scene JSON to observation files");
  ren->add_option("--scene", scene, "Scene JSON")->required()->check(CLI::ExistingFile);
  ren->add_option("--fraction", fraction, "Resolution fraction")->check(CLI::Range(1e-3, 1.0));
  ren->add_option("--out", out, "Output directory")->required();

  auto* ev = app.add_subcommand("evaluate", "Score a reconstructed scene against ground truth");
  ev->add_option("--pred", pred, "Reconstructed scene.json")->required()->check(CLI::ExistingFile);
  ev->add_option("--gt", gt, "Ground-truth scene.json")->required()->check(CLI::ExistingFile);
  ev->add_option("--config", config, "Pipeline config JSON (metric settings)")->check(CLI::ExistingFile);
  ev->add_option("--out", out, "Report JSON path")->required();

  auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of the scene loss gradient");
  gc->add_option("--config", config, "Gradcheck config JSON")->check(CLI::ExistingFile);

  auto* bm = app.add_subcommand("benchmark", "Generate and reconstruct scenes, then aggregate metrics");
  bm->add_option("--n", n, "Number of scenes");
  bm->add_option("--seed", seed, "First scene seed");
  bm->add_option("--objects", objects, "Objects per scene (0 samples 1-5)")->check(CLI::Range(0, 5));
  bm->add_option("--config", config, "Pipeline config JSON")->check(CLI::ExistingFile);
  bm->add_option("--out", out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kInvalid;
  }

  try {
    if (*gen) return cmd_generate(seed, n, objects, out);
    if (*rec) return cmd_reconstruct(rgb, depth, masks, intrinsics, config, out, gt);
    if (*ren) return cmd_render(scene, out, fraction);
    if (*ev) return cmd_evaluate(pred, gt, out, config);
    if (*gc) return cmd_gradcheck(config);
    if (*bm) return cmd_benchmark(n, seed, objects, config, out);
  } catch (const InvalidInput& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return kInvalid;
  } catch (const json::exception& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return kInvalid;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kPartial;
  }
  return kInvalid;
}

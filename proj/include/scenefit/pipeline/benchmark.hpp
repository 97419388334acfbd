#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "scenefit/pipeline/generator.hpp"
#include "scenefit/pipeline/reconstruct.hpp"

namespace scenefit::pipeline {

struct BenchmarkConfig {
  int n_scenes = 10;
  /// Scene i uses generator seed first_seed + i.
  std::uint64_t first_seed = 1;
  /// Fixed object count per scene; 0 samples it.
  int n_objects = 0;
  GeneratorConfig generator;
  /// Per-scene outputs and summary are written here when set.
  std::optional<fs::path> output_dir;
};

struct SceneRun {
  std::uint64_t seed = 0;
  GeneratedScene generated;
  std::optional<Reconstruction> rec;
  std::string error;  // set when the scene failed as a whole
};

struct MeanStd {
  double mean = 0.0, std = 0.0;
  std::size_t n = 0;
};

/// Population mean and standard deviation; zeros for an empty sample.
inline MeanStd mean_std(const std::vector<double>& v) {
  MeanStd r;
  r.n = v.size();
  if (v.empty()) return r;
  for (double x : v) r.mean += x;
  r.mean /= static_cast<double>(v.size());
  for (double x : v) r.std += (x - r.mean) * (x - r.mean);
  r.std = std::sqrt(r.std / static_cast<double>(v.size()));
  return r;
}

inline json to_json_value(const MeanStd& m) { return {{"mean", m.mean}, {"std", m.std}, {"n", m.n}}; }

struct BenchmarkSummary {
  MeanStd ar_vsd, chamfer_e3, hausdorff, center_error, iou;
  MeanStd time_camera, time_ellipsoid, time_scene, time_mesh;
  int scenes = 0, scene_failures = 0, objects = 0, object_failures = 0;
};

struct BenchmarkResult {
  std::vector<SceneRun> runs;
  BenchmarkSummary summary;
};

inline BenchmarkSummary summarize(const std::vector<SceneRun>& runs) {
  BenchmarkSummary s;
  std::vector<double> vsd, ch, hd, ce, iou, tc, te, ts, tm;
  for (const auto& r : runs) {
    ++s.scenes;
    if (!r.rec) {
      ++s.scene_failures;
      continue;
    }
    tc.push_back(r.rec->times.camera);
    te.push_back(r.rec->times.ellipsoid);
    ts.push_back(r.rec->times.scene);
    tm.push_back(r.rec->times.mesh);
    for (const auto& o : r.rec->objects) {
      ++s.objects;
      if (!o.ok() || !o.metrics) {
        ++s.object_failures;
        continue;
      }
      vsd.push_back(o.metrics->ar_vsd);
      ch.push_back(o.metrics->chamfer_e3);
      hd.push_back(o.metrics->hausdorff);
      iou.push_back(o.metrics->iou);
      ce.push_back(o.center_error);
    }
  }
  s.ar_vsd = mean_std(vsd);
  s.chamfer_e3 = mean_std(ch);
  s.hausdorff = mean_std(hd);
  s.center_error = mean_std(ce);
  s.iou = mean_std(iou);
  s.time_camera = mean_std(tc);
  s.time_ellipsoid = mean_std(te);
  s.time_scene = mean_std(ts);
  s.time_mesh = mean_std(tm);
  return s;
}

/// Accuracy part of the summary; identical across runs for a fixed seed.
inline json summary_json(const BenchmarkSummary& s) {
  return {{"scenes", s.scenes},
          {"scene_failures", s.scene_failures},
          {"objects", s.objects},
          {"object_failures", s.object_failures},
          {"ar_vsd", to_json_value(s.ar_vsd)},
          {"chamfer_e3", to_json_value(s.chamfer_e3)},
          {"hausdorff", to_json_value(s.hausdorff)},
          {"center_error", to_json_value(s.center_error)},
          {"iou", to_json_value(s.iou)}};
}

inline json summary_timings_json(const BenchmarkSummary& s) {
  return {{"camera", to_json_value(s.time_camera)},
          {"ellipsoid", to_json_value(s.time_ellipsoid)},
          {"scene", to_json_value(s.time_scene)},
          {"mesh", to_json_value(s.time_mesh)}};
}

/// Generates and reconstructs scenes one after another. Inputs are quantized
/// as they would be after a round trip through the file formats.
inline BenchmarkResult run_benchmark(const BenchmarkConfig& bcfg, const PipelineConfig& cfg) {
  if (bcfg.n_scenes < 1) throw InvalidInput("benchmark needs at least one scene");
  cfg.validate();
  BenchmarkResult res;
  for (int i = 0; i < bcfg.n_scenes; ++i) {
    SceneRun run;
    run.seed = bcfg.first_seed + static_cast<std::uint64_t>(i);
    try {
      run.generated = generate_scene(run.seed, bcfg.generator, bcfg.n_objects);
      run.rec = reconstruct(quantize(run.generated.obs), cfg, &run.generated.scene);
      if (bcfg.output_dir) {
        const fs::path dir = *bcfg.output_dir / ("scene_" + std::to_string(run.seed));
        write_json(dir / "ground_truth.json", run.generated.spec);
        write_reconstruction(dir, *run.rec, cfg);
      }
    } catch (const Error& e) {
      run.error = e.what();
      run.rec.reset();
    }
    res.runs.push_back(std::move(run));
  }
  res.summary = summarize(res.runs);
  if (bcfg.output_dir) {
    json failures = json::array();
    for (const auto& r : res.runs)
      if (!r.error.empty()) failures.push_back({{"seed", r.seed}, {"error", r.error}});
    json summary = summary_json(res.summary);
    summary["failures"] = failures;
    summary["first_seed"] = bcfg.first_seed;
    summary["config_hash"] = config_hash(cfg);
    write_json(*bcfg.output_dir / "summary.json", summary);
    write_json(*bcfg.output_dir / "timings.json", summary_timings_json(res.summary));
  }
  return res;
}

}  // namespace scenefit::pipeline

#pragma once

#include <cstdint>
#include <cstdio>
#include <string>

#include "scenefit/mesh_opt/mesh_opt.hpp"
#include "scenefit/pipeline/json_io.hpp"

namespace scenefit::pipeline {

struct PipelineConfig {
  /// Input images are subsampled to this fraction before fitting (0.2 turns
  /// 640×480 into 128×96).
  double resolution_fraction = 0.2;
  std::uint64_t seed = 1;
  bool line_constraint = true;
  std::string output_dir = "out";

  ellipsoid::PriorConfig prior;
  scene_opt::LossWeights weights;
  scene_opt::BarrierConfig barrier;
  render::SoftMaskConfig soft_mask;
  optim::LbfgsConfig phase_a = scene_opt::default_phase_lbfgs(100);
  optim::LbfgsConfig phase_b = scene_opt::default_phase_lbfgs(200);
  optim::AdamwConfig adamw;

  bool mesh_stage = true;
  int mesh_level = 2;
  int cage_level = 1;
  double cage_inflation = 1.3;
  int snapshot_every = 500;
  /// Checker layout assumed for the floor; colors and material are fitted.
  render::FloorPattern floor_pattern{true, {0.3, 0.3, 0.3}, 0.08};

  metrics::VsdConfig vsd;
  std::size_t metric_samples = 3000;

  void validate() const {
    if (!(resolution_fraction > 0.0 && resolution_fraction <= 1.0))
      throw InvalidInput("resolution fraction must lie in (0, 1]");
    if (metric_samples == 0) throw InvalidInput("metric_samples must be positive");
    prior.validate();
    scene_config().validate();
    mesh_config().validate();
  }

  scene_opt::SceneOptConfig scene_config() const {
    scene_opt::SceneOptConfig c;
    c.weights = weights;
    c.barrier = barrier;
    c.render.soft_mask = soft_mask;
    c.phase_a = phase_a;
    c.phase_b = phase_b;
    c.line_constraint = line_constraint;
    c.seed = seed;
    return c;
  }

  mesh_opt::MeshOptConfig mesh_config() const {
    mesh_opt::MeshOptConfig c;
    c.mesh_level = mesh_level;
    c.cage_level = cage_level;
    c.cage_inflation = cage_inflation;
    c.adamw = adamw;
    c.weights = weights;
    c.barrier = barrier;
    c.render.soft_mask = soft_mask;
    c.snapshot_every = snapshot_every;
    return c;
  }
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(PipelineConfig, resolution_fraction, seed, line_constraint, output_dir,
                                                prior, weights, barrier, soft_mask, phase_a, phase_b, adamw,
                                                mesh_stage, mesh_level, cage_level, cage_inflation, snapshot_every,
                                                floor_pattern, vsd, metric_samples)

/// FNV-1a over the canonical JSON dump, as 16 hex digits.
inline std::string config_hash(const PipelineConfig& cfg) {
  const std::string s = json(cfg).dump();
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace scenefit::pipeline

#pragma once

#include "scenefit/camera/camera.hpp"
#include "scenefit/diff/gradient.hpp"
#include "scenefit/ellipsoid/ellipsoid.hpp"
#include "scenefit/mesh_opt/mesh_opt.hpp"
#include "scenefit/metrics/metrics.hpp"
#include "scenefit/optim/adamw.hpp"
#include "scenefit/optim/lbfgs.hpp"
#include "scenefit/pipeline/benchmark.hpp"
#include "scenefit/pipeline/config.hpp"
#include "scenefit/pipeline/generator.hpp"
#include "scenefit/pipeline/gradcheck.hpp"
#include "scenefit/pipeline/io.hpp"
#include "scenefit/pipeline/reconstruct.hpp"
#include "scenefit/render/renderer.hpp"
#include "scenefit/scene_opt/floor_fit.hpp"
#include "scenefit/scene_opt/scene_opt.hpp"

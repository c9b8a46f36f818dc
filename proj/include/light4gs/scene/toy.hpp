#pragma once

#include <cstdint>

#include "light4gs/scene/types.hpp"

namespace l4gs::scene {

/// Procedural dynamic scene whose deformation is an exact hexplane + MLP
/// program, so the generated bundle is its own ground truth.
struct ToyConfig {
  std::size_t primitives = 200;
  std::size_t timestamps = 12;
  std::size_t views = 2;
  std::size_t image_size = 64;
  std::size_t channels = 8;     // hexplane hidden dim
  std::size_t base_res = 16;    // base plane resolution (rows and columns)
  std::size_t base_cols = 0;    // 0 = same as base_res; lets tests exercise non-square/odd planes
  std::size_t scales = 2;
  std::size_t hidden = 16;      // deformation MLP width
  std::size_t sh_k = 16;        // SH degree 3
  double faint_fraction = 0.0;  // share of primitives with opacity < 0.02
  double drift = 0.2;           // world units of x drift over t in [0,1]
  double wobble = 0.15;         // amplitude of the oscillatory y motion
  double high_band_sigma = 0.03;
  std::uint64_t seed = 0;
};

/// Float32-exact scene ready to save.
SceneBundle generate_toy_scene(const ToyConfig& cfg);

/// Noise magnitudes used to derive a training start point from ground truth.
struct Perturbation {
  double position = 0.01;
  double log_scale = 0.1;
  double opacity = 0.05;
  double color = 0.1;
  double plane = 0.02;
  double weight = 0.01;
};

/// Copy of `scene` with Gaussian noise on the learnable attributes. Opacity
/// stays in [0,1], rotations stay unit.
SceneBundle perturb_scene(const SceneBundle& scene, const Perturbation& p, std::uint64_t seed);

/// Timestamps halfway between the training timestamps, used for held-out renders.
std::vector<double> held_out_times(const SceneBundle& scene);

}  // namespace l4gs::scene

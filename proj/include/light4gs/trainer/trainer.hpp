#pragma once

#include <random>
#include <string>
#include <vector>

#include "light4gs/codec/compressor.hpp"
#include "light4gs/nn/graph.hpp"
#include "light4gs/scene/deform.hpp"
#include "light4gs/scene/types.hpp"
#include "light4gs/trainer/config.hpp"

namespace l4gs::trainer {

/// Ground-truth images per timestamp and camera.
struct Targets {
  std::vector<double> times;
  std::vector<std::vector<nn::Tensor>> images;  // [time][view], each [3,H,W]
  std::vector<scene::Camera> cameras;
};

Targets render_targets(const scene::SceneBundle& reference, const std::vector<double>& times);
/// Targets at the reference scene's own timestamps.
Targets training_targets(const scene::SceneBundle& reference);

/// PSNR of the mean squared error over every target image.
double render_psnr(const scene::SceneBundle& model, const Targets& targets);

/// Learnable state. Primitive attributes live in Parameters; the hexplane and
/// deformation network are trained in place inside `scene`.
class Model {
 public:
  Model(scene::SceneBundle scene, codec::CodecModels models);

  /// Scene with primitives rebuilt from the parameters.
  const scene::SceneBundle& scene();
  codec::CodecModels& models() { return models_; }
  std::size_t size() const { return mu.value.dim(0); }

  /// Keeps the listed primitives (ascending indices) and drops their momentum.
  void keep(const std::vector<std::size_t>& kept);
  /// Unit quaternions, scale >= kMinScale, opacity in [0,1].
  void project();

  std::vector<nn::Parameter*> primitive_parameters();
  scene::SceneBundle& raw_scene() { return scene_; }

  nn::Parameter mu, rot, scale, opacity, sh;

 private:
  scene::SceneBundle scene_;
  codec::CodecModels models_;
};

struct LossOptions {
  double lambda = 0.0;
  double alpha = 0.0;
  bool entropy = false;   // add the rate term
  bool quantize = false;  // render from noise-quantized planes
  bool learn_q = false;   // gradients reach the quantization steps
  double rate_normalizer = 1.0;
};

struct LossTerms {
  double total = 0.0;
  double reconstruction = 0.0;
  double hex_bits = 0.0;
  double sh_bits = 0.0;
  double smoothness = 0.0;
};

/// reconstruction + lambda * (hexplane bits + SH bits) / rate_normalizer + alpha * smoothness
/// for one timestamp, averaged over its views.
nn::Var total_loss(nn::Graph& g, Model& m, const Targets& targets, std::size_t time_index, const LossOptions& opt,
                   std::mt19937_64& rng, LossTerms* terms = nullptr);

/// Mean squared difference between adjacent time columns, averaged over
/// every space-time plane of every scale.
nn::Var temporal_smoothness(nn::Graph& g, const scene::PlaneVars& planes);

struct LogRow {
  std::size_t iteration = 0;
  bool entropy = false;
  LossTerms terms;
  std::size_t primitives = 0;
  std::vector<double> steps;  // [scale][group] flattened
};

std::string log_csv(const std::vector<LogRow>& rows);

struct TrainResult {
  scene::SceneBundle scene;
  codec::CodecModels models;
  std::vector<LogRow> log;
};

/// Bits of the entropy terms are divided by this: hexplane values plus SH
/// coefficients of the starting scene.
double rate_normalizer(const scene::SceneBundle& scene);

/// Runs warmup, the entropy-constrained phase with its every-third-iteration
/// rate term, pruning and learnable steps. Deterministic for a given config.
/// Throws TrainingError on non-finite loss or divergence; rows logged so far
/// stay in `progress` when it is given.
TrainResult train(const TrainConfig& cfg, const scene::SceneBundle& init, const Targets& targets,
                  std::vector<LogRow>* progress = nullptr);

/// Models matching `scene` as train() would build them before its entropy phase.
codec::CodecModels initial_models(const TrainConfig& cfg, const scene::SceneBundle& scene);

}  // namespace l4gs::trainer

#include "light4gs/scene/toy.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include "light4gs/errors.hpp"
#include "light4gs/scene/io.hpp"

namespace l4gs::scene {

namespace {

Quat random_unit_quat(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Quat q;
  double norm = 0.0;
  do {
    for (auto& v : q) v = n(rng);
    norm = std::sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]);
  } while (norm < 1e-3);
  for (auto& v : q) v /= norm;
  return q;
}

// Smooth field on [0,1]^2 with values in [0.6, 1.4].
std::vector<double> smooth_field(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  const double p1 = phase(rng), p2 = phase(rng), p3 = phase(rng);
  std::vector<double> f(rows * cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) {
      const double u = rows > 1 ? static_cast<double>(i) / static_cast<double>(rows - 1) : 0.0;
      const double v = cols > 1 ? static_cast<double>(j) / static_cast<double>(cols - 1) : 0.0;
      const double s = 0.5 * std::sin(std::numbers::pi * u + p1) * std::cos(std::numbers::pi * v + p2) +
                       0.5 * std::sin(2.0 * std::numbers::pi * (u + v) + p3) * 0.5;
      f[i * cols + j] = 1.0 + 0.4 * std::clamp(s / 0.75, -1.0, 1.0);
    }
  return f;
}

}  // namespace

SceneBundle generate_toy_scene(const ToyConfig& cfg) {
  if (cfg.primitives == 0 || cfg.timestamps == 0 || cfg.views == 0 || cfg.image_size == 0)
    throw InputError("toy scene needs primitives, timestamps, views and pixels");
  if (cfg.channels < 2 || cfg.hidden < 3 || cfg.sh_k == 0 || cfg.scales == 0 || cfg.base_res < 2)
    throw InputError("toy scene needs >= 2 channels, >= 3 hidden units, >= 2 plane rows");
  if (!(cfg.faint_fraction >= 0.0 && cfg.faint_fraction <= 1.0)) throw InputError("faint_fraction outside [0,1]");

  std::mt19937_64 rng(cfg.seed);
  SceneBundle scene;
  scene.bounds = SceneBounds{{-1.2, -1.2, -1.2}, {1.2, 1.2, 1.2}};
  scene.sh_k = cfg.sh_k;
  scene.timestamps = cfg.timestamps;

  const double ps = 2.4 / static_cast<double>(cfg.image_size);
  for (std::size_t v = 0; v < cfg.views; ++v)
    scene.cameras.push_back(orbit_camera(0.6 * static_cast<double>(v), cfg.image_size, cfg.image_size, ps));

  std::uniform_real_distribution<double> pos(-1.0, 1.0), log_scale(std::log(0.04), std::log(0.12)),
      opaque(0.5, 1.0), faint(0.001, 0.02);
  std::normal_distribution<double> color(0.0, 0.8), high(0.0, cfg.high_band_sigma);
  const auto faint_count = static_cast<std::size_t>(std::floor(cfg.faint_fraction * static_cast<double>(cfg.primitives)));
  for (std::size_t i = 0; i < cfg.primitives; ++i) {
    GaussianPrimitive p;
    p.mu = {pos(rng), pos(rng), pos(rng)};
    p.rot = random_unit_quat(rng);
    for (auto& s : p.scale) s = std::exp(log_scale(rng));
    p.opacity = opaque(rng);
    p.sh.assign(3 * cfg.sh_k, 0.0);
    for (std::size_t ch = 0; ch < 3; ++ch) {
      p.sh[ch * cfg.sh_k] = color(rng);
      for (std::size_t b = 1; b < cfg.sh_k; ++b) p.sh[ch * cfg.sh_k + b] = high(rng);
    }
    scene.primitives.push_back(std::move(p));
  }
  // Faint primitives are spread over the index range rather than bunched at the end.
  std::vector<std::size_t> idx(cfg.primitives);
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::shuffle(idx.begin(), idx.end(), rng);
  for (std::size_t k = 0; k < faint_count; ++k) scene.primitives[idx[k]].opacity = faint(rng);

  const std::size_t cols = cfg.base_cols ? cfg.base_cols : cfg.base_res;
  scene.hexplane = MultiscaleHexplane(cfg.channels, cfg.base_res, cols, cfg.scales, 1.0);
  auto& xt = scene.hexplane.plane(0, 3);
  for (std::size_t i = 0; i < xt.dim(1); ++i)
    for (std::size_t j = 0; j < xt.dim(2); ++j) {
      const double t = xt.dim(2) > 1 ? static_cast<double>(j) / static_cast<double>(xt.dim(2) - 1) : 0.0;
      xt.at(0, i, j) = 1.0 + 0.5 * std::sin(2.0 * std::numbers::pi * t);
    }
  auto& xy = scene.hexplane.plane(0, 0);
  for (std::size_t ch = 0; ch < 2; ++ch) {
    const auto f = smooth_field(xy.dim(1), xy.dim(2), rng);
    for (std::size_t i = 0; i < xy.dim(1); ++i)
      for (std::size_t j = 0; j < xy.dim(2); ++j) xy.at(ch, i, j) = f[i * xy.dim(2) + j];
  }

  // Layer 1 routes feature 0, feature 1 and t to three hidden units; layer 2
  // passes them through; the output layer turns t into x drift and the
  // feature difference into y wobble.
  const std::size_t in = scene.hexplane.feature_dim() + 1, hid = cfg.hidden;
  scene.deformation = DeformationNetwork({in, hid, hid, kDeformOutputs});
  auto& l0 = scene.deformation.layers[0].weight.value;
  l0.at(0, 0) = 1.0;
  l0.at(1, 1) = 1.0;
  l0.at(2, in - 1) = 1.0;
  auto& l1 = scene.deformation.layers[1].weight.value;
  for (std::size_t k = 0; k < 3; ++k) l1.at(k, k) = 1.0;
  auto& l2 = scene.deformation.layers[2].weight.value;
  l2.at(0, 2) = cfg.drift;
  l2.at(1, 0) = cfg.wobble;
  l2.at(1, 1) = -cfg.wobble;

  snap_scene(scene);
  // Snapping can nudge a quaternion norm by ~1e-8; renormalize in float32 space and snap again.
  for (auto& p : scene.primitives) {
    double n = 0.0;
    for (double v : p.rot) n += v * v;
    n = std::sqrt(n);
    for (auto& v : p.rot) v = nn::snap_float32(v / n);
  }
  scene.validate();
  return scene;
}

SceneBundle perturb_scene(const SceneBundle& scene, const Perturbation& pt, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  SceneBundle out = scene;
  for (auto& p : out.primitives) {
    for (auto& v : p.mu) v += pt.position * n(rng);
    for (auto& v : p.scale) v *= std::exp(pt.log_scale * n(rng));
    p.opacity = std::clamp(p.opacity + pt.opacity * n(rng), 0.0, 1.0);
    const std::size_t k = out.sh_k;
    for (std::size_t ch = 0; ch < 3; ++ch) p.sh[ch * k] += pt.color * n(rng);
  }
  for (auto* prm : out.hexplane.parameters())
    for (auto& v : prm->value.values()) v += pt.plane * n(rng);
  for (auto* prm : out.deformation.parameters())
    for (auto& v : prm->value.values()) v += pt.weight * n(rng);
  snap_scene(out);
  return out;
}

std::vector<double> held_out_times(const SceneBundle& scene) {
  std::vector<double> t;
  if (scene.timestamps <= 1) return {0.5};
  for (std::size_t i = 0; i + 1 < scene.timestamps; ++i) t.push_back((scene.time_of(i) + scene.time_of(i + 1)) / 2.0);
  return t;
}

}  // namespace l4gs::scene

// Acceptance suite: one PASS/FAIL line per criterion. Pass criterion numbers
// as arguments to run a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "grad_check.hpp"
#include "light4gs/codec/compressor.hpp"
#include "light4gs/codec/container.hpp"
#include "light4gs/codec/hexplane_codec.hpp"
#include "light4gs/errors.hpp"
#include "light4gs/mhcm/model.hpp"
#include "light4gs/mhcm/rate.hpp"
#include "light4gs/scene/deform.hpp"
#include "light4gs/scene/io.hpp"
#include "light4gs/scene/render.hpp"
#include "light4gs/scene/toy.hpp"
#include "light4gs/stp/significance.hpp"
#include "light4gs/trainer/rd.hpp"
#include "light4gs/trainer/trainer.hpp"

using namespace l4gs;
using l4gs::testing::random_tensor;
using nn::Graph;
using nn::Tensor;
using nn::Var;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

std::string num(double v, int precision = 3) {
  std::ostringstream o;
  o.precision(precision);
  o << v;
  return o.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

io::Bytes primitives_bytes(const std::vector<scene::GaussianPrimitive>& prims, std::size_t sh_k) {
  io::ByteWriter w;
  scene::write_primitives(w, prims, sh_k, false);
  return w.take();
}

io::Bytes deformation_bytes(const scene::DeformationNetwork& net) {
  io::ByteWriter w;
  scene::write_deformation(w, net);
  return w.take();
}

io::Bytes context_bytes(mhcm::ContextModel& m) {
  io::ByteWriter w;
  codec::write_context_model(w, m);
  return w.take();
}

/// Small randomized toy scene; odd plane extents come up often.
scene::ToyConfig random_toy(std::mt19937& rng, std::uint64_t seed) {
  auto pick = [&](std::size_t lo, std::size_t hi) { return lo + rng() % (hi - lo + 1); };
  const std::size_t sh_ks[] = {1, 4, 9, 16};
  scene::ToyConfig c;
  c.primitives = pick(5, 120);
  c.timestamps = pick(2, 8);
  c.views = pick(1, 3);
  c.image_size = 16;
  c.channels = pick(2, 6);
  c.base_res = pick(2, 9);
  c.base_cols = rng() % 2 ? 0 : pick(2, 9);
  c.scales = pick(1, 3);
  c.hidden = pick(4, 12);
  c.sh_k = sh_ks[rng() % 4];
  c.faint_fraction = (rng() % 3) * 0.25;
  c.seed = seed;
  return c;
}

codec::DefaultModelOptions random_model_options(std::mt19937& rng, std::uint64_t seed) {
  std::uniform_real_distribution<double> q(0.005, 0.05);
  codec::DefaultModelOptions o;
  o.mhcm.hyper = 2 + rng() % 3;
  o.mhcm.latent = 1 + rng() % 2;
  o.mhcm.hidden = 4 + rng() % 9;
  o.q_space_only = q(rng);
  o.q_space_time = q(rng);
  o.seed = seed;
  return o;
}

// ---- 1 ---------------------------------------------------------------------

Outcome lossless_round_trip() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937 rng(101);
  Outcome out;
  std::size_t scenes = 0, odd = 0;
  for (std::uint64_t i = 0; i < 100; ++i) {
    const auto toy = random_toy(rng, 1000 + i);
    const auto s = scene::generate_toy_scene(toy);
    auto models = codec::default_models(s, random_model_options(rng, 2000 + i));
    const auto res = codec::compress(s, models);
    auto back = codec::decompress(res.container);
    odd += (s.hexplane.base_rows % 2) || (s.hexplane.base_cols % 2);

    bool ok = back.scene.hexplane.same_values(res.quantized_hexplane);
    ok = ok && codec::sh_matrix(back.scene.primitives, s.sh_k) == res.quantized_sh;
    ok = ok && primitives_bytes(back.scene.primitives, s.sh_k) == primitives_bytes(s.primitives, s.sh_k);
    ok = ok && deformation_bytes(back.scene.deformation) == deformation_bytes(s.deformation);
    ok = ok && context_bytes(back.models.context) == context_bytes(models.context);
    ok = ok && back.models.sh.same_values(models.sh);
    ok = ok && back.scene.cameras == s.cameras && back.scene.timestamps == s.timestamps;
    if (!ok) {
      out.pass = false;
      out.detail = "scene " + std::to_string(i) + " differs after decoding; ";
      break;
    }
    ++scenes;
  }
  const double secs = seconds_since(t0);
  if (secs >= 300.0) out.pass = false;
  out.detail += std::to_string(scenes) + " scenes exact (" + std::to_string(odd) + " with odd base planes) in " +
                num(secs) + " s";
  return out;
}

// ---- 2 ---------------------------------------------------------------------

Outcome rate_fidelity() {
  std::mt19937 rng(202);
  Outcome out;
  double lo = 1e9, hi = -1e9;
  std::vector<scene::SceneBundle> scenes;
  for (std::uint64_t k = 0; k < 5; ++k) scenes.push_back(scene::generate_toy_scene({.seed = 3000 + k}));
  for (std::uint64_t i = 0; i < 50; ++i) {
    const auto& s = scenes[i % scenes.size()];
    auto models = codec::default_models(s, random_model_options(rng, 4000 + i));
    const auto res = codec::compress(s, models);
    const double est = res.hexplane_estimate_bits / 8.0;
    const double got = static_cast<double>(res.hexplane_stream_bytes);
    const double rel = (got - est) / est;
    lo = std::min(lo, rel);
    hi = std::max(hi, rel);
    if (got < est * 0.99 || got > est * 1.02 + 64.0) {
      out.pass = false;
      out.detail = "model " + std::to_string(i) + ": " + num(got) + " B vs estimate " + num(est) + " B; ";
    }
  }
  out.detail += "stream minus estimate over 50 models spans [" + num(100 * lo) + "%, " + num(100 * hi) + "%]";
  return out;
}

// ---- 3 ---------------------------------------------------------------------

Outcome checkerboard_causality() {
  std::mt19937 rng(303);
  Outcome out;
  std::size_t anchors_checked = 0, params_checked = 0;
  for (int inst = 0; inst < 50 && out.pass; ++inst) {
    const std::size_t ch = 1 + rng() % 4, rows = 2 + rng() % 8, cols = 2 + rng() % 8;
    scene::MultiscaleHexplane hex(ch, rows, cols, 1 + rng() % 3);
    for (auto* p : hex.parameters()) p->value = random_tensor(p->value.shape(), rng, -0.8, 0.8);
    mhcm::ContextModel m({.channels = ch, .hyper = 2 + rng() % 3, .latent = 1 + rng() % 2, .hidden = 4 + rng() % 8},
                         5000 + inst);
    std::uniform_real_distribution<double> qd(0.03, 0.2);
    mhcm::QuantSteps q(hex.num_scales(), qd(rng), qd(rng));
    mhcm::calibrate(m, hex, q);
    m.snap();

    // Anchor parameters with and without the non-anchor values present.
    for (int grp : {mhcm::kSpaceOnly, mhcm::kSpaceTime}) {
      const std::size_t h = mhcm::even_up(rows), w = mhcm::even_up(cols);
      Tensor plane = random_tensor({ch, h, w}, rng);
      Tensor zeroed = plane;
      for (std::size_t c = 0; c < ch; ++c)
        for (std::size_t i = 0; i < h; ++i)
          for (std::size_t j = 0; j < w; ++j)
            if (!mhcm::is_anchor(i, j)) zeroed.at(c, i, j) = 0.0;
      const Tensor hyper = random_tensor({m.config().hyper, h, w}, rng);
      Graph g;
      const auto full = m.checkerboard_params(g, static_cast<mhcm::Group>(grp), g.constant(hyper), g.constant(plane));
      const auto cut = m.checkerboard_params(g, static_cast<mhcm::Group>(grp), g.constant(hyper), g.constant(zeroed));
      const auto &fm = g.value(full.mu), &fs = g.value(full.sigma), &cm = g.value(cut.mu), &cs = g.value(cut.sigma);
      for (std::size_t c = 0; c < ch; ++c)
        for (std::size_t i = 0; i < h; ++i)
          for (std::size_t j = 0; j < w; ++j) {
            if (!mhcm::is_anchor(i, j)) continue;
            ++anchors_checked;
            if (fm.at(c, i, j) != cm.at(c, i, j) || fs.at(c, i, j) != cs.at(c, i, j)) out.pass = false;
          }
    }

    // Staged decoder replay against the encoder.
    const auto steps = codec::step_table(q);
    codec::ReplayTrace enc_trace, dec_trace;
    const auto enc = codec::encode_hexplane(m, hex, steps, &enc_trace);
    const auto dec = codec::decode_hexplane(enc.stream, m, hex, steps, &dec_trace);
    if (!dec.same_values(enc.quantized)) out.pass = false;
    if (enc_trace.mu != dec_trace.mu || enc_trace.sigma != dec_trace.sigma || enc_trace.latent_mu != dec_trace.latent_mu ||
        enc_trace.latent_sigma != dec_trace.latent_sigma)
      out.pass = false;
    for (const auto& t : dec_trace.mu) params_checked += 2 * t.size();
    if (!out.pass) out.detail = "instance " + std::to_string(inst) + " differs; ";
  }
  out.detail += std::to_string(anchors_checked) + " anchor parameters unchanged by zeroing, " +
                std::to_string(params_checked) + " replayed plane parameters bit-identical";
  return out;
}

// ---- 4 ---------------------------------------------------------------------

Outcome inter_scale_gain() {
  std::mt19937 rng(404);
  Outcome out;
  double worst = 1.0;
  std::string per;
  for (int inst = 0; inst < 5; ++inst) {
    const std::size_t ch = 4, base = 8;
    scene::MultiscaleHexplane hex(ch, base, base, 2);
    double noise_var_sum = 0.0;
    for (int c = 0; c < scene::kNumPlanes; ++c) {
      hex.plane(0, c) = random_tensor({ch, base, base}, rng);
      auto up = nn::resize_bilinear(hex.plane(0, c), 2 * base, 2 * base);
      const double mean = std::accumulate(up.values().begin(), up.values().end(), 0.0) / up.size();
      double var = 0.0;
      for (double v : up.values()) var += (v - mean) * (v - mean);
      var /= up.size();
      const double noise_var = var / 10.0;  // 10 dB SNR
      noise_var_sum += noise_var;
      std::normal_distribution<double> nd(0.0, std::sqrt(noise_var));
      for (auto& v : up.values()) v += nd(rng);
      hex.plane(1, c) = up;
    }
    // Fine-scale step at the noise level; the coarse scale uses the same step.
    const double q = std::sqrt(noise_var_sum / scene::kNumPlanes);
    mhcm::ContextModel m({.channels = ch}, 6000 + inst);
    mhcm::QuantSteps steps(2, q, q);
    mhcm::calibrate(m, hex, steps);

    Graph g;
    const auto coding = mhcm::code_hexplane(g, m, scene::plane_constants(g, hex), hex, steps, {});
    double inter = 0.0, plain = 0.0;
    for (const auto& pc : coding.planes) {
      if (pc.scale == 0) continue;
      const auto& x = g.value(pc.values);
      const auto bits = mhcm::gaussian_bits_map(x, g.value(pc.params.mu), g.value(pc.params.sigma), pc.q_value);
      inter += std::accumulate(bits.values().begin(), bits.values().end(), 0.0);
      // Unconditional fit: one Gaussian per channel from the quantized values themselves.
      const std::size_t n = x.dim(1) * x.dim(2);
      for (std::size_t c = 0; c < x.dim(0); ++c) {
        double mean = 0.0, sq = 0.0;
        for (std::size_t k = 0; k < n; ++k) mean += x[c * n + k];
        mean /= n;
        for (std::size_t k = 0; k < n; ++k) sq += (x[c * n + k] - mean) * (x[c * n + k] - mean);
        const double sd = std::max(std::sqrt(sq / n), 1e-6);
        for (std::size_t k = 0; k < n; ++k) plain += mhcm::gaussian_bits(x[c * n + k], mean, sd, pc.q_value);
      }
    }
    const double saving = 1.0 - inter / plain;
    worst = std::min(worst, saving);
    per += (inst ? ", " : "") + num(100 * saving, 3) + "%";
  }
  out.pass = worst >= 0.30;
  out.detail = "fine-scale bit saving vs unconditional Gaussian per instance: " + per;
  return out;
}

// ---- 5 ---------------------------------------------------------------------

scene::ToyConfig ten_primitive_toy() {
  return {.primitives = 10, .timestamps = 6, .views = 2, .image_size = 16, .channels = 4, .base_res = 4,
          .hidden = 8, .sh_k = 4, .seed = 6};
}

trainer::TrainConfig small_models() {
  trainer::TrainConfig c;
  c.mhcm_hyper = 2;
  c.mhcm_latent = 1;
  c.mhcm_hidden = 6;
  return c;
}

/// Zero biases put zero-padded inputs exactly on a ReLU kink, where central
/// differences see half the slope. Move off it.
void jitter_biases(mhcm::ContextModel& m, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 0.05);
  for (auto* p : m.parameters())
    if (p->name.ends_with(".bias"))
      for (auto& v : p->value.values()) v += nd(rng);
}

Var weighted(Graph& g, Var v, unsigned seed) {
  std::mt19937 r(seed);
  return nn::sum(g, nn::mul_const(g, v, random_tensor(g.value(v).shape(), r)));
}

Outcome gradient_correctness() {
  Outcome out;
  const auto gt = scene::generate_toy_scene(ten_primitive_toy());
  const auto targets = trainer::training_targets(gt);
  trainer::Model m(scene::perturb_scene(gt, {}, 7), trainer::initial_models(small_models(), gt));
  jitter_biases(m.models().context, 11);

  // Whole objective: reconstruction, hexplane and SH rate with learnable steps, smoothness.
  trainer::LossOptions opt;
  opt.lambda = 0.05;
  opt.alpha = 0.5;
  opt.entropy = opt.quantize = opt.learn_q = true;
  opt.rate_normalizer = trainer::rate_normalizer(gt);
  auto& sc = m.raw_scene();
  auto& models = m.models();
  std::vector<nn::Parameter*> all = m.primitive_parameters();
  for (auto* p : sc.hexplane.parameters()) all.push_back(p);
  for (auto* p : sc.deformation.parameters()) all.push_back(p);
  for (auto* p : models.steps.parameters()) all.push_back(p);
  for (auto* p : models.context.parameters()) all.push_back(p);
  for (auto* p : models.sh.parameters()) all.push_back(p);
  const auto total = testing::check_param_grads(
      [&](Graph& g) {
        std::mt19937_64 rng(8);
        return trainer::total_loss(g, m, targets, 3, opt, rng);
      },
      all, 1e-6, 6);
  if (!(total.max_rel_error < 1e-3)) out.pass = false;

  // Each layer on its own, fed with this scene's tensors.
  // Floors the relative error at what a central difference of the loss can
  // resolve; off-support SH bins have gradients far below it.
  const double h_layer = 1e-6, ulps = 16.0;
  std::vector<std::pair<std::string, double>> layers;
  const auto& s = m.scene();
  const auto prim = scene::to_tensors(s.primitives, s.sh_k);
  const double t = targets.times[3];
  layers.emplace_back("rasterizer", testing::check_input_grads(
                                        [&](Graph& g, const std::vector<Var>& in) {
                                          return nn::mse(g,
                                                         scene::rasterize_op(g, in[0], in[1], in[2], in[3], in[4],
                                                                             s.sh_k, targets.cameras[0]),
                                                         targets.images[3][0]);
                                        },
                                        {prim.mu, prim.rot, prim.scale, prim.opacity, prim.sh}, h_layer, ulps)
                                        .max_rel_error);
  layers.emplace_back("hexplane query", testing::check_param_grads(
                                            [&](Graph& g) {
                                              const auto planes = scene::plane_params(g, sc.hexplane);
                                              return weighted(g,
                                                              scene::hexplane_features(g, planes, sc.hexplane,
                                                                                       sc.bounds, g.constant(prim.mu), t),
                                                              1);
                                            },
                                            sc.hexplane.parameters(), h_layer, 0, 1, ulps)
                                            .max_rel_error);
  layers.emplace_back("deformation", testing::check_param_grads(
                                         [&](Graph& g) {
                                           const auto planes = scene::plane_constants(g, sc.hexplane);
                                           const auto d = scene::deform_vars(
                                               g, sc.deformation.layers, planes, sc.hexplane, sc.bounds,
                                               g.constant(prim.mu), g.constant(prim.rot), g.constant(prim.scale), t);
                                           // Offsets only: the untouched attributes add nothing but round-off.
                                           const Var dmu = nn::sub(g, d.mu, g.constant(prim.mu));
                                           const Var dscale = nn::sub(g, d.scale, g.constant(prim.scale));
                                           return nn::add(g, nn::add(g, weighted(g, dmu, 2), weighted(g, d.rot, 3)),
                                                          weighted(g, dscale, 4));
                                         },
                                         sc.deformation.parameters(), h_layer, 0, 1, ulps)
                                         .max_rel_error);

  auto& ctx = models.context;
  const auto ctx_params = ctx.parameters();
  const Tensor& st_plane = sc.hexplane.plane(0, 3);
  const std::size_t h = mhcm::even_up(st_plane.dim(1)), w = mhcm::even_up(st_plane.dim(2));
  auto padded = [&](Graph& g, const Tensor& x) { return mhcm::pad_even(g, g.constant(x)); };
  auto params_sum = [&](Graph& g, const mhcm::EntropyParams& p) {
    return nn::add(g, weighted(g, p.mu, 5), weighted(g, p.sigma, 6));
  };
  layers.emplace_back("hyperprior", testing::check_param_grads(
                                        [&](Graph& g) {
                                          const Var z = ctx.analysis(g, padded(g, st_plane));
                                          return weighted(g, ctx.synthesis(g, z, h, w), 7);
                                        },
                                        ctx_params, h_layer, 0, 1, ulps)
                                        .max_rel_error);
  layers.emplace_back("checkerboard head", testing::check_param_grads(
                                               [&](Graph& g) {
                                                 std::mt19937 r(8);
                                                 const Var hyper = g.constant(random_tensor({ctx.config().hyper, h, w}, r));
                                                 return params_sum(g, ctx.checkerboard_params(g, mhcm::kSpaceTime, hyper,
                                                                                              padded(g, st_plane)));
                                               },
                                               ctx_params, h_layer, 0, 1, ulps)
                                               .max_rel_error);
  layers.emplace_back("inter-plane head", testing::check_param_grads(
                                              [&](Graph& g) {
                                                const Var rows = mhcm::time_average(g, g.constant(sc.hexplane.plane(0, 3)));
                                                const Var cols = mhcm::time_average(g, g.constant(sc.hexplane.plane(0, 4)));
                                                const auto& xy = sc.hexplane.plane(0, 0);
                                                return weighted(
                                                    g, ctx.inter_plane_context(g, rows, cols, xy.dim(1), xy.dim(2)), 9);
                                              },
                                              ctx_params, h_layer, 0, 1, ulps)
                                              .max_rel_error);
  layers.emplace_back("inter-scale head", testing::check_param_grads(
                                              [&](Graph& g) {
                                                const auto& fine = sc.hexplane.plane(1, 0);
                                                return params_sum(g, ctx.inter_scale(g, g.constant(sc.hexplane.plane(0, 0)),
                                                                                     fine.dim(1), fine.dim(2)));
                                              },
                                              ctx_params, h_layer, 0, 1, ulps)
                                              .max_rel_error);
  {
    std::mt19937 r(10);
    const Tensor& x = sc.hexplane.plane(1, 2);
    Tensor mu = x;
    for (auto& v : mu.values()) v += std::uniform_real_distribution<double>(-0.1, 0.1)(r);
    const Tensor sigma = random_tensor(x.shape(), r, 0.02, 0.2);
    layers.emplace_back("gaussian rate", testing::check_input_grads(
                                             [](Graph& g, const std::vector<Var>& in) {
                                               return mhcm::gaussian_bits(g, in[0], in[1], in[2], in[3]);
                                             },
                                             {x, mu, sigma, Tensor::scalar(0.05)}, h_layer, ulps)
                                             .max_rel_error);
  }
  layers.emplace_back("quantizer", testing::check_input_grads(
                                       [](Graph& g, const std::vector<Var>& in) {
                                         std::mt19937_64 noise(12);
                                         return weighted(g, mhcm::quantize(g, in[0], in[1], mhcm::Mode::kTrain, &noise),
                                                         13);
                                       },
                                       {sc.hexplane.plane(0, 1), Tensor::scalar(0.02)}, h_layer, ulps)
                                       .max_rel_error);
  layers.emplace_back("SH rate", testing::check_param_grads(
                                     [&](Graph& g) {
                                       std::mt19937_64 noise(14);
                                       return models.sh.rate(g, g.constant(prim.sh), s.sh_k, true, &noise);
                                     },
                                     models.sh.parameters(), h_layer, 40, 1, ulps)
                                     .max_rel_error);
  layers.emplace_back("smoothness", testing::check_param_grads(
                                        [&](Graph& g) {
                                          return trainer::temporal_smoothness(g, scene::plane_params(g, sc.hexplane));
                                        },
                                        sc.hexplane.parameters(), h_layer, 0, 1, ulps)
                                        .max_rel_error);

  double worst = 0.0;
  std::string worst_name;
  for (const auto& [name, err] : layers)
    if (!(err < worst)) {
      worst = err;
      worst_name = name;
    }
  if (!(worst < 1e-4)) out.pass = false;
  out.detail = "total loss max rel error " + num(total.max_rel_error) + " over " + std::to_string(total.checked) +
               " entries (< 1e-3); worst of " + std::to_string(layers.size()) + " layers " + num(worst) + " (" +
               worst_name + ", < 1e-4)";
  return out;
}

// ---- 6 ---------------------------------------------------------------------

Outcome stp_pruning() {
  Outcome out;
  double stp_sum = 0.0, rnd_sum = 0.0, stp_worst = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    scene::ToyConfig toy;
    toy.faint_fraction = 0.5;
    toy.seed = 700 + seed;
    const auto gt = scene::generate_toy_scene(toy);
    const auto targets = trainer::training_targets(gt);
    trainer::TrainConfig cfg;
    cfg.iterations = cfg.warmup = cfg.aq_start = 200;
    cfg.lambda = 0.0;
    cfg.seed = seed;
    const auto trained = trainer::train(cfg, scene::perturb_scene(gt, {}, 800 + seed), targets).scene;
    const double base = trainer::render_psnr(trained, targets);

    auto pruned_psnr = [&](const std::vector<std::size_t>& kept) {
      auto s = trained;
      s.primitives = stp::select(trained.primitives, kept);
      return trainer::render_psnr(s, targets);
    };
    const auto stp_kept = stp::prune(stp::score(trained).score, 0.5).kept;
    std::vector<std::size_t> order(trained.primitives.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937 rng(900 + seed);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<std::size_t> rnd_kept(order.begin(), order.begin() + stp_kept.size());
    std::sort(rnd_kept.begin(), rnd_kept.end());

    const double stp_drop = base - pruned_psnr(stp_kept);
    const double rnd_drop = base - pruned_psnr(rnd_kept);
    stp_sum += stp_drop;
    rnd_sum += rnd_drop;
    stp_worst = std::max(stp_worst, stp_drop);
  }
  const double stp_mean = stp_sum / 10.0, rnd_mean = rnd_sum / 10.0;
  out.pass = stp_worst <= 0.5 && rnd_mean - stp_mean >= 3.0;
  out.detail = "significance pruning drop worst " + num(stp_worst) + " dB, mean " + num(stp_mean) +
               " dB; random pruning mean drop " + num(rnd_mean) + " dB";
  return out;
}

// ---- 7 ---------------------------------------------------------------------

Outcome rd_monotonicity() {
  Outcome out;
  const auto gt = scene::generate_toy_scene({.seed = 0});
  const auto init = scene::perturb_scene(gt, {}, 0);
  trainer::TrainConfig cfg;
  cfg.seed = 0;
  auto points = trainer::rd_sweep(cfg, {5e-4, 5e-3, 5e-2}, {0.0}, init, trainer::training_targets(gt),
                                  trainer::render_targets(gt, scene::held_out_times(gt)));
  std::sort(points.begin(), points.end(), [](const auto& a, const auto& b) { return a.lambda < b.lambda; });
  for (std::size_t i = 1; i < points.size(); ++i)
    if (points[i].bits > points[i - 1].bits) out.pass = false;

  const auto hull = trainer::rd_hull(points);
  for (std::size_t i = 1; i < hull.size(); ++i)
    if (!(hull[i].bits > hull[i - 1].bits && hull[i].psnr > hull[i - 1].psnr)) out.pass = false;
  for (const auto& h : hull)
    for (const auto& p : points)
      if (p.bits <= h.bits && p.psnr >= h.psnr && (p.bits < h.bits || p.psnr > h.psnr)) out.pass = false;
  if (hull.empty()) out.pass = false;

  for (const auto& p : points)
    out.detail += "lambda " + num(p.lambda) + ": " + num(p.bits / 8.0, 6) + " B, " + num(p.psnr, 4) + " dB; ";
  out.detail += std::to_string(hull.size()) + " on the hull";
  return out;
}

// ---- 8 ---------------------------------------------------------------------

Outcome compression_headline() {
  Outcome out;
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    const auto gt = scene::generate_toy_scene({.seed = seed});
    trainer::TrainConfig cfg;
    cfg.seed = seed;
    const auto held_out = trainer::render_targets(gt, scene::held_out_times(gt));
    auto res = trainer::train(cfg, scene::perturb_scene(gt, {}, seed), trainer::training_targets(gt));
    const auto enc = codec::compress(res.scene, res.models);
    const auto dec = codec::decompress(enc.container);
    const double ratio = double(scene::raw_scene_bytes(gt)) / double(enc.container.size());
    const double drop = trainer::render_psnr(res.scene, held_out) - trainer::render_psnr(dec.scene, held_out);
    if (!(ratio >= 8.0 && drop <= 1.0)) out.pass = false;
    out.detail += (seed ? "; " : "") + std::string("scene ") + std::to_string(seed) + ": " + num(ratio) + "x, drop " +
                  num(drop) + " dB";
  }
  return out;
}

// ---- 9 ---------------------------------------------------------------------

Outcome coder_robustness() {
  Outcome out;
  std::vector<io::Bytes> valid;
  for (std::uint64_t i = 0; i < 4; ++i) {
    const auto s = scene::generate_toy_scene({.primitives = 30, .timestamps = 4, .views = 1, .image_size = 16,
                                              .channels = 3, .base_res = 5 + i, .hidden = 6, .sh_k = 4, .seed = i});
    auto models = codec::default_models(s, {.mhcm = {.hyper = 2, .latent = 1, .hidden = 6}, .seed = i});
    valid.push_back(codec::compress(s, models).container);
  }
  std::mt19937 rng(909);
  std::size_t truncations = 0, flips = 0, clean = 0;
  for (int trial = 0; trial < 10000; ++trial) {
    io::Bytes b = valid[rng() % valid.size()];
    if (trial % 2 == 0) {
      b.resize(rng() % b.size());
      ++truncations;
    } else {
      const int n = 1 + static_cast<int>(rng() % 4);
      for (int k = 0; k < n; ++k) b[rng() % b.size()] ^= static_cast<std::uint8_t>(1 + rng() % 255);
      ++flips;
    }
    try {
      (void)codec::decompress(b);
      out.pass = false;
      if (out.detail.empty()) out.detail = "trial " + std::to_string(trial) + " decoded silently; ";
    } catch (const FormatError&) {
      ++clean;
    } catch (const std::exception& e) {
      out.pass = false;
      if (out.detail.empty()) out.detail = "trial " + std::to_string(trial) + " raised " + e.what() + "; ";
    }
  }
  out.detail += std::to_string(clean) + "/10000 clean format errors (" + std::to_string(truncations) +
                " truncations, " + std::to_string(flips) + " byte flips)";
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"lossless round trip", lossless_round_trip},
      {"rate fidelity", rate_fidelity},
      {"checkerboard causality", checkerboard_causality},
      {"inter-scale gain", inter_scale_gain},
      {"gradient correctness", gradient_correctness},
      {"significance pruning", stp_pruning},
      {"RD monotonicity", rd_monotonicity},
      {"compression headline", compression_headline},
      {"coder robustness", coder_robustness},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

  int failed = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    const int id = static_cast<int>(k) + 1;
    if (!only.empty() && !only.count(id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[k].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("criterion %d %s: %s: %s [%.1f s]\n", id, o.pass ? "PASS" : "FAIL", criteria[k].first,
                o.detail.c_str(), seconds_since(t0));
    std::fflush(stdout);
  }
  return failed ? 1 : 0;
}

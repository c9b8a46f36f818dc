#include "light4gs/trainer/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <sstream>

#include "light4gs/errors.hpp"
#include "light4gs/mhcm/model.hpp"
#include "light4gs/nn/optim.hpp"
#include "light4gs/scene/render.hpp"
#include "light4gs/stp/significance.hpp"

namespace l4gs::trainer {

using nn::Graph;
using nn::Tensor;
using nn::Var;

namespace {

constexpr std::size_t kSmoothWindow = 10;
constexpr std::size_t kDivergenceWindow = 100;
constexpr double kDivergenceFactor = 10.0;
// Below this (40 dB) a tenfold rise is quantization jitter, not divergence.
constexpr double kDivergenceFloor = 1e-4;

Tensor select_rows(const Tensor& t, const std::vector<std::size_t>& rows) {
  const std::size_t width = t.size() / std::max<std::size_t>(t.dim(0), 1);
  Tensor out({rows.size(), width});
  for (std::size_t r = 0; r < rows.size(); ++r)
    std::copy_n(t.vec().begin() + static_cast<std::ptrdiff_t>(rows[r] * width), width,
                out.values().begin() + static_cast<std::ptrdiff_t>(r * width));
  return out;
}

}  // namespace

// ---- targets and evaluation ----------------------------------------------

Targets render_targets(const scene::SceneBundle& reference, const std::vector<double>& times) {
  Targets out;
  out.times = times;
  out.cameras = reference.cameras;
  for (double t : times) {
    auto& row = out.images.emplace_back();
    for (const auto& cam : reference.cameras) row.push_back(scene::render(reference, cam, t).image);
  }
  return out;
}

Targets training_targets(const scene::SceneBundle& reference) {
  std::vector<double> times;
  for (std::size_t i = 0; i < reference.timestamps; ++i) times.push_back(reference.time_of(i));
  return render_targets(reference, times);
}

double render_psnr(const scene::SceneBundle& model, const Targets& targets) {
  double sq = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < targets.times.size(); ++i)
    for (std::size_t v = 0; v < targets.cameras.size(); ++v) {
      const auto img = scene::render(model, targets.cameras[v], targets.times[i]).image;
      const auto& ref = targets.images[i][v];
      for (std::size_t k = 0; k < img.size(); ++k) sq += (img[k] - ref[k]) * (img[k] - ref[k]);
      count += img.size();
    }
  if (count == 0) throw InputError("no target images to evaluate");
  const double m = sq / static_cast<double>(count);
  return m < 1e-10 ? 100.0 : 10.0 * std::log10(1.0 / m);
}

// ---- model ----------------------------------------------------------------

Model::Model(scene::SceneBundle scene, codec::CodecModels models) : scene_(std::move(scene)), models_(std::move(models)) {
  auto t = scene::to_tensors(scene_.primitives, scene_.sh_k);
  mu = nn::Parameter("prim.mu", std::move(t.mu));
  rot = nn::Parameter("prim.rot", std::move(t.rot));
  scale = nn::Parameter("prim.scale", std::move(t.scale));
  opacity = nn::Parameter("prim.opacity", std::move(t.opacity));
  sh = nn::Parameter("prim.sh", std::move(t.sh));
}

const scene::SceneBundle& Model::scene() {
  scene_.primitives =
      scene::from_tensors({mu.value, rot.value, scale.value, opacity.value, sh.value}, scene_.sh_k);
  return scene_;
}

void Model::keep(const std::vector<std::size_t>& kept) {
  for (auto* p : primitive_parameters()) p->reset(select_rows(p->value, kept));
}

void Model::project() {
  for (std::size_t i = 0; i < size(); ++i) {
    double n = 0.0;
    for (int a = 0; a < 4; ++a) n += rot.value[i * 4 + a] * rot.value[i * 4 + a];
    n = std::sqrt(n);
    if (n > 0.0)
      for (int a = 0; a < 4; ++a) rot.value[i * 4 + a] /= n;
    else
      rot.value[i * 4] = 1.0;
    for (int a = 0; a < 3; ++a) scale.value[i * 3 + a] = std::max(scale.value[i * 3 + a], scene::kMinScale);
    opacity.value[i] = std::clamp(opacity.value[i], 0.0, 1.0);
  }
}

std::vector<nn::Parameter*> Model::primitive_parameters() { return {&mu, &rot, &scale, &opacity, &sh}; }

// ---- loss -----------------------------------------------------------------

Var temporal_smoothness(Graph& g, const scene::PlaneVars& planes) {
  std::vector<Var> parts;
  for (const auto& scale : planes)
    for (int c = 0; c < scene::kNumPlanes; ++c) {
      if (!scene::is_space_time(c)) continue;
      const Var p = scale[c];
      const Tensor& x = g.value(p);
      const std::size_t ch = x.dim(0), rows = x.dim(1), cols = x.dim(2);
      if (cols < 2) continue;
      const double norm = 1.0 / static_cast<double>(ch * rows * (cols - 1));
      double acc = 0.0;
      for (std::size_t k = 0; k < ch; ++k)
        for (std::size_t i = 0; i < rows; ++i)
          for (std::size_t j = 0; j + 1 < cols; ++j) {
            const double d = x.at(k, i, j + 1) - x.at(k, i, j);
            acc += d * d;
          }
      parts.push_back(g.record(Tensor::scalar(acc * norm), {p}, [p, norm](Graph& gr, const Tensor& up) {
        const Tensor& v = gr.value(p);
        Tensor& gx = gr.grad_buffer(p);
        const std::size_t c0 = v.dim(0), r0 = v.dim(1), w0 = v.dim(2);
        for (std::size_t k = 0; k < c0; ++k)
          for (std::size_t i = 0; i < r0; ++i)
            for (std::size_t j = 0; j + 1 < w0; ++j) {
              const double d = 2.0 * norm * up[0] * (v.at(k, i, j + 1) - v.at(k, i, j));
              gx.at(k, i, j + 1) += d;
              gx.at(k, i, j) -= d;
            }
      }));
    }
  if (parts.empty()) return g.constant(Tensor::scalar(0.0));
  Var total = parts[0];
  for (std::size_t i = 1; i < parts.size(); ++i) total = nn::add(g, total, parts[i]);
  return nn::scale(g, total, 1.0 / static_cast<double>(parts.size()));
}

Var total_loss(Graph& g, Model& m, const Targets& targets, std::size_t time_index, const LossOptions& opt,
               std::mt19937_64& rng, LossTerms* terms) {
  auto& sc = m.raw_scene();
  auto& models = m.models();
  const auto& layout = sc.hexplane;
  const scene::PlaneVars planes = scene::plane_params(g, sc.hexplane);

  scene::PlaneVars render_planes = planes;
  Var hex_bits, sh_bits;
  if (opt.entropy) {
    auto coding = mhcm::code_hexplane(g, models.context, planes, layout, models.steps,
                                      {mhcm::Mode::kTrain, opt.learn_q, &rng});
    hex_bits = coding.total_bits;
    if (opt.quantize) render_planes = coding.decoded;
    sh_bits = models.sh.rate(g, g.param(m.sh), sc.sh_k, true, &rng);
  } else if (opt.quantize) {
    for (std::size_t s = 0; s < planes.size(); ++s)
      for (int c = 0; c < scene::kNumPlanes; ++c) {
        const int grp = mhcm::group_of(c);
        const Var q = opt.learn_q ? nn::softplus(g, g.param(models.steps.raw[s][grp]))
                                  : g.constant(Tensor::scalar(models.steps.value(s, grp)));
        render_planes[s][c] = mhcm::quantize(g, planes[s][c], q, mhcm::Mode::kTrain, &rng);
      }
  }

  const auto d = scene::deform_vars(g, sc.deformation.layers, render_planes, layout, sc.bounds, g.param(m.mu),
                                    g.param(m.rot), g.param(m.scale), targets.times.at(time_index));
  const Var opacity = g.param(m.opacity), sh = g.param(m.sh);
  Var recon;
  const auto& cams = targets.cameras;
  for (std::size_t v = 0; v < cams.size(); ++v) {
    const Var img = scene::rasterize_op(g, d.mu, d.rot, d.scale, opacity, sh, sc.sh_k, cams[v]);
    const Var e = nn::mse(g, img, targets.images.at(time_index).at(v));
    recon = v == 0 ? e : nn::add(g, recon, e);
  }
  recon = nn::scale(g, recon, 1.0 / static_cast<double>(cams.size()));

  Var total = recon;
  if (opt.entropy && opt.lambda > 0.0)
    total = nn::add(g, total, nn::scale(g, nn::add(g, hex_bits, sh_bits), opt.lambda / opt.rate_normalizer));
  Var smooth;
  if (opt.alpha > 0.0 || terms) smooth = temporal_smoothness(g, planes);
  if (opt.alpha > 0.0) total = nn::add(g, total, nn::scale(g, smooth, opt.alpha));

  if (terms) {
    terms->total = g.value(total)[0];
    terms->reconstruction = g.value(recon)[0];
    terms->hex_bits = opt.entropy ? g.value(hex_bits)[0] : 0.0;
    terms->sh_bits = opt.entropy ? g.value(sh_bits)[0] : 0.0;
    terms->smoothness = g.value(smooth)[0];
  }
  return total;
}

// ---- training loop --------------------------------------------------------

double rate_normalizer(const scene::SceneBundle& scene) {
  std::size_t n = scene.primitives.size() * 3 * scene.sh_k;
  for (std::size_t s = 0; s < scene.hexplane.num_scales(); ++s)
    for (int c = 0; c < scene::kNumPlanes; ++c) n += scene.hexplane.plane(s, c).size();
  return static_cast<double>(std::max<std::size_t>(n, 1));
}

codec::CodecModels initial_models(const TrainConfig& cfg, const scene::SceneBundle& scene) {
  mhcm::MhcmConfig mc;
  mc.channels = scene.hexplane.channels;
  mc.hyper = cfg.mhcm_hyper;
  mc.latent = cfg.mhcm_latent;
  mc.hidden = cfg.mhcm_hidden;
  codec::CodecModels m{mhcm::ContextModel(mc, cfg.seed),
                       mhcm::QuantSteps(scene.hexplane.num_scales(), cfg.q_space_only, cfg.q_space_time),
                       codec::FactorizedModel(codec::sh_bands(scene.sh_k))};
  m.snap();
  mhcm::calibrate(m.context, scene.hexplane, m.steps);
  m.sh.fit(codec::sh_matrix(scene.primitives, scene.sh_k), scene.sh_k);
  return m;
}

std::string log_csv(const std::vector<LogRow>& rows) {
  std::ostringstream o;
  o.precision(9);
  o << "iteration,entropy,loss,reconstruction,hex_bits,sh_bits,smoothness,primitives";
  const std::size_t nq = rows.empty() ? 0 : rows.front().steps.size();
  for (std::size_t k = 0; k < nq; ++k) o << ",q_s" << k / 2 << (k % 2 == 0 ? "_space_only" : "_space_time");
  o << '\n';
  for (const auto& r : rows) {
    o << r.iteration << ',' << (r.entropy ? 1 : 0) << ',' << r.terms.total << ',' << r.terms.reconstruction << ',';
    if (r.entropy) o << r.terms.hex_bits << ',' << r.terms.sh_bits;
    else o << ',';
    o << ',' << r.terms.smoothness << ',' << r.primitives;
    for (double q : r.steps) o << ',' << q;
    o << '\n';
  }
  return o.str();
}

TrainResult train(const TrainConfig& cfg, const scene::SceneBundle& init, const Targets& targets,
                  std::vector<LogRow>* progress) {
  cfg.validate();
  init.validate();
  if (targets.times.empty() || targets.images.size() != targets.times.size() || targets.cameras.empty())
    throw InputError("training needs at least one timestamp with images for every camera");
  for (const auto& row : targets.images)
    if (row.size() != targets.cameras.size()) throw InputError("every timestamp needs one image per camera");

  Model m(init, initial_models(cfg, init));
  auto& models = m.models();
  const stp::PruneSchedule schedule{cfg.prune_iterations, cfg.prune_ratios};
  const std::size_t original = m.size();
  const double normalizer = rate_normalizer(init);
  std::mt19937_64 rng(cfg.seed);
  std::uniform_int_distribution<std::size_t> pick(0, targets.times.size() - 1);

  auto& sc = m.raw_scene();
  const auto hex_params = sc.hexplane.parameters();
  const auto deform_params = sc.deformation.parameters();
  const auto context_params = models.context.parameters();
  const auto step_params = models.steps.parameters();
  const auto sh_model_params = models.sh.parameters();

  TrainResult out;
  std::deque<double> recent, smoothed;
  std::size_t next_prune = 0;
  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    if (next_prune < schedule.iterations.size() && it == schedule.iterations[next_prune]) {
      const auto table = stp::score(m.scene(), cfg.threads);
      const auto res = stp::prune_count(table.score, schedule.count_to_remove(next_prune, original, m.size()));
      m.keep(res.kept);
      ++next_prune;
    }
    const bool phase = it >= cfg.warmup;
    if (phase && it == cfg.warmup) mhcm::calibrate(models.context, sc.hexplane, models.steps);

    LossOptions opt;
    opt.lambda = cfg.lambda;
    opt.alpha = cfg.alpha;
    opt.entropy = phase && it % 3 == 0 && cfg.lambda > 0.0;
    opt.quantize = phase;
    opt.learn_q = it >= cfg.aq_start;
    opt.rate_normalizer = normalizer;

    LogRow row;
    row.iteration = it;
    row.entropy = opt.entropy;
    {
      Graph g;
      const Var loss = total_loss(g, m, targets, pick(rng), opt, rng, &row.terms);
      if (!std::isfinite(row.terms.total))
        throw TrainingError("non-finite loss at iteration " + std::to_string(it) +
                            (phase ? " (entropy phase)" : " (warmup)"));
      g.backward(loss);
    }
    // The entropy models only see the rate; undo lambda so their step size
    // does not depend on the trade-off being swept.
    if (opt.entropy) {
      for (const auto& group : {context_params, sh_model_params})
        for (auto* p : group)
          for (auto& v : p->grad.values()) v /= cfg.lambda;
    }
    try {
      const auto prims = m.primitive_parameters();
      const double prim_lr[] = {cfg.lr_position, cfg.lr_rotation, cfg.lr_scale, cfg.lr_opacity, cfg.lr_color};
      for (std::size_t k = 0; k < prims.size(); ++k) nn::sgd_step(std::span(prims).subspan(k, 1), prim_lr[k], cfg.momentum);
      nn::sgd_step(hex_params, cfg.lr_plane, cfg.momentum);
      nn::sgd_step(deform_params, cfg.lr_deform, cfg.momentum);
      nn::sgd_step(context_params, cfg.lr_context, cfg.momentum);
      nn::sgd_step(step_params, opt.learn_q ? cfg.lr_step : 0.0, cfg.momentum);
      nn::sgd_step(sh_model_params, cfg.lr_sh_model, cfg.momentum);
    } catch (const TrainingError& e) {
      throw TrainingError("iteration " + std::to_string(it) + ": " + e.what());
    }
    m.project();

    row.primitives = m.size();
    for (std::size_t s = 0; s < models.steps.num_scales(); ++s)
      for (int grp = 0; grp < 2; ++grp) row.steps.push_back(models.steps.value(s, grp));
    out.log.push_back(row);
    if (progress) progress->push_back(row);

    recent.push_back(row.terms.reconstruction);
    if (recent.size() > kSmoothWindow) recent.pop_front();
    double avg = 0.0;
    for (double v : recent) avg += v;
    avg /= static_cast<double>(recent.size());
    smoothed.push_back(avg);
    if (smoothed.size() > kDivergenceWindow) smoothed.pop_front();
    const double best = *std::min_element(smoothed.begin(), smoothed.end());
    if (avg > kDivergenceFactor * std::max(best, kDivergenceFloor))
      throw TrainingError("training diverged at iteration " + std::to_string(it) + ": reconstruction loss " +
                          std::to_string(avg) + " vs " + std::to_string(best) + " within the last " +
                          std::to_string(kDivergenceWindow) + " iterations");
  }

  out.scene = m.scene();
  out.models = std::move(models);
  out.models.sh.fit(codec::sh_matrix(out.scene.primitives, out.scene.sh_k), out.scene.sh_k);
  out.models.snap();
  return out;
}

}  // namespace l4gs::trainer

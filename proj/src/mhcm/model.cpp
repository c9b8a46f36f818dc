#include "light4gs/mhcm/model.hpp"

#include <cmath>

#include "light4gs/errors.hpp"
#include "light4gs/mhcm/rate.hpp"

namespace l4gs::mhcm {

using nn::Graph;
using nn::Tensor;
using nn::Var;

// ---- quantization ---------------------------------------------------------

QuantSteps::QuantSteps(std::size_t scales, double space_only, double space_time) {
  raw.resize(scales);
  for (std::size_t s = 0; s < scales; ++s) {
    raw[s][kSpaceOnly] = nn::Parameter("q.s" + std::to_string(s + 1) + ".space_only", Tensor::scalar(0.0));
    raw[s][kSpaceTime] = nn::Parameter("q.s" + std::to_string(s + 1) + ".space_time", Tensor::scalar(0.0));
    set(s, kSpaceOnly, space_only);
    set(s, kSpaceTime, space_time);
  }
}

double QuantSteps::value(std::size_t scale, int group) const {
  return nn::snap_float32(nn::softplus(raw.at(scale).at(group).value[0]));
}

void QuantSteps::set(std::size_t scale, int group, double q) {
  if (!(q > 0.0)) throw InputError("quantization step must be positive");
  raw.at(scale).at(group).value[0] = nn::softplus_inverse(q);
}

std::vector<nn::Parameter*> QuantSteps::parameters() {
  std::vector<nn::Parameter*> out;
  for (auto& s : raw)
    for (auto& p : s) out.push_back(&p);
  return out;
}

namespace {

Tensor uniform_noise(const nn::Shape& shape, std::mt19937_64* rng) {
  if (!rng) throw StateError("train-mode quantization needs a random generator");
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  Tensor t(shape);
  for (auto& v : t.values()) v = u(*rng);
  return t;
}

}  // namespace

Tensor quantize(const Tensor& x, double q, Mode mode, std::mt19937_64* rng) {
  if (!(q > 0.0)) throw InputError("quantization step must be positive");
  Tensor out = x;
  if (mode == Mode::kEval) {
    for (auto& v : out.values()) v = quantize_value(v, q);
  } else {
    const auto u = uniform_noise(x.shape(), rng);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += q * u[i];
  }
  return out;
}

Var quantize(Graph& g, Var x, Var q, Mode mode, std::mt19937_64* rng) {
  const double qv = g.value(q)[0];
  if (!(qv > 0.0)) throw InputError("quantization step must be positive");
  if (mode == Mode::kEval) return g.constant(quantize(g.value(x), qv, Mode::kEval));
  return nn::add(g, x, nn::scalar_times(g, q, uniform_noise(g.value(x).shape(), rng)));
}

// ---- checkerboard ---------------------------------------------------------

Tensor checkerboard_mask(std::size_t channels, std::size_t h, std::size_t w, bool anchors) {
  Tensor m({channels, h, w});
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j) m.at(c, i, j) = (is_anchor(i, j) == anchors) ? 1.0 : 0.0;
  return m;
}

Tensor cross_kernel_mask() { return Tensor({3, 3}, {0, 1, 0, 1, 0, 1, 0, 1, 0}); }

// ---- context model --------------------------------------------------------

namespace {

nn::LayerParams make_layer(const std::string& name, std::size_t out, std::size_t in, std::size_t k, double gain,
                           std::mt19937_64& rng) {
  const double bound = gain / std::sqrt(static_cast<double>(in * k * k));
  std::uniform_real_distribution<double> u(-bound, bound);
  Tensor w(k == 0 ? nn::Shape{out, in} : nn::Shape{out, in, k, k});
  for (auto& v : w.values()) v = u(rng);
  return nn::LayerParams(name, std::move(w), Tensor({out}));
}

// [C, L, 1] profile resampled to [C, n, 1].
Var resample_profile(Graph& g, Var p, std::size_t n) {
  return g.value(p).dim(1) == n ? p : nn::resize_bilinear(g, p, n, 1);
}

// Broadcast a [C] vector to [C,h,w].
Var broadcast_channels(Graph& g, Var v, std::size_t h, std::size_t w) {
  const std::size_t c = g.value(v).size();
  Tensor out({c, h, w});
  for (std::size_t k = 0; k < c; ++k)
    for (std::size_t i = 0; i < h * w; ++i) out[k * h * w + i] = g.value(v)[k];
  return g.record(std::move(out), {v}, [v, c, h, w](Graph& gr, const Tensor& go) {
    auto& gv = gr.grad_buffer(v);
    for (std::size_t k = 0; k < c; ++k)
      for (std::size_t i = 0; i < h * w; ++i) gv[k] += go[k * h * w + i];
  });
}

// Pairs a [C,h,1] row profile with a [C,w,1] column profile into [2C,h,w].
Var outer_concat(Graph& g, Var rows, Var cols) {
  const auto& a = g.value(rows);
  const auto& b = g.value(cols);
  const std::size_t c = a.dim(0), h = a.dim(1), w = b.dim(1);
  if (b.dim(0) != c) throw ConfigError("inter-plane profiles disagree on channels");
  Tensor out({2 * c, h, w});
  for (std::size_t k = 0; k < c; ++k)
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j) {
        out.at(k, i, j) = a[k * h + i];
        out.at(c + k, i, j) = b[k * w + j];
      }
  return g.record(std::move(out), {rows, cols}, [rows, cols, c, h, w](Graph& gr, const Tensor& go) {
    const bool want_a = gr.requires_grad(rows), want_b = gr.requires_grad(cols);
    for (std::size_t k = 0; k < c; ++k)
      for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j) {
          if (want_a) gr.grad_buffer(rows)[k * h + i] += go.at(k, i, j);
          if (want_b) gr.grad_buffer(cols)[k * w + j] += go.at(c + k, i, j);
        }
  });
}

Var sigma_from_raw(Graph& g, Var raw) {
  return nn::add_const(g, nn::softplus(g, raw), Tensor(g.value(raw).shape(), kSigmaFloor));
}

}  // namespace

ContextModel::ContextModel(const MhcmConfig& cfg, std::uint64_t seed) : cfg_(cfg), cross_(cross_kernel_mask()) {
  std::mt19937_64 rng(seed);
  const std::size_t c = cfg.channels, ch = cfg.hyper, cz = cfg.latent, e = cfg.hidden;
  const double gain = cfg.init_gain;
  ha1 = make_layer("mhcm.ha1", ch, c, 3, gain, rng);
  ha2 = make_layer("mhcm.ha2", ch, ch, 3, gain, rng);
  ha3 = make_layer("mhcm.ha3", cz, ch, 3, gain, rng);
  hs1 = make_layer("mhcm.hs1", ch, cz, 3, gain, rng);
  hs2 = make_layer("mhcm.hs2", ch, ch, 3, gain, rng);
  hs3 = make_layer("mhcm.hs3", ch, ch, 3, gain, rng);
  mask_conv = make_layer("mhcm.mask_conv", c, c, 3, gain, rng);
  st1 = make_layer("mhcm.st1", e, ch + c, 1, gain, rng);
  st2 = make_layer("mhcm.st2", 2 * c, e, 1, gain, rng);
  so1 = make_layer("mhcm.so1", e, ch + c, 1, gain, rng);
  so2 = make_layer("mhcm.so2", 2 * c, e, 1, gain, rng);
  proj = make_layer("mhcm.proj", ch, 2 * c, 1, gain, rng);
  xs1 = make_layer("mhcm.xs1", e, c, 1, gain, rng);
  xs2 = make_layer("mhcm.xs2", 2 * c, e, 1, gain, rng);
  latent_mu = nn::Parameter("mhcm.latent_mu", Tensor({cz}, 0.0));
  latent_sigma = nn::Parameter("mhcm.latent_sigma", Tensor({cz}, nn::softplus_inverse(1.0)));
}

std::vector<nn::LayerParams*> ContextModel::layers() {
  return {&ha1, &ha2, &ha3, &hs1, &hs2, &hs3, &mask_conv, &st1, &st2, &so1, &so2, &proj, &xs1, &xs2};
}

std::vector<nn::Parameter*> ContextModel::parameters() {
  std::vector<nn::Parameter*> out;
  for (auto* l : layers()) {
    out.push_back(&l->weight);
    if (l != &mask_conv) out.push_back(&l->bias);
  }
  out.push_back(&latent_mu);
  out.push_back(&latent_sigma);
  return out;
}

std::size_t ContextModel::parameter_count() {
  std::size_t n = 0;
  for (auto* l : layers()) n += l->weight.value.size() + (l != &mask_conv ? l->bias.value.size() : 0);
  return n + latent_mu.value.size() + latent_sigma.value.size();
}

void ContextModel::snap() {
  for (auto* p : parameters()) p->value = nn::snap_float32(p->value);
}

bool ContextModel::same_values(ContextModel& o) {
  const auto a = parameters(), b = o.parameters();
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (!(a[i]->value == b[i]->value)) return false;
  return true;
}

Var ContextModel::analysis(Graph& g, Var plane) {
  Var x = nn::relu(g, nn::conv2d(g, plane, ha1, 1));
  x = nn::relu(g, nn::conv2d(g, x, ha2, 2));
  return nn::conv2d(g, x, ha3, 2);
}

Var ContextModel::synthesis(Graph& g, Var latent, std::size_t h, std::size_t w) {
  Var x = nn::resize_bilinear(g, latent, (h + 1) / 2, (w + 1) / 2);
  x = nn::relu(g, nn::conv2d(g, x, hs1, 1));
  x = nn::resize_bilinear(g, x, h, w);
  x = nn::relu(g, nn::conv2d(g, x, hs2, 1));
  return nn::conv2d(g, x, hs3, 1);
}

Var ContextModel::anchor_context(Graph& g, Var plane) {
  const auto& v = g.value(plane);
  const Var anchors_only = nn::mul_const(g, plane, checkerboard_mask(v.dim(0), v.dim(1), v.dim(2), true));
  return nn::conv2d(g, anchors_only, mask_conv, 1, &cross_);
}

EntropyParams ContextModel::split(Graph& g, Var out) {
  const std::size_t c = cfg_.channels;
  return {nn::slice_channels(g, out, 0, c), sigma_from_raw(g, nn::slice_channels(g, out, c, 2 * c))};
}

EntropyParams ContextModel::head(Graph& g, Group group, Var hyper, Var context) {
  const auto& hv = g.value(hyper);
  if (!context.valid()) context = g.constant(Tensor({cfg_.channels, hv.dim(1), hv.dim(2)}));
  auto& l1 = group == kSpaceTime ? st1 : so1;
  auto& l2 = group == kSpaceTime ? st2 : so2;
  const Var x = nn::relu(g, nn::conv2d(g, nn::concat_channels(g, hyper, context), l1, 1));
  return split(g, nn::conv2d(g, x, l2, 1));
}

EntropyParams ContextModel::checkerboard_params(Graph& g, Group group, Var hyper, Var plane) {
  const auto& v = g.value(plane);
  if (v.dim(1) % 2 || v.dim(2) % 2)
    throw InternalError("checkerboard coding reached an unpadded " + nn::shape_string(v.shape()) + " plane");
  const auto anchors = head(g, group, hyper, Var{});
  const auto others = head(g, group, hyper, anchor_context(g, plane));
  const auto am = checkerboard_mask(v.dim(0), v.dim(1), v.dim(2), true);
  const auto nm = checkerboard_mask(v.dim(0), v.dim(1), v.dim(2), false);
  auto merge = [&](Var a, Var b) { return nn::add(g, nn::mul_const(g, a, am), nn::mul_const(g, b, nm)); };
  return {merge(anchors.mu, others.mu), merge(anchors.sigma, others.sigma)};
}

Var ContextModel::inter_plane_context(Graph& g, Var rows_profile, Var cols_profile, std::size_t h, std::size_t w) {
  const Var pair = outer_concat(g, resample_profile(g, rows_profile, h), resample_profile(g, cols_profile, w));
  return nn::conv2d(g, pair, proj, 1);
}

EntropyParams ContextModel::inter_scale(Graph& g, Var coarse, std::size_t h, std::size_t w) {
  const Var up = nn::resize_bilinear(g, coarse, h, w);
  const Var out = nn::conv2d(g, nn::relu(g, nn::conv2d(g, up, xs1, 1)), xs2, 1);
  const std::size_t c = cfg_.channels;
  return {nn::add(g, up, nn::slice_channels(g, out, 0, c)), sigma_from_raw(g, nn::slice_channels(g, out, c, 2 * c))};
}

EntropyParams ContextModel::latent_params(Graph& g, const nn::Shape& shape) {
  const Var mu = broadcast_channels(g, g.param(latent_mu), shape[1], shape[2]);
  const Var sigma = broadcast_channels(g, sigma_from_raw(g, g.param(latent_sigma)), shape[1], shape[2]);
  return {mu, sigma};
}

// ---- full forward ---------------------------------------------------------

Var time_average(Graph& g, Var plane) {
  const auto& v = g.value(plane);
  const std::size_t c = v.dim(0), h = v.dim(1), w = v.dim(2);
  Tensor out({c, h, 1});
  for (std::size_t k = 0; k < c; ++k)
    for (std::size_t i = 0; i < h; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < w; ++j) acc += v.at(k, i, j);
      out[k * h + i] = acc / static_cast<double>(w);
    }
  return g.record(std::move(out), {plane}, [plane, c, h, w](Graph& gr, const Tensor& go) {
    auto& gp = gr.grad_buffer(plane);
    for (std::size_t k = 0; k < c; ++k)
      for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j) gp.at(k, i, j) += go[k * h + i] / static_cast<double>(w);
  });
}

Var pad_even(Graph& g, Var x) {
  const auto& v = g.value(x);
  const std::size_t h = even_up(v.dim(1)), w = even_up(v.dim(2));
  return (h == v.dim(1) && w == v.dim(2)) ? x : nn::pad(g, x, h, w);
}

namespace {

Var sum_all(Graph& g, const std::vector<Var>& parts) {
  if (parts.empty()) return g.constant(Tensor::scalar(0.0));
  Var acc = parts.front();
  for (std::size_t i = 1; i < parts.size(); ++i) acc = nn::add(g, acc, parts[i]);
  return acc;
}

}  // namespace

HexplaneCoding code_hexplane(Graph& g, ContextModel& model, const scene::PlaneVars& planes,
                             const scene::MultiscaleHexplane& layout, QuantSteps& steps, const ForwardOptions& opt) {
  const std::size_t num_scales = layout.num_scales();
  if (steps.num_scales() != num_scales) throw ConfigError("quantization steps do not match hexplane scales");
  if (layout.channels != model.config().channels) throw ConfigError("context model channels do not match hexplane");
  if (opt.mode == Mode::kTrain && !opt.rng) throw StateError("train-mode coding needs a random generator");

  HexplaneCoding out;
  out.decoded.resize(num_scales);
  std::vector<std::array<Var, 2>> qvars(num_scales);
  for (std::size_t s = 0; s < num_scales; ++s)
    for (int grp = 0; grp < 2; ++grp)
      qvars[s][grp] = (opt.learn_q && opt.mode == Mode::kTrain)
                          ? nn::softplus(g, g.param(steps.raw[s][grp]))
                          : g.constant(Tensor::scalar(steps.value(s, grp)));
  const Var unit_step = g.constant(Tensor::scalar(1.0));
  std::vector<Var> plane_bits, latent_bits;

  auto add_plane = [&](std::size_t s, int c, Var values, EntropyParams params) {
    const Var q = qvars[s][group_of(c)];
    PlaneCoding pc{s, c, layout.rows(s), layout.cols(s), values, params, q, g.value(q)[0]};
    plane_bits.push_back(gaussian_bits(g, values, params.mu, params.sigma, q));
    out.coded_elements += g.value(values).size();
    out.planes.push_back(pc);
  };

  for (int c : kSpaceTimeOrder) {
    const Var xq = quantize(g, planes[0][c], qvars[0][kSpaceTime], opt.mode, opt.rng);
    out.decoded[0][c] = xq;
    const Var xp = pad_even(g, xq);
    const auto& pv = g.value(xp);
    const Var z = quantize(g, model.analysis(g, xp), unit_step, opt.mode, opt.rng);
    const auto zp = model.latent_params(g, g.value(z).shape());
    latent_bits.push_back(gaussian_bits(g, z, zp.mu, zp.sigma, unit_step));
    out.coded_elements += g.value(z).size();
    out.latents.push_back({c, z, zp});
    const Var hyper = model.synthesis(g, z, pv.dim(1), pv.dim(2));
    add_plane(0, c, xp, model.checkerboard_params(g, kSpaceTime, hyper, xp));
  }
  for (int c : kSpaceOnlyOrder) {
    const Var xq = quantize(g, planes[0][c], qvars[0][kSpaceOnly], opt.mode, opt.rng);
    out.decoded[0][c] = xq;
    const Var xp = pad_even(g, xq);
    const auto ax = scene::kPlaneAxes[c];
    const Var ctx = model.inter_plane_context(g, time_average(g, out.decoded[0][3 + ax.first]),
                                              time_average(g, out.decoded[0][3 + ax.second]), layout.rows(0),
                                              layout.cols(0));
    add_plane(0, c, xp, model.checkerboard_params(g, kSpaceOnly, pad_even(g, ctx), xp));
  }
  for (std::size_t s = 1; s < num_scales; ++s)
    for (int c : kFineScaleOrder) {
      const Var xq = quantize(g, planes[s][c], qvars[s][group_of(c)], opt.mode, opt.rng);
      out.decoded[s][c] = xq;
      add_plane(s, c, xq, model.inter_scale(g, out.decoded[s - 1][c], layout.rows(s), layout.cols(s)));
    }

  out.plane_bits = sum_all(g, plane_bits);
  out.latent_bits = sum_all(g, latent_bits);
  out.total_bits = nn::add(g, out.plane_bits, out.latent_bits);
  return out;
}

double hexplane_rate(ContextModel& model, const scene::MultiscaleHexplane& hex, QuantSteps& steps) {
  Graph g;
  const auto planes = scene::plane_constants(g, hex);
  const auto coding = code_hexplane(g, model, planes, hex, steps, {});
  return g.value(coding.total_bits)[0];
}

void DecodeState::set_space_time(int plane, Tensor decoded) {
  if (!scene::is_space_time(plane)) throw InputError("not a space-time plane");
  st_[plane - 3] = std::move(decoded);
}

bool DecodeState::space_time_ready() const { return st_[0] && st_[1] && st_[2]; }

Var DecodeState::inter_plane_context(Graph& g, ContextModel& model, int space_only_plane, std::size_t h,
                                     std::size_t w) const {
  if (scene::is_space_time(space_only_plane)) throw InputError("inter-plane context is for space-only planes");
  const auto ax = scene::kPlaneAxes[space_only_plane];
  for (int a : {ax.first, ax.second})
    if (!st_[a])
      throw SequencingError(std::string("inter-plane context for ") + scene::kPlaneNames[space_only_plane] +
                            " requested before " + scene::kPlaneNames[3 + a] + " was decoded");
  return model.inter_plane_context(g, time_average(g, g.constant(*st_[ax.first])),
                                   time_average(g, g.constant(*st_[ax.second])), h, w);
}

// ---- calibration ----------------------------------------------------------

namespace {

struct Moments {
  std::vector<double> sum, sq, sigma_sum;
  std::size_t count = 0;
  explicit Moments(std::size_t c) : sum(c, 0.0), sq(c, 0.0), sigma_sum(c, 0.0) {}
};

void accumulate(Moments& m, const Tensor& x, const Tensor& mu, const Tensor& sigma) {
  const std::size_t c = x.dim(0), hw = x.size() / c;
  for (std::size_t k = 0; k < c; ++k)
    for (std::size_t i = 0; i < hw; ++i) {
      const double r = x[k * hw + i] - mu[k * hw + i];
      m.sum[k] += r;
      m.sq[k] += r * r;
      m.sigma_sum[k] += sigma[k * hw + i];
    }
  m.count += hw;
}

void apply(const Moments& m, nn::LayerParams& out_layer, double floor) {
  if (m.count == 0) return;
  const std::size_t c = m.sum.size();
  const double n = static_cast<double>(m.count);
  for (std::size_t k = 0; k < c; ++k) {
    const double mean = m.sum[k] / n;
    const double sd = std::sqrt(std::max(m.sq[k] / n - mean * mean, 0.0));
    const double current = std::max(m.sigma_sum[k] / n, kSigmaFloor * 2);
    out_layer.bias.value[k] += mean;
    out_layer.bias.value[c + k] += nn::softplus_inverse(std::max(sd, floor)) - nn::softplus_inverse(current);
  }
}

}  // namespace

void calibrate(ContextModel& model, const scene::MultiscaleHexplane& hex, QuantSteps& steps) {
  const std::size_t c = model.config().channels;
  for (int round = 0; round < 3; ++round) {
    Graph g;
    const auto planes = scene::plane_constants(g, hex);
    const auto coding = code_hexplane(g, model, planes, hex, steps, {});
    Moments st(c), so(c), fine(c);
    double floor_coarse = 1.0, floor_fine = 1.0;
    for (const auto& pc : coding.planes) {
      auto& m = pc.scale > 0 ? fine : (group_of(pc.plane) == kSpaceTime ? st : so);
      accumulate(m, g.value(pc.values), g.value(pc.params.mu), g.value(pc.params.sigma));
      double& fl = pc.scale > 0 ? floor_fine : floor_coarse;
      fl = std::min(fl, pc.q_value);
    }
    apply(st, model.st2, 0.2 * floor_coarse);
    apply(so, model.so2, 0.2 * floor_coarse);
    apply(fine, model.xs2, 0.2 * floor_fine);

    const std::size_t cz = model.config().latent;
    std::vector<double> sum(cz, 0.0), sq(cz, 0.0);
    std::size_t count = 0;
    for (const auto& lc : coding.latents) {
      const auto& z = g.value(lc.values);
      const std::size_t hw = z.size() / cz;
      for (std::size_t k = 0; k < cz; ++k)
        for (std::size_t i = 0; i < hw; ++i) {
          sum[k] += z[k * hw + i];
          sq[k] += z[k * hw + i] * z[k * hw + i];
        }
      count += hw;
    }
    for (std::size_t k = 0; k < cz && count; ++k) {
      const double mean = sum[k] / static_cast<double>(count);
      const double sd = std::sqrt(std::max(sq[k] / static_cast<double>(count) - mean * mean, 0.0));
      model.latent_mu.value[k] = mean;
      model.latent_sigma.value[k] = nn::softplus_inverse(std::max(sd, 0.3));
    }
  }
}

std::vector<std::array<Tensor, 6>> bitrate_map(ContextModel& model, const scene::MultiscaleHexplane& hex,
                                               QuantSteps& steps) {
  Graph g;
  const auto planes = scene::plane_constants(g, hex);
  const auto coding = code_hexplane(g, model, planes, hex, steps, {});
  std::vector<std::array<Tensor, 6>> out(hex.num_scales());
  for (const auto& pc : coding.planes) {
    const auto full = gaussian_bits_map(g.value(pc.values), g.value(pc.params.mu), g.value(pc.params.sigma), pc.q_value);
    Tensor cropped({full.dim(0), pc.rows, pc.cols});
    for (std::size_t k = 0; k < full.dim(0); ++k)
      for (std::size_t i = 0; i < pc.rows; ++i)
        for (std::size_t j = 0; j < pc.cols; ++j) cropped.at(k, i, j) = full.at(k, i, j);
    out[pc.scale][pc.plane] = std::move(cropped);
  }
  return out;
}

}  // namespace l4gs::mhcm

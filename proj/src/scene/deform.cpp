#include "light4gs/scene/deform.hpp"

#include <algorithm>
#include <cmath>

#include "light4gs/errors.hpp"

namespace l4gs::scene {

using nn::Graph;
using nn::Tensor;
using nn::Var;

PlaneVars plane_params(Graph& g, MultiscaleHexplane& hex) {
  PlaneVars out(hex.num_scales());
  for (std::size_t s = 0; s < hex.num_scales(); ++s)
    for (int c = 0; c < kNumPlanes; ++c) out[s][c] = g.param(hex.scales[s][c]);
  return out;
}

PlaneVars plane_constants(Graph& g, const MultiscaleHexplane& hex) {
  PlaneVars out(hex.num_scales());
  for (std::size_t s = 0; s < hex.num_scales(); ++s)
    for (int c = 0; c < kNumPlanes; ++c) out[s][c] = g.constant(hex.plane(s, c));
  return out;
}

namespace {

void check_time(double t) {
  if (!(t >= 0.0 && t <= 1.0)) throw InputError("hexplane query time " + std::to_string(t) + " outside [0,1]");
}

std::array<double, 4> query_coords(const SceneBounds& b, const double* mu, double t) {
  return {b.normalize(0, mu[0]), b.normalize(1, mu[1]), b.normalize(2, mu[2]), t};
}

nn::BilinearStencil plane_stencil(const Tensor& plane, int c, const std::array<double, 4>& coord) {
  const std::size_t h = plane.dim(1), w = plane.dim(2);
  const auto ax = kPlaneAxes[c];
  const double v = coord[ax.first] * static_cast<double>(h - 1);
  const double u = coord[ax.second] * static_cast<double>(w - 1);
  return nn::make_stencil(h, w, u, v);
}

double blend(const Tensor& p, std::size_t ch, const nn::BilinearStencil& s) {
  const double top = p.at(ch, s.r0, s.c0) * (1.0 - s.fc) + p.at(ch, s.r0, s.c1) * s.fc;
  const double bottom = p.at(ch, s.r1, s.c0) * (1.0 - s.fc) + p.at(ch, s.r1, s.c1) * s.fc;
  return top * (1.0 - s.fr) + bottom * s.fr;
}

}  // namespace

Var hexplane_features(Graph& g, const PlaneVars& planes, const MultiscaleHexplane& layout, const SceneBounds& bounds,
                      Var mu, double t) {
  check_time(t);
  const auto& mv = g.value(mu);
  if (mv.rank() != 2 || mv.dim(1) != 3) throw ConfigError("hexplane_features expects mu [N,3]");
  if (planes.size() != layout.num_scales()) throw ConfigError("plane handle count does not match hexplane");
  const std::size_t n = mv.dim(0), h = layout.channels, num_scales = layout.num_scales();
  const std::size_t dim = h * num_scales;

  Tensor out({n, dim}, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto coord = query_coords(bounds, mv.vec().data() + i * 3, t);
    for (std::size_t s = 0; s < num_scales; ++s)
      for (int c = 0; c < kNumPlanes; ++c) {
        const auto& p = g.value(planes[s][c]);
        const auto st = plane_stencil(p, c, coord);
        for (std::size_t ch = 0; ch < h; ++ch) out[i * dim + s * h + ch] *= blend(p, ch, st);
      }
  }

  std::vector<Var> parents;
  for (const auto& sc : planes) parents.insert(parents.end(), sc.begin(), sc.end());
  parents.push_back(mu);
  return g.record(std::move(out), parents, [planes, bounds, mu, t, n, h, num_scales, dim](Graph& gr, const Tensor& go) {
    const auto& mv = gr.value(mu);
    const bool want_mu = gr.requires_grad(mu);
    std::array<double, 6> samples{};
    std::array<nn::BilinearStencil, 6> stencils{};
    for (std::size_t i = 0; i < n; ++i) {
      const auto coord = query_coords(bounds, mv.vec().data() + i * 3, t);
      for (std::size_t s = 0; s < num_scales; ++s) {
        for (int c = 0; c < kNumPlanes; ++c) stencils[c] = plane_stencil(gr.value(planes[s][c]), c, coord);
        for (std::size_t ch = 0; ch < h; ++ch) {
          const double up = go[i * dim + s * h + ch];
          if (up == 0.0) continue;
          for (int c = 0; c < kNumPlanes; ++c) samples[c] = blend(gr.value(planes[s][c]), ch, stencils[c]);
          for (int c = 0; c < kNumPlanes; ++c) {
            double others = up;
            for (int o = 0; o < kNumPlanes; ++o)
              if (o != c) others *= samples[o];
            const auto& st = stencils[c];
            const Var pv = planes[s][c];
            if (gr.requires_grad(pv)) {
              auto& gp = gr.grad_buffer(pv);
              gp.at(ch, st.r0, st.c0) += others * (1.0 - st.fr) * (1.0 - st.fc);
              gp.at(ch, st.r0, st.c1) += others * (1.0 - st.fr) * st.fc;
              gp.at(ch, st.r1, st.c0) += others * st.fr * (1.0 - st.fc);
              gp.at(ch, st.r1, st.c1) += others * st.fr * st.fc;
            }
            if (!want_mu) continue;
            const auto& p = gr.value(pv);
            const auto ax = kPlaneAxes[c];
            auto& gm = gr.grad_buffer(mu);
            if (!st.clamped_c && ax.second < 3) {
              const double d = (1.0 - st.fr) * (p.at(ch, st.r0, st.c1) - p.at(ch, st.r0, st.c0)) +
                               st.fr * (p.at(ch, st.r1, st.c1) - p.at(ch, st.r1, st.c0));
              gm[i * 3 + ax.second] += others * d * static_cast<double>(p.dim(2) - 1) / bounds.extent(ax.second);
            }
            if (!st.clamped_r && ax.first < 3) {
              const double d = (1.0 - st.fc) * (p.at(ch, st.r1, st.c0) - p.at(ch, st.r0, st.c0)) +
                               st.fc * (p.at(ch, st.r1, st.c1) - p.at(ch, st.r0, st.c1));
              gm[i * 3 + ax.first] += others * d * static_cast<double>(p.dim(1) - 1) / bounds.extent(ax.first);
            }
          }
        }
      }
    }
  });
}

std::vector<double> query_hexplane(const MultiscaleHexplane& hex, const SceneBounds& bounds, const Vec3& mu,
                                   double t) {
  Graph g;
  const auto planes = plane_constants(g, hex);
  const auto f = hexplane_features(g, planes, hex, bounds, g.constant(Tensor({1, 3}, {mu[0], mu[1], mu[2]})), t);
  return g.value(f).vec();
}

DeformedVars deform_vars(Graph& g, std::vector<nn::LayerParams>& layers, const PlaneVars& planes,
                         const MultiscaleHexplane& layout, const SceneBounds& bounds, Var mu, Var rot, Var scale,
                         double t) {
  const std::size_t n = g.value(mu).dim(0);
  if (layers.empty() || layers.front().in_channels() != layout.feature_dim() + 1)
    throw ConfigError("deformation network input does not match hexplane feature size");
  if (layers.back().out_channels() != kDeformOutputs) throw ConfigError("deformation network must output 10 values");

  const Var features = hexplane_features(g, planes, layout, bounds, mu, t);
  Var x = nn::concat_cols(g, {features, g.constant(Tensor({n, 1}, t))});
  for (std::size_t l = 0; l < layers.size(); ++l) {
    x = nn::linear(g, x, layers[l]);
    if (l + 1 < layers.size()) x = nn::relu(g, x);
  }
  DeformedVars d;
  d.mu = nn::add(g, mu, nn::slice_cols(g, x, 0, 3));
  d.rot = nn::normalize_rows(g, nn::add(g, rot, nn::slice_cols(g, x, 3, 7)));
  d.scale = nn::clamp_min(g, nn::add(g, scale, nn::slice_cols(g, x, 7, 10)), kMinScale);
  return d;
}

PrimitiveTensors to_tensors(const std::vector<GaussianPrimitive>& prims, std::size_t sh_k) {
  const std::size_t n = prims.size();
  PrimitiveTensors t{Tensor({n, 3}), Tensor({n, 4}), Tensor({n, 3}), Tensor({n, 1}), Tensor({n, 3 * sh_k})};
  for (std::size_t i = 0; i < n; ++i) {
    const auto& p = prims[i];
    if (p.sh.size() != 3 * sh_k) throw InputError("primitive " + std::to_string(i) + " has the wrong SH length");
    for (int a = 0; a < 3; ++a) {
      t.mu[i * 3 + a] = p.mu[a];
      t.scale[i * 3 + a] = p.scale[a];
    }
    for (int a = 0; a < 4; ++a) t.rot[i * 4 + a] = p.rot[a];
    t.opacity[i] = p.opacity;
    std::copy(p.sh.begin(), p.sh.end(), t.sh.values().begin() + static_cast<std::ptrdiff_t>(i * 3 * sh_k));
  }
  return t;
}

std::vector<GaussianPrimitive> from_tensors(const PrimitiveTensors& t, std::size_t sh_k) {
  const std::size_t n = t.mu.size() / 3;
  std::vector<GaussianPrimitive> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& p = out[i];
    for (int a = 0; a < 3; ++a) {
      p.mu[a] = t.mu[i * 3 + a];
      p.scale[a] = t.scale[i * 3 + a];
    }
    for (int a = 0; a < 4; ++a) p.rot[a] = t.rot[i * 4 + a];
    p.opacity = t.opacity[i];
    const auto begin = t.sh.vec().begin() + static_cast<std::ptrdiff_t>(i * 3 * sh_k);
    p.sh.assign(begin, begin + static_cast<std::ptrdiff_t>(3 * sh_k));
  }
  return out;
}

namespace {

std::vector<GaussianPrimitive> deform_impl(const DeformationNetwork& net, const MultiscaleHexplane& hex,
                                           const SceneBounds& bounds, const std::vector<GaussianPrimitive>& prims,
                                           std::size_t sh_k, double t) {
  check_time(t);
  if (prims.empty()) return {};
  auto tensors = to_tensors(prims, sh_k);
  Graph g;
  auto layers = net.layers;  // graph ops take mutable layers; a copy keeps the caller's const
  const auto planes = plane_constants(g, hex);
  const auto d = deform_vars(g, layers, planes, hex, bounds, g.constant(tensors.mu), g.constant(tensors.rot),
                             g.constant(tensors.scale), t);
  tensors.mu = g.value(d.mu);
  tensors.rot = g.value(d.rot);
  tensors.scale = g.value(d.scale);
  return from_tensors(tensors, sh_k);
}

}  // namespace

std::vector<GaussianPrimitive> deform_all(const SceneBundle& scene, const std::vector<GaussianPrimitive>& prims,
                                          double t) {
  return deform_impl(scene.deformation, scene.hexplane, scene.bounds, prims, scene.sh_k, t);
}

GaussianPrimitive deform(const GaussianPrimitive& prim, const DeformationNetwork& net, const MultiscaleHexplane& hex,
                         const SceneBounds& bounds, double t) {
  if (prim.sh.size() % 3 != 0) throw InputError("primitive SH length must be a multiple of 3");
  return deform_impl(net, hex, bounds, {prim}, prim.sh.size() / 3, t).front();
}

}  // namespace l4gs::scene

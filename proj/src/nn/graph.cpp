#include "light4gs/nn/graph.hpp"

#include <algorithm>
#include <cmath>
#include <optional>

#include "light4gs/errors.hpp"

namespace l4gs::nn {

Parameter::Parameter(std::string n, Tensor v)
    : name(std::move(n)), value(std::move(v)), grad(value.shape()), velocity(value.shape()) {}

void Parameter::reset(Tensor v) {
  value = std::move(v);
  grad = Tensor(value.shape());
  velocity = Tensor(value.shape());
}

LayerParams::LayerParams(const std::string& name, Tensor w, Tensor b)
    : weight(name + ".weight", std::move(w)), bias(name + ".bias", std::move(b)) {
  if (bias.value.rank() != 1 || bias.value.dim(0) != weight.value.dim(0))
    throw ConfigError(name + ": bias shape " + shape_string(bias.value.shape()) + " does not match weight " +
                      shape_string(weight.value.shape()));
}

double softplus_inverse(double y) {
  if (y <= 0.0) throw InputError("softplus_inverse requires y > 0");
  return y > 30.0 ? y : std::log(std::expm1(y));
}

// ---- Graph ----------------------------------------------------------------

const Graph::Node& Graph::node(Var v) const {
  if (v.id >= nodes_.size()) throw StateError("graph variable does not belong to this graph");
  return nodes_[v.id];
}

Graph::Node& Graph::node(Var v) {
  if (v.id >= nodes_.size()) throw StateError("graph variable does not belong to this graph");
  return nodes_[v.id];
}

Var Graph::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, nullptr, false});
  return Var{nodes_.size() - 1};
}

Var Graph::leaf(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, nullptr, true});
  return Var{nodes_.size() - 1};
}

Var Graph::param(Parameter& p) {
  nodes_.push_back(Node{p.value, {}, {}, &p, true});
  return Var{nodes_.size() - 1};
}

Var Graph::record(Tensor value, std::initializer_list<Var> parents, BackwardFn fn) {
  return record(std::move(value), std::vector<Var>(parents), std::move(fn));
}

Var Graph::record(Tensor value, const std::vector<Var>& parents, BackwardFn fn) {
  bool needs = false;
  for (auto p : parents) needs = needs || node(p).requires_grad;
  nodes_.push_back(Node{std::move(value), {}, needs ? std::move(fn) : BackwardFn{}, nullptr, needs});
  return Var{nodes_.size() - 1};
}

const Tensor& Graph::grad(Var v) const {
  const auto& n = node(v);
  if (!consumed_) throw StateError("gradient requested before backward");
  return n.grad;
}

Tensor& Graph::grad_buffer(Var v) {
  auto& n = node(v);
  if (n.grad.shape() != n.value.shape()) n.grad = Tensor(n.value.shape());
  return n.grad;
}

void Graph::accumulate(Var v, const Tensor& g) {
  if (!node(v).requires_grad) return;
  grad_buffer(v) += g;
}

void Graph::backward(Var loss) {
  if (nodes_.empty() || !loss.valid()) throw StateError("backward called before any forward pass was recorded");
  if (consumed_) throw StateError("backward called twice on the same graph");
  auto& root = node(loss);
  if (root.value.size() != 1) throw StateError("backward expects a scalar loss");
  consumed_ = true;
  if (!root.requires_grad) return;
  grad_buffer(loss).fill(1.0);
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    auto& n = nodes_[i];
    if (!n.requires_grad || n.grad.shape() != n.value.shape()) continue;
    if (n.backward) n.backward(*this, n.grad);
    if (n.param != nullptr) n.param->grad += n.grad;
  }
  // Leaves and parameters keep their gradients; nothing else needs them.
}

// ---- Pure kernels ---------------------------------------------------------

namespace {

void check_conv(const Tensor& input, const LayerParams& p, const Tensor* mask) {
  const auto& w = p.weight.value;
  if (input.rank() != 3) throw ConfigError("conv2d expects [C,H,W] input, got " + shape_string(input.shape()));
  if (w.rank() != 4 || w.dim(2) != w.dim(3) || w.dim(2) % 2 == 0)
    throw ConfigError(p.weight.name + ": conv kernel must be [out,in,k,k] with odd k");
  if (w.dim(1) != input.dim(0))
    throw ConfigError(p.weight.name + ": expects " + std::to_string(w.dim(1)) + " input channels, got " +
                      std::to_string(input.dim(0)));
  if (mask && (mask->rank() != 2 || mask->dim(0) != w.dim(2) || mask->dim(1) != w.dim(3)))
    throw ConfigError(p.weight.name + ": mask must be [k,k]");
}

std::size_t ceil_div(std::size_t a, std::size_t b) { return (a + b - 1) / b; }

}  // namespace

Tensor conv2d(const Tensor& input, const LayerParams& params, int stride, const Tensor* mask) {
  check_conv(input, params, mask);
  if (stride < 1) throw ConfigError("conv2d stride must be >= 1");
  const auto& w = params.weight.value;
  const auto& b = params.bias.value;
  const std::size_t cout = w.dim(0), cin = w.dim(1), k = w.dim(2);
  const std::size_t h = input.dim(1), wd = input.dim(2);
  const std::size_t s = static_cast<std::size_t>(stride);
  const std::size_t oh = ceil_div(h, s), ow = ceil_div(wd, s);
  const long pad = static_cast<long>(k / 2);
  Tensor out({cout, oh, ow});
  for (std::size_t co = 0; co < cout; ++co) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        double acc = b[co];
        for (std::size_t ci = 0; ci < cin; ++ci) {
          for (std::size_t ky = 0; ky < k; ++ky) {
            const long iy = static_cast<long>(oy * s) - pad + static_cast<long>(ky);
            if (iy < 0 || iy >= static_cast<long>(h)) continue;
            for (std::size_t kx = 0; kx < k; ++kx) {
              if (mask && mask->at(ky, kx) == 0.0) continue;
              const long ix = static_cast<long>(ox * s) - pad + static_cast<long>(kx);
              if (ix < 0 || ix >= static_cast<long>(wd)) continue;
              acc += w[((co * cin + ci) * k + ky) * k + kx] *
                     input.at(ci, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix));
            }
          }
        }
        out.at(co, oy, ox) = acc;
      }
    }
  }
  return out;
}

Tensor linear(const Tensor& x, const LayerParams& params) {
  const auto& w = params.weight.value;
  const auto& b = params.bias.value;
  if (x.rank() != 2 || w.rank() != 2 || x.dim(1) != w.dim(1))
    throw ConfigError(params.weight.name + ": linear expects [N," + std::to_string(w.dim(1)) + "] input, got " +
                      shape_string(x.shape()));
  const std::size_t n = x.dim(0), in = w.dim(1), out = w.dim(0);
  Tensor y({n, out});
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t o = 0; o < out; ++o) {
      double acc = b[o];
      for (std::size_t i = 0; i < in; ++i) acc += w[o * in + i] * x[r * in + i];
      y[r * out + o] = acc;
    }
  }
  return y;
}

// ---- Graph ops ------------------------------------------------------------

namespace {

void require_same(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b))
    throw ConfigError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                      shape_string(b.shape()));
}

}  // namespace

Var add(Graph& g, Var a, Var b) {
  require_same(g.value(a), g.value(b), "add");
  Tensor out = g.value(a);
  out += g.value(b);
  return g.record(std::move(out), {a, b}, [a, b](Graph& gr, const Tensor& go) {
    gr.accumulate(a, go);
    gr.accumulate(b, go);
  });
}

Var sub(Graph& g, Var a, Var b) {
  require_same(g.value(a), g.value(b), "sub");
  Tensor out = g.value(a);
  const auto& bv = g.value(b);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return g.record(std::move(out), {a, b}, [a, b](Graph& gr, const Tensor& go) {
    gr.accumulate(a, go);
    Tensor neg = go;
    neg *= -1.0;
    gr.accumulate(b, neg);
  });
}

Var mul(Graph& g, Var a, Var b) {
  require_same(g.value(a), g.value(b), "mul");
  Tensor out = g.value(a);
  const auto& bv = g.value(b);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return g.record(std::move(out), {a, b}, [a, b](Graph& gr, const Tensor& go) {
    if (gr.requires_grad(a)) {
      auto& ga = gr.grad_buffer(a);
      const auto& bv = gr.value(b);
      for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * bv[i];
    }
    if (gr.requires_grad(b)) {
      auto& gb = gr.grad_buffer(b);
      const auto& av = gr.value(a);
      for (std::size_t i = 0; i < go.size(); ++i) gb[i] += go[i] * av[i];
    }
  });
}

Var scale(Graph& g, Var a, double s) {
  Tensor out = g.value(a);
  out *= s;
  return g.record(std::move(out), {a}, [a, s](Graph& gr, const Tensor& go) {
    Tensor t = go;
    t *= s;
    gr.accumulate(a, t);
  });
}

Var mul_const(Graph& g, Var a, const Tensor& c) {
  require_same(g.value(a), c, "mul_const");
  Tensor out = g.value(a);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= c[i];
  return g.record(std::move(out), {a}, [a, c](Graph& gr, const Tensor& go) {
    auto& ga = gr.grad_buffer(a);
    for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * c[i];
  });
}

Var add_const(Graph& g, Var a, const Tensor& c) {
  require_same(g.value(a), c, "add_const");
  Tensor out = g.value(a);
  out += c;
  return g.record(std::move(out), {a}, [a](Graph& gr, const Tensor& go) { gr.accumulate(a, go); });
}

Var add_scalar(Graph& g, Var a, Var s) {
  if (g.value(s).size() != 1) throw ConfigError("add_scalar expects a one-element node");
  Tensor out = g.value(a);
  const double sv = g.value(s)[0];
  for (auto& v : out.values()) v += sv;
  return g.record(std::move(out), {a, s}, [a, s](Graph& gr, const Tensor& go) {
    gr.accumulate(a, go);
    if (gr.requires_grad(s)) {
      double acc = 0.0;
      for (double v : go.values()) acc += v;
      gr.grad_buffer(s)[0] += acc;
    }
  });
}

Var scalar_times(Graph& g, Var s, const Tensor& u) {
  if (g.value(s).size() != 1) throw ConfigError("scalar_times expects a one-element node");
  Tensor out = u;
  out *= g.value(s)[0];
  return g.record(std::move(out), {s}, [s, u](Graph& gr, const Tensor& go) {
    double acc = 0.0;
    for (std::size_t i = 0; i < go.size(); ++i) acc += go[i] * u[i];
    gr.grad_buffer(s)[0] += acc;
  });
}

Var relu(Graph& g, Var a) {
  Tensor out = g.value(a);
  for (auto& v : out.values()) v = v > 0.0 ? v : 0.0;
  return g.record(std::move(out), {a}, [a](Graph& gr, const Tensor& go) {
    auto& ga = gr.grad_buffer(a);
    const auto& av = gr.value(a);
    for (std::size_t i = 0; i < go.size(); ++i)
      if (av[i] > 0.0) ga[i] += go[i];
  });
}

Var softplus(Graph& g, Var a) {
  Tensor out = g.value(a);
  for (auto& v : out.values()) v = softplus(v);
  return g.record(std::move(out), {a}, [a](Graph& gr, const Tensor& go) {
    auto& ga = gr.grad_buffer(a);
    const auto& av = gr.value(a);
    for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * sigmoid(av[i]);
  });
}

Var sum(Graph& g, Var a) {
  double acc = 0.0;
  for (double v : g.value(a).values()) acc += v;
  return g.record(Tensor::scalar(acc), {a}, [a](Graph& gr, const Tensor& go) {
    auto& ga = gr.grad_buffer(a);
    for (auto& v : ga.values()) v += go[0];
  });
}

Var mean(Graph& g, Var a) {
  const auto n = static_cast<double>(std::max<std::size_t>(g.value(a).size(), 1));
  return scale(g, sum(g, a), 1.0 / n);
}

Var mse(Graph& g, Var a, const Tensor& target) {
  const auto& av = g.value(a);
  require_same(av, target, "mse");
  const auto n = static_cast<double>(std::max<std::size_t>(av.size(), 1));
  double acc = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) {
    const double d = av[i] - target[i];
    acc += d * d;
  }
  return g.record(Tensor::scalar(acc / n), {a}, [a, target, n](Graph& gr, const Tensor& go) {
    auto& ga = gr.grad_buffer(a);
    const auto& av = gr.value(a);
    for (std::size_t i = 0; i < av.size(); ++i) ga[i] += go[0] * 2.0 * (av[i] - target[i]) / n;
  });
}

Var linear(Graph& g, Var x, LayerParams& params) {
  Var w = g.param(params.weight);
  Var b = g.param(params.bias);
  Tensor out = linear(g.value(x), params);
  return g.record(std::move(out), {x, w, b}, [x, w, b](Graph& gr, const Tensor& go) {
    const auto& xv = gr.value(x);
    const auto& wv = gr.value(w);
    const std::size_t n = xv.dim(0), in = xv.dim(1), out = wv.dim(0);
    auto& gw = gr.grad_buffer(w);
    auto& gb = gr.grad_buffer(b);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t o = 0; o < out; ++o) {
        const double d = go[r * out + o];
        gb[o] += d;
        for (std::size_t i = 0; i < in; ++i) gw[o * in + i] += d * xv[r * in + i];
      }
    if (gr.requires_grad(x)) {
      auto& gx = gr.grad_buffer(x);
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t o = 0; o < out; ++o) {
          const double d = go[r * out + o];
          for (std::size_t i = 0; i < in; ++i) gx[r * in + i] += d * wv[o * in + i];
        }
    }
  });
}

Var conv2d(Graph& g, Var x, LayerParams& params, int stride, const Tensor* mask) {
  Var w = g.param(params.weight);
  Var b = g.param(params.bias);
  Tensor out = conv2d(g.value(x), params, stride, mask);
  std::optional<Tensor> mask_copy;
  if (mask) mask_copy = *mask;
  return g.record(std::move(out), {x, w, b}, [x, w, b, stride, mask_copy](Graph& gr, const Tensor& go) {
    const auto& in = gr.value(x);
    const auto& wv = gr.value(w);
    const std::size_t cout = wv.dim(0), cin = wv.dim(1), k = wv.dim(2);
    const std::size_t h = in.dim(1), wd = in.dim(2);
    const std::size_t oh = go.dim(1), ow = go.dim(2);
    const auto s = static_cast<std::size_t>(stride);
    const long pad = static_cast<long>(k / 2);
    auto& gw = gr.grad_buffer(w);
    auto& gb = gr.grad_buffer(b);
    Tensor* gx = gr.requires_grad(x) ? &gr.grad_buffer(x) : nullptr;
    for (std::size_t co = 0; co < cout; ++co) {
      for (std::size_t oy = 0; oy < oh; ++oy) {
        for (std::size_t ox = 0; ox < ow; ++ox) {
          const double d = go.at(co, oy, ox);
          gb[co] += d;
          if (d == 0.0) continue;
          for (std::size_t ci = 0; ci < cin; ++ci) {
            for (std::size_t ky = 0; ky < k; ++ky) {
              const long iy = static_cast<long>(oy * s) - pad + static_cast<long>(ky);
              if (iy < 0 || iy >= static_cast<long>(h)) continue;
              for (std::size_t kx = 0; kx < k; ++kx) {
                if (mask_copy && mask_copy->at(ky, kx) == 0.0) continue;
                const long ix = static_cast<long>(ox * s) - pad + static_cast<long>(kx);
                if (ix < 0 || ix >= static_cast<long>(wd)) continue;
                const std::size_t widx = ((co * cin + ci) * k + ky) * k + kx;
                const auto uy = static_cast<std::size_t>(iy), ux = static_cast<std::size_t>(ix);
                gw[widx] += d * in.at(ci, uy, ux);
                if (gx) gx->at(ci, uy, ux) += d * wv[widx];
              }
            }
          }
        }
      }
    }
  });
}

Var resize_bilinear(Graph& g, Var x, std::size_t out_h, std::size_t out_w) {
  Tensor out = resize_bilinear(g.value(x), out_h, out_w);
  return g.record(std::move(out), {x}, [x, out_h, out_w](Graph& gr, const Tensor& go) {
    auto& gx = gr.grad_buffer(x);
    const std::size_t channels = gx.dim(0), h = gx.dim(1), w = gx.dim(2);
    auto coord = [](std::size_t i, std::size_t in, std::size_t out) {
      if (out <= 1 || in <= 1) return 0.0;
      return static_cast<double>(i) * static_cast<double>(in - 1) / static_cast<double>(out - 1);
    };
    for (std::size_t i = 0; i < out_h; ++i)
      for (std::size_t j = 0; j < out_w; ++j) {
        const auto s = make_stencil(h, w, coord(j, w, out_w), coord(i, h, out_h));
        for (std::size_t c = 0; c < channels; ++c) {
          const double d = go.at(c, i, j);
          gx.at(c, s.r0, s.c0) += d * (1.0 - s.fr) * (1.0 - s.fc);
          gx.at(c, s.r0, s.c1) += d * (1.0 - s.fr) * s.fc;
          gx.at(c, s.r1, s.c0) += d * s.fr * (1.0 - s.fc);
          gx.at(c, s.r1, s.c1) += d * s.fr * s.fc;
        }
      }
  });
}

Var concat_channels(Graph& g, Var a, Var b) {
  const auto& av = g.value(a);
  const auto& bv = g.value(b);
  if (av.rank() != 3 || bv.rank() != 3 || av.dim(1) != bv.dim(1) || av.dim(2) != bv.dim(2))
    throw ConfigError("concat_channels: spatial mismatch " + shape_string(av.shape()) + " vs " +
                      shape_string(bv.shape()));
  std::vector<double> data(av.vec());
  data.insert(data.end(), bv.vec().begin(), bv.vec().end());
  const std::size_t ca = av.dim(0);
  Tensor out({ca + bv.dim(0), av.dim(1), av.dim(2)}, std::move(data));
  return g.record(std::move(out), {a, b}, [a, b](Graph& gr, const Tensor& go) {
    const std::size_t na = gr.value(a).size();
    if (gr.requires_grad(a)) {
      auto& ga = gr.grad_buffer(a);
      for (std::size_t i = 0; i < na; ++i) ga[i] += go[i];
    }
    if (gr.requires_grad(b)) {
      auto& gb = gr.grad_buffer(b);
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += go[na + i];
    }
  });
}

Var slice_channels(Graph& g, Var a, std::size_t begin, std::size_t end) {
  const auto& av = g.value(a);
  if (av.rank() != 3 || begin > end || end > av.dim(0)) throw ConfigError("slice_channels: bad range");
  const std::size_t plane = av.dim(1) * av.dim(2);
  std::vector<double> data(av.vec().begin() + static_cast<long>(begin * plane),
                           av.vec().begin() + static_cast<long>(end * plane));
  Tensor out({end - begin, av.dim(1), av.dim(2)}, std::move(data));
  return g.record(std::move(out), {a}, [a, begin, plane](Graph& gr, const Tensor& go) {
    auto& ga = gr.grad_buffer(a);
    for (std::size_t i = 0; i < go.size(); ++i) ga[begin * plane + i] += go[i];
  });
}

Var pad(Graph& g, Var x, std::size_t out_h, std::size_t out_w) {
  const auto& xv = g.value(x);
  if (xv.rank() != 3 || out_h < xv.dim(1) || out_w < xv.dim(2)) throw ConfigError("pad: target smaller than input");
  Tensor out({xv.dim(0), out_h, out_w});
  for (std::size_t c = 0; c < xv.dim(0); ++c)
    for (std::size_t i = 0; i < xv.dim(1); ++i)
      for (std::size_t j = 0; j < xv.dim(2); ++j) out.at(c, i, j) = xv.at(c, i, j);
  return g.record(std::move(out), {x}, [x](Graph& gr, const Tensor& go) {
    auto& gx = gr.grad_buffer(x);
    for (std::size_t c = 0; c < gx.dim(0); ++c)
      for (std::size_t i = 0; i < gx.dim(1); ++i)
        for (std::size_t j = 0; j < gx.dim(2); ++j) gx.at(c, i, j) += go.at(c, i, j);
  });
}

Var crop(Graph& g, Var x, std::size_t out_h, std::size_t out_w) {
  const auto& xv = g.value(x);
  if (xv.rank() != 3 || out_h > xv.dim(1) || out_w > xv.dim(2)) throw ConfigError("crop: target larger than input");
  Tensor out({xv.dim(0), out_h, out_w});
  for (std::size_t c = 0; c < xv.dim(0); ++c)
    for (std::size_t i = 0; i < out_h; ++i)
      for (std::size_t j = 0; j < out_w; ++j) out.at(c, i, j) = xv.at(c, i, j);
  return g.record(std::move(out), {x}, [x](Graph& gr, const Tensor& go) {
    auto& gx = gr.grad_buffer(x);
    for (std::size_t c = 0; c < go.dim(0); ++c)
      for (std::size_t i = 0; i < go.dim(1); ++i)
        for (std::size_t j = 0; j < go.dim(2); ++j) gx.at(c, i, j) += go.at(c, i, j);
  });
}

Var concat_cols(Graph& g, const std::vector<Var>& parts) {
  if (parts.empty()) throw ConfigError("concat_cols: no inputs");
  const std::size_t n = g.value(parts[0]).dim(0);
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (auto p : parts) {
    const auto& v = g.value(p);
    if (v.rank() != 2 || v.dim(0) != n) throw ConfigError("concat_cols: row count mismatch");
    widths.push_back(v.dim(1));
    total += v.dim(1);
  }
  Tensor out({n, total});
  std::size_t off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto& v = g.value(parts[k]);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < widths[k]; ++c) out[r * total + off + c] = v[r * widths[k] + c];
    off += widths[k];
  }
  return g.record(std::move(out), parts, [parts, widths, n, total](Graph& gr, const Tensor& go) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
      if (gr.requires_grad(parts[k])) {
        auto& gp = gr.grad_buffer(parts[k]);
        for (std::size_t r = 0; r < n; ++r)
          for (std::size_t c = 0; c < widths[k]; ++c) gp[r * widths[k] + c] += go[r * total + off + c];
      }
      off += widths[k];
    }
  });
}

Var slice_cols(Graph& g, Var x, std::size_t begin, std::size_t end) {
  const auto& xv = g.value(x);
  if (xv.rank() != 2 || begin > end || end > xv.dim(1)) throw ConfigError("slice_cols: bad range");
  const std::size_t n = xv.dim(0), w = xv.dim(1), k = end - begin;
  Tensor out({n, k});
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < k; ++c) out[r * k + c] = xv[r * w + begin + c];
  return g.record(std::move(out), {x}, [x, begin, n, w, k](Graph& gr, const Tensor& go) {
    auto& gx = gr.grad_buffer(x);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < k; ++c) gx[r * w + begin + c] += go[r * k + c];
  });
}

}  // namespace l4gs::nn

namespace l4gs::nn {

Var normalize_rows(Graph& g, Var x) {
  const auto& xv = g.value(x);
  if (xv.rank() != 2) throw ConfigError("normalize_rows expects [N,d]");
  const std::size_t n = xv.dim(0), d = xv.dim(1);
  Tensor out = xv;
  std::vector<double> norms(n);
  for (std::size_t r = 0; r < n; ++r) {
    double acc = 0.0;
    for (std::size_t c = 0; c < d; ++c) acc += xv[r * d + c] * xv[r * d + c];
    norms[r] = std::sqrt(acc);
    if (norms[r] == 0.0) throw InputError("normalize_rows: zero-length row " + std::to_string(r));
    for (std::size_t c = 0; c < d; ++c) out[r * d + c] /= norms[r];
  }
  Tensor unit = out;
  return g.record(std::move(out), {x}, [x, unit, norms, n, d](Graph& gr, const Tensor& go) {
    auto& gx = gr.grad_buffer(x);
    for (std::size_t r = 0; r < n; ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < d; ++c) dot += go[r * d + c] * unit[r * d + c];
      for (std::size_t c = 0; c < d; ++c) gx[r * d + c] += (go[r * d + c] - dot * unit[r * d + c]) / norms[r];
    }
  });
}

Var clamp_min(Graph& g, Var x, double floor) {
  Tensor out = g.value(x);
  for (auto& v : out.values()) v = std::max(v, floor);
  return g.record(std::move(out), {x}, [x, floor](Graph& gr, const Tensor& go) {
    auto& gx = gr.grad_buffer(x);
    const auto& xv = gr.value(x);
    for (std::size_t i = 0; i < go.size(); ++i)
      if (xv[i] > floor) gx[i] += go[i];
  });
}

}  // namespace l4gs::nn

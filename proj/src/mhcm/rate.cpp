#include "light4gs/mhcm/rate.hpp"

#include <cmath>
#include <numbers>

#include "light4gs/errors.hpp"

namespace l4gs::mhcm {

using nn::Graph;
using nn::Tensor;
using nn::Var;

namespace {

double upper_tail(double z) { return 0.5 * std::erfc(z / std::numbers::sqrt2); }
double density(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }

void check_sigma(double sigma) {
  if (!(sigma > 0.0)) throw InternalError("entropy model produced non-positive sigma " + std::to_string(sigma));
}

}  // namespace

double normal_interval(double lo, double hi) {
  if (lo >= 0.0) return upper_tail(lo) - upper_tail(hi);
  if (hi <= 0.0) return upper_tail(-hi) - upper_tail(-lo);
  return 1.0 - upper_tail(hi) - upper_tail(-lo);
}

double gaussian_bits(double x, double mu, double sigma, double q) {
  check_sigma(sigma);
  const double p = normal_interval((x - 0.5 * q - mu) / sigma, (x + 0.5 * q - mu) / sigma);
  return -std::log2(std::max(p, kMinProbability));
}

Tensor gaussian_bits_map(const Tensor& x, const Tensor& mu, const Tensor& sigma, double q) {
  if (!x.same_shape(mu) || !x.same_shape(sigma)) throw ConfigError("gaussian_bits_map: shape mismatch");
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = gaussian_bits(x[i], mu[i], sigma[i], q);
  return out;
}

Var gaussian_bits(Graph& g, Var x, Var mu, Var sigma, Var q) {
  const auto& xv = g.value(x);
  const auto& mv = g.value(mu);
  const auto& sv = g.value(sigma);
  if (!xv.same_shape(mv) || !xv.same_shape(sv))
    throw ConfigError("gaussian_bits: x " + nn::shape_string(xv.shape()) + ", mu " + nn::shape_string(mv.shape()) +
                      ", sigma " + nn::shape_string(sv.shape()) + " differ");
  if (g.value(q).size() != 1) throw ConfigError("gaussian_bits: q must be a single value");
  const double qv = g.value(q)[0];
  double total = 0.0;
  for (std::size_t i = 0; i < xv.size(); ++i) total += gaussian_bits(xv[i], mv[i], sv[i], qv);

  return g.record(Tensor::scalar(total), {x, mu, sigma, q}, [x, mu, sigma, q](Graph& gr, const Tensor& go) {
    const auto& xv = gr.value(x);
    const auto& mv = gr.value(mu);
    const auto& sv = gr.value(sigma);
    const double qv = gr.value(q)[0];
    const double up = go[0];
    Tensor* gx = gr.requires_grad(x) ? &gr.grad_buffer(x) : nullptr;
    Tensor* gm = gr.requires_grad(mu) ? &gr.grad_buffer(mu) : nullptr;
    Tensor* gs = gr.requires_grad(sigma) ? &gr.grad_buffer(sigma) : nullptr;
    double gq = 0.0;
    for (std::size_t i = 0; i < xv.size(); ++i) {
      const double s = sv[i];
      const double a = (xv[i] - 0.5 * qv - mv[i]) / s;
      const double b = (xv[i] + 0.5 * qv - mv[i]) / s;
      const double p = normal_interval(a, b);
      if (!(p > kMinProbability)) continue;  // floored: constant in every input
      const double d = -up / (p * std::numbers::ln2);
      const double pa = density(a), pb = density(b);
      const double dx = d * (pb - pa) / s;
      if (gx) (*gx)[i] += dx;
      if (gm) (*gm)[i] -= dx;
      if (gs) (*gs)[i] += d * (a * pa - b * pb) / s;
      gq += d * (pa + pb) / (2.0 * s);
    }
    if (gr.requires_grad(q)) gr.grad_buffer(q)[0] += gq;
  });
}

double quantize_value(double x, double q) { return q * std::round(x / q); }

}  // namespace l4gs::mhcm

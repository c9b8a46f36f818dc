#include "light4gs/codec/factorized.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "light4gs/errors.hpp"
#include "light4gs/mhcm/rate.hpp"

namespace l4gs::codec {

using nn::Graph;
using nn::Tensor;
using nn::Var;

std::size_t sh_bin(double value, bool* clamped) {
  const double m = std::round(value / kShStep);
  const bool out = !(m >= -kShHalfBins && m <= kShHalfBins);
  if (clamped) *clamped = out;
  if (out) return std::isnan(m) || m < 0 ? 0 : kShBins - 1;
  return static_cast<std::size_t>(static_cast<int>(m) + kShHalfBins);
}

FactorizedModel::FactorizedModel(std::size_t bands) {
  for (std::size_t b = 0; b < bands; ++b)
    logits_.emplace_back("sh_model.band" + std::to_string(b), Tensor({kShBins}, 0.0));
}

std::vector<double> FactorizedModel::probabilities(std::size_t band) const {
  const auto& th = logits_.at(band).value;
  std::vector<double> p(kShBins);
  double total = 0.0;
  for (std::size_t i = 0; i < kShBins; ++i) total += (p[i] = nn::softplus(th[i]));
  for (auto& v : p) v /= total;
  return p;
}

QuantizedCdf FactorizedModel::table(std::size_t band) const {
  return QuantizedCdf::from_probabilities(probabilities(band));
}

namespace {

void check_sh_shape(const Tensor& sh, std::size_t sh_k, std::size_t bands) {
  if (sh.rank() != 2 || sh.dim(1) != 3 * sh_k) throw ConfigError("SH tensor must be [N, 3k]");
  if (sh_bands(sh_k) != bands) throw ConfigError("SH model band count does not match sh_k");
}

// CDF (before normalization) at a position in bin units; bin i covers [i, i+1).
double unnormalized_cdf(const std::vector<double>& prefix, const std::vector<double>& w, double u) {
  if (u <= 0.0) return 0.0;
  if (u >= static_cast<double>(kShBins)) return prefix[kShBins];
  const auto i = static_cast<std::size_t>(u);
  return prefix[i] + (u - static_cast<double>(i)) * w[i];
}

}  // namespace

double FactorizedModel::rate(const Tensor& sh, std::size_t sh_k) const {
  check_sh_shape(sh, sh_k, bands());
  std::vector<std::vector<double>> p(bands());
  for (std::size_t b = 0; b < bands(); ++b) p[b] = probabilities(b);
  double bits = 0.0;
  for (std::size_t n = 0; n < sh.dim(0); ++n)
    for (std::size_t c = 0; c < 3 * sh_k; ++c)
      bits -= std::log2(std::max(p[sh_band(c % sh_k)][sh_bin(sh.at(n, c))], mhcm::kMinProbability));
  return bits;
}

Var FactorizedModel::rate(Graph& g, Var sh, std::size_t sh_k, bool train, std::mt19937_64* rng) {
  const Tensor& x = g.value(sh);
  check_sh_shape(x, sh_k, bands());
  if (train && !rng) throw StateError("train-mode SH rate needs a random generator");
  const std::size_t nb = bands();

  std::vector<Var> theta(nb);
  std::vector<std::vector<double>> w(nb), prefix(nb);
  std::vector<double> total(nb, 0.0);
  for (std::size_t b = 0; b < nb; ++b) {
    theta[b] = g.param(logits_[b]);
    w[b].resize(kShBins);
    prefix[b].assign(kShBins + 1, 0.0);
    for (std::size_t i = 0; i < kShBins; ++i) {
      w[b][i] = nn::softplus(logits_[b].value[i]);
      prefix[b][i + 1] = prefix[b][i] + w[b][i];
    }
    total[b] = prefix[b][kShBins];
  }

  std::vector<double> pos(x.size());
  if (train) {
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    for (std::size_t i = 0; i < x.size(); ++i) pos[i] = x[i] / kShStep + kShHalfBins + 0.5 + u(*rng);
  } else {
    for (std::size_t i = 0; i < x.size(); ++i) pos[i] = static_cast<double>(sh_bin(x[i])) + 0.5;
  }

  const auto cdf = [&](std::size_t b, double u) { return unnormalized_cdf(prefix[b], w[b], u); };

  const std::size_t cols = 3 * sh_k;
  double bits = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const std::size_t b = sh_band((i % cols) % sh_k);
    const double p = (cdf(b, pos[i] + 0.5) - cdf(b, pos[i] - 0.5)) / total[b];
    bits -= std::log2(std::max(p, mhcm::kMinProbability));
  }

  std::vector<Var> parents{sh};
  parents.insert(parents.end(), theta.begin(), theta.end());
  return g.record(Tensor::scalar(bits), parents,
                  [sh, theta, w, prefix, total, pos, cols, sh_k, nb, train](Graph& gr, const Tensor& go) {
                    const double up = go[0];
                    Tensor* gx = train && gr.requires_grad(sh) ? &gr.grad_buffer(sh) : nullptr;
                    std::vector<std::vector<double>> dw(nb, std::vector<double>(kShBins, 0.0));
                    std::vector<double> dw_all(nb, 0.0);
                    // below[b][i] adds to every weight j < i; resolved by a suffix sum.
                    std::vector<std::vector<double>> below(nb, std::vector<double>(kShBins + 1, 0.0));
                    auto bin_weight = [&](std::size_t b, double u) {
                      return (u < 0.0 || u >= static_cast<double>(kShBins)) ? 0.0 : w[b][static_cast<std::size_t>(u)];
                    };
                    // d cdf(u) / d w_j, added with sign s.
                    auto add_cdf_grad = [&](std::size_t b, double u, double s) {
                      if (u <= 0.0) return;
                      if (u >= static_cast<double>(kShBins)) {
                        dw_all[b] += s;
                        return;
                      }
                      const auto i = static_cast<std::size_t>(u);
                      below[b][i] += s;
                      dw[b][i] += s * (u - static_cast<double>(i));
                    };
                    for (std::size_t e = 0; e < pos.size(); ++e) {
                      const std::size_t b = sh_band((e % cols) % sh_k);
                      const double lo = pos[e] - 0.5, hi = pos[e] + 0.5;
                      const double p =
                          (unnormalized_cdf(prefix[b], w[b], hi) - unnormalized_cdf(prefix[b], w[b], lo)) / total[b];
                      if (!(p > mhcm::kMinProbability)) continue;
                      const double d = -up / (p * std::numbers::ln2);  // d bits / d p
                      if (gx) (*gx)[e] += d * (bin_weight(b, hi) - bin_weight(b, lo)) / total[b] / kShStep;
                      // p = N / W: dp/dw_j = (dN/dw_j - p) / W
                      add_cdf_grad(b, hi, d / total[b]);
                      add_cdf_grad(b, lo, -d / total[b]);
                      dw_all[b] -= d * p / total[b];
                    }
                    for (std::size_t b = 0; b < nb; ++b) {
                      if (!gr.requires_grad(theta[b])) continue;
                      auto& gt = gr.grad_buffer(theta[b]);
                      const auto& th = gr.value(theta[b]);
                      double suffix = 0.0;
                      for (std::size_t j = kShBins; j-- > 0;) {
                        suffix += below[b][j + 1];
                        dw[b][j] += suffix;
                      }
                      for (std::size_t j = 0; j < kShBins; ++j) gt[j] += (dw[b][j] + dw_all[b]) * nn::sigmoid(th[j]);
                    }
                  });
}

void FactorizedModel::fit(const Tensor& sh, std::size_t sh_k, double pseudo_count) {
  check_sh_shape(sh, sh_k, bands());
  std::vector<std::vector<double>> count(bands(), std::vector<double>(kShBins, 0.0));
  for (std::size_t n = 0; n < sh.dim(0); ++n)
    for (std::size_t c = 0; c < 3 * sh_k; ++c) count[sh_band(c % sh_k)][sh_bin(sh.at(n, c))] += 1.0;
  for (std::size_t b = 0; b < bands(); ++b) {
    std::size_t first = kShBins, last = 0;
    double total = 0.0;
    for (std::size_t i = 0; i < kShBins; ++i)
      if (count[b][i] > 0.0) {
        first = std::min(first, i);
        last = i;
        total += count[b][i];
      }
    std::vector<double> th(kShBins, kOffLogit);
    if (first <= last) {
      const double norm = total + pseudo_count * static_cast<double>(last - first + 1);
      for (std::size_t i = first; i <= last; ++i) th[i] = nn::softplus_inverse((count[b][i] + pseudo_count) / norm);
    }
    set_logits(b, th);
  }
  snap();
}

void FactorizedModel::set_logits(std::size_t band, const std::vector<double>& logits) {
  if (logits.size() != kShBins) throw ConfigError("SH model needs " + std::to_string(kShBins) + " logits per band");
  logits_.at(band).value = Tensor({kShBins}, logits);
}

std::vector<nn::Parameter*> FactorizedModel::parameters() {
  std::vector<nn::Parameter*> out;
  for (auto& p : logits_) out.push_back(&p);
  return out;
}

void FactorizedModel::snap() {
  for (auto& p : logits_) p.value = nn::snap_float32(p.value);
}

bool FactorizedModel::same_values(const FactorizedModel& o) const {
  if (bands() != o.bands()) return false;
  for (std::size_t b = 0; b < bands(); ++b)
    if (!(logits_[b].value == o.logits_[b].value)) return false;
  return true;
}

void FactorizedModel::write(io::ByteWriter& w) const {
  w.u16(static_cast<std::uint16_t>(bands()));
  for (const auto& p : logits_) {
    std::size_t first = 0, last = kShBins;
    while (first < kShBins && p.value[first] == kOffLogit) ++first;
    while (last > first && p.value[last - 1] == kOffLogit) --last;
    w.u16(static_cast<std::uint16_t>(first));
    w.u16(static_cast<std::uint16_t>(last - first));
    for (std::size_t i = first; i < last; ++i) w.f32(static_cast<float>(p.value[i]));
  }
}

FactorizedModel FactorizedModel::read(io::ByteReader& r) {
  const std::size_t bands = r.u16();
  if (bands == 0 || bands > 16) r.fail("SH model band count " + std::to_string(bands) + " out of range");
  FactorizedModel m(bands);
  for (std::size_t b = 0; b < bands; ++b) {
    const std::size_t first = r.u16(), count = r.u16();
    if (first + count > kShBins) r.fail("SH model bin range out of bounds");
    std::vector<double> th(kShBins, kOffLogit);
    for (std::size_t i = 0; i < count; ++i) {
      th[first + i] = r.f32();
      if (!std::isfinite(th[first + i])) r.fail("SH model logit is not finite");
    }
    m.set_logits(b, th);
  }
  return m;
}

Tensor quantize_sh(const Tensor& sh) {
  Tensor out = sh;
  for (auto& v : out.values()) v = sh_value(sh_bin(v));
  return out;
}

ShStream encode_sh(const Tensor& sh, std::size_t sh_k, const FactorizedModel& model) {
  check_sh_shape(sh, sh_k, model.bands());
  std::vector<QuantizedCdf> tables;
  for (std::size_t b = 0; b < model.bands(); ++b) tables.push_back(model.table(b));
  ShStream out;
  RangeEncoder enc;
  for (std::size_t n = 0; n < sh.dim(0); ++n)
    for (std::size_t c = 0; c < 3 * sh_k; ++c) {
      bool clamped = false;
      const std::size_t bin = sh_bin(sh.at(n, c), &clamped);
      out.clamped += clamped ? 1 : 0;
      enc.encode(tables[sh_band(c % sh_k)], bin);
    }
  out.stream.count = enc.symbols();
  out.stream.bytes = enc.finish();
  out.stream.model_id = 4;
  return out;
}

Tensor decode_sh(const io::Bytes& bytes, std::size_t n, std::size_t sh_k, const FactorizedModel& model) {
  if (sh_bands(sh_k) != model.bands()) throw DecodeError("SH stream: model band count does not match sh_k");
  std::vector<QuantizedCdf> tables;
  for (std::size_t b = 0; b < model.bands(); ++b) tables.push_back(model.table(b));
  Tensor out({n, 3 * sh_k});
  RangeDecoder dec(bytes, "sh");
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < 3 * sh_k; ++c) out.at(i, c) = sh_value(dec.decode(tables[sh_band(c % sh_k)]));
  dec.finish();
  return out;
}

}  // namespace l4gs::codec

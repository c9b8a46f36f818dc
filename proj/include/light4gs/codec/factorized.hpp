#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "light4gs/codec/range_coder.hpp"
#include "light4gs/io/bytes.hpp"
#include "light4gs/nn/graph.hpp"

namespace l4gs::codec {

inline constexpr double kShStep = 0.02;
inline constexpr int kShHalfBins = 128;
inline constexpr std::size_t kShBins = 2 * kShHalfBins + 1;  // bins centred on -2.56 .. 2.56
/// Logit for bins the serialized model leaves out.
inline constexpr double kOffLogit = -30.0;

/// SH degree of coefficient slot i (0 for DC, 1 for slots 1..3, ...).
inline std::size_t sh_band(std::size_t i) {
  std::size_t l = 0;
  while ((l + 1) * (l + 1) <= i) ++l;
  return l;
}
inline std::size_t sh_bands(std::size_t sh_k) { return sh_k == 0 ? 0 : sh_band(sh_k - 1) + 1; }

/// Bin index in [0, kShBins) of a value; `clamped` is set when it fell outside.
std::size_t sh_bin(double value, bool* clamped = nullptr);
inline double sh_value(std::size_t bin) { return static_cast<double>(static_cast<int>(bin) - kShHalfBins) * kShStep; }

/// Per-band learned distribution over the SH bins. Bin weights are
/// softplus(logit); the CDF is linear inside each bin.
class FactorizedModel {
 public:
  FactorizedModel() = default;
  explicit FactorizedModel(std::size_t bands);

  std::size_t bands() const { return logits_.size(); }
  /// Normalized bin probabilities of one band.
  std::vector<double> probabilities(std::size_t band) const;
  QuantizedCdf table(std::size_t band) const;

  /// Eval-mode bits of quantized SH [N, 3k] (channel-major per row).
  double rate(const nn::Tensor& sh, std::size_t sh_k) const;
  /// Differentiable bits of SH [N, 3k]. Train mode adds U(-step/2, step/2)
  /// noise and reads the piecewise-linear CDF; eval mode uses the bin mass.
  nn::Var rate(nn::Graph& g, nn::Var sh, std::size_t sh_k, bool train, std::mt19937_64* rng);

  /// Sets each band's logits to its smoothed bin histogram of `sh` [N,3k].
  void fit(const nn::Tensor& sh, std::size_t sh_k, double pseudo_count = 0.05);
  void set_logits(std::size_t band, const std::vector<double>& logits);
  const std::vector<double>& logits(std::size_t band) const { return logits_[band].value.vec(); }

  std::vector<nn::Parameter*> parameters();
  void snap();
  bool same_values(const FactorizedModel& o) const;

  /// Per band: u16 first, u16 last stored bin, then that many f32 logits.
  void write(io::ByteWriter& w) const;
  static FactorizedModel read(io::ByteReader& r);

 private:
  std::vector<nn::Parameter> logits_;  // [bands], each [kShBins]
};

struct ShStream {
  CodedStream stream;
  std::size_t clamped = 0;  // values outside the support, coded at the edge bin
};

/// Bin centres of every value (clamped at the support edge).
nn::Tensor quantize_sh(const nn::Tensor& sh);

/// Codes SH [N, 3k] in row order, each value at step kShStep.
ShStream encode_sh(const nn::Tensor& sh, std::size_t sh_k, const FactorizedModel& model);
/// Inverse of encode_sh; returns [N, 3k] of bin centres.
nn::Tensor decode_sh(const io::Bytes& bytes, std::size_t n, std::size_t sh_k, const FactorizedModel& model);

}  // namespace l4gs::codec

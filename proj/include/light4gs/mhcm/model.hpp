#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "light4gs/nn/graph.hpp"
#include "light4gs/scene/deform.hpp"
#include "light4gs/scene/types.hpp"

namespace l4gs::mhcm {

enum class Mode { kTrain, kEval };

enum Group : int { kSpaceOnly = 0, kSpaceTime = 1 };
inline Group group_of(int plane) { return scene::is_space_time(plane) ? kSpaceTime : kSpaceOnly; }

/// Decode order within scale 1 and for every later scale.
inline constexpr std::array<int, 3> kSpaceTimeOrder{3, 4, 5};
inline constexpr std::array<int, 3> kSpaceOnlyOrder{0, 1, 2};
inline constexpr std::array<int, 6> kFineScaleOrder{3, 4, 5, 0, 1, 2};

// ---- quantization ---------------------------------------------------------

/// One learnable step per (scale, group), stored through softplus so it stays positive.
struct QuantSteps {
  std::vector<std::array<nn::Parameter, 2>> raw;  // [scale][group], each [1]

  QuantSteps() = default;
  QuantSteps(std::size_t scales, double space_only, double space_time);

  std::size_t num_scales() const { return raw.size(); }
  /// Float32-exact step used for coding.
  double value(std::size_t scale, int group) const;
  void set(std::size_t scale, int group, double q);
  std::vector<nn::Parameter*> parameters();
};

/// Eval: q * round(x/q), halves away from zero. Train: x + q*u, u ~ U(-1/2, 1/2) from `rng`.
nn::Tensor quantize(const nn::Tensor& x, double q, Mode mode, std::mt19937_64* rng = nullptr);
/// Graph version; in train mode the gradient reaches both x and q.
nn::Var quantize(nn::Graph& g, nn::Var x, nn::Var q, Mode mode, std::mt19937_64* rng);

// ---- checkerboard ---------------------------------------------------------

inline bool is_anchor(std::size_t i, std::size_t j) { return ((i + j) & 1u) == 1u; }
/// [C,H,W] tensor of 1 at anchors (or at non-anchors when `anchors` is false).
nn::Tensor checkerboard_mask(std::size_t channels, std::size_t h, std::size_t w, bool anchors);
/// 3x3 kernel mask selecting the four edge neighbours.
nn::Tensor cross_kernel_mask();
inline std::size_t even_up(std::size_t n) { return n + (n & 1u); }
/// Zero-pads [C,H,W] on the bottom/right to even H and W.
nn::Var pad_even(nn::Graph& g, nn::Var x);

// ---- context model --------------------------------------------------------

struct MhcmConfig {
  std::size_t channels = 8;  // plane hidden dim
  std::size_t hyper = 4;     // decoded hyperprior / context feature width
  std::size_t latent = 2;    // hyperprior latent channels
  std::size_t hidden = 16;   // entropy head width
  double init_gain = 0.5;
};

struct EntropyParams {
  nn::Var mu;
  nn::Var sigma;
};

class ContextModel {
 public:
  ContextModel() = default;
  ContextModel(const MhcmConfig& cfg, std::uint64_t seed);

  const MhcmConfig& config() const { return cfg_; }

  /// Hyperprior analysis h_a: padded plane [C,H,W] -> latent [Cz, ceil(H/4), ceil(W/4)].
  nn::Var analysis(nn::Graph& g, nn::Var plane);
  /// Hyperprior synthesis h_s: latent -> [Ch, H, W].
  nn::Var synthesis(nn::Graph& g, nn::Var latent, std::size_t h, std::size_t w);
  /// MaskConv over the anchor values of a decoded plane (non-anchors are zeroed first).
  nn::Var anchor_context(nn::Graph& g, nn::Var plane);
  /// Entropy head for scale 1: (hyper feature [Ch,H,W], context [C,H,W] or invalid for zeros).
  EntropyParams head(nn::Graph& g, Group group, nn::Var hyper, nn::Var context);
  /// Anchor parameters from the hyper feature, non-anchor ones from hyper + MaskConv, merged by parity.
  EntropyParams checkerboard_params(nn::Graph& g, Group group, nn::Var hyper, nn::Var plane);
  /// Context for a space-only plane from two time-averaged profiles [C, len, 1];
  /// returns [Ch, h, w] (unpadded).
  nn::Var inter_plane_context(nn::Graph& g, nn::Var rows_profile, nn::Var cols_profile, std::size_t h,
                              std::size_t w);
  /// Parameters of a fine plane from its decoded coarse predecessor.
  EntropyParams inter_scale(nn::Graph& g, nn::Var coarse, std::size_t h, std::size_t w);
  /// Per-channel prior of the latent, broadcast to `shape`.
  EntropyParams latent_params(nn::Graph& g, const nn::Shape& shape);

  std::vector<nn::Parameter*> parameters();
  /// Sum of stored floats (for the container size budget).
  std::size_t parameter_count();
  /// Rounds every weight through float32 (what the decoder will see).
  void snap();
  bool same_values(ContextModel& o);

  // Layers are public so the container can serialize them in a fixed order.
  std::vector<nn::LayerParams*> layers();
  nn::LayerParams ha1, ha2, ha3, hs1, hs2, hs3;
  nn::LayerParams mask_conv;  // bias fixed at zero
  nn::LayerParams st1, st2, so1, so2;
  nn::LayerParams proj;
  nn::LayerParams xs1, xs2;
  nn::Parameter latent_mu, latent_sigma;  // [Cz] each, sigma softplus-parameterized

 private:
  EntropyParams split(nn::Graph& g, nn::Var out);
  MhcmConfig cfg_;
  nn::Tensor cross_;
};

// ---- full forward ---------------------------------------------------------

struct PlaneCoding {
  std::size_t scale = 0;
  int plane = 0;
  std::size_t rows = 0, cols = 0;  // unpadded extent
  nn::Var values;                  // quantized values, padded to even at scale 1
  EntropyParams params;
  nn::Var q;
  double q_value = 0.0;
};

struct LatentCoding {
  int plane = 0;
  nn::Var values;  // quantized latent
  EntropyParams params;
};

struct HexplaneCoding {
  std::vector<LatentCoding> latents;  // one per scale-1 space-time plane
  std::vector<PlaneCoding> planes;    // decode order
  nn::Var plane_bits;
  nn::Var latent_bits;
  nn::Var total_bits;
  std::size_t coded_elements = 0;
  /// Quantized planes (cropped), indexed [scale][plane].
  std::vector<std::array<nn::Var, 6>> decoded;
};

struct ForwardOptions {
  Mode mode = Mode::kEval;
  bool learn_q = false;
  std::mt19937_64* rng = nullptr;  // required in train mode
};

/// Runs the complete context model over every plane in decode order and
/// returns per-plane parameters plus the total rate.
HexplaneCoding code_hexplane(nn::Graph& g, ContextModel& model, const scene::PlaneVars& planes,
                             const scene::MultiscaleHexplane& layout, QuantSteps& steps, const ForwardOptions& opt);

/// Eval-mode rate (bits) of a hexplane.
double hexplane_rate(ContextModel& model, const scene::MultiscaleHexplane& hex, QuantSteps& steps);

/// Time-average profile of a space-time plane [C, rows, T] -> [C, rows, 1].
nn::Var time_average(nn::Graph& g, nn::Var plane);

/// Decoder-side bookkeeping for the inter-plane stage: space-only planes may
/// only ask for context once all three space-time planes are decoded.
class DecodeState {
 public:
  void set_space_time(int plane, nn::Tensor decoded);
  bool space_time_ready() const;
  /// Throws SequencingError when a needed space-time plane is missing.
  nn::Var inter_plane_context(nn::Graph& g, ContextModel& model, int space_only_plane, std::size_t h,
                              std::size_t w) const;

 private:
  std::array<std::optional<nn::Tensor>, 3> st_;
};

/// Sets output biases so predicted means/scales match the statistics of
/// `hex` under the current weights. Used before entropy training and for
/// randomly initialized models.
void calibrate(ContextModel& model, const scene::MultiscaleHexplane& hex, QuantSteps& steps);

/// Per-position bits for every plane, [scale][plane] -> [C,H,W] (unpadded).
std::vector<std::array<nn::Tensor, 6>> bitrate_map(ContextModel& model, const scene::MultiscaleHexplane& hex,
                                                    QuantSteps& steps);

}  // namespace l4gs::mhcm

#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "light4gs/io/bytes.hpp"
#include "light4gs/mhcm/model.hpp"
#include "light4gs/scene/types.hpp"

namespace l4gs::codec {

/// Inclusive range of quantization indices coded for one plane or latent.
struct Support {
  std::int32_t lo = 0;
  std::int32_t hi = 0;
};

/// Quantization steps as coded: [scale][group], float32-exact.
using StepTable = std::vector<std::array<double, 2>>;
StepTable step_table(mhcm::QuantSteps& steps);

struct HexplaneStream {
  std::vector<std::array<Support, 6>> planes;  // [scale][plane]
  std::array<Support, 3> latents{};            // scale-1 space-time planes xt, yt, zt
  io::Bytes bytes;
};

/// Entropy parameters seen while coding, in decode order: the three latents,
/// and every plane as [C,H,W] (padded at the coarsest scale).
struct ReplayTrace {
  std::vector<nn::Tensor> latent_mu, latent_sigma;
  std::vector<nn::Tensor> mu, sigma;
};

/// Quantized hexplane and the coded stream. `model` must already be float32-snapped.
struct HexplaneEncoding {
  HexplaneStream stream;
  scene::MultiscaleHexplane quantized;
  double estimate_bits = 0.0;
};

HexplaneEncoding encode_hexplane(mhcm::ContextModel& model, const scene::MultiscaleHexplane& hex,
                                 const StepTable& steps, ReplayTrace* trace = nullptr);

/// `layout` supplies the plane shapes; its values are ignored.
scene::MultiscaleHexplane decode_hexplane(const HexplaneStream& stream, mhcm::ContextModel& model,
                                          const scene::MultiscaleHexplane& layout, const StepTable& steps,
                                          ReplayTrace* trace = nullptr);

/// Shape table, steps, supports and stream bytes (the container's third section).
void write_hexplane_stream(io::ByteWriter& w, const scene::MultiscaleHexplane& layout, const StepTable& steps,
                           const HexplaneStream& s);
/// Fills layout (shape only), steps and stream.
void read_hexplane_stream(io::ByteReader& r, scene::MultiscaleHexplane& layout, StepTable& steps, HexplaneStream& s);

}  // namespace l4gs::codec

#pragma once

#include <cstdint>
#include <string>

#include "light4gs/codec/factorized.hpp"
#include "light4gs/codec/hexplane_codec.hpp"
#include "light4gs/io/bytes.hpp"
#include "light4gs/mhcm/model.hpp"
#include "light4gs/scene/types.hpp"

namespace l4gs::codec {

/// Everything besides the scene that the encoder needs.
struct CodecModels {
  mhcm::ContextModel context;
  mhcm::QuantSteps steps;
  FactorizedModel sh;

  /// Rounds every stored real to its stored precision: half floats for the
  /// context model, float32 for the rest.
  void snap();
};

struct DefaultModelOptions {
  mhcm::MhcmConfig mhcm{};
  double q_space_only = 0.02;
  double q_space_time = 0.02;
  std::uint64_t seed = 0;
};

/// Randomly initialized context model calibrated to the scene's hexplane,
/// steps from `opt`, SH model fitted to the scene's quantized SH.
CodecModels default_models(const scene::SceneBundle& scene, const DefaultModelOptions& opt);

/// Widths as u32, then every weight as a half float in parameters() order.
void write_context_model(io::ByteWriter& w, mhcm::ContextModel& m);
mhcm::ContextModel read_context_model(io::ByteReader& r);

/// Model file: magic "L4GS-MDL", context model, raw steps, SH model.
io::Bytes serialize_models(CodecModels& m);
CodecModels parse_models(const io::Bytes& bytes);
void save_models(const std::string& path, CodecModels& m);
CodecModels load_models(const std::string& path);

struct CompressResult {
  io::Bytes container;
  /// What the decoder must reproduce exactly.
  scene::MultiscaleHexplane quantized_hexplane;
  nn::Tensor quantized_sh;  // [N, 3k]
  double hexplane_estimate_bits = 0.0;
  std::size_t hexplane_stream_bytes = 0;
  double sh_estimate_bits = 0.0;
  std::size_t sh_stream_bytes = 0;
  std::size_t sh_clamped = 0;
};

/// Snaps `models` in place, then writes the five-section container.
CompressResult compress(const scene::SceneBundle& scene, CodecModels& models);

struct DecompressResult {
  scene::SceneBundle scene;  // hexplane and SH hold the decoded quantized values
  CodecModels models;
};

/// Throws FormatError (or DecodeError) on any malformed input.
DecompressResult decompress(const io::Bytes& container);

/// SH of all primitives as [N, 3k].
nn::Tensor sh_matrix(const std::vector<scene::GaussianPrimitive>& prims, std::size_t sh_k);

}  // namespace l4gs::codec

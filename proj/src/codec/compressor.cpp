#include "light4gs/codec/compressor.hpp"

#include <cmath>

#include "light4gs/codec/container.hpp"
#include "light4gs/errors.hpp"
#include "light4gs/io/sections.hpp"
#include "light4gs/scene/io.hpp"

namespace l4gs::codec {

using nn::Tensor;

namespace {
const std::string kModelMagic = "L4GS-MDL";
constexpr std::uint16_t kModelVersion = 1;
constexpr std::uint32_t kModelSection = 1;
constexpr std::size_t kMaxWidth = 256;
}  // namespace

void CodecModels::snap() {
  for (auto* p : context.parameters()) p->value = nn::snap_float16(p->value);
  for (auto* p : steps.parameters()) p->value = nn::snap_float32(p->value);
  sh.snap();
}

Tensor sh_matrix(const std::vector<scene::GaussianPrimitive>& prims, std::size_t sh_k) {
  Tensor out({prims.size(), 3 * sh_k});
  for (std::size_t n = 0; n < prims.size(); ++n)
    for (std::size_t c = 0; c < 3 * sh_k; ++c) out.at(n, c) = prims[n].sh.at(c);
  return out;
}

CodecModels default_models(const scene::SceneBundle& scene, const DefaultModelOptions& opt) {
  auto cfg = opt.mhcm;
  cfg.channels = scene.hexplane.channels;
  CodecModels m{mhcm::ContextModel(cfg, opt.seed),
                mhcm::QuantSteps(scene.hexplane.num_scales(), opt.q_space_only, opt.q_space_time),
                FactorizedModel(sh_bands(scene.sh_k))};
  m.snap();
  mhcm::calibrate(m.context, scene.hexplane, m.steps);
  m.sh.fit(sh_matrix(scene.primitives, scene.sh_k), scene.sh_k);
  m.snap();
  return m;
}

void write_context_model(io::ByteWriter& w, mhcm::ContextModel& m) {
  const auto& c = m.config();
  for (std::size_t v : {c.channels, c.hyper, c.latent, c.hidden}) w.u32(static_cast<std::uint32_t>(v));
  for (auto* p : m.parameters())
    for (double v : p->value.vec()) w.u16(nn::float16_bits(v));
}

mhcm::ContextModel read_context_model(io::ByteReader& r) {
  mhcm::MhcmConfig cfg;
  for (std::size_t* v : {&cfg.channels, &cfg.hyper, &cfg.latent, &cfg.hidden}) {
    *v = r.u32();
    if (*v == 0 || *v > kMaxWidth) r.fail("context model width " + std::to_string(*v) + " out of range");
  }
  mhcm::ContextModel m(cfg, 0);
  for (auto* p : m.parameters()) {
    if (r.remaining() < 2 * p->value.size()) r.fail(p->name + " truncated");
    for (auto& v : p->value.values()) {
      v = nn::float16_value(r.u16());
      if (!std::isfinite(v)) r.fail(p->name + " holds a non-finite weight");
    }
  }
  return m;
}

io::Bytes serialize_models(CodecModels& m) {
  m.snap();
  io::ByteWriter w;
  write_context_model(w, m.context);
  w.u32(static_cast<std::uint32_t>(m.steps.num_scales()));
  for (auto* p : m.steps.parameters()) w.f32(static_cast<float>(p->value[0]));
  m.sh.write(w);
  io::SectionedFile f;
  f.version = kModelVersion;
  f.sections = {{kModelSection, w.take()}};
  return io::pack_sections(kModelMagic, f);
}

CodecModels parse_models(const io::Bytes& bytes) {
  const auto f = io::unpack_sections(bytes, kModelMagic, kModelVersion, 0, {kModelSection},
                                     [](std::uint32_t) { return std::string("models"); });
  io::ByteReader r(f.sections[0].payload, "models");
  CodecModels m{read_context_model(r), {}, {}};
  const std::size_t scales = r.u32();
  if (scales == 0 || scales > 16) r.fail("step table scale count out of range");
  m.steps = mhcm::QuantSteps(scales, 1.0, 1.0);
  for (auto* p : m.steps.parameters()) {
    p->value[0] = r.f32();
    if (!std::isfinite(p->value[0])) r.fail("non-finite quantization step");
  }
  m.sh = FactorizedModel::read(r);
  r.expect_end();
  return m;
}

void save_models(const std::string& path, CodecModels& m) { io::write_file(path, serialize_models(m)); }
CodecModels load_models(const std::string& path) { return parse_models(io::read_file(path)); }

CompressResult compress(const scene::SceneBundle& scene, CodecModels& models) {
  scene.validate();
  if (models.sh.bands() != sh_bands(scene.sh_k)) throw ConfigError("SH model band count does not match the scene");
  models.snap();
  CompressResult out;
  ContainerSections sec;
  {
    io::ByteWriter w;
    scene::write_bounds(w, scene.bounds);
    scene::write_rig(w, scene.timestamps, scene.cameras);
    scene::write_primitives(w, scene.primitives, scene.sh_k, false);
    sec[0] = w.take();
  }
  {
    io::ByteWriter w;
    scene::write_deformation(w, scene.deformation);
    sec[1] = w.take();
  }
  {
    const auto steps = step_table(models.steps);
    auto enc = encode_hexplane(models.context, scene.hexplane, steps);
    out.quantized_hexplane = std::move(enc.quantized);
    out.hexplane_estimate_bits = enc.estimate_bits;
    out.hexplane_stream_bytes = enc.stream.bytes.size();
    io::ByteWriter w;
    write_hexplane_stream(w, scene.hexplane, steps, enc.stream);
    sec[2] = w.take();
  }
  {
    const Tensor sh = sh_matrix(scene.primitives, scene.sh_k);
    out.quantized_sh = quantize_sh(sh);
    out.sh_estimate_bits = models.sh.rate(sh, scene.sh_k);
    auto enc = encode_sh(sh, scene.sh_k, models.sh);
    out.sh_clamped = enc.clamped;
    out.sh_stream_bytes = enc.stream.bytes.size();
    sec[3] = std::move(enc.stream.bytes);
  }
  {
    io::ByteWriter w;
    write_context_model(w, models.context);
    models.sh.write(w);
    sec[4] = w.take();
  }
  out.container = pack_container(sec);
  return out;
}

DecompressResult decompress(const io::Bytes& container) {
  const auto sec = unpack_container(container);
  try {
    DecompressResult out;
    auto& scene = out.scene;
    {
      io::ByteReader r(sec[0], "primitives");
      scene.bounds = scene::read_bounds(r);
      scene::read_rig(r, scene.timestamps, scene.cameras);
      scene.primitives = scene::read_primitives(r, false, scene.sh_k);
      r.expect_end();
    }
    {
      io::ByteReader r(sec[1], "deformation");
      scene.deformation = scene::read_deformation(r);
      r.expect_end();
    }
    {
      io::ByteReader r(sec[4], "mhcm");
      out.models.context = read_context_model(r);
      out.models.sh = FactorizedModel::read(r);
      r.expect_end();
    }
    {
      io::ByteReader r(sec[2], "hexplane");
      scene::MultiscaleHexplane layout;
      StepTable steps;
      HexplaneStream stream;
      read_hexplane_stream(r, layout, steps, stream);
      r.expect_end();
      if (layout.channels != out.models.context.config().channels)
        throw FormatError("hexplane: channel count does not match the context model");
      scene.hexplane = decode_hexplane(stream, out.models.context, layout, steps);
      out.models.steps = mhcm::QuantSteps(steps.size(), 1.0, 1.0);
      for (std::size_t s = 0; s < steps.size(); ++s)
        for (int g = 0; g < 2; ++g) out.models.steps.set(s, g, steps[s][g]);
    }
    {
      if (sh_bands(scene.sh_k) != out.models.sh.bands()) throw FormatError("sh: model band count does not match");
      const Tensor sh = decode_sh(sec[3], scene.primitives.size(), scene.sh_k, out.models.sh);
      for (std::size_t n = 0; n < scene.primitives.size(); ++n)
        for (std::size_t c = 0; c < 3 * scene.sh_k; ++c) scene.primitives[n].sh[c] = sh.at(n, c);
    }
    scene.validate();
    return out;
  } catch (const FormatError&) {
    throw;
  } catch (const Error& e) {
    throw FormatError(std::string("container content invalid: ") + e.what());
  }
}

}  // namespace l4gs::codec

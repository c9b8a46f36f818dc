#include "light4gs/scene/io.hpp"

#include <cstring>

#include "light4gs/io/sections.hpp"

namespace l4gs::scene {

namespace {

const std::string kMagic(kSceneMagic, sizeof(kSceneMagic));  // includes the NUL
constexpr std::size_t kBoundsBytes = 6 * 4;
constexpr std::size_t kMaxDim = 1u << 20;

std::string section_name(std::uint32_t id) {
  switch (id) {
    case kScenePrimitives: return "primitives";
    case kSceneHexplane: return "hexplane";
    case kSceneDeformation: return "deformation";
    case kSceneCameras: return "cameras";
    default: return "section " + std::to_string(id);
  }
}

std::size_t checked_dim(io::ByteReader& r, const char* what) {
  const std::size_t v = r.u32();
  if (v > kMaxDim) r.fail(std::string(what) + " " + std::to_string(v) + " is implausibly large");
  return v;
}

}  // namespace

void write_primitives(io::ByteWriter& w, const std::vector<GaussianPrimitive>& prims, std::size_t sh_k, bool with_sh) {
  w.u32(static_cast<std::uint32_t>(prims.size()));
  w.u32(static_cast<std::uint32_t>(sh_k));
  for (const auto& p : prims) {
    w.f32s(p.mu);
    w.f32s(p.rot);
    w.f32s(p.scale);
    w.f32(p.opacity);
    if (with_sh) w.f32s(p.sh);
  }
}

std::vector<GaussianPrimitive> read_primitives(io::ByteReader& r, bool with_sh, std::size_t& sh_k) {
  const std::size_t n = r.u32();
  sh_k = checked_dim(r, "SH coefficient count");
  if (sh_k == 0) r.fail("SH coefficient count is zero");
  const std::size_t per = 4 * (11 + (with_sh ? 3 * sh_k : 0));
  if (n > r.remaining() / per) r.fail("primitive count " + std::to_string(n) + " exceeds payload");
  std::vector<GaussianPrimitive> prims(n);
  for (auto& p : prims) {
    for (auto& v : p.mu) v = r.f32();
    for (auto& v : p.rot) v = r.f32();
    for (auto& v : p.scale) v = r.f32();
    p.opacity = r.f32();
    p.sh.assign(3 * sh_k, 0.0);
    if (with_sh)
      for (auto& v : p.sh) v = r.f32();
  }
  return prims;
}

void write_hexplane_shape(io::ByteWriter& w, const MultiscaleHexplane& hex) {
  w.u32(static_cast<std::uint32_t>(hex.channels));
  w.u32(static_cast<std::uint32_t>(hex.base_rows));
  w.u32(static_cast<std::uint32_t>(hex.base_cols));
  w.u32(static_cast<std::uint32_t>(hex.num_scales()));
}

MultiscaleHexplane read_hexplane_shape(io::ByteReader& r) {
  MultiscaleHexplane hex;
  hex.channels = checked_dim(r, "hexplane channels");
  hex.base_rows = checked_dim(r, "hexplane rows");
  hex.base_cols = checked_dim(r, "hexplane columns");
  const std::size_t scales = checked_dim(r, "hexplane scale count");
  if (hex.channels == 0 || hex.base_rows == 0 || hex.base_cols == 0 || scales == 0 || scales > 16)
    r.fail("invalid hexplane shape");
  hex.scales.resize(scales);
  return hex;
}

void write_hexplane(io::ByteWriter& w, const MultiscaleHexplane& hex) {
  write_hexplane_shape(w, hex);
  for (std::size_t s = 0; s < hex.num_scales(); ++s)
    for (int c = 0; c < kNumPlanes; ++c) w.f32s(hex.plane(s, c).values());
}

MultiscaleHexplane read_hexplane(io::ByteReader& r) {
  const auto shape = read_hexplane_shape(r);
  std::size_t total = 0;
  for (std::size_t s = 0; s < shape.num_scales(); ++s) total += kNumPlanes * shape.channels * shape.rows(s) * shape.cols(s);
  if (total > r.remaining() / 4) r.fail("hexplane payload shorter than its declared shape");
  MultiscaleHexplane hex(shape.channels, shape.base_rows, shape.base_cols, shape.num_scales(), 0.0);
  for (std::size_t s = 0; s < hex.num_scales(); ++s)
    for (int c = 0; c < kNumPlanes; ++c)
      for (auto& v : hex.plane(s, c).values()) v = r.f32();
  return hex;
}

void write_deformation(io::ByteWriter& w, const DeformationNetwork& net) {
  w.u32(static_cast<std::uint32_t>(net.layers.size()));
  for (const auto& l : net.layers) {
    w.u32(static_cast<std::uint32_t>(l.out_channels()));
    w.u32(static_cast<std::uint32_t>(l.in_channels()));
    w.f32s(l.weight.value.values());
    w.f32s(l.bias.value.values());
  }
}

DeformationNetwork read_deformation(io::ByteReader& r) {
  const std::size_t count = checked_dim(r, "layer count");
  if (count == 0 || count > 64) r.fail("invalid layer count");
  DeformationNetwork net;
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t out = checked_dim(r, "layer width"), in = checked_dim(r, "layer width");
    if (out == 0 || in == 0 || (out * in + out) > r.remaining() / 4) r.fail("layer " + std::to_string(i) + " truncated");
    nn::Tensor wt({out, in}), b({out});
    for (auto& v : wt.values()) v = r.f32();
    for (auto& v : b.values()) v = r.f32();
    if (i > 0 && in != net.layers.back().out_channels()) r.fail("layer widths do not chain");
    net.layers.emplace_back("deform.l" + std::to_string(i), std::move(wt), std::move(b));
  }
  if (net.layers.back().out_channels() != kDeformOutputs) r.fail("network does not output 10 values");
  return net;
}

void write_bounds(io::ByteWriter& w, const SceneBounds& b) {
  w.f32s(b.lo);
  w.f32s(b.hi);
}

SceneBounds read_bounds(io::ByteReader& r) {
  SceneBounds b;
  for (auto& v : b.lo) v = r.f32();
  for (auto& v : b.hi) v = r.f32();
  for (int a = 0; a < 3; ++a)
    if (!(b.hi[a] > b.lo[a])) r.fail("empty bounding box");
  return b;
}

void write_rig(io::ByteWriter& w, std::size_t timestamps, const std::vector<Camera>& cameras) {
  w.u32(static_cast<std::uint32_t>(timestamps));
  w.u32(static_cast<std::uint32_t>(cameras.size()));
  for (const auto& c : cameras) {
    w.f32s(c.rotation);
    w.f32s(c.translation);
    w.u32(static_cast<std::uint32_t>(c.height));
    w.u32(static_cast<std::uint32_t>(c.width));
    w.f32(c.pixel_scale);
  }
}

void read_rig(io::ByteReader& r, std::size_t& timestamps, std::vector<Camera>& cameras) {
  timestamps = r.u32();
  const std::size_t m = r.count(12 * 4 + 8 + 4, "camera");
  cameras.assign(m, Camera{});
  for (auto& c : cameras) {
    for (auto& v : c.rotation) v = r.f32();
    for (auto& v : c.translation) v = r.f32();
    c.height = checked_dim(r, "image height");
    c.width = checked_dim(r, "image width");
    c.pixel_scale = r.f32();
  }
}

io::Bytes serialize_scene(const SceneBundle& scene) {
  io::SectionedFile f;
  f.version = kSceneVersion;
  {
    io::ByteWriter w;
    write_bounds(w, scene.bounds);
    f.header = w.take();
  }
  io::ByteWriter prims, hex, net, cams;
  write_primitives(prims, scene.primitives, scene.sh_k, true);
  write_hexplane(hex, scene.hexplane);
  write_deformation(net, scene.deformation);
  write_rig(cams, scene.timestamps, scene.cameras);
  f.sections = {{kScenePrimitives, prims.take()}, {kSceneHexplane, hex.take()},
                {kSceneDeformation, net.take()}, {kSceneCameras, cams.take()}};
  return io::pack_sections(kMagic, f);
}

SceneBundle parse_scene(const io::Bytes& bytes) {
  const auto f = io::unpack_sections(bytes, kMagic, kSceneVersion, kBoundsBytes,
                                     {kScenePrimitives, kSceneHexplane, kSceneDeformation, kSceneCameras}, section_name);
  SceneBundle scene;
  {
    io::ByteReader r(f.header, "header");
    scene.bounds = read_bounds(r);
  }
  {
    io::ByteReader r(f.sections[0].payload, "primitives");
    scene.primitives = read_primitives(r, true, scene.sh_k);
    r.expect_end();
  }
  {
    io::ByteReader r(f.sections[1].payload, "hexplane");
    scene.hexplane = read_hexplane(r);
    r.expect_end();
  }
  {
    io::ByteReader r(f.sections[2].payload, "deformation");
    scene.deformation = read_deformation(r);
    r.expect_end();
  }
  {
    io::ByteReader r(f.sections[3].payload, "cameras");
    read_rig(r, scene.timestamps, scene.cameras);
    r.expect_end();
  }
  try {
    scene.validate();
  } catch (const InputError& e) {
    throw FormatError(std::string("scene content invalid: ") + e.what());
  }
  return scene;
}

void save_scene(const std::string& path, const SceneBundle& scene) { io::write_file(path, serialize_scene(scene)); }

SceneBundle load_scene(const std::string& path) { return parse_scene(io::read_file(path)); }

void snap_scene(SceneBundle& scene) {
  auto snap = [](auto& range) {
    for (auto& v : range) v = nn::snap_float32(v);
  };
  snap(scene.bounds.lo);
  snap(scene.bounds.hi);
  for (auto& p : scene.primitives) {
    snap(p.mu);
    snap(p.rot);
    snap(p.scale);
    p.opacity = nn::snap_float32(p.opacity);
    snap(p.sh);
  }
  for (auto* prm : scene.hexplane.parameters()) prm->value = nn::snap_float32(prm->value);
  for (auto* prm : scene.deformation.parameters()) prm->value = nn::snap_float32(prm->value);
  for (auto& c : scene.cameras) {
    snap(c.rotation);
    snap(c.translation);
    c.pixel_scale = nn::snap_float32(c.pixel_scale);
  }
}

std::size_t raw_scene_bytes(const SceneBundle& scene) { return serialize_scene(scene).size(); }

}  // namespace l4gs::scene

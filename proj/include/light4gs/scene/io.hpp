#pragma once

#include <string>
#include <vector>

#include "light4gs/io/bytes.hpp"
#include "light4gs/scene/types.hpp"

namespace l4gs::scene {

inline constexpr char kSceneMagic[] = "L4GS-SCN";  // written with its trailing NUL, 9 bytes
inline constexpr std::uint16_t kSceneVersion = 1;

enum SceneSection : std::uint32_t { kScenePrimitives = 1, kSceneHexplane = 2, kSceneDeformation = 3, kSceneCameras = 4 };

// Section payload codecs, shared with the compressed container. All reals are float32.
void write_primitives(io::ByteWriter& w, const std::vector<GaussianPrimitive>& prims, std::size_t sh_k, bool with_sh);
/// With `with_sh` false, each primitive's SH is sized 3*sh_k and zero-filled.
std::vector<GaussianPrimitive> read_primitives(io::ByteReader& r, bool with_sh, std::size_t& sh_k);

void write_hexplane(io::ByteWriter& w, const MultiscaleHexplane& hex);
MultiscaleHexplane read_hexplane(io::ByteReader& r);
/// Only the shape fields; planes are left empty.
void write_hexplane_shape(io::ByteWriter& w, const MultiscaleHexplane& hex);
MultiscaleHexplane read_hexplane_shape(io::ByteReader& r);

void write_deformation(io::ByteWriter& w, const DeformationNetwork& net);
DeformationNetwork read_deformation(io::ByteReader& r);

/// Timestamp count and the camera rig.
void write_rig(io::ByteWriter& w, std::size_t timestamps, const std::vector<Camera>& cameras);
void read_rig(io::ByteReader& r, std::size_t& timestamps, std::vector<Camera>& cameras);

void write_bounds(io::ByteWriter& w, const SceneBounds& b);
SceneBounds read_bounds(io::ByteReader& r);

io::Bytes serialize_scene(const SceneBundle& scene);
SceneBundle parse_scene(const io::Bytes& bytes);

void save_scene(const std::string& path, const SceneBundle& scene);
SceneBundle load_scene(const std::string& path);

/// Rounds every stored real through float32 so that save/load is lossless.
void snap_scene(SceneBundle& scene);

/// Bytes of the uncompressed float32 scene file.
std::size_t raw_scene_bytes(const SceneBundle& scene);

}  // namespace l4gs::scene

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "light4gs/nn/graph.hpp"
#include "light4gs/nn/tensor.hpp"

namespace l4gs::scene {

using Vec3 = std::array<double, 3>;
using Quat = std::array<double, 4>;  // (w, x, y, z)
using Mat3 = std::array<double, 9>;  // row-major

/// Band-0 spherical harmonic constant; color = 0.5 + kShC0 * sh0.
inline constexpr double kShC0 = 0.28209479177387814;
/// Scale components never drop below this after deformation.
inline constexpr double kMinScale = 1e-4;
/// Minimum alpha for a primitive to count as hitting a pixel.
inline constexpr double kAlphaEpsilon = 1.0 / 255.0;

struct GaussianPrimitive {
  Vec3 mu{};
  Quat rot{1.0, 0.0, 0.0, 0.0};
  Vec3 scale{0.1, 0.1, 0.1};
  double opacity = 1.0;
  /// k coefficients per color channel, channel-major: sh[c * k + i].
  std::vector<double> sh;

  friend bool operator==(const GaussianPrimitive&, const GaussianPrimitive&) = default;
};

/// Throws InputError when the unit-quaternion / positive-scale / opacity
/// invariants are violated.
void validate(const GaussianPrimitive& p, std::size_t sh_k);

struct SceneBounds {
  Vec3 lo{-1.0, -1.0, -1.0};
  Vec3 hi{1.0, 1.0, 1.0};

  double extent(int axis) const { return hi[axis] - lo[axis]; }
  /// Maps a world coordinate to [0,1] along `axis`.
  double normalize(int axis, double v) const { return (v - lo[axis]) / extent(axis); }
  bool contains(const Vec3& p) const;

  friend bool operator==(const SceneBounds&, const SceneBounds&) = default;
};

// Plane c covers the coordinate pair (first, second); 0..2 = x,y,z and 3 = t.
// Rows of a plane index `first`, columns index `second`.
struct AxisPair {
  int first;
  int second;
};
inline constexpr std::array<AxisPair, 6> kPlaneAxes{{{0, 1}, {0, 2}, {1, 2}, {0, 3}, {1, 3}, {2, 3}}};
inline constexpr std::array<const char*, 6> kPlaneNames{"xy", "xz", "yz", "xt", "yt", "zt"};
inline constexpr int kNumPlanes = 6;

inline constexpr bool is_space_time(int plane) { return kPlaneAxes[plane].second == 3; }

/// Six factor planes per scale. Scale s (0-based) has planes
/// [channels, (s+1)*base_rows, (s+1)*base_cols].
struct MultiscaleHexplane {
  std::size_t channels = 0;
  std::size_t base_rows = 0;
  std::size_t base_cols = 0;
  std::vector<std::array<nn::Parameter, 6>> scales;

  MultiscaleHexplane() = default;
  /// Allocates every plane and fills it with `fill`.
  MultiscaleHexplane(std::size_t channels, std::size_t base_rows, std::size_t base_cols, std::size_t num_scales,
                     double fill = 1.0);

  std::size_t num_scales() const { return scales.size(); }
  std::size_t feature_dim() const { return channels * scales.size(); }
  std::size_t rows(std::size_t s) const { return (s + 1) * base_rows; }
  std::size_t cols(std::size_t s) const { return (s + 1) * base_cols; }

  nn::Tensor& plane(std::size_t s, int c) { return scales.at(s).at(c).value; }
  const nn::Tensor& plane(std::size_t s, int c) const { return scales.at(s).at(c).value; }

  std::vector<nn::Parameter*> parameters();
  bool same_values(const MultiscaleHexplane& o) const;
};

/// MLP from [hexplane feature, t] to the 10 deformation outputs
/// (dmu 3, drot 4, dscale 3). ReLU between layers, linear output.
struct DeformationNetwork {
  std::vector<nn::LayerParams> layers;

  DeformationNetwork() = default;
  /// Zero-initialized layers with the given widths; widths.front() is the
  /// input dimension and widths.back() must be 10.
  explicit DeformationNetwork(const std::vector<std::size_t>& widths);

  std::size_t input_dim() const { return layers.front().in_channels(); }
  std::vector<nn::Parameter*> parameters();
  bool same_values(const DeformationNetwork& o) const;
};

inline constexpr std::size_t kDeformOutputs = 10;

struct Camera {
  Mat3 rotation{1, 0, 0, 0, 1, 0, 0, 0, 1};  // world -> camera
  Vec3 translation{};
  std::size_t height = 64;
  std::size_t width = 64;
  double pixel_scale = 1.0;  // world units per pixel

  /// Throws InputError unless the rotation is orthonormal to 1e-6 and the
  /// image is non-empty.
  void validate() const;

  friend bool operator==(const Camera&, const Camera&) = default;
};

/// Camera rotated by `angle` radians about the world y axis, looking down +z.
Camera orbit_camera(double angle, std::size_t height, std::size_t width, double pixel_scale);

/// Everything needed to render the scene at any timestamp.
struct SceneBundle {
  SceneBounds bounds;
  std::size_t sh_k = 1;
  std::vector<GaussianPrimitive> primitives;
  MultiscaleHexplane hexplane;
  DeformationNetwork deformation;
  std::vector<Camera> cameras;  // M views, shared by every timestamp
  std::size_t timestamps = 1;   // T; timestamp i sits at t = i / max(T-1, 1)

  double time_of(std::size_t i) const;
  void validate() const;
};

/// Quaternion to row-major rotation matrix (assumes unit norm).
Mat3 quat_to_matrix(const Quat& q);

}  // namespace l4gs::scene

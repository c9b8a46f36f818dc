#include "light4gs/scene/types.hpp"

#include <cmath>
#include <string>

#include "light4gs/errors.hpp"

namespace l4gs::scene {

void validate(const GaussianPrimitive& p, std::size_t sh_k) {
  const double n = std::sqrt(p.rot[0] * p.rot[0] + p.rot[1] * p.rot[1] + p.rot[2] * p.rot[2] + p.rot[3] * p.rot[3]);
  if (std::abs(n - 1.0) > 1e-6) throw InputError("primitive rotation is not a unit quaternion (norm " + std::to_string(n) + ")");
  for (double s : p.scale)
    if (!(s > 0.0) || !std::isfinite(s)) throw InputError("primitive scale must be positive and finite");
  if (!(p.opacity >= 0.0 && p.opacity <= 1.0)) throw InputError("primitive opacity outside [0,1]");
  if (p.sh.size() != 3 * sh_k)
    throw InputError("primitive has " + std::to_string(p.sh.size()) + " SH values, expected " + std::to_string(3 * sh_k));
  for (double v : p.mu)
    if (!std::isfinite(v)) throw InputError("primitive position is not finite");
  for (double v : p.sh)
    if (!std::isfinite(v)) throw InputError("primitive SH value is not finite");
}

bool SceneBounds::contains(const Vec3& p) const {
  for (int a = 0; a < 3; ++a)
    if (p[a] < lo[a] || p[a] > hi[a]) return false;
  return true;
}

MultiscaleHexplane::MultiscaleHexplane(std::size_t ch, std::size_t br, std::size_t bc, std::size_t num_scales,
                                       double fill)
    : channels(ch), base_rows(br), base_cols(bc) {
  if (ch == 0 || br == 0 || bc == 0 || num_scales == 0) throw ConfigError("hexplane dimensions must be positive");
  scales.resize(num_scales);
  for (std::size_t s = 0; s < num_scales; ++s)
    for (int c = 0; c < kNumPlanes; ++c)
      scales[s][c] = nn::Parameter("hexplane.s" + std::to_string(s + 1) + "." + kPlaneNames[c],
                                   nn::Tensor({ch, rows(s), cols(s)}, fill));
}

std::vector<nn::Parameter*> MultiscaleHexplane::parameters() {
  std::vector<nn::Parameter*> out;
  for (auto& sc : scales)
    for (auto& p : sc) out.push_back(&p);
  return out;
}

bool MultiscaleHexplane::same_values(const MultiscaleHexplane& o) const {
  if (channels != o.channels || base_rows != o.base_rows || base_cols != o.base_cols ||
      scales.size() != o.scales.size())
    return false;
  for (std::size_t s = 0; s < scales.size(); ++s)
    for (int c = 0; c < kNumPlanes; ++c)
      if (!(plane(s, c) == o.plane(s, c))) return false;
  return true;
}

DeformationNetwork::DeformationNetwork(const std::vector<std::size_t>& widths) {
  if (widths.size() < 2 || widths.back() != kDeformOutputs)
    throw ConfigError("deformation network needs >= 2 widths ending in " + std::to_string(kDeformOutputs));
  for (std::size_t i = 0; i + 1 < widths.size(); ++i)
    layers.emplace_back("deform.l" + std::to_string(i), nn::Tensor({widths[i + 1], widths[i]}),
                        nn::Tensor({widths[i + 1]}));
}

std::vector<nn::Parameter*> DeformationNetwork::parameters() {
  std::vector<nn::Parameter*> out;
  for (auto& l : layers) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  return out;
}

bool DeformationNetwork::same_values(const DeformationNetwork& o) const {
  if (layers.size() != o.layers.size()) return false;
  for (std::size_t i = 0; i < layers.size(); ++i)
    if (!(layers[i].weight.value == o.layers[i].weight.value) || !(layers[i].bias.value == o.layers[i].bias.value))
      return false;
  return true;
}

void Camera::validate() const {
  if (height == 0 || width == 0) throw InputError("camera image size must be positive");
  if (!(pixel_scale > 0.0)) throw InputError("camera pixel scale must be positive");
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double dot = 0.0;
      for (int k = 0; k < 3; ++k) dot += rotation[i * 3 + k] * rotation[j * 3 + k];
      if (std::abs(dot - (i == j ? 1.0 : 0.0)) > 1e-6) throw InputError("camera rotation is not orthonormal");
    }
}

Camera orbit_camera(double angle, std::size_t height, std::size_t width, double pixel_scale) {
  Camera cam;
  const double c = std::cos(angle), s = std::sin(angle);
  cam.rotation = {c, 0, -s, 0, 1, 0, s, 0, c};
  cam.height = height;
  cam.width = width;
  cam.pixel_scale = pixel_scale;
  return cam;
}

double SceneBundle::time_of(std::size_t i) const {
  return timestamps <= 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(timestamps - 1);
}

void SceneBundle::validate() const {
  if (sh_k == 0) throw InputError("scene must store at least one SH coefficient per channel");
  for (int a = 0; a < 3; ++a)
    if (!(bounds.hi[a] > bounds.lo[a])) throw InputError("scene bounding box is empty");
  for (const auto& p : primitives) scene::validate(p, sh_k);
  for (const auto& c : cameras) c.validate();
  if (timestamps == 0) throw InputError("scene needs at least one timestamp");
  if (hexplane.scales.empty()) throw InputError("scene has no hexplane");
  if (deformation.layers.empty() || deformation.input_dim() != hexplane.feature_dim() + 1)
    throw InputError("deformation network input does not match hexplane feature size");
}

Mat3 quat_to_matrix(const Quat& q) {
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  return {1 - 2 * (y * y + z * z), 2 * (x * y - w * z),     2 * (x * z + w * y),
          2 * (x * y + w * z),     1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
          2 * (x * z - w * y),     2 * (y * z + w * x),     1 - 2 * (x * x + y * y)};
}

}  // namespace l4gs::scene

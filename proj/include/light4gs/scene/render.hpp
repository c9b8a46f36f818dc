#pragma once

#include <cstdint>
#include <vector>

#include "light4gs/nn/graph.hpp"
#include "light4gs/scene/types.hpp"

namespace l4gs::scene {

struct IntersectionRecord {
  /// Pixels where the primitive's alpha exceeded kAlphaEpsilon inside its 3-sigma ellipse.
  std::vector<std::uint32_t> pixel_hits;
  /// Primitives skipped because their projected covariance had zero area.
  std::size_t degenerate_skipped = 0;
};

struct RenderResult {
  nn::Tensor image;  // [3,H,W], black background
  IntersectionRecord record;
};

/// Splats already-deformed primitives through an orthographic camera.
RenderResult rasterize(const std::vector<GaussianPrimitive>& prims, std::size_t sh_k, const Camera& camera);

/// Deforms the primitives to time t, then rasterizes.
RenderResult render(const SceneBundle& scene, const std::vector<GaussianPrimitive>& prims, const Camera& camera,
                    double t);
inline RenderResult render(const SceneBundle& scene, const Camera& camera, double t) {
  return render(scene, scene.primitives, camera, t);
}

/// Differentiable rasterization: image [3,H,W] from deformed mu/rot/scale,
/// raw opacity [N,1] and SH [N,3k] (only band 0 is read). Gradients reach all
/// five inputs.
nn::Var rasterize_op(nn::Graph& g, nn::Var mu, nn::Var rot, nn::Var scale, nn::Var opacity, nn::Var sh,
                     std::size_t sh_k, const Camera& camera);

/// Per-pixel PSNR over [3,H,W] images with peak 1.
double psnr(const nn::Tensor& a, const nn::Tensor& b);
double mse(const nn::Tensor& a, const nn::Tensor& b);

}  // namespace l4gs::scene

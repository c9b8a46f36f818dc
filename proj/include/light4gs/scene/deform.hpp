#pragma once

#include <array>
#include <vector>

#include "light4gs/nn/graph.hpp"
#include "light4gs/scene/types.hpp"

namespace l4gs::scene {

/// Graph handles for every hexplane plane, indexed [scale][plane].
using PlaneVars = std::vector<std::array<nn::Var, 6>>;

PlaneVars plane_params(nn::Graph& g, MultiscaleHexplane& hex);
PlaneVars plane_constants(nn::Graph& g, const MultiscaleHexplane& hex);

/// Per-primitive hexplane features for positions mu [N,3] at time t; returns
/// [N, channels * scales]. Differentiable in the planes and in mu.
nn::Var hexplane_features(nn::Graph& g, const PlaneVars& planes, const MultiscaleHexplane& layout,
                          const SceneBounds& bounds, nn::Var mu, double t);

/// Feature vector of a single position (plain evaluation).
std::vector<double> query_hexplane(const MultiscaleHexplane& hex, const SceneBounds& bounds, const Vec3& mu, double t);

/// Deformed geometry of a whole primitive set as graph nodes.
struct DeformedVars {
  nn::Var mu;     // [N,3]
  nn::Var rot;    // [N,4], unit rows
  nn::Var scale;  // [N,3], >= kMinScale
};

/// Runs the deformation network on the hexplane features of mu at time t and
/// adds the result: mu + dmu, normalize(rot + drot), max(scale + dscale, kMinScale).
DeformedVars deform_vars(nn::Graph& g, std::vector<nn::LayerParams>& layers, const PlaneVars& planes,
                         const MultiscaleHexplane& layout, const SceneBounds& bounds, nn::Var mu, nn::Var rot,
                         nn::Var scale, double t);

/// Per-attribute row tensors of a primitive list.
struct PrimitiveTensors {
  nn::Tensor mu;       // [N,3]
  nn::Tensor rot;      // [N,4]
  nn::Tensor scale;    // [N,3]
  nn::Tensor opacity;  // [N,1]
  nn::Tensor sh;       // [N,3k]
};

PrimitiveTensors to_tensors(const std::vector<GaussianPrimitive>& prims, std::size_t sh_k);
std::vector<GaussianPrimitive> from_tensors(const PrimitiveTensors& t, std::size_t sh_k);

/// Deforms every primitive to time t (plain evaluation through the same code
/// path as training). Opacity and SH pass through unchanged.
std::vector<GaussianPrimitive> deform_all(const SceneBundle& scene, const std::vector<GaussianPrimitive>& prims,
                                          double t);
GaussianPrimitive deform(const GaussianPrimitive& prim, const DeformationNetwork& net, const MultiscaleHexplane& hex,
                         const SceneBounds& bounds, double t);

}  // namespace l4gs::scene

#pragma once

#include "light4gs/nn/graph.hpp"

namespace l4gs::mhcm {

/// Probability floor: no element is charged more than 32 bits.
inline constexpr double kMinProbability = 1.0 / 4294967296.0;
inline constexpr double kSigmaFloor = 1e-6;

/// Standard normal mass on [lo, hi], computed on whichever tail keeps precision.
double normal_interval(double lo, double hi);

/// Bits of the value x under N(mu, sigma) integrated over [x - q/2, x + q/2].
double gaussian_bits(double x, double mu, double sigma, double q);

/// Total bits over all elements of x with per-element mu/sigma ([same shape])
/// and a one-element quantization step q. Differentiable in all four inputs.
/// Throws InternalError when any sigma <= 0.
nn::Var gaussian_bits(nn::Graph& g, nn::Var x, nn::Var mu, nn::Var sigma, nn::Var q);

/// Per-element bits (plain evaluation), same shape as x.
nn::Tensor gaussian_bits_map(const nn::Tensor& x, const nn::Tensor& mu, const nn::Tensor& sigma, double q);

/// q * round(x / q) with halves rounded away from zero.
double quantize_value(double x, double q);

}  // namespace l4gs::mhcm

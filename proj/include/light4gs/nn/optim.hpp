#pragma once

#include <span>

#include "light4gs/nn/graph.hpp"

namespace l4gs::nn {

/// Momentum SGD: v <- momentum*v + g; p <- p - lr*v; g <- 0.
/// Throws TrainingError naming the first parameter whose gradient is not
/// finite; in that case no parameter is modified.
void sgd_step(std::span<Parameter* const> params, double lr, double momentum);

void zero_grads(std::span<Parameter* const> params);

}  // namespace l4gs::nn

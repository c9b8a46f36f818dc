#pragma once

#include <string>
#include <vector>

#include "light4gs/scene/types.hpp"
#include "light4gs/trainer/config.hpp"
#include "light4gs/trainer/trainer.hpp"

namespace l4gs::trainer {

struct RdPoint {
  double bits = 0.0;  // container size
  double psnr = 0.0;  // decoded scene on held-out renders
  double lambda = 0.0;
  double prune_ratio = 0.0;
};

inline const std::vector<double> kLambdaGrid{5e-2, 1e-2, 5e-3, 1e-3, 5e-4};
inline const std::vector<double> kPruneRatioGrid{0.0, 0.2, 0.4, 0.6};

/// Two pruning steps, at a quarter and half of the entropy phase, reaching
/// ratio/2 and then ratio. Empty for ratio 0.
void set_prune_ratio(TrainConfig& cfg, double ratio);

/// Trains, compresses and decodes once per (lambda, ratio) pair of `base`.
std::vector<RdPoint> rd_sweep(const TrainConfig& base, const std::vector<double>& lambdas,
                              const std::vector<double>& ratios, const scene::SceneBundle& init, const Targets& targets,
                              const Targets& held_out);

/// Upper-left Pareto frontier of (bits, PSNR) by monotone chain: bits and
/// PSNR both strictly increase along the result.
std::vector<RdPoint> rd_hull(std::vector<RdPoint> points);

/// bits,psnr,lambda,prune_ratio,on_hull
std::string rd_csv(const std::vector<RdPoint>& points, const std::vector<RdPoint>& hull);

}  // namespace l4gs::trainer

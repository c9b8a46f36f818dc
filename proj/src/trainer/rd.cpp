#include "light4gs/trainer/rd.hpp"

#include <algorithm>
#include <sstream>

#include "light4gs/codec/compressor.hpp"
#include "light4gs/errors.hpp"

namespace l4gs::trainer {

void set_prune_ratio(TrainConfig& cfg, double ratio) {
  cfg.prune_iterations.clear();
  cfg.prune_ratios.clear();
  if (ratio <= 0.0) return;
  const std::size_t span = cfg.iterations > cfg.warmup ? cfg.iterations - cfg.warmup : 0;
  const std::size_t first = cfg.warmup + span / 4, second = cfg.warmup + span / 2;
  if (second <= first || second >= cfg.iterations)
    throw ConfigError("entropy phase too short for a two-step prune schedule");
  cfg.prune_iterations = {first, second};
  cfg.prune_ratios = {ratio / 2.0, ratio};
}

std::vector<RdPoint> rd_sweep(const TrainConfig& base, const std::vector<double>& lambdas,
                              const std::vector<double>& ratios, const scene::SceneBundle& init, const Targets& targets,
                              const Targets& held_out) {
  if (lambdas.empty() || ratios.empty() || lambdas.size() * ratios.size() < 2)
    throw ConfigError("an RD sweep needs at least two configurations");
  std::vector<RdPoint> out;
  for (double ratio : ratios)
    for (double lambda : lambdas) {
      TrainConfig cfg = base;
      cfg.lambda = lambda;
      set_prune_ratio(cfg, ratio);
      auto res = train(cfg, init, targets);
      const auto packed = codec::compress(res.scene, res.models);
      const auto back = codec::decompress(packed.container);
      out.push_back({8.0 * static_cast<double>(packed.container.size()), render_psnr(back.scene, held_out), lambda,
                     ratio});
    }
  return out;
}

std::vector<RdPoint> rd_hull(std::vector<RdPoint> points) {
  std::sort(points.begin(), points.end(), [](const RdPoint& a, const RdPoint& b) {
    return a.bits != b.bits ? a.bits < b.bits : a.psnr > b.psnr;
  });
  auto cross = [](const RdPoint& o, const RdPoint& a, const RdPoint& b) {
    return (a.bits - o.bits) * (b.psnr - o.psnr) - (a.psnr - o.psnr) * (b.bits - o.bits);
  };
  std::vector<RdPoint> hull;
  for (const auto& p : points) {
    while (hull.size() >= 2 && cross(hull[hull.size() - 2], hull.back(), p) >= 0.0) hull.pop_back();
    hull.push_back(p);
  }
  // Past the best PSNR the upper chain only loses quality for more bits.
  std::size_t best = 0;
  for (std::size_t i = 1; i < hull.size(); ++i)
    if (hull[i].psnr > hull[best].psnr) best = i;
  hull.resize(hull.empty() ? 0 : best + 1);
  return hull;
}

std::string rd_csv(const std::vector<RdPoint>& points, const std::vector<RdPoint>& hull) {
  std::ostringstream o;
  o.precision(10);
  o << "bits,psnr,lambda,prune_ratio,on_hull\n";
  for (const auto& p : points) {
    const bool on = std::any_of(hull.begin(), hull.end(), [&](const RdPoint& h) {
      return h.bits == p.bits && h.psnr == p.psnr && h.lambda == p.lambda && h.prune_ratio == p.prune_ratio;
    });
    o << p.bits << ',' << p.psnr << ',' << p.lambda << ',' << p.prune_ratio << ',' << (on ? 1 : 0) << '\n';
  }
  return o.str();
}

}  // namespace l4gs::trainer

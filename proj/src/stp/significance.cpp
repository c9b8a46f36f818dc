#include "light4gs/stp/significance.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include "light4gs/errors.hpp"
#include "light4gs/scene/deform.hpp"
#include "light4gs/scene/render.hpp"

namespace l4gs::stp {

namespace {

// Runs job(i) for i in [0, n) on up to `threads` workers.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& job) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, n);
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) job(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  std::exception_ptr failure;
  std::mutex failure_lock;
  for (std::size_t w = 0; w < threads; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          job(i);
        } catch (...) {
          std::lock_guard lock(failure_lock);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace

double percentile(std::vector<double> values, double p) {
  if (values.empty()) throw InputError("percentile of an empty sample");
  if (!(p > 0.0 && p <= 1.0)) throw InputError("percentile rank must lie in (0,1]");
  std::sort(values.begin(), values.end());
  const auto rank = static_cast<std::size_t>(std::ceil(p * static_cast<double>(values.size())));
  return values[std::max<std::size_t>(rank, 1) - 1];
}

std::vector<double> normalized_volume(const std::vector<scene::GaussianPrimitive>& deformed) {
  std::vector<double> vol(deformed.size());
  for (std::size_t j = 0; j < deformed.size(); ++j) {
    const auto& s = deformed[j].scale;
    vol[j] = s[0] * s[1] * s[2];
  }
  if (vol.empty()) return vol;
  const double ref = percentile(vol, kVolumePercentile);
  for (auto& v : vol) v = ref > 0.0 ? std::pow(std::clamp(v / ref, 0.0, 1.0), kVolumeExponent) : 0.0;
  return vol;
}

SignificanceTable score(const scene::SceneBundle& scene, const std::vector<scene::GaussianPrimitive>& prims,
                        std::size_t threads) {
  const std::size_t n = prims.size();
  const std::size_t nt = scene.timestamps;
  const std::size_t nv = scene.cameras.size();
  if (nt == 0 || nv == 0) throw InputError("score: need at least one timestamp and one view");

  SignificanceTable table;
  table.opacity.resize(n);
  for (std::size_t j = 0; j < n; ++j) table.opacity[j] = prims[j].opacity;

  std::vector<std::vector<scene::GaussianPrimitive>> deformed(nt);
  table.gamma.resize(nt);
  parallel_for(nt, threads, [&](std::size_t t) {
    deformed[t] = scene::deform_all(scene, prims, scene.time_of(t));
    table.gamma[t] = normalized_volume(deformed[t]);
  });

  // One hit vector per (timestamp, view); reduced in a fixed order afterwards.
  std::vector<std::vector<std::uint32_t>> per_task(nt * nv);
  parallel_for(nt * nv, threads, [&](std::size_t task) {
    const std::size_t t = task / nv, v = task % nv;
    per_task[task] = scene::rasterize(deformed[t], scene.sh_k, scene.cameras[v]).record.pixel_hits;
  });

  table.hits.assign(nt, std::vector<std::uint32_t>(n, 0));
  table.score.assign(n, 0.0);
  for (std::size_t t = 0; t < nt; ++t) {
    for (std::size_t v = 0; v < nv; ++v) {
      const auto& h = per_task[t * nv + v];
      for (std::size_t j = 0; j < n; ++j) table.hits[t][j] += h[j];
    }
    for (std::size_t j = 0; j < n; ++j)
      table.score[j] += static_cast<double>(table.hits[t][j]) * table.opacity[j] * table.gamma[t][j];
  }
  return table;
}

PruneResult prune_count(const std::vector<double>& scores, std::size_t count) {
  const std::size_t n = scores.size();
  if (count > n) throw InputError("prune: cannot remove " + std::to_string(count) + " of " + std::to_string(n));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] < scores[b];
    return a > b;
  });
  PruneResult r;
  r.removed.assign(n, false);
  for (std::size_t k = 0; k < count; ++k) r.removed[order[k]] = true;
  for (std::size_t j = 0; j < n; ++j)
    if (!r.removed[j]) r.kept.push_back(j);
  return r;
}

PruneResult prune(const std::vector<double>& scores, double ratio) {
  if (!(ratio >= 0.0 && ratio < 1.0)) throw InputError("prune ratio must lie in [0,1), got " + std::to_string(ratio));
  return prune_count(scores, static_cast<std::size_t>(std::floor(ratio * static_cast<double>(scores.size()))));
}

void PruneSchedule::validate() const {
  if (iterations.size() != ratios.size())
    throw InputError("prune schedule: " + std::to_string(iterations.size()) + " iterations but " +
                     std::to_string(ratios.size()) + " ratios");
  for (std::size_t k = 0; k < ratios.size(); ++k) {
    if (!(ratios[k] >= 0.0 && ratios[k] < 1.0)) throw InputError("prune schedule: ratio outside [0,1)");
    if (k > 0 && !(ratios[k] > ratios[k - 1])) throw InputError("prune schedule: ratios must strictly increase");
    if (k > 0 && !(iterations[k] > iterations[k - 1]))
      throw InputError("prune schedule: iterations must strictly increase");
  }
}

std::size_t PruneSchedule::count_to_remove(std::size_t step, std::size_t original, std::size_t current) const {
  const auto target = static_cast<std::size_t>(std::floor(ratios.at(step) * static_cast<double>(original)));
  const std::size_t gone = original - current;
  return target > gone ? std::min(target - gone, current) : 0;
}

std::string report_csv(const SignificanceTable& table, const std::vector<bool>& removed) {
  std::ostringstream os;
  os.precision(9);
  os << "index,score,opacity,hits,pruned\n";
  for (std::size_t j = 0; j < table.size(); ++j) {
    std::uint64_t hits = 0;
    for (const auto& h : table.hits) hits += h[j];
    const bool gone = j < removed.size() && removed[j];
    os << j << ',' << table.score[j] << ',' << table.opacity[j] << ',' << hits << ',' << (gone ? 1 : 0) << '\n';
  }
  return os.str();
}

std::string report_histogram(const SignificanceTable& table, const std::vector<bool>& removed, std::size_t bins) {
  if (bins == 0) throw InputError("histogram needs at least one bin");
  std::size_t zero = 0, pruned = 0;
  double lo = INFINITY, hi = -INFINITY;
  for (std::size_t j = 0; j < table.size(); ++j) {
    if (j < removed.size() && removed[j]) ++pruned;
    if (table.score[j] <= 0.0) {
      ++zero;
      continue;
    }
    const double l = std::log10(table.score[j]);
    lo = std::min(lo, l);
    hi = std::max(hi, l);
  }
  std::ostringstream os;
  os << "primitives " << table.size() << ", kept " << table.size() - pruned << ", pruned " << pruned << "\n";
  os << "score == 0: " << zero << "\n";
  if (zero == table.size()) return os.str();
  const double width = hi > lo ? (hi - lo) / static_cast<double>(bins) : 1.0;
  std::vector<std::size_t> count(bins, 0);
  for (double s : table.score) {
    if (s <= 0.0) continue;
    auto b = static_cast<std::size_t>((std::log10(s) - lo) / width);
    ++count[std::min(b, bins - 1)];
  }
  std::size_t peak = *std::max_element(count.begin(), count.end());
  os.setf(std::ios::fixed);
  os.precision(2);
  for (std::size_t b = 0; b < bins; ++b) {
    os << "[1e" << lo + width * static_cast<double>(b) << ", 1e" << lo + width * static_cast<double>(b + 1) << ") "
       << count[b] << ' ' << std::string(peak ? count[b] * 40 / peak : 0, '#') << '\n';
  }
  return os.str();
}

}  // namespace l4gs::stp

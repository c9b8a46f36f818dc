#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "light4gs/scene/types.hpp"

namespace l4gs::stp {

/// Exponent applied to the clamped normalized volume.
inline constexpr double kVolumeExponent = 0.1;
inline constexpr double kVolumePercentile = 0.9;

struct SignificanceTable {
  std::vector<double> score;                    // [N]
  std::vector<double> opacity;                  // [N]
  std::vector<std::vector<std::uint32_t>> hits;  // [T][N], summed over views
  std::vector<std::vector<double>> gamma;        // [T][N]

  std::size_t size() const { return score.size(); }
};

/// Nearest-rank percentile (p in (0,1]) of a non-empty sample.
double percentile(std::vector<double> values, double p);

/// clamp(v / v_ref, 0, 1)^kVolumeExponent for every primitive.
std::vector<double> normalized_volume(const std::vector<scene::GaussianPrimitive>& deformed);

/// Scores every primitive by hit pixels x opacity x normalized volume, summed
/// over all timestamps and views. `threads` caps the worker count (0 = hardware);
/// the result does not depend on it.
SignificanceTable score(const scene::SceneBundle& scene, const std::vector<scene::GaussianPrimitive>& prims,
                        std::size_t threads = 1);
inline SignificanceTable score(const scene::SceneBundle& scene, std::size_t threads = 1) {
  return score(scene, scene.primitives, threads);
}

struct PruneResult {
  std::vector<std::size_t> kept;  // original indices, ascending
  std::vector<bool> removed;      // [N]
};

/// Removes floor(ratio * N) lowest-scoring entries; among equal scores the
/// higher index goes first. Throws InputError unless 0 <= ratio < 1.
PruneResult prune(const std::vector<double>& scores, double ratio);
/// Same ordering, removing exactly `count` entries (count <= N).
PruneResult prune_count(const std::vector<double>& scores, std::size_t count);

template <class T>
std::vector<T> select(const std::vector<T>& items, const std::vector<std::size_t>& kept) {
  std::vector<T> out;
  out.reserve(kept.size());
  for (auto i : kept) out.push_back(items.at(i));
  return out;
}

/// Cumulative pruning targets fired at fixed iterations.
struct PruneSchedule {
  std::vector<std::size_t> iterations;
  std::vector<double> ratios;  // fraction of the original count removed once step k has fired

  /// Throws InputError for mismatched lengths, non-increasing iterations or
  /// ratios, or ratios outside [0,1).
  void validate() const;
  /// How many of the `current` survivors to remove at `step` so that
  /// floor(ratios[step] * original) are gone in total.
  std::size_t count_to_remove(std::size_t step, std::size_t original, std::size_t current) const;
};

/// Per-primitive CSV: index,score,opacity,hits,pruned.
std::string report_csv(const SignificanceTable& table, const std::vector<bool>& removed);
/// Text histogram of log10 scores plus kept/pruned counts.
std::string report_histogram(const SignificanceTable& table, const std::vector<bool>& removed,
                             std::size_t bins = 12);

}  // namespace l4gs::stp

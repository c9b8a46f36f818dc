#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace l4gs::trainer {

/// Every key of the flat key=value config file is a field here with the same name.
struct TrainConfig {
  std::size_t iterations = 600;
  std::size_t warmup = 150;    // reconstruction only before this iteration
  std::size_t aq_start = 300;  // quantization steps learnable from here on
  double lambda = 5e-2;
  double alpha = 1e-2;
  std::vector<std::size_t> prune_iterations;
  std::vector<double> prune_ratios;  // cumulative share of the initial primitives removed

  double lr_position = 2e-3;
  double lr_rotation = 2e-3;
  double lr_scale = 1e-3;
  double lr_opacity = 2e-2;
  double lr_color = 0.5;
  double lr_plane = 2.0;
  double lr_deform = 2e-2;
  double lr_context = 1e-3;
  double lr_step = 5e-2;
  double lr_sh_model = 1.0;
  double momentum = 0.9;

  double q_space_only = 0.02;
  double q_space_time = 0.02;
  std::size_t mhcm_hyper = 4;
  std::size_t mhcm_latent = 2;
  std::size_t mhcm_hidden = 16;

  std::uint64_t seed = 0;
  std::size_t threads = 1;  // significance scoring workers

  /// Throws ConfigError naming the key for unknown keys or unparsable values.
  void set(const std::string& key, const std::string& value);
  /// Throws ConfigError unless phases are ordered, weights are >= 0 and the
  /// prune schedule is well formed.
  void validate() const;
  /// key=value lines, one per field, readable by parse().
  std::string to_text() const;
  static std::vector<std::string> keys();
};

/// Parses key=value lines; '#' starts a comment, blank lines are skipped.
TrainConfig parse_config(const std::string& text, TrainConfig base = {});
TrainConfig load_config(const std::string& path, TrainConfig base = {});

}  // namespace l4gs::trainer

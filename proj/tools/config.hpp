// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "vlaprune/episode.hpp"
#include "vlaprune/model.hpp"
#include "vlaprune/pipeline.hpp"

namespace vlaprune::cli {

// Everything a run needs; loadable from a JSON config file with flag
// overrides applied on top.
struct RunSetup {
  ModelConfig model{.num_layers = 8, .hidden_dim = 64, .num_heads = 4, .ffn_dim = 256,
                    .seed = 2026};
  SceneSpec scene = SceneSpec::standard(17, 64, 1);
  std::string scene_preset = "standard";  // standard | small
  TrajectorySpec trajectory = TrajectorySpec::scripted_default();
  PrunerConfig pruner;

  int episodes = 40;
  uint64_t seed_base = 1;
  int steps = 0;  // 0 = trajectory length
  int text_len = 16;
  int action_len = 8;  // action-chunk slots
  int workers = 2;
  std::string out_dir;

  std::vector<std::string> strategies{"full", "none", "random", "local_only", "global_only"};
  int baseline_episodes = 10;  // episode count for non-"full" strategies
  int timing_reps = 5;

  void validate() const;
  TokenLayout layout() const { return scene_layout(scene, text_len, action_len); }
};

// Loads the JSON config (empty path = defaults). Referenced scene_file /
// trajectory_file entries are loaded first, inline objects override them.
RunSetup load_setup(const std::string& config_path);

// alpha presets per task suite; preset is "paper-main" or "paper-appendix".
void apply_alpha_preset(RunSetup& setup, const std::string& preset, const std::string& suite);

// Output directory resolution: explicit flag, else $VLAPRUNE_OUT/<verb>,
// else ./vlaprune_out/<verb>.
std::string resolve_out_dir(const std::string& flag_value, const std::string& verb);

}  // namespace vlaprune::cli

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "vlaprune/controller.hpp"
#include "vlaprune/model.hpp"
#include "vlaprune/patch_grid.hpp"

namespace vlaprune {

struct GridPos {
  int i = 0;
  int j = 0;
};

enum class PhaseKind { kTargeting, kApproaching, kTransferring, kPlacing };

const char* phase_name(PhaseKind k);

struct TrajectoryPhase {
  PhaseKind kind = PhaseKind::kTargeting;
  int duration = 0;      // steps
  double speed = 0.0;    // per-step translational displacement norm
  double rot_speed = 0.0;
  double dz_sign = 0.0;  // -1 descend, +1 lift, 0 level
};

// Scripted four-phase end-effector trajectory. Approaching and placing run
// below the default fine-mode velocity threshold, targeting and transferring
// above it.
struct TrajectorySpec {
  std::vector<TrajectoryPhase> phases;
  GridPos start{2, 2};
  GridPos object{8, 12};
  GridPos goal{12, 4};

  int total_steps() const;
  void validate() const;
  static TrajectorySpec scripted_default();
};

// Synthetic scene: per-view patch grids with orthogonal feature directions
// per semantic class, task-relevant patch sets, and attention-bias shaping
// knobs. Background patches are the complement of task_patches per view.
struct SceneSpec {
  int grid_n = 17;
  int num_views = 2;  // view 0: third-person, view 1: wrist
  int feature_dim = 64;
  double noise_scale = 0.02;
  uint64_t seed = 1;
  std::vector<std::vector<int>> task_patches;  // per view, cell = i*n + j

  // Attention-bias shaping on task keys: bias = margin * (floor + s^power),
  // where the salience s mixes a static per-cell base with per-step jitter
  // and clamps to [0,1]. The clamp plateau forms a strongly separated head
  // that is stable within a step but rotates across steps; a zero margin
  // yields no bias at all.
  double bias_margin = 6.0;
  double bias_power = 12.0;
  double salience_base = 0.3;  // base salience range; the jitter roll carries
                               // a cell to the clamp plateau only occasionally
  double salience_jitter = 1.0;

  double sim_tau = 0.95;   // ground-truth dynamic labeling threshold
  int footprint_third = 5;  // arm footprint edge, third-person view
  int footprint_wrist = 6;  // gripper-vicinity footprint edge, wrist view

  void validate() const;
  std::vector<int> background_patches(int view) const;
  // Two-view scene with task regions around the object, the goal and a few
  // distractors; ~600 visual tokens at n=17.
  static SceneSpec standard(int n, int feature_dim, uint64_t seed);
  static SceneSpec small_preset(uint64_t seed);  // n=8 fast-test layout
};

// Per-step labels: ground-truth important tokens (task-relevant plus
// currently-dynamic patches) and the clean-readout action target.
struct GroundTruth {
  std::vector<int> important;  // token indices under the visual-first layout
  ActionDelta target;
};

struct EpisodeStep {
  std::vector<PatchFeatureGrid> views;
  ActionDelta action;  // executed command; drives the controller
  GroundTruth truth;
  PhaseKind phase = PhaseKind::kTargeting;
};

struct Episode {
  SceneSpec scene;
  TrajectorySpec traj;
  std::vector<EpisodeStep> steps;
};

// Deterministic per seed. Background features persist up to noise; patches
// under the moving end-effector switch to the arm's feature direction.
Episode generate_episode(const SceneSpec& scene, const TrajectorySpec& traj, int steps);

// Token layout matching a scene: per-view visual blocks, then text, then
// action slots.
TokenLayout scene_layout(const SceneSpec& scene, int text_len = 16, int action_len = 8);

// Per-token additive attention bias elevating task patches, graded by the
// step's salience so early-layer rankings align with ground truth. A zero
// margin and gain yields an all-zero bias.
AttentionBiasSpec attention_bias_for(const SceneSpec& scene, const TokenLayout& layout, int step);

// Full embedding matrix for one step: visual rows from the patch grids, text
// and action rows from fixed per-scene vectors.
Mat embeddings_for(const SceneSpec& scene, const Episode& episode, int step,
                   const TokenLayout& layout);

// Fixed linear readout of the centroid of retained important-patch features;
// error is the Euclidean distance to the clean-feature target. Retaining all
// important tokens reproduces the target exactly at zero noise.
std::pair<ActionDelta, double> action_oracle(const SceneSpec& scene, const TokenLayout& layout,
                                             const std::vector<PatchFeatureGrid>& grids,
                                             const GroundTruth& truth,
                                             const std::vector<int>& retained);

}  // namespace vlaprune

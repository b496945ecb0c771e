// SPDX-License-Identifier: Apache-2.0
#pragma once

namespace vlaprune {

// Normalized per-step displacement command: translation, rotation (radians)
// and a gripper scalar.
struct ActionDelta {
  double dx = 0.0, dy = 0.0, dz = 0.0;
  double d_alpha = 0.0, d_beta = 0.0, d_gamma = 0.0;
  double gripper = 0.0;
};

enum class ActionMode { kFine, kCoarse };

struct ControllerConfig {
  double v_t_th = 0.03;  // translational threshold
  double v_r_th = 0.05;  // rotational threshold
  double v_z_th = 0.0;   // z entry threshold; 0 reproduces the dz <= 0 rule
  double alpha = 1.0;    // prune ratio scaling the static budgets
  int fine_base = 40;
  int coarse_base = 24;
};

// Two-state machine: entry into fine mode needs all three conditions, exit
// applies only while in fine mode and ignores dz.
struct ControllerState {
  ActionMode mode = ActionMode::kCoarse;
  double v_t = 0.0;
  double v_r = 0.0;
  ControllerConfig cfg;

  // round(alpha x 40) in fine mode, round(alpha x 24) in coarse mode.
  int k_base() const;
};

double translational_speed(const ActionDelta& d);
double rotational_speed(const ActionDelta& d);

// Updates mode and velocities from the latest executed action. Pure in
// (d, state): identical inputs give identical outputs.
void classify(const ActionDelta& d, ControllerState& state);

}  // namespace vlaprune

// SPDX-License-Identifier: Apache-2.0
#include "vlaprune/controller.hpp"

#include <cmath>

namespace vlaprune {

double translational_speed(const ActionDelta& d) {
  return std::sqrt(d.dx * d.dx + d.dy * d.dy + d.dz * d.dz);
}

double rotational_speed(const ActionDelta& d) {
  return std::sqrt(d.d_alpha * d.d_alpha + d.d_beta * d.d_beta + d.d_gamma * d.d_gamma);
}

int ControllerState::k_base() const {
  const int base = (mode == ActionMode::kFine) ? cfg.fine_base : cfg.coarse_base;
  return static_cast<int>(std::floor(cfg.alpha * base + 0.5));  // round half up
}

void classify(const ActionDelta& d, ControllerState& state) {
  state.v_t = translational_speed(d);
  state.v_r = rotational_speed(d);
  if (state.mode == ActionMode::kFine) {
    if (state.v_t > state.cfg.v_t_th || state.v_r > state.cfg.v_r_th) state.mode = ActionMode::kCoarse;
  } else {
    if (state.v_t < state.cfg.v_t_th && state.v_r < state.cfg.v_r_th && d.dz <= state.cfg.v_z_th)
      state.mode = ActionMode::kFine;
  }
}

}  // namespace vlaprune

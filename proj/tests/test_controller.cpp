// SPDX-License-Identifier: Apache-2.0
#include "doctest.h"

#include <cmath>
#include <initializer_list>

#include "vlaprune/controller.hpp"

using namespace vlaprune;

TEST_CASE("speed norms") {
  ActionDelta d;
  d.dx = 3;
  d.dy = 4;
  CHECK(translational_speed(d) == doctest::Approx(5.0));
  CHECK(translational_speed(ActionDelta{}) == 0.0);
  ActionDelta e;
  e.dx = 0.01;
  e.dy = 0.02;
  e.dz = 0.02;
  CHECK(translational_speed(e) == doctest::Approx(0.03).epsilon(1e-12));

  ActionDelta r;
  r.d_alpha = 0.6;
  r.d_beta = 0.8;
  CHECK(rotational_speed(r) == doctest::Approx(1.0));
  CHECK(rotational_speed(ActionDelta{}) == 0.0);

  // Norm homogeneity under scaling.
  ActionDelta s = r;
  s.d_alpha *= -2.5;
  s.d_beta *= -2.5;
  s.d_gamma *= -2.5;
  CHECK(rotational_speed(s) == doctest::Approx(2.5));
}

TEST_CASE("classification entry and exit") {
  ControllerState st;  // defaults: v_t_th 0.03, v_r_th 0.05, v_z_th 0, alpha 1

  ActionDelta slow_down;
  slow_down.dx = 0.0005;
  slow_down.dy = 0.0005;
  slow_down.dz = -0.001;
  slow_down.d_alpha = 0.001;
  classify(slow_down, st);
  CHECK(st.mode == ActionMode::kFine);
  CHECK(st.k_base() == 40);

  // Exit requires a speed above threshold; dz alone does not exit.
  ActionDelta slow_up = slow_down;
  slow_up.dz = 0.001;
  classify(slow_up, st);
  CHECK(st.mode == ActionMode::kFine);

  ActionDelta fast;
  fast.dx = 0.2;
  classify(fast, st);
  CHECK(st.mode == ActionMode::kCoarse);
  CHECK(st.k_base() == 24);

  // Re-entry needs all three conditions: dz > v_z_th blocks it.
  classify(slow_up, st);
  CHECK(st.mode == ActionMode::kCoarse);
  classify(slow_down, st);
  CHECK(st.mode == ActionMode::kFine);

  // Rotational speed alone can force an exit.
  ActionDelta spin;
  spin.d_alpha = 0.3;
  classify(spin, st);
  CHECK(st.mode == ActionMode::kCoarse);
}

TEST_CASE("budget rounding") {
  ControllerState st;
  st.cfg.alpha = 0.6;
  st.mode = ActionMode::kCoarse;
  CHECK(st.k_base() == 14);  // round(14.4)
  st.mode = ActionMode::kFine;
  CHECK(st.k_base() == 24);  // round(24.0)
  st.cfg.alpha = 0.8;
  CHECK(st.k_base() == 32);  // alpha x 40
  st.cfg.alpha = 1.0;
  st.mode = ActionMode::kCoarse;
  CHECK(st.k_base() == 24);

  // Fine-mode budget dominates the coarse one for any alpha.
  for (double alpha : {0.1, 0.25, 0.6, 0.8, 1.0}) {
    ControllerState s;
    s.cfg.alpha = alpha;
    s.mode = ActionMode::kFine;
    const int fine = s.k_base();
    s.mode = ActionMode::kCoarse;
    CHECK(fine >= s.k_base());
  }
}

TEST_CASE("classification is a pure function of inputs") {
  ActionDelta d;
  d.dx = 0.01;
  d.dz = -0.002;
  for (int i = 0; i < 3; ++i) {
    ControllerState st;
    classify(d, st);
    CHECK(st.mode == ActionMode::kFine);
    CHECK(st.v_t == doctest::Approx(std::sqrt(0.01 * 0.01 + 0.002 * 0.002)));
  }
}

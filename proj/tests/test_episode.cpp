// SPDX-License-Identifier: Apache-2.0
#include "doctest.h"

#include <stdexcept>

#include <cmath>
#include <set>
#include <vector>

#include "vlaprune/episode.hpp"
#include "vlaprune/scoring.hpp"
#include "vlaprune/static_pruner.hpp"

using namespace vlaprune;

TEST_CASE("episode generation is deterministic per seed") {
  const SceneSpec scene = SceneSpec::small_preset(5);
  const TrajectorySpec traj = TrajectorySpec::scripted_default();
  const Episode a = generate_episode(scene, traj, 12);
  const Episode b = generate_episode(scene, traj, 12);
  REQUIRE(a.steps.size() == b.steps.size());
  for (size_t t = 0; t < a.steps.size(); ++t) {
    CHECK(a.steps[t].views[0].data == b.steps[t].views[0].data);
    CHECK(a.steps[t].views[1].data == b.steps[t].views[1].data);
    CHECK(a.steps[t].truth.important == b.steps[t].truth.important);
    CHECK(a.steps[t].action.dx == b.steps[t].action.dx);
  }

  SceneSpec other = scene;
  other.seed = 6;
  const Episode c = generate_episode(other, traj, 12);
  CHECK(a.steps[0].views[0].data != c.steps[0].views[0].data);
}

TEST_CASE("zero noise and a frozen trajectory give identical frames") {
  SceneSpec scene = SceneSpec::small_preset(5);
  scene.noise_scale = 0.0;
  TrajectorySpec traj;
  traj.phases = {{PhaseKind::kTargeting, 6, 0.0, 0.0, 0.0}};
  const Episode ep = generate_episode(scene, traj, 6);
  for (size_t t = 1; t < ep.steps.size(); ++t) {
    CHECK(ep.steps[t].views[0].data == ep.steps[0].views[0].data);
    CHECK(ep.steps[t].views[1].data == ep.steps[0].views[1].data);
  }
}

TEST_CASE("consecutive-frame redundancy and dynamic patches") {
  const SceneSpec scene = SceneSpec::standard(17, 64, 9);
  const Episode ep = generate_episode(scene, TrajectorySpec::scripted_default(), 20);
  int redundant = 0, total = 0;
  for (size_t t = 1; t < ep.steps.size(); ++t) {
    for (int v = 0; v < 2; ++v) {
      const Mat sim = patch_similarity(ep.steps[t - 1].views[static_cast<size_t>(v)],
                                       ep.steps[t].views[static_cast<size_t>(v)]);
      for (double s : sim.v) {
        total += 1;
        redundant += (s > 0.95) ? 1 : 0;
      }
    }
  }
  // The premise: at least 80% of patches barely change between frames.
  CHECK(static_cast<double>(redundant) / total >= 0.80);

  // Background patches stay above tau between adjacent frames.
  const std::set<int> task0(scene.task_patches[0].begin(), scene.task_patches[0].end());
  const Mat sim01 = patch_similarity(ep.steps[4].views[0], ep.steps[5].views[0]);
  int checked = 0;
  for (int c = 0; c < 17 * 17; ++c) {
    const bool in_truth_5 = std::binary_search(ep.steps[5].truth.important.begin(),
                                               ep.steps[5].truth.important.end(), c);
    if (!in_truth_5 && !task0.count(c)) {
      CHECK(sim01.v[static_cast<size_t>(c)] >= 0.95);
      ++checked;
    }
  }
  CHECK(checked > 120);
}

TEST_CASE("moving end effector marks low-similarity patches important") {
  SceneSpec scene = SceneSpec::standard(17, 64, 11);
  const Episode ep = generate_episode(scene, TrajectorySpec::scripted_default(), 24);
  // During transfer the arm sweeps quickly; newly covered cells must appear
  // in the ground-truth important set with similarity below tau.
  bool found_dynamic = false;
  for (size_t t = 1; t < ep.steps.size(); ++t) {
    const Mat sim = patch_similarity(ep.steps[t - 1].views[0], ep.steps[t].views[0]);
    for (int c = 0; c < 17 * 17; ++c) {
      if (sim.v[static_cast<size_t>(c)] < scene.sim_tau) {
        found_dynamic = true;
        CHECK(std::binary_search(ep.steps[t].truth.important.begin(),
                                 ep.steps[t].truth.important.end(), c));
      }
    }
  }
  CHECK(found_dynamic);
}

TEST_CASE("emitted speeds match the phase profile within 1e-9") {
  const TrajectorySpec traj = TrajectorySpec::scripted_default();
  const SceneSpec scene = SceneSpec::small_preset(3);
  const Episode ep = generate_episode(scene, traj, traj.total_steps());
  size_t idx = 0;
  for (const auto& phase : traj.phases) {
    for (int i = 0; i < phase.duration; ++i, ++idx) {
      const ActionDelta& d = ep.steps[idx].action;
      CHECK(std::abs(translational_speed(d) - phase.speed) <= 1e-9);
      CHECK(std::abs(rotational_speed(d) - phase.rot_speed) <= 1e-9);
      if (phase.dz_sign < 0) CHECK(d.dz < 0.0);
      if (phase.dz_sign > 0) CHECK(d.dz > 0.0);
      CHECK(ep.steps[idx].phase == phase.kind);
    }
  }
}

TEST_CASE("ground truth is nonempty and contains the task patches") {
  const SceneSpec scene = SceneSpec::small_preset(7);
  const Episode ep = generate_episode(scene, TrajectorySpec::scripted_default(), 10);
  const int cells = scene.grid_n * scene.grid_n;
  for (const auto& step : ep.steps) {
    CHECK(!step.truth.important.empty());
    for (int v = 0; v < 2; ++v) {
      for (int c : scene.task_patches[static_cast<size_t>(v)]) {
        CHECK(std::binary_search(step.truth.important.begin(), step.truth.important.end(),
                                 v * cells + c));
      }
    }
  }
}

TEST_CASE("attention bias shape and neutrality") {
  SceneSpec scene = SceneSpec::small_preset(13);
  const TokenLayout layout = scene_layout(scene);
  const AttentionBiasSpec bias = attention_bias_for(scene, layout, 4);
  REQUIRE(static_cast<int>(bias.key_bias.size()) == layout.seq_len());
  for (double b : bias.key_bias) CHECK(std::isfinite(b));
  for (int i = layout.text.first; i < layout.action.second; ++i) {
    CHECK(bias.key_bias[static_cast<size_t>(i)] == 0.0);
  }
  // Background keys carry no bias.
  const std::set<int> task0(scene.task_patches[0].begin(), scene.task_patches[0].end());
  for (int c = 0; c < scene.grid_n * scene.grid_n; ++c) {
    if (!task0.count(c)) CHECK(bias.key_bias[static_cast<size_t>(c)] == 0.0);
  }

  SceneSpec flat = scene;
  flat.bias_margin = 0.0;
  const AttentionBiasSpec zero = attention_bias_for(flat, layout, 4);
  for (double b : zero.key_bias) CHECK(b == 0.0);
}

TEST_CASE("action oracle invariances") {
  SceneSpec scene = SceneSpec::small_preset(21);
  const TokenLayout layout = scene_layout(scene);

  SUBCASE("zero noise: full retention hits the target exactly") {
    SceneSpec clean = scene;
    clean.noise_scale = 0.0;
    const Episode ep = generate_episode(clean, TrajectorySpec::scripted_default(), 8);
    const auto& step = ep.steps[5];
    std::vector<int> all;
    for (int i = 0; i < layout.seq_len(); ++i) all.push_back(i);
    const auto [pred, e0] = action_oracle(clean, layout, step.views, step.truth, all);
    CHECK(e0 <= 1e-12);

    // Dropping every unimportant token leaves the error unchanged.
    const auto [p2, e_bg] = action_oracle(clean, layout, step.views, step.truth,
                                          step.truth.important);
    CHECK(e_bg == e0);

    // Dropping all task patches strictly increases the error.
    std::set<int> task_tokens;
    const int cells = clean.grid_n * clean.grid_n;
    for (int v = 0; v < 2; ++v) {
      for (int c : clean.task_patches[static_cast<size_t>(v)]) task_tokens.insert(v * cells + c);
    }
    std::vector<int> without_task;
    for (int i : all) {
      if (!task_tokens.count(i)) without_task.push_back(i);
    }
    const auto [p3, e_task] = action_oracle(clean, layout, step.views, step.truth, without_task);
    CHECK(e_task > e0 + 1e-6);
  }

  SUBCASE("default noise: background removal is exactly error-neutral") {
    const Episode ep = generate_episode(scene, TrajectorySpec::scripted_default(), 8);
    const auto& step = ep.steps[5];
    std::vector<int> all;
    for (int i = 0; i < layout.seq_len(); ++i) all.push_back(i);
    const auto [pa, e0] = action_oracle(scene, layout, step.views, step.truth, all);
    const auto [pb, e_bg] = action_oracle(scene, layout, step.views, step.truth,
                                          step.truth.important);
    CHECK(e0 > 0.0);
    CHECK(e_bg == e0);  // same retained-important intersection, same centroid
  }
}

TEST_CASE("scene helpers") {
  const SceneSpec scene = SceneSpec::standard(17, 64, 1);
  const TokenLayout layout = scene_layout(scene);
  CHECK(layout.visual_count() == 2 * 17 * 17);
  CHECK(layout.text_count() == 16);
  CHECK(layout.action_count() == 8);
  CHECK(layout.seq_len() == 578 + 24);

  // task + background partition each view.
  for (int v = 0; v < 2; ++v) {
    const auto bg = scene.background_patches(v);
    CHECK(bg.size() + scene.task_patches[static_cast<size_t>(v)].size() ==
          static_cast<size_t>(17 * 17));
  }

  SceneSpec bad = scene;
  bad.task_patches[0].push_back(17 * 17);
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

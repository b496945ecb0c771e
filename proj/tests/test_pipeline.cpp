// SPDX-License-Identifier: Apache-2.0
#include "doctest.h"

#include <cmath>
#include <vector>

#include "vlaprune/flops.hpp"
#include "vlaprune/pipeline.hpp"

using namespace vlaprune;

namespace {

ModelConfig pipe_model_cfg(int layers = 6) {
  ModelConfig cfg;
  cfg.num_layers = layers;
  cfg.hidden_dim = 64;
  cfg.num_heads = 4;
  cfg.ffn_dim = 256;
  cfg.seed = 101;
  return cfg;
}

struct PipeFixture {
  SceneSpec scene = SceneSpec::small_preset(17);
  TokenLayout layout = scene_layout(scene);
  Model model = Model::build(pipe_model_cfg());
  Episode episode = generate_episode(scene, TrajectorySpec::scripted_default(), 14);
};

}  // namespace

TEST_CASE("step zero runs without static pruning and seeds the memory") {
  PipeFixture f;
  PrunerConfig cfg;
  GenerationPipeline pipe(f.model, f.layout, cfg);
  CHECK(pipe.memory().empty());

  const auto r0 = pipe.run_generation(f.episode, 0);
  CHECK(!r0.metrics.static_applied);
  CHECK(r0.metrics.retained_visual == f.layout.visual_count());
  CHECK(r0.metrics.pruned_visual == 0);
  CHECK(!pipe.memory().empty());
  CHECK(pipe.memory().scores.size() == static_cast<size_t>(f.layout.visual_count()));

  const auto r1 = pipe.run_generation(f.episode, 1);
  CHECK(r1.metrics.static_applied);
  CHECK(r1.metrics.retained_visual < f.layout.visual_count());
}

TEST_CASE("per-stage counts sum to the retained visual count") {
  PipeFixture f;
  PrunerConfig cfg;
  GenerationPipeline pipe(f.model, f.layout, cfg);
  for (int t = 0; t < 8; ++t) {
    const auto r = pipe.run_generation(f.episode, t);
    const auto& m = r.metrics;
    if (m.static_applied) {
      CHECK(m.count_global + m.count_dynamic + m.count_local == m.retained_visual);
      CHECK(m.retained_visual + m.pruned_visual == m.visual_total);
    }
  }
}

TEST_CASE("layer token trajectory follows the prune schedule exactly") {
  PipeFixture f;
  PrunerConfig cfg;
  GenerationPipeline pipe(f.model, f.layout, cfg);
  pipe.run_generation(f.episode, 0);
  const auto r = pipe.run_generation(f.episode, 1);
  const auto& m = r.metrics;
  REQUIRE(m.layer_tokens.size() == 6);
  const int full = f.layout.seq_len();
  const int aux = f.layout.text_count() + f.layout.action_count();
  CHECK(m.layer_tokens[0] == full);
  CHECK(m.layer_tokens[1] == full);
  CHECK(m.layer_tokens[2] == m.retained_visual + aux);

  // Schedule for 6 layers: prune at {3, 4} (and a final-layer entry that is
  // skipped because nothing follows it).
  const auto schedule = LayerScheduleConfig::defaults_for(6);
  int visual = m.retained_visual;
  std::vector<int> expect = {full, full};
  for (int layer = 3; layer <= 6; ++layer) {
    expect.push_back(visual + aux);
    if (schedule.prune_layers.count(layer) != 0 && layer < 6) {
      visual = static_cast<int>(std::ceil(0.9 * visual));
    }
  }
  CHECK(m.layer_tokens == expect);
}

TEST_CASE("metrics and retained sets are deterministic across reruns") {
  PipeFixture f;
  PrunerConfig cfg;
  const auto a = run_episode(f.model, f.layout, f.episode, cfg);
  const auto b = run_episode(f.model, f.layout, f.episode, cfg);
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].retained_visual == b[i].retained_visual);
    CHECK(a[i].count_global == b[i].count_global);
    CHECK(a[i].count_dynamic == b[i].count_dynamic);
    CHECK(a[i].count_local == b[i].count_local);
    CHECK(a[i].hit_rate_12 == b[i].hit_rate_12);
    CHECK(a[i].layer_tokens == b[i].layer_tokens);
    CHECK(a[i].op_count == b[i].op_count);
    CHECK(a[i].action_error == b[i].action_error);
    CHECK(a[i].mode == b[i].mode);
  }
}

TEST_CASE("controller trace follows the scripted phases") {
  PipeFixture f;
  PrunerConfig cfg;
  const Episode ep = generate_episode(f.scene, TrajectorySpec::scripted_default(), 40);
  const auto rows = run_episode(f.model, f.layout, ep, cfg);

  // Mode sequence must be coarse -> fine -> coarse -> fine blocks.
  std::vector<ActionMode> transitions;
  for (const auto& r : rows) {
    if (transitions.empty() || transitions.back() != r.mode) transitions.push_back(r.mode);
  }
  REQUIRE(transitions.size() == 4);
  CHECK(transitions[0] == ActionMode::kCoarse);
  CHECK(transitions[1] == ActionMode::kFine);
  CHECK(transitions[2] == ActionMode::kCoarse);
  CHECK(transitions[3] == ActionMode::kFine);

  // Fine steps use the larger budget.
  for (const auto& r : rows) {
    CHECK(r.k_base == (r.mode == ActionMode::kFine ? 40 : 24));
  }
}

TEST_CASE("none strategy never prunes") {
  PipeFixture f;
  PrunerConfig cfg;
  cfg.strategy = Strategy::kNone;
  const auto rows = run_episode(f.model, f.layout, f.episode, cfg);
  for (const auto& r : rows) {
    CHECK(!r.static_applied);
    CHECK(r.retained_visual == f.layout.visual_count());
    for (int t : r.layer_tokens) CHECK(t == f.layout.seq_len());
    CHECK(r.flops_reduction == doctest::Approx(0.0));
  }
}

TEST_CASE("random strategy matches the full strategy's budget") {
  PipeFixture f;
  PrunerConfig full_cfg;
  PrunerConfig rand_cfg;
  rand_cfg.strategy = Strategy::kRandom;
  const auto full_rows = run_episode(f.model, f.layout, f.episode, full_cfg);
  const auto rand_rows = run_episode(f.model, f.layout, f.episode, rand_cfg);
  REQUIRE(full_rows.size() == rand_rows.size());
  double full_recall = 0.0, rand_recall = 0.0;
  int counted = 0;
  for (size_t i = 0; i < full_rows.size(); ++i) {
    // The random run's own attention state drifts, so budgets track within a
    // band rather than exactly.
    CHECK(std::abs(full_rows[i].retained_visual - rand_rows[i].retained_visual) <=
          std::max(5, full_rows[i].retained_visual / 10));
    if (full_rows[i].static_applied) {
      full_recall += full_rows[i].important_recall;
      rand_recall += rand_rows[i].important_recall;
      ++counted;
    }
  }
  REQUIRE(counted > 0);
  // The attention-guided selection recalls far more ground truth than chance.
  CHECK(full_recall / counted > rand_recall / counted);
}

TEST_CASE("ablation strategies retain only their stage") {
  PipeFixture f;
  PrunerConfig cfg;
  cfg.strategy = Strategy::kLocalOnly;
  const auto local_rows = run_episode(f.model, f.layout, f.episode, cfg);
  for (const auto& r : local_rows) {
    if (r.static_applied) {
      CHECK(r.count_global == 0);
      CHECK(r.count_dynamic == 0);
      CHECK(r.count_local == r.retained_visual);
    }
  }
  cfg.strategy = Strategy::kGlobalOnly;
  const auto global_rows = run_episode(f.model, f.layout, f.episode, cfg);
  for (const auto& r : global_rows) {
    if (r.static_applied) {
      CHECK(r.count_dynamic == 0);
      CHECK(r.count_local == 0);
      CHECK(r.count_global == r.retained_visual);
    }
  }
}

TEST_CASE("flops accounting consistency inside metrics") {
  PipeFixture f;
  PrunerConfig cfg;
  const auto rows = run_episode(f.model, f.layout, f.episode, cfg);
  for (const auto& r : rows) {
    const auto fb = exact_reduction(r.layer_tokens, 64, 256);
    CHECK(fb.pruned_flops == r.flops_exact_pruned);
    CHECK(fb.full_flops == r.flops_exact_full);
    if (r.static_applied) CHECK(r.flops_reduction > 0.0);
  }
}

// SPDX-License-Identifier: Apache-2.0
#include "vlaprune/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <set>
#include <stdexcept>

#include "vlaprune/flops.hpp"
#include "vlaprune/rng.hpp"
#include "vlaprune/scoring.hpp"

namespace vlaprune {

const char* strategy_name(Strategy s) {
  switch (s) {
    case Strategy::kFull: return "full";
    case Strategy::kNone: return "none";
    case Strategy::kRandom: return "random";
    case Strategy::kLocalOnly: return "local_only";
    case Strategy::kGlobalOnly: return "global_only";
  }
  return "?";
}

Strategy strategy_from_name(const std::string& name) {
  if (name == "full") return Strategy::kFull;
  if (name == "none") return Strategy::kNone;
  if (name == "random") return Strategy::kRandom;
  if (name == "local_only") return Strategy::kLocalOnly;
  if (name == "global_only") return Strategy::kGlobalOnly;
  throw std::invalid_argument("unknown strategy: " + name);
}

LayerScheduleConfig PrunerConfig::schedule_for(int num_layers) const {
  LayerScheduleConfig s = LayerScheduleConfig::defaults_for(num_layers);
  s.per_prune_retention = retention;
  s.sigmoid_k = sigmoid_k;
  s.epsilon = epsilon;
  s.validate();
  return s;
}

GenerationPipeline::GenerationPipeline(const Model& model, const TokenLayout& layout,
                                       const PrunerConfig& cfg)
    : model_(model), layout_(layout), cfg_(cfg),
      schedule_(cfg.schedule_for(model.config().num_layers)) {
  layout_.validate();
  ctrl_.cfg = cfg_.controller;
  ctrl_.cfg.alpha = cfg_.alpha;
  for (size_t v = 0; v < layout_.views.size(); ++v) history_.emplace_back(12);
}

void GenerationPipeline::reset() {
  memory_ = GlobalAttentionMemory{};
  history_.clear();
  for (size_t v = 0; v < layout_.views.size(); ++v) history_.emplace_back(12);
  ctrl_ = ControllerState{};
  ctrl_.cfg = cfg_.controller;
  ctrl_.cfg.alpha = cfg_.alpha;
  has_prev_action_ = false;
  generation_ = 0;
}

StepResult GenerationPipeline::run_generation(const Episode& episode, int step) {
  const SceneSpec& scene = episode.scene;
  if (step < 0 || step >= static_cast<int>(episode.steps.size()))
    throw std::out_of_range("step out of range");
  const EpisodeStep& es = episode.steps[static_cast<size_t>(step)];

  StepResult out;
  StepMetrics& m = out.metrics;
  m.step = step;
  m.phase = es.phase;
  m.visual_total = layout_.visual_count();

  for (size_t v = 0; v < history_.size(); ++v) {
    history_[v].push(step, es.views[v]);
  }

  // The controller consumes the first action of the previously executed
  // chunk; at step 0 there is no previous chunk yet, so the initial coarse
  // mode stands.
  if (cfg_.enable_controller && has_prev_action_) classify(prev_action_, ctrl_);
  m.mode = cfg_.enable_controller ? ctrl_.mode : ActionMode::kCoarse;
  ControllerState budget_state = ctrl_;
  budget_state.mode = m.mode;
  const int k_base = budget_state.k_base();
  m.k_base = k_base;

  const Mat emb = embeddings_for(scene, episode, step, layout_);
  const AttentionBiasSpec bias = attention_bias_for(scene, layout_, step);

  std::vector<int> all_tokens(static_cast<size_t>(layout_.seq_len()));
  for (int i = 0; i < layout_.seq_len(); ++i) all_tokens[static_cast<size_t>(i)] = i;

  const auto t0 = std::chrono::steady_clock::now();
  Checkpoint ck = model_.begin(emb, layout_, all_tokens, bias);
  AttentionRecord rec12;
  model_.advance(ck, 2, {1, 2}, &rec12);
  m.layer_tokens.assign(static_cast<size_t>(model_.config().num_layers), 0);
  m.layer_tokens[0] = static_cast<int>(ck.active.size());
  m.layer_tokens[1] = static_cast<int>(ck.active.size());

  const TokenScoreVector scores1 = task_attention_score(rec12, layout_, 1, cfg_.direction);
  const TokenScoreVector scores2 = task_attention_score(rec12, layout_, 2, cfg_.direction);
  GlobalScoreAccumulator accumulator;
  accumulator.add(scores1);
  accumulator.add(scores2);

  // --- Static token pruning at action level (skipped at step 0: the global
  // memory is undefined before the first generation completes).
  std::vector<int> retained_visual = layout_.visual_indices();
  const bool do_static = cfg_.enable_static && cfg_.strategy != Strategy::kNone && !memory_.empty();
  if (do_static) {
    std::vector<int> v_global, v_dynamic, v_local;
    const bool want_global =
        cfg_.strategy == Strategy::kFull || cfg_.strategy == Strategy::kRandom ||
        cfg_.strategy == Strategy::kGlobalOnly;
    const bool want_local =
        cfg_.strategy == Strategy::kFull || cfg_.strategy == Strategy::kRandom ||
        cfg_.strategy == Strategy::kLocalOnly;
    const bool want_dynamic =
        cfg_.strategy == Strategy::kFull || cfg_.strategy == Strategy::kRandom;
    for (const auto& view : layout_.views) {
      if (want_global) {
        auto g = select_global(memory_, layout_, k_base, view.view_id);
        v_global.insert(v_global.end(), g.begin(), g.end());
      }
      if (want_dynamic) {
        auto d = select_dynamic(history_[static_cast<size_t>(view.view_id)], step,
                                ctrl_.v_t * cfg_.frame_speed_scale, cfg_.tau, cfg_.k_d,
                                view.begin, cfg_.offset_form);
        v_dynamic.insert(v_dynamic.end(), d.begin(), d.end());
      }
      if (want_local) {
        auto l = select_local(rec12, layout_, k_base, view.view_id, cfg_.direction);
        v_local.insert(v_local.end(), l.begin(), l.end());
      }
    }
    StaticPruneResult sp = compose_static(v_global, v_dynamic, v_local, layout_);
    if (cfg_.strategy == Strategy::kRandom) {
      // Equal-count uniform baseline: same retained budget, random content.
      const size_t budget = sp.v_retain.size() - static_cast<size_t>(layout_.text_count()) -
                            static_cast<size_t>(layout_.action_count());
      std::vector<int> pool = layout_.visual_indices();
      Rng rng(Rng::mix(cfg_.random_seed, Rng::mix(scene.seed, static_cast<uint64_t>(step))));
      for (size_t i = pool.size() - 1; i > 0; --i) {
        const size_t j = static_cast<size_t>(rng.uniform_int(0, static_cast<int>(i)));
        std::swap(pool[i], pool[j]);
      }
      pool.resize(budget);
      sp = compose_static({}, {}, pool, layout_);
    }
    m.static_applied = true;
    m.count_global = sp.count_global;
    m.count_dynamic = sp.count_dynamic_new;
    m.count_local = sp.count_local_new;
    retained_visual.clear();
    for (int idx : sp.v_retain) {
      if (layout_.is_visual(idx)) retained_visual.push_back(idx);
    }
    m.pruned_visual = static_cast<int>(sp.v_prune.size());
    model_.retain(ck, sp.v_retain);
    out.static_retained = sp.v_retain;
    out.static_result = std::move(sp);
  }
  m.retained_visual = static_cast<int>(retained_visual.size());
  m.static_pruned_fraction =
      static_cast<double>(m.pruned_visual) / static_cast<double>(m.visual_total);

  // --- Dynamic token pruning at layer level.
  ImportanceState state = ImportanceState::init(retained_visual, cfg_.ema_beta);
  const bool do_dynamic = cfg_.enable_dynamic && cfg_.strategy != Strategy::kNone;
  const int num_layers = model_.config().num_layers;
  TokenScoreVector final_scores;
  for (int layer = 3; layer <= num_layers; ++layer) {
    AttentionRecord rec;
    model_.advance(ck, layer, {layer}, &rec);
    m.layer_tokens[static_cast<size_t>(layer - 1)] = static_cast<int>(ck.active.size());
    TokenScoreVector scores = task_attention_score(rec, layout_, layer, cfg_.direction);
    accumulator.add(scores);
    if (layer == num_layers) final_scores = scores;
    if (do_dynamic && schedule_.update_layers.count(layer) != 0) {
      update_importance(state, rec, layout_, layer, schedule_, cfg_.direction);
    }
    if (do_dynamic && schedule_.prune_layers.count(layer) != 0 && layer < num_layers) {
      const std::vector<int> keep_visual = layer_prune(state, schedule_, layer);
      std::vector<int> keep = keep_visual;
      for (int i = layout_.text.first; i < layout_.action.second; ++i) keep.push_back(i);
      std::sort(keep.begin(), keep.end());
      model_.retain(ck, keep);
      out.layer_retained.emplace_back(layer, std::move(keep));
    }
  }
  out.action_hidden = model_.finish(ck);
  const auto t1 = std::chrono::steady_clock::now();
  m.forward_seconds = std::chrono::duration<double>(t1 - t0).count();
  m.op_count = ck.op_count;

  {
    std::vector<const TokenScoreVector*> early{&scores1, &scores2};
    m.hit_rate_12 = top_k_overlap(early, final_scores, cfg_.hit_rate_k);
  }

  const FlopsBreakdown fb =
      exact_reduction(m.layer_tokens, model_.config().hidden_dim, model_.config().ffn_dim);
  m.flops_exact_pruned = fb.pruned_flops;
  m.flops_exact_full = fb.full_flops;
  m.flops_reduction = fb.reduction;

  {
    std::vector<int> retained_all = retained_visual;
    for (int i = layout_.text.first; i < layout_.action.second; ++i) retained_all.push_back(i);
    m.action_error = action_oracle(scene, layout_, es.views, es.truth, retained_all).second;
    m.action_error_unpruned = action_oracle(scene, layout_, es.views, es.truth, all_tokens).second;
    int hits = 0;
    std::set<int> ret(retained_visual.begin(), retained_visual.end());
    for (int tok : es.truth.important) hits += ret.count(tok) ? 1 : 0;
    m.important_recall = es.truth.important.empty()
                             ? 1.0
                             : static_cast<double>(hits) /
                                   static_cast<double>(es.truth.important.size());
  }

  memory_ = accumulator.commit(generation_, cfg_.aggregation);
  prev_action_ = es.action;
  has_prev_action_ = true;
  ++generation_;
  return out;
}

std::vector<StepMetrics> run_episode(const Model& model, const TokenLayout& layout,
                                     const Episode& episode, const PrunerConfig& cfg) {
  GenerationPipeline pipe(model, layout, cfg);
  std::vector<StepMetrics> rows;
  rows.reserve(episode.steps.size());
  for (int t = 0; t < static_cast<int>(episode.steps.size()); ++t) {
    rows.push_back(pipe.run_generation(episode, t).metrics);
  }
  return rows;
}

}  // namespace vlaprune

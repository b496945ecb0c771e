// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vlaprune/controller.hpp"
#include "vlaprune/dynamic_pruner.hpp"
#include "vlaprune/episode.hpp"
#include "vlaprune/model.hpp"
#include "vlaprune/static_pruner.hpp"

namespace vlaprune {

// Retention strategy run by the pipeline. kFull is the complete method;
// kRandom retains a uniformly random visual set of the same size as kFull
// would; kLocalOnly / kGlobalOnly keep a single static-stage source.
enum class Strategy { kFull, kNone, kRandom, kLocalOnly, kGlobalOnly };

const char* strategy_name(Strategy s);
Strategy strategy_from_name(const std::string& name);

struct PrunerConfig {
  double alpha = 1.0;        // prune ratio scaling the static budgets
  double tau = 0.95;         // dynamic-token similarity threshold
  int k_d = 36;              // dynamic budget per view
  double sigmoid_k = 0.5;    // rank-weight steepness
  double epsilon = 1e-6;     // layer-confidence stabilizer
  double ema_beta = 0.2;     // importance EMA rate
  double retention = 0.9;    // per-prune-layer retention
  // Maps normalized action speeds onto the 0..6 domain of the reference-frame
  // offset formula (the formula was written for much larger speed units).
  double frame_speed_scale = 200.0 / 3.0;
  FrameOffsetForm offset_form = FrameOffsetForm::kProse;
  ScoreDirection direction = ScoreDirection::kTextQueryToVisualKey;
  GlobalAggregation aggregation = GlobalAggregation::kMeanOverLayers;
  ControllerConfig controller;
  bool enable_static = true;
  bool enable_dynamic = true;
  bool enable_controller = true;
  Strategy strategy = Strategy::kFull;
  int hit_rate_k = 20;
  uint64_t random_seed = 99;  // kRandom sampling stream

  LayerScheduleConfig schedule_for(int num_layers) const;
};

struct StepMetrics {
  int step = 0;
  ActionMode mode = ActionMode::kCoarse;
  int k_base = 0;
  PhaseKind phase = PhaseKind::kTargeting;

  bool static_applied = false;
  int visual_total = 0;
  int retained_visual = 0;  // after the static stage
  int pruned_visual = 0;
  int count_global = 0, count_dynamic = 0, count_local = 0;
  double static_pruned_fraction = 0.0;

  double hit_rate_12 = 0.0;  // layers {1,2} vs final layer, k = hit_rate_k
  std::vector<int> layer_tokens;  // active count while each layer ran
  uint64_t op_count = 0;          // instrumented multiply-accumulate count
  uint64_t flops_exact_pruned = 0, flops_exact_full = 0;
  double flops_reduction = 0.0;

  double action_error = 0.0;           // oracle error at the post-static set
  double action_error_unpruned = 0.0;  // oracle error with all tokens
  double important_recall = 0.0;       // post-static recall of ground truth
  double forward_seconds = 0.0;
};

struct StepResult {
  StepMetrics metrics;
  Mat action_hidden;  // final action-slot states (the "chunk" readout basis)
  // Realized retention schedule, replayable as a capture-free forward:
  // the post-static set applied after layer 2, then per-prune-layer sets.
  std::vector<int> static_retained;
  std::vector<std::pair<int, std::vector<int>>> layer_retained;
  StaticPruneResult static_result;  // set provenance for rendering
};

// Runs the end-to-end per-generation flow: controller classification, static
// action-level pruning after the first two layers, EMA-driven layer-level
// pruning at scheduled depths, and global-memory update for the next step.
class GenerationPipeline {
 public:
  GenerationPipeline(const Model& model, const TokenLayout& layout, const PrunerConfig& cfg);

  StepResult run_generation(const Episode& episode, int step);

  const GlobalAttentionMemory& memory() const { return memory_; }
  const ControllerState& controller() const { return ctrl_; }
  void reset();

 private:
  const Model& model_;
  TokenLayout layout_;
  PrunerConfig cfg_;
  LayerScheduleConfig schedule_;
  GlobalAttentionMemory memory_;
  std::vector<FrameHistory> history_;
  ControllerState ctrl_;
  bool has_prev_action_ = false;
  ActionDelta prev_action_;
  int generation_ = 0;
};

// Convenience wrapper: fresh pipeline, all steps of the episode.
std::vector<StepMetrics> run_episode(const Model& model, const TokenLayout& layout,
                                     const Episode& episode, const PrunerConfig& cfg);

}  // namespace vlaprune

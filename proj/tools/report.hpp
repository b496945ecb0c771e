// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "config.hpp"
#include "vlaprune/pipeline.hpp"

namespace vlaprune::cli {

struct EpisodeRun {
  std::string strategy;
  int episode = 0;
  uint64_t seed = 0;
  std::vector<StepMetrics> rows;
};

struct StrategySummary {
  std::string strategy;
  int episodes = 0;
  int steps = 0;
  double mean_static_pruned = 0.0;
  double mean_hit_rate = 0.0;
  double mean_recall = 0.0;
  double mean_action_error = 0.0;
  double mean_action_error_unpruned = 0.0;
  double mean_flops_reduction = 0.0;
  std::vector<int> retained_fraction_histogram;  // 10 bins over [0,1]
  double unpruned_median_s = 0.0;
  double pruned_median_s = 0.0;
  double speedup = 0.0;
  int invariant_violations = 0;
};

// Runs `episodes` episodes (seeds seed_base..seed_base+episodes-1) of one
// strategy through a worker pool; rows come back ordered by (episode, step).
std::vector<EpisodeRun> run_strategy(const RunSetup& setup, const Model& model,
                                     Strategy strategy, int episodes);

// Aggregation + invariant checks (per-stage counts vs retained set, metric
// ranges). Violations land in the summary.
StrategySummary summarize(const std::string& strategy, const std::vector<EpisodeRun>& runs);

// Replays a step's retention schedule as a capture-free forward and measures
// median wall-clock against the unpruned forward (warm-up + median-of-reps).
void measure_timing(const RunSetup& setup, const Model& model, Strategy strategy,
                    StrategySummary& summary);

// metrics.jsonl (one row per step, schema vlaprune.metrics.v1) and
// summary.json (schema vlaprune.summary.v1).
void write_metrics_jsonl(const std::string& path, const std::vector<EpisodeRun>& runs);
void write_summary_json(const std::string& path, const RunSetup& setup,
                        const std::vector<StrategySummary>& summaries);
void print_summary_table(const std::vector<StrategySummary>& summaries);

}  // namespace vlaprune::cli

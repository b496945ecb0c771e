// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <set>
#include <vector>

#include "vlaprune/model.hpp"
#include "vlaprune/scoring.hpp"

namespace vlaprune {

// EMA importance per retained visual token. S_i starts at 0 and is updated
// at scheduled layers; tokens pruned at layer level leave the state.
struct ImportanceState {
  std::vector<int> token;  // ascending original indices
  std::vector<double> s;   // S_i, aligned with token
  double ema_beta = 0.2;
  int last_layer = 0;

  static ImportanceState init(std::vector<int> visual_tokens, double ema_beta = 0.2);
  size_t size() const { return token.size(); }
};

struct LayerScheduleConfig {
  std::set<int> update_layers;
  std::set<int> prune_layers;
  double per_prune_retention = 0.9;
  double sigmoid_k = 0.5;
  double epsilon = 1e-6;

  void validate() const;
  // update = every layer from 3, prune = {5,10,15,20} rescaled to the same
  // relative depths when num_layers != 32.
  static LayerScheduleConfig defaults_for(int num_layers);
};

// Rank-based weight: rank tokens by descending score (rank 1 = best, ties to
// the lower original index) and return
// sigmoid(-k*rank_i) / sum_j sigmoid(-k*rank_j), aligned with scores.token.
std::vector<double> rank_weight(const TokenScoreVector& scores, double k);

// mu/(sigma + epsilon) over every attention weight of the layer (all heads,
// all active query/key positions); sigma is the population deviation.
double layer_confidence(const AttentionRecord& record, int layer, double epsilon);

// S_i <- (1-beta)*S_i + beta * rank_weight_i * layer_confidence, for every
// token in the state. The layer must be in cfg.update_layers and the record's
// active visual set must cover the state.
void update_importance(ImportanceState& state, const AttentionRecord& record,
                       const TokenLayout& layout, int layer, const LayerScheduleConfig& cfg,
                       ScoreDirection dir = ScoreDirection::kTextQueryToVisualKey);

// Keeps the ceil(per_prune_retention * |state|) highest-S_i tokens (ties to
// the lower original index), removes the rest from the state, and returns the
// retained original indices ascending.
std::vector<int> layer_prune(ImportanceState& state, const LayerScheduleConfig& cfg,
                             int current_layer);

}  // namespace vlaprune

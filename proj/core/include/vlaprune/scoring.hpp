// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <set>
#include <vector>

#include "vlaprune/model.hpp"

namespace vlaprune {

// Which attention mass feeds the task attention score. In a causal decoder
// only the text-query rows carry visual-key mass; with the bidirectional toy
// backbone both readings are meaningful, the literal one stays opt-in.
enum class ScoreDirection {
  kTextQueryToVisualKey,  // default: A[t_j, V_i]
  kVisualQueryToTextKey,  // literal reading: A[V_i, t_j]
};

// Per visual token task attention score for one layer (or an aggregate when
// layer == kAggregate). token[i] holds the original index, score[i] >= 0.
struct TokenScoreVector {
  static constexpr int kAggregate = -1;
  std::vector<int> token;
  std::vector<double> score;
  int layer = kAggregate;

  size_t size() const { return token.size(); }
};

// Score_l(V_i) = 1/(H*m) * sum_h sum_j A_l^h(V_i, t_j) over the active visual
// tokens. Throws if the layer was not captured or the text range is empty.
TokenScoreVector task_attention_score(const AttentionRecord& record, const TokenLayout& layout,
                                      int layer,
                                      ScoreDirection dir = ScoreDirection::kTextQueryToVisualKey);

// The k highest-scoring original indices, in rank order (score descending,
// lower original index wins ties). k clamps to the population.
std::vector<int> top_k_tokens(const TokenScoreVector& scores, int k);

// Overlap between the union of early-layer top-k sets and the final layer's
// top-k: |(U_l top_k(l)) n top_k(final)| / k. Returns 1.0 for k == 0 (the
// empty final top-k is vacuously covered).
double hit_rate(const std::set<int>& early_layers, int final_layer, const AttentionRecord& record,
                const TokenLayout& layout, int k,
                ScoreDirection dir = ScoreDirection::kTextQueryToVisualKey);

// Same overlap computed from already-extracted score vectors; hit_rate is a
// thin wrapper over this.
double top_k_overlap(const std::vector<const TokenScoreVector*>& early,
                     const TokenScoreVector& final_scores, int k);

}  // namespace vlaprune

// SPDX-License-Identifier: Apache-2.0
#include "vlaprune/scoring.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>

namespace vlaprune {

TokenScoreVector task_attention_score(const AttentionRecord& record, const TokenLayout& layout,
                                      int layer, ScoreDirection dir) {
  const LayerAttention& att = record.layer(layer);
  if (layout.text_count() <= 0) throw std::invalid_argument("text range is empty");

  const int active = att.active_count();
  std::vector<int> text_pos, visual_pos;
  for (int p = 0; p < active; ++p) {
    const int orig = att.active_to_original[static_cast<size_t>(p)];
    if (layout.is_text(orig)) text_pos.push_back(p);
    else if (layout.is_visual(orig)) visual_pos.push_back(p);
  }
  if (text_pos.empty()) throw std::invalid_argument("no active text tokens in capture");

  TokenScoreVector out;
  out.layer = layer;
  out.token.reserve(visual_pos.size());
  out.score.assign(visual_pos.size(), 0.0);
  for (int p : visual_pos) out.token.push_back(att.active_to_original[static_cast<size_t>(p)]);

  const double denom = static_cast<double>(att.heads.size()) * static_cast<double>(text_pos.size());
  for (const Mat& head : att.heads) {
    for (int t : text_pos) {
      for (size_t i = 0; i < visual_pos.size(); ++i) {
        const int v = visual_pos[i];
        out.score[i] += (dir == ScoreDirection::kTextQueryToVisualKey) ? head.at(t, v)
                                                                       : head.at(v, t);
      }
    }
  }
  for (double& s : out.score) s /= denom;
  return out;
}

std::vector<int> top_k_tokens(const TokenScoreVector& scores, int k) {
  const int n = static_cast<int>(scores.size());
  if (k < 0) k = 0;
  if (k > n) k = n;
  std::vector<int> order(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
  std::stable_sort(order.begin(), order.end(), [&scores](int a, int b) {
    if (scores.score[static_cast<size_t>(a)] != scores.score[static_cast<size_t>(b)])
      return scores.score[static_cast<size_t>(a)] > scores.score[static_cast<size_t>(b)];
    return scores.token[static_cast<size_t>(a)] < scores.token[static_cast<size_t>(b)];
  });
  std::vector<int> out;
  out.reserve(static_cast<size_t>(k));
  for (int i = 0; i < k; ++i) out.push_back(scores.token[static_cast<size_t>(order[static_cast<size_t>(i)])]);
  return out;
}

double top_k_overlap(const std::vector<const TokenScoreVector*>& early,
                     const TokenScoreVector& final_scores, int k) {
  if (k == 0) return 1.0;
  std::set<int> early_union;
  for (const TokenScoreVector* sv : early) {
    const auto top = top_k_tokens(*sv, k);
    early_union.insert(top.begin(), top.end());
  }
  const auto final_top = top_k_tokens(final_scores, k);
  int hits = 0;
  for (int t : final_top) hits += early_union.count(t) ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(k);
}

double hit_rate(const std::set<int>& early_layers, int final_layer, const AttentionRecord& record,
                const TokenLayout& layout, int k, ScoreDirection dir) {
  if (k == 0) return 1.0;
  std::vector<TokenScoreVector> early;
  early.reserve(early_layers.size());
  for (int l : early_layers) early.push_back(task_attention_score(record, layout, l, dir));
  std::vector<const TokenScoreVector*> ptrs;
  for (const auto& sv : early) ptrs.push_back(&sv);
  return top_k_overlap(ptrs, task_attention_score(record, layout, final_layer, dir), k);
}

}  // namespace vlaprune

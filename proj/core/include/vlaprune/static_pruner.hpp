// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <deque>
#include <vector>

#include "vlaprune/model.hpp"
#include "vlaprune/patch_grid.hpp"
#include "vlaprune/scoring.hpp"

namespace vlaprune {

// How a generation's per-layer task attention scores are folded into the
// global memory consumed by the next step.
enum class GlobalAggregation { kMeanOverLayers, kLastLayerOnly };

// Which reading of the reference-frame offset formula to use. The prose form
// divides the speed by 6, the algorithm listing does not.
enum class FrameOffsetForm { kProse, kAlgorithmOne };

// Aggregate task attention scores carried over from the previous generation.
// Empty exactly at episode step 0.
struct GlobalAttentionMemory {
  TokenScoreVector scores;  // layer == kAggregate
  int generation = 0;

  bool empty() const { return scores.token.empty(); }
};

// Builds the next GlobalAttentionMemory while a generation runs: feed it the
// per-layer score vectors of every layer a token survived to.
class GlobalScoreAccumulator {
 public:
  void add(const TokenScoreVector& layer_scores);
  GlobalAttentionMemory commit(int generation, GlobalAggregation mode) const;

 private:
  std::vector<int> token_;
  std::vector<double> sum_;
  std::vector<int> count_;
  std::vector<double> last_;
  std::vector<int> index_of_;  // original index -> slot, lazily grown
};

// Ring buffer of per-view frames for velocity-based reference sampling.
class FrameHistory {
 public:
  explicit FrameHistory(size_t capacity = 12);

  void push(int step, PatchFeatureGrid grid);  // steps must be strictly increasing
  const PatchFeatureGrid* frame_at(int step) const;
  int oldest_step() const;
  int newest_step() const;
  size_t size() const { return frames_.size(); }

  // Frame `offset` steps before current_step, falling back to the oldest
  // frame when the history is shorter.
  const PatchFeatureGrid& reference(int current_step, int offset) const;

 private:
  size_t capacity_;
  std::deque<std::pair<int, PatchFeatureGrid>> frames_;
};

struct StaticPruneResult {
  std::vector<int> v_global, v_dynamic, v_local;  // visual subsets (sorted)
  std::vector<int> v_retain;                      // visual union + text + action
  std::vector<int> v_prune;                       // visual complement
  // Disjoint stage attribution (global > dynamic > local claim order), so the
  // per-stage counts sum to the retained visual count.
  int count_global = 0;
  int count_dynamic_new = 0;
  int count_local_new = 0;
};

// Top-k_g original indices from the previous generation's aggregate scores,
// restricted to `view` (-1 = all views). Empty memory yields the empty set.
std::vector<int> select_global(const GlobalAttentionMemory& memory, const TokenLayout& layout,
                               int k_g, int view = -1);

// Cell-wise cosine similarity between two grids of identical shape. Two
// zero-norm patches compare as 1.0, exactly one zero-norm patch as 0.0.
Mat patch_similarity(const PatchFeatureGrid& a, const PatchFeatureGrid& b);

// T = floor((-16/3) * (v/6) + 22/3) + 4 (prose form), clamped to
// [1, history_len]. The Algorithm-One form omits the /6.
int frame_offset(double v_t, int history_len, FrameOffsetForm form = FrameOffsetForm::kProse);

// Dynamic-token selection for one view: compare the current frame against the
// velocity-sampled reference, keep the k_d lowest-similarity patches below
// tau, and map them to original token indices via view_token_base.
std::vector<int> select_dynamic(const FrameHistory& history, int current_step, double v_t,
                                double tau, int k_d, int view_token_base,
                                FrameOffsetForm form = FrameOffsetForm::kProse);

// Union of the per-layer top-k_base sets from the first two layers,
// restricted to `view` (-1 = all views).
std::vector<int> select_local(const AttentionRecord& record, const TokenLayout& layout, int k_base,
                              int view = -1,
                              ScoreDirection dir = ScoreDirection::kTextQueryToVisualKey);

// V_prune = visual - (V_global u V_dynamic u V_local); text and action tokens
// are always retained. Inputs must be visual-token indices.
StaticPruneResult compose_static(const std::vector<int>& v_global,
                                 const std::vector<int>& v_dynamic,
                                 const std::vector<int>& v_local, const TokenLayout& layout);

}  // namespace vlaprune

// SPDX-License-Identifier: Apache-2.0
#include "vlaprune/static_pruner.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace vlaprune {

void GlobalScoreAccumulator::add(const TokenScoreVector& layer_scores) {
  for (size_t i = 0; i < layer_scores.size(); ++i) {
    const int tok = layer_scores.token[i];
    if (tok >= static_cast<int>(index_of_.size())) index_of_.resize(static_cast<size_t>(tok) + 1, -1);
    int slot = index_of_[static_cast<size_t>(tok)];
    if (slot < 0) {
      slot = static_cast<int>(token_.size());
      index_of_[static_cast<size_t>(tok)] = slot;
      token_.push_back(tok);
      sum_.push_back(0.0);
      count_.push_back(0);
      last_.push_back(0.0);
    }
    sum_[static_cast<size_t>(slot)] += layer_scores.score[i];
    count_[static_cast<size_t>(slot)] += 1;
    last_[static_cast<size_t>(slot)] = layer_scores.score[i];
  }
}

GlobalAttentionMemory GlobalScoreAccumulator::commit(int generation, GlobalAggregation mode) const {
  GlobalAttentionMemory mem;
  mem.generation = generation;
  mem.scores.layer = TokenScoreVector::kAggregate;
  std::vector<int> order(token_.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::sort(order.begin(), order.end(),
            [this](int a, int b) { return token_[static_cast<size_t>(a)] < token_[static_cast<size_t>(b)]; });
  for (int slot : order) {
    mem.scores.token.push_back(token_[static_cast<size_t>(slot)]);
    const double value = (mode == GlobalAggregation::kMeanOverLayers)
                             ? sum_[static_cast<size_t>(slot)] / count_[static_cast<size_t>(slot)]
                             : last_[static_cast<size_t>(slot)];
    mem.scores.score.push_back(value);
  }
  return mem;
}

FrameHistory::FrameHistory(size_t capacity) : capacity_(capacity) {
  if (capacity_ < 12) throw std::invalid_argument("frame history capacity must be >= 12");
}

void FrameHistory::push(int step, PatchFeatureGrid grid) {
  if (!frames_.empty() && step <= frames_.back().first)
    throw std::invalid_argument("frame steps must be strictly increasing");
  frames_.emplace_back(step, std::move(grid));
  while (frames_.size() > capacity_) frames_.pop_front();
}

const PatchFeatureGrid* FrameHistory::frame_at(int step) const {
  for (const auto& [s, g] : frames_) {
    if (s == step) return &g;
  }
  return nullptr;
}

int FrameHistory::oldest_step() const {
  if (frames_.empty()) throw std::out_of_range("frame history is empty");
  return frames_.front().first;
}

int FrameHistory::newest_step() const {
  if (frames_.empty()) throw std::out_of_range("frame history is empty");
  return frames_.back().first;
}

const PatchFeatureGrid& FrameHistory::reference(int current_step, int offset) const {
  const int want = current_step - offset;
  if (const PatchFeatureGrid* g = frame_at(want)) return *g;
  return frames_.front().second;
}

std::vector<int> select_global(const GlobalAttentionMemory& memory, const TokenLayout& layout,
                               int k_g, int view) {
  if (memory.empty() || k_g <= 0) return {};
  TokenScoreVector scoped;
  scoped.layer = TokenScoreVector::kAggregate;
  for (size_t i = 0; i < memory.scores.size(); ++i) {
    const int tok = memory.scores.token[i];
    if (view >= 0 && layout.view_of(tok) != view) continue;
    scoped.token.push_back(tok);
    scoped.score.push_back(memory.scores.score[i]);
  }
  auto top = top_k_tokens(scoped, k_g);
  std::sort(top.begin(), top.end());
  return top;
}

Mat patch_similarity(const PatchFeatureGrid& a, const PatchFeatureGrid& b) {
  if (a.n != b.n || a.feature_dim != b.feature_dim)
    throw std::invalid_argument("patch grids must have identical shapes");
  Mat sim(a.n, a.n);
  for (int i = 0; i < a.n; ++i) {
    for (int j = 0; j < a.n; ++j) {
      const auto pa = a.patch(i, j);
      const auto pb = b.patch(i, j);
      double dot = 0.0, na = 0.0, nb = 0.0;
      for (int c = 0; c < a.feature_dim; ++c) {
        dot += pa[c] * pb[c];
        na += pa[c] * pa[c];
        nb += pb[c] * pb[c];
      }
      double value;
      if (na == 0.0 && nb == 0.0) value = 1.0;
      else if (na == 0.0 || nb == 0.0) value = 0.0;
      else value = dot / (std::sqrt(na) * std::sqrt(nb));
      sim.at(i, j) = value;
    }
  }
  return sim;
}

int frame_offset(double v_t, int history_len, FrameOffsetForm form) {
  // Evaluated as (22 - 16*x)/3 for numerical robustness at integer results.
  const double x = (form == FrameOffsetForm::kProse) ? v_t / 6.0 : v_t;
  const int t = static_cast<int>(std::floor((22.0 - 16.0 * x) / 3.0)) + 4;
  return std::clamp(t, 1, std::max(1, history_len));
}

std::vector<int> select_dynamic(const FrameHistory& history, int current_step, double v_t,
                                double tau, int k_d, int view_token_base, FrameOffsetForm form) {
  if (k_d <= 0 || history.size() == 0) return {};
  const PatchFeatureGrid* current = history.frame_at(current_step);
  if (current == nullptr) throw std::invalid_argument("current frame missing from history");
  const int span = current_step - history.oldest_step();
  if (span <= 0) return {};  // no earlier frame to compare against
  const int offset = frame_offset(v_t, span, form);
  const PatchFeatureGrid& ref = history.reference(current_step, offset);

  const Mat sim = patch_similarity(ref, *current);
  std::vector<std::pair<double, int>> candidates;  // (similarity, cell)
  for (int cell = 0; cell < current->patch_count(); ++cell) {
    const double s = sim.v[static_cast<size_t>(cell)];
    if (s < tau) candidates.emplace_back(s, cell);
  }
  std::sort(candidates.begin(), candidates.end());
  if (static_cast<int>(candidates.size()) > k_d) candidates.resize(static_cast<size_t>(k_d));
  std::vector<int> tokens;
  tokens.reserve(candidates.size());
  for (const auto& [s, cell] : candidates) tokens.push_back(view_token_base + cell);
  std::sort(tokens.begin(), tokens.end());
  return tokens;
}

std::vector<int> select_local(const AttentionRecord& record, const TokenLayout& layout, int k_base,
                              int view, ScoreDirection dir) {
  std::vector<int> result;
  for (int layer : {1, 2}) {
    TokenScoreVector scores = task_attention_score(record, layout, layer, dir);
    if (view >= 0) {
      TokenScoreVector scoped;
      scoped.layer = scores.layer;
      for (size_t i = 0; i < scores.size(); ++i) {
        if (layout.view_of(scores.token[i]) == view) {
          scoped.token.push_back(scores.token[i]);
          scoped.score.push_back(scores.score[i]);
        }
      }
      scores = std::move(scoped);
    }
    auto top = top_k_tokens(scores, k_base);
    std::sort(top.begin(), top.end());
    result = sorted_union(result, top);
  }
  return result;
}

StaticPruneResult compose_static(const std::vector<int>& v_global,
                                 const std::vector<int>& v_dynamic,
                                 const std::vector<int>& v_local, const TokenLayout& layout) {
  auto sorted_visual = [&layout](std::vector<int> v, const char* name) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    for (int idx : v) {
      if (!layout.is_visual(idx))
        throw std::invalid_argument(std::string(name) + " contains a non-visual token index");
    }
    return v;
  };

  StaticPruneResult res;
  res.v_global = sorted_visual(v_global, "v_global");
  res.v_dynamic = sorted_visual(v_dynamic, "v_dynamic");
  res.v_local = sorted_visual(v_local, "v_local");

  std::vector<int> keep = sorted_union(sorted_union(res.v_global, res.v_dynamic), res.v_local);
  std::vector<char> kept(static_cast<size_t>(layout.seq_len()), 0);
  for (int idx : keep) kept[static_cast<size_t>(idx)] = 1;

  res.count_global = static_cast<int>(res.v_global.size());
  {
    std::vector<char> claimed(static_cast<size_t>(layout.seq_len()), 0);
    for (int idx : res.v_global) claimed[static_cast<size_t>(idx)] = 1;
    for (int idx : res.v_dynamic) {
      if (!claimed[static_cast<size_t>(idx)]) {
        claimed[static_cast<size_t>(idx)] = 1;
        ++res.count_dynamic_new;
      }
    }
    for (int idx : res.v_local) {
      if (!claimed[static_cast<size_t>(idx)]) {
        claimed[static_cast<size_t>(idx)] = 1;
        ++res.count_local_new;
      }
    }
  }

  for (int idx : layout.visual_indices()) {
    if (kept[static_cast<size_t>(idx)]) res.v_retain.push_back(idx);
    else res.v_prune.push_back(idx);
  }
  for (int i = layout.text.first; i < layout.action.second; ++i) res.v_retain.push_back(i);
  return res;
}

}  // namespace vlaprune

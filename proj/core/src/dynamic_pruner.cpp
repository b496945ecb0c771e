// SPDX-License-Identifier: Apache-2.0
#include "vlaprune/dynamic_pruner.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_map>

namespace vlaprune {

namespace {
double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
}  // namespace

ImportanceState ImportanceState::init(std::vector<int> visual_tokens, double ema_beta) {
  if (ema_beta <= 0.0 || ema_beta >= 1.0)
    throw std::invalid_argument("ema_beta must lie in (0, 1)");
  std::sort(visual_tokens.begin(), visual_tokens.end());
  ImportanceState st;
  st.token = std::move(visual_tokens);
  st.s.assign(st.token.size(), 0.0);
  st.ema_beta = ema_beta;
  return st;
}

void LayerScheduleConfig::validate() const {
  if (per_prune_retention <= 0.0 || per_prune_retention > 1.0)
    throw std::invalid_argument("per_prune_retention must lie in (0, 1]");
  if (sigmoid_k <= 0.0) throw std::invalid_argument("sigmoid steepness must be positive");
  if (epsilon <= 0.0) throw std::invalid_argument("epsilon must be positive");
  for (int p : prune_layers) {
    bool has_update = false;
    for (int u : update_layers) {
      if (u <= p) {
        has_update = true;
        break;
      }
    }
    if (!has_update)
      throw std::invalid_argument("prune layer precedes every update layer: state would be empty");
  }
}

LayerScheduleConfig LayerScheduleConfig::defaults_for(int num_layers) {
  LayerScheduleConfig cfg;
  for (int l = 3; l <= num_layers; ++l) cfg.update_layers.insert(l);
  for (int base : {5, 10, 15, 20}) {
    int scaled = static_cast<int>(std::floor(base * static_cast<double>(num_layers) / 32.0 + 0.5));
    scaled = std::clamp(scaled, 3, num_layers);
    cfg.prune_layers.insert(scaled);
  }
  cfg.validate();
  return cfg;
}

std::vector<double> rank_weight(const TokenScoreVector& scores, double k) {
  if (scores.size() == 0) throw std::invalid_argument("rank_weight on empty token set");
  if (k <= 0.0) throw std::invalid_argument("sigmoid steepness must be positive");
  const int n = static_cast<int>(scores.size());
  std::vector<int> order(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
  std::stable_sort(order.begin(), order.end(), [&scores](int a, int b) {
    if (scores.score[static_cast<size_t>(a)] != scores.score[static_cast<size_t>(b)])
      return scores.score[static_cast<size_t>(a)] > scores.score[static_cast<size_t>(b)];
    return scores.token[static_cast<size_t>(a)] < scores.token[static_cast<size_t>(b)];
  });
  std::vector<double> weight(static_cast<size_t>(n), 0.0);
  double total = 0.0;
  for (int r = 0; r < n; ++r) {
    const double w = sigmoid(-k * static_cast<double>(r + 1));  // rank 1 = best
    weight[static_cast<size_t>(order[static_cast<size_t>(r)])] = w;
    total += w;
  }
  for (double& w : weight) w /= total;
  return weight;
}

double layer_confidence(const AttentionRecord& record, int layer, double epsilon) {
  if (epsilon <= 0.0) throw std::invalid_argument("epsilon must be positive");
  const LayerAttention& att = record.layer(layer);
  double sum = 0.0, sum_sq = 0.0;
  uint64_t count = 0;
  for (const Mat& head : att.heads) {
    for (double w : head.v) {
      sum += w;
      sum_sq += w * w;
    }
    count += head.v.size();
  }
  if (count == 0) throw std::invalid_argument("captured layer has no attention weights");
  const double mean = sum / static_cast<double>(count);
  const double var = std::max(0.0, sum_sq / static_cast<double>(count) - mean * mean);
  return mean / (std::sqrt(var) + epsilon);
}

void update_importance(ImportanceState& state, const AttentionRecord& record,
                       const TokenLayout& layout, int layer, const LayerScheduleConfig& cfg,
                       ScoreDirection dir) {
  if (cfg.update_layers.count(layer) == 0)
    throw std::invalid_argument("layer not in update schedule");
  const TokenScoreVector scores = task_attention_score(record, layout, layer, dir);
  std::unordered_map<int, size_t> slot;
  slot.reserve(scores.size());
  for (size_t i = 0; i < scores.size(); ++i) slot.emplace(scores.token[i], i);

  // Ranks are taken over exactly the state's retained tokens.
  TokenScoreVector scoped;
  scoped.layer = layer;
  scoped.token = state.token;
  scoped.score.reserve(state.size());
  for (int tok : state.token) {
    auto it = slot.find(tok);
    if (it == slot.end())
      throw std::invalid_argument("importance state holds a token absent from the capture");
    scoped.score.push_back(scores.score[it->second]);
  }
  const std::vector<double> w = rank_weight(scoped, cfg.sigmoid_k);
  const double conf = layer_confidence(record, layer, cfg.epsilon);
  const double beta = state.ema_beta;
  for (size_t i = 0; i < state.size(); ++i) {
    state.s[i] = (1.0 - beta) * state.s[i] + beta * (w[i] * conf);
  }
  state.last_layer = layer;
}

std::vector<int> layer_prune(ImportanceState& state, const LayerScheduleConfig& cfg,
                             int current_layer) {
  if (cfg.prune_layers.count(current_layer) == 0)
    throw std::invalid_argument("layer not in prune schedule");
  if (state.size() == 0) throw std::invalid_argument("layer_prune on empty state");
  const int n = static_cast<int>(state.size());
  const int keep = static_cast<int>(std::ceil(cfg.per_prune_retention * static_cast<double>(n)));
  if (keep >= n) {
    return state.token;  // retention 1.0 is a no-op
  }
  std::vector<int> order(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
  std::stable_sort(order.begin(), order.end(), [&state](int a, int b) {
    if (state.s[static_cast<size_t>(a)] != state.s[static_cast<size_t>(b)])
      return state.s[static_cast<size_t>(a)] > state.s[static_cast<size_t>(b)];
    return state.token[static_cast<size_t>(a)] < state.token[static_cast<size_t>(b)];
  });
  order.resize(static_cast<size_t>(keep));
  std::sort(order.begin(), order.end());  // back to ascending token order
  ImportanceState next;
  next.ema_beta = state.ema_beta;
  next.last_layer = state.last_layer;
  next.token.reserve(order.size());
  next.s.reserve(order.size());
  for (int idx : order) {
    next.token.push_back(state.token[static_cast<size_t>(idx)]);
    next.s.push_back(state.s[static_cast<size_t>(idx)]);
  }
  state = std::move(next);
  return state.token;
}

}  // namespace vlaprune

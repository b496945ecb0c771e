// SPDX-License-Identifier: Apache-2.0
#include "vlaprune/flops.hpp"

#include <cmath>
#include <stdexcept>

namespace vlaprune {

uint64_t layer_flops(uint64_t tokens, uint64_t hidden_dim, uint64_t m_width) {
  if (tokens == 0 || hidden_dim == 0)
    throw std::invalid_argument("layer_flops token and hidden counts must be positive");
  return 4 * tokens * hidden_dim * hidden_dim + 2 * tokens * tokens * hidden_dim +
         2 * tokens * hidden_dim * m_width;
}

double paper_reduction_estimate(int num_layers, double static_retention, double dynamic_avg) {
  if (num_layers < 3) throw std::invalid_argument("estimate needs at least 3 layers");
  if (static_retention <= 0.0 || static_retention > 1.0 || dynamic_avg <= 0.0 || dynamic_avg > 1.0)
    throw std::invalid_argument("retention fractions must lie in (0, 1]");
  const double kept_layers = static_cast<double>(num_layers - 2) / static_cast<double>(num_layers);
  return 1.0 - kept_layers * static_retention * dynamic_avg;
}

FlopsBreakdown exact_reduction(const std::vector<int>& trajectory, int hidden_dim, int m_width,
                               int full_tokens) {
  if (trajectory.empty()) throw std::invalid_argument("empty trajectory");
  if (full_tokens <= 0) full_tokens = trajectory.front();
  FlopsBreakdown b;
  b.tokens = trajectory;
  b.flops.reserve(trajectory.size());
  const uint64_t full_layer = layer_flops(static_cast<uint64_t>(full_tokens),
                                          static_cast<uint64_t>(hidden_dim),
                                          static_cast<uint64_t>(m_width));
  for (int l : trajectory) {
    if (l <= 0 || l > full_tokens)
      throw std::invalid_argument("trajectory counts must be in (0, full_tokens]");
    const uint64_t f = layer_flops(static_cast<uint64_t>(l), static_cast<uint64_t>(hidden_dim),
                                   static_cast<uint64_t>(m_width));
    b.flops.push_back(f);
    b.pruned_flops += f;
    b.full_flops += full_layer;
  }
  b.reduction = 1.0 - static_cast<double>(b.pruned_flops) / static_cast<double>(b.full_flops);
  return b;
}

double dynamic_average_multiplier(double retention, int num_prunes) {
  if (num_prunes < 0) throw std::invalid_argument("num_prunes must be non-negative");
  double sum = 0.0, m = 1.0;
  for (int i = 0; i <= num_prunes; ++i) {
    sum += m;
    m *= retention;
  }
  return sum / static_cast<double>(num_prunes + 1);
}

std::vector<int> schedule_trajectory(int num_layers, int full_tokens, int static_kept,
                                     const std::set<int>& prune_layers, double retention) {
  if (num_layers < 3) throw std::invalid_argument("schedule needs at least 3 layers");
  if (static_kept > full_tokens) throw std::invalid_argument("static_kept exceeds full_tokens");
  std::vector<int> traj;
  traj.reserve(static_cast<size_t>(num_layers));
  int count = full_tokens;
  for (int layer = 1; layer <= num_layers; ++layer) {
    if (layer == 3) count = static_kept;
    traj.push_back(count);
    // A prune at this layer takes effect from the next layer on.
    if (prune_layers.count(layer) != 0 && layer >= 3) {
      count = static_cast<int>(std::ceil(retention * static_cast<double>(count)));
    }
  }
  return traj;
}

}  // namespace vlaprune

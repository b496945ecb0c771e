// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <set>
#include <vector>

namespace vlaprune {

struct FlopsBreakdown {
  std::vector<int> tokens;       // L_l per layer
  std::vector<uint64_t> flops;   // flops_l per layer
  uint64_t full_flops = 0;
  uint64_t pruned_flops = 0;
  double reduction = 0.0;        // 1 - pruned/full
};

// Per-layer cost: 4LD^2 + 2L^2D + 2LDM, multiply-accumulates counted as one
// operation. M is a free width parameter (m_width == 0 drops the term);
// callers usually bind the FFN width.
uint64_t layer_flops(uint64_t tokens, uint64_t hidden_dim, uint64_t m_width);

// The linear estimate 1 - ((N-2)/N) * static_retention * dynamic_avg, i.e.
// the closed-form approximation with two unpruned layers out of N.
double paper_reduction_estimate(int num_layers, double static_retention, double dynamic_avg);

// Exact accounting over an actual per-layer retained-count trajectory. The
// full baseline keeps full_tokens (trajectory.front() when <= 0) at every
// layer.
FlopsBreakdown exact_reduction(const std::vector<int>& trajectory, int hidden_dim, int m_width,
                               int full_tokens = 0);

// Mean of the per-plateau retention multipliers {1, r, r^2, ..., r^P} for P
// scheduled prunes; with r=0.9 and P=4 this reproduces the reported ~0.81
// average dynamic retention.
double dynamic_average_multiplier(double retention, int num_prunes);

// Retained-count trajectory for a schedule: full for layers 1..2, static_kept
// from layer 3, multiplied by retention after each prune layer (ceil).
std::vector<int> schedule_trajectory(int num_layers, int full_tokens, int static_kept,
                                     const std::set<int>& prune_layers, double retention);

}  // namespace vlaprune

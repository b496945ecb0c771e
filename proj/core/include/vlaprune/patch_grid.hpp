// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <vector>

namespace vlaprune {

// N x N grid of patch feature vectors for one view of one frame; the
// simulator's stand-in for an image encoder's output.
struct PatchFeatureGrid {
  int n = 0;
  int feature_dim = 0;
  std::vector<double> data;  // patch-major: (i * n + j) * feature_dim

  PatchFeatureGrid() = default;
  PatchFeatureGrid(int n_, int feature_dim_)
      : n(n_), feature_dim(feature_dim_),
        data(static_cast<size_t>(n_) * n_ * feature_dim_, 0.0) {}

  int patch_count() const { return n * n; }
  std::span<const double> patch(int i, int j) const {
    return {data.data() + (static_cast<size_t>(i) * n + j) * feature_dim,
            static_cast<size_t>(feature_dim)};
  }
  std::span<double> patch(int i, int j) {
    return {data.data() + (static_cast<size_t>(i) * n + j) * feature_dim,
            static_cast<size_t>(feature_dim)};
  }
};

}  // namespace vlaprune

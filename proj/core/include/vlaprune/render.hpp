// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "vlaprune/model.hpp"
#include "vlaprune/static_pruner.hpp"

namespace vlaprune {

// Per-patch render state; when a token sits in several sets the claim order
// is global > dynamic > local, matching the metric attribution.
enum class RetainTag : unsigned char {
  kPruned = 0,
  kGlobal,
  kDynamic,
  kLocal,
  kRetained,  // retained without a stage tag (e.g. unpruned baseline)
};

// Flat colors, one per tag (see README for the exact byte values).
void tag_color(RetainTag tag, unsigned char rgb[3]);

// Rasterizes one view: each grid cell becomes a cell_px x cell_px block of
// the tag's color. Returns the RGB buffer, row-major, 3 bytes per pixel.
std::vector<unsigned char> render_view(const std::vector<RetainTag>& tags, int grid_n,
                                       int cell_px);

// Binary P6 portable pixmap, maxval 255.
void write_ppm(const std::string& path, int width, int height,
               const std::vector<unsigned char>& rgb);

// Per-view tag map for a static pruning result.
std::vector<std::vector<RetainTag>> retain_tags(const TokenLayout& layout,
                                                const StaticPruneResult& result);

// Writes one image per view: <out_dir>/step<NNN>_view<V>.ppm.
std::vector<std::string> render_retention(const TokenLayout& layout,
                                          const StaticPruneResult& result,
                                          const std::string& out_dir, int step, int cell_px = 4);

}  // namespace vlaprune

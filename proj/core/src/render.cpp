// SPDX-License-Identifier: Apache-2.0
#include "vlaprune/render.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace vlaprune {

void tag_color(RetainTag tag, unsigned char rgb[3]) {
  switch (tag) {
    case RetainTag::kPruned: rgb[0] = 40; rgb[1] = 40; rgb[2] = 40; return;
    case RetainTag::kGlobal: rgb[0] = 230; rgb[1] = 159; rgb[2] = 0; return;
    case RetainTag::kDynamic: rgb[0] = 0; rgb[1] = 158; rgb[2] = 115; return;
    case RetainTag::kLocal: rgb[0] = 86; rgb[1] = 180; rgb[2] = 233; return;
    case RetainTag::kRetained: rgb[0] = 240; rgb[1] = 228; rgb[2] = 66; return;
  }
}

std::vector<unsigned char> render_view(const std::vector<RetainTag>& tags, int grid_n,
                                       int cell_px) {
  if (static_cast<int>(tags.size()) != grid_n * grid_n)
    throw std::invalid_argument("tag count must equal grid_n^2");
  if (cell_px <= 0) throw std::invalid_argument("cell_px must be positive");
  const int side = grid_n * cell_px;
  std::vector<unsigned char> rgb(static_cast<size_t>(side) * side * 3);
  for (int i = 0; i < grid_n; ++i) {
    for (int j = 0; j < grid_n; ++j) {
      unsigned char color[3];
      tag_color(tags[static_cast<size_t>(i * grid_n + j)], color);
      for (int pi = 0; pi < cell_px; ++pi) {
        for (int pj = 0; pj < cell_px; ++pj) {
          const size_t px = (static_cast<size_t>(i * cell_px + pi) * side + (j * cell_px + pj)) * 3;
          rgb[px] = color[0];
          rgb[px + 1] = color[1];
          rgb[px + 2] = color[2];
        }
      }
    }
  }
  return rgb;
}

void write_ppm(const std::string& path, int width, int height,
               const std::vector<unsigned char>& rgb) {
  if (rgb.size() != static_cast<size_t>(width) * height * 3)
    throw std::invalid_argument("rgb buffer size mismatch");
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  f << "P6\n" << width << " " << height << "\n255\n";
  f.write(reinterpret_cast<const char*>(rgb.data()), static_cast<std::streamsize>(rgb.size()));
  if (!f) throw std::runtime_error("write failed: " + path);
}

std::vector<std::vector<RetainTag>> retain_tags(const TokenLayout& layout,
                                                const StaticPruneResult& result) {
  std::vector<std::vector<RetainTag>> tags;
  tags.reserve(layout.views.size());
  std::vector<RetainTag> by_token(static_cast<size_t>(layout.seq_len()), RetainTag::kPruned);
  for (int idx : result.v_retain) by_token[static_cast<size_t>(idx)] = RetainTag::kRetained;
  // Claim order: global > dynamic > local.
  for (int idx : result.v_local) by_token[static_cast<size_t>(idx)] = RetainTag::kLocal;
  for (int idx : result.v_dynamic) by_token[static_cast<size_t>(idx)] = RetainTag::kDynamic;
  for (int idx : result.v_global) by_token[static_cast<size_t>(idx)] = RetainTag::kGlobal;
  for (const auto& view : layout.views) {
    std::vector<RetainTag> view_tags;
    view_tags.reserve(static_cast<size_t>(view.end - view.begin));
    for (int idx = view.begin; idx < view.end; ++idx)
      view_tags.push_back(by_token[static_cast<size_t>(idx)]);
    tags.push_back(std::move(view_tags));
  }
  return tags;
}

std::vector<std::string> render_retention(const TokenLayout& layout,
                                          const StaticPruneResult& result,
                                          const std::string& out_dir, int step, int cell_px) {
  std::filesystem::create_directories(out_dir);
  const auto tags = retain_tags(layout, result);
  std::vector<std::string> paths;
  for (size_t v = 0; v < tags.size(); ++v) {
    const int n = static_cast<int>(std::lround(std::sqrt(static_cast<double>(tags[v].size()))));
    char name[64];
    std::snprintf(name, sizeof(name), "step%03d_view%d.ppm", step, static_cast<int>(v));
    const std::string path = out_dir + "/" + name;
    write_ppm(path, n * cell_px, n * cell_px, render_view(tags[v], n, cell_px));
    paths.push_back(path);
  }
  return paths;
}

}  // namespace vlaprune

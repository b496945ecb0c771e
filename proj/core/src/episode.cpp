// SPDX-License-Identifier: Apache-2.0
#include "vlaprune/episode.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include "vlaprune/rng.hpp"
#include "vlaprune/static_pruner.hpp"

namespace vlaprune {

namespace {

// Stream tags for deriving independent substreams from the scene seed.
enum StreamTag : uint64_t {
  kBgFeature = 0xb1,
  kTaskFeature = 0xb2,
  kArmFeature = 0xb3,
  kTextFeature = 0xb4,
  kActionFeature = 0xb5,
  kSalienceBase = 0xb6,
  kSalienceJitter = 0xb7,
  kNoise = 0xb8,
  kReadout = 0xb9,
};

std::vector<double> unit_vector(Rng& rng, int dim) {
  std::vector<double> v(static_cast<size_t>(dim));
  double norm_sq = 0.0;
  for (auto& x : v) {
    x = rng.normal();
    norm_sq += x * x;
  }
  const double inv = 1.0 / std::sqrt(norm_sq);
  for (auto& x : v) x *= inv;
  return v;
}

uint64_t cell_key(int view, int cell) {
  return (static_cast<uint64_t>(view) << 32) | static_cast<uint64_t>(cell);
}

double salience_base_at(const SceneSpec& scene, int view, int cell) {
  Rng rng(Rng::mix(Rng::mix(scene.seed, kSalienceBase), cell_key(view, cell)));
  return rng.uniform();
}

double jitter_at(const SceneSpec& scene, int view, int cell, int step) {
  Rng rng(Rng::mix(Rng::mix(Rng::mix(scene.seed, kSalienceJitter), cell_key(view, cell)),
                   static_cast<uint64_t>(step)));
  return rng.uniform(-1.0, 1.0);
}

// Fixed 7 x feature_dim linear readout drawn from the scene seed.
std::vector<double> readout_matrix(const SceneSpec& scene) {
  Rng rng(Rng::mix(scene.seed, kReadout));
  const double scale = 1.0 / std::sqrt(static_cast<double>(scene.feature_dim));
  std::vector<double> w(static_cast<size_t>(7 * scene.feature_dim));
  for (auto& x : w) x = rng.normal() * scale;
  return w;
}

ActionDelta apply_readout(const std::vector<double>& w, const std::vector<double>& centroid) {
  const int fd = static_cast<int>(centroid.size());
  double out[7];
  for (int r = 0; r < 7; ++r) {
    double acc = 0.0;
    for (int d = 0; d < fd; ++d) acc += w[static_cast<size_t>(r * fd + d)] * centroid[static_cast<size_t>(d)];
    out[r] = acc;
  }
  ActionDelta a;
  a.dx = out[0];
  a.dy = out[1];
  a.dz = out[2];
  a.d_alpha = out[3];
  a.d_beta = out[4];
  a.d_gamma = out[5];
  a.gripper = out[6];
  return a;
}

double delta_distance(const ActionDelta& a, const ActionDelta& b) {
  const double d[7] = {a.dx - b.dx,           a.dy - b.dy,         a.dz - b.dz,
                       a.d_alpha - b.d_alpha, a.d_beta - b.d_beta, a.d_gamma - b.d_gamma,
                       a.gripper - b.gripper};
  double s = 0.0;
  for (double x : d) s += x * x;
  return std::sqrt(s);
}

// Square footprint of edge `size` centered near (ci, cj), clipped to the grid.
std::set<int> footprint_cells(int n, double ci, double cj, int size) {
  std::set<int> cells;
  const int base_i = static_cast<int>(std::lround(ci)) - size / 2;
  const int base_j = static_cast<int>(std::lround(cj)) - size / 2;
  for (int di = 0; di < size; ++di) {
    for (int dj = 0; dj < size; ++dj) {
      const int i = std::clamp(base_i + di, 0, n - 1);
      const int j = std::clamp(base_j + dj, 0, n - 1);
      cells.insert(i * n + j);
    }
  }
  return cells;
}

void add_block(std::set<int>& cells, int n, int ci, int cj, int half) {
  for (int i = std::max(0, ci - half); i <= std::min(n - 1, ci + half); ++i) {
    for (int j = std::max(0, cj - half); j <= std::min(n - 1, cj + half); ++j) {
      cells.insert(i * n + j);
    }
  }
}

}  // namespace

const char* phase_name(PhaseKind k) {
  switch (k) {
    case PhaseKind::kTargeting: return "targeting";
    case PhaseKind::kApproaching: return "approaching";
    case PhaseKind::kTransferring: return "transferring";
    case PhaseKind::kPlacing: return "placing";
  }
  return "?";
}

int TrajectorySpec::total_steps() const {
  int n = 0;
  for (const auto& p : phases) n += p.duration;
  return n;
}

void TrajectorySpec::validate() const {
  if (phases.empty()) throw std::invalid_argument("trajectory needs at least one phase");
  for (const auto& p : phases) {
    if (p.duration <= 0) throw std::invalid_argument("phase duration must be positive");
    if (p.speed < 0.0 || p.rot_speed < 0.0)
      throw std::invalid_argument("phase speeds must be non-negative");
  }
}

TrajectorySpec TrajectorySpec::scripted_default() {
  TrajectorySpec t;
  t.phases = {
      {PhaseKind::kTargeting, 4, 0.080, 0.020, 0.0},
      {PhaseKind::kApproaching, 17, 0.015, 0.010, -1.0},
      {PhaseKind::kTransferring, 4, 0.090, 0.020, 1.0},
      {PhaseKind::kPlacing, 25, 0.012, 0.008, -1.0},
  };
  return t;
}

void SceneSpec::validate() const {
  if (grid_n <= 1 || feature_dim <= 0 || num_views <= 0)
    throw std::invalid_argument("scene dimensions must be positive");
  if (noise_scale < 0.0) throw std::invalid_argument("noise_scale must be non-negative");
  if (static_cast<int>(task_patches.size()) != num_views)
    throw std::invalid_argument("task_patches must list one set per view");
  for (const auto& view_cells : task_patches) {
    for (int c : view_cells) {
      if (c < 0 || c >= grid_n * grid_n) throw std::invalid_argument("task patch out of grid");
    }
  }
}

std::vector<int> SceneSpec::background_patches(int view) const {
  std::set<int> task(task_patches[static_cast<size_t>(view)].begin(),
                     task_patches[static_cast<size_t>(view)].end());
  std::vector<int> bg;
  for (int c = 0; c < grid_n * grid_n; ++c) {
    if (!task.count(c)) bg.push_back(c);
  }
  return bg;
}

SceneSpec SceneSpec::standard(int n, int feature_dim, uint64_t seed) {
  SceneSpec s;
  s.grid_n = n;
  s.feature_dim = feature_dim;
  s.seed = seed;

  const auto scale = [n](int coord) { return coord * n / 17; };
  const int half = std::max(1, (2 * n) / 17);
  std::set<int> third;
  add_block(third, n, scale(8), scale(12), half);   // object
  add_block(third, n, scale(12), scale(4), half);   // goal marker
  add_block(third, n, scale(3), scale(13), half);   // instruction board
  add_block(third, n, scale(13), scale(12), half);  // distractor
  add_block(third, n, scale(6), scale(5), half);    // distractor

  std::set<int> wrist;
  add_block(wrist, n, scale(8), scale(8), half + 1);  // manipulated region
  add_block(wrist, n, scale(12), scale(4), half);     // goal vicinity
  add_block(wrist, n, scale(4), scale(12), half);     // distractor
  add_block(wrist, n, scale(13), scale(9), half);     // distractor

  s.task_patches = {std::vector<int>(third.begin(), third.end()),
                    std::vector<int>(wrist.begin(), wrist.end())};
  s.validate();
  return s;
}

SceneSpec SceneSpec::small_preset(uint64_t seed) {
  SceneSpec s = standard(8, 64, seed);
  s.footprint_third = 3;
  s.footprint_wrist = 3;
  return s;
}

Episode generate_episode(const SceneSpec& scene, const TrajectorySpec& traj, int steps) {
  scene.validate();
  traj.validate();
  if (steps <= 0) throw std::invalid_argument("steps must be positive");
  if (scene.num_views != 2) throw std::invalid_argument("generator expects two views");

  Episode ep;
  ep.scene = scene;
  ep.traj = traj;
  ep.steps.reserve(static_cast<size_t>(steps));

  const int n = scene.grid_n;
  const int cells = n * n;

  // Base (clean) features per view/cell, and the per-view arm feature.
  std::vector<std::vector<std::vector<double>>> base(2);
  std::vector<std::vector<double>> arm(2);
  for (int v = 0; v < 2; ++v) {
    std::set<int> task_set(scene.task_patches[static_cast<size_t>(v)].begin(),
                           scene.task_patches[static_cast<size_t>(v)].end());
    base[static_cast<size_t>(v)].resize(static_cast<size_t>(cells));
    for (int c = 0; c < cells; ++c) {
      Rng rng(Rng::mix(Rng::mix(scene.seed, task_set.count(c) ? kTaskFeature : kBgFeature),
                       cell_key(v, c)));
      base[static_cast<size_t>(v)][static_cast<size_t>(c)] = unit_vector(rng, scene.feature_dim);
    }
    Rng rng(Rng::mix(Rng::mix(scene.seed, kArmFeature), static_cast<uint64_t>(v)));
    arm[static_cast<size_t>(v)] = unit_vector(rng, scene.feature_dim);
  }
  const std::vector<double> readout = readout_matrix(scene);

  // Expand the phase schedule to per-step entries; the last phase absorbs any
  // extra steps.
  std::vector<const TrajectoryPhase*> schedule;
  for (const auto& p : traj.phases) {
    for (int i = 0; i < p.duration; ++i) schedule.push_back(&p);
  }
  while (static_cast<int>(schedule.size()) < steps) schedule.push_back(&traj.phases.back());
  schedule.resize(static_cast<size_t>(steps));

  const double ox = traj.object.i, oy = traj.object.j;
  const double sx = traj.start.i, sy = traj.start.j;
  const double gx = traj.goal.i, gy = traj.goal.j;

  double cum_dist = 0.0;
  const TrajectoryPhase* cur_phase = nullptr;
  int phase_step = 0;
  std::vector<PatchFeatureGrid> prev_frames;

  for (int t = 0; t < steps; ++t) {
    const TrajectoryPhase& ph = *schedule[static_cast<size_t>(t)];
    if (cur_phase != &ph) {
      cur_phase = &ph;
      phase_step = 0;
    } else {
      ++phase_step;
    }
    const double progress = static_cast<double>(phase_step + 1) / ph.duration;
    const double frozen = (ph.speed == 0.0) ? 0.0 : progress;  // zero speed holds position

    // Waypoints: start -> 80% toward object (targeting), -> object
    // (approaching), -> goal (transferring), hold at goal (placing).
    double ai = sx, aj = sy;
    switch (ph.kind) {
      case PhaseKind::kTargeting:
        ai = sx + (ox - sx) * 0.8 * frozen;
        aj = sy + (oy - sy) * 0.8 * frozen;
        break;
      case PhaseKind::kApproaching:
        ai = sx + (ox - sx) * (0.8 + 0.2 * frozen);
        aj = sy + (oy - sy) * (0.8 + 0.2 * frozen);
        break;
      case PhaseKind::kTransferring:
        ai = ox + (gx - ox) * frozen;
        aj = oy + (gy - oy) * frozen;
        break;
      case PhaseKind::kPlacing:
        ai = gx;
        aj = gy;
        break;
    }
    cum_dist += ph.speed;

    // Executed action: unit direction scaled by the phase speed, so the
    // emitted delta norm matches the speed profile exactly.
    ActionDelta act;
    {
      double hx = ox - sx, hy = oy - sy;
      if (ph.kind == PhaseKind::kTransferring || ph.kind == PhaseKind::kPlacing) {
        hx = gx - ox;
        hy = gy - oy;
      }
      double ux = hx, uy = hy, uz = 0.0;
      const double hn = std::sqrt(ux * ux + uy * uy);
      if (hn > 0) {
        ux /= hn;
        uy /= hn;
      } else {
        ux = 1.0;
        uy = 0.0;
      }
      if (ph.dz_sign != 0.0) {
        // 0.8^2 + 0.6^2 == 1 keeps the direction an exact unit vector.
        uz = ph.dz_sign * 0.6;
        ux *= 0.8;
        uy *= 0.8;
      }
      act.dx = ux * ph.speed;
      act.dy = uy * ph.speed;
      act.dz = uz * ph.speed;
      act.d_alpha = 0.6 * ph.rot_speed;
      act.d_beta = 0.8 * ph.rot_speed;
      act.d_gamma = 0.0;
      act.gripper = (ph.kind == PhaseKind::kTransferring) ? 1.0 : 0.0;
    }

    // Coverage per view: third-person follows the arm (with a small
    // manipulation wobble), the wrist footprint sweeps the gripper vicinity
    // on a Lissajous path. Both are driven by the traveled distance, so a
    // frozen trajectory freezes both views; the incommensurate frequencies
    // avoid the sweep aliasing back onto itself at the reference offsets.
    std::vector<std::set<int>> cover(2);
    {
      const double wob_i = ai + 1.5 * std::sin(13.0 * cum_dist);
      const double wob_j = aj + 1.5 * std::cos(9.7 * cum_dist);
      cover[0] = footprint_cells(n, wob_i, wob_j, scene.footprint_third);
      const double theta = 70.0 * cum_dist;
      const double wc = (n - 1) / 2.0;
      cover[1] = footprint_cells(n, wc + 3.5 * std::sin(theta), wc + 3.5 * std::cos(0.61 * theta),
                                 scene.footprint_wrist);
    }

    EpisodeStep step;
    step.phase = ph.kind;
    step.action = act;
    step.views.reserve(2);
    for (int v = 0; v < 2; ++v) {
      PatchFeatureGrid grid(n, scene.feature_dim);
      for (int c = 0; c < cells; ++c) {
        std::span<double> dst = grid.patch(c / n, c % n);
        const std::vector<double>& clean = cover[static_cast<size_t>(v)].count(c)
                                               ? arm[static_cast<size_t>(v)]
                                               : base[static_cast<size_t>(v)][static_cast<size_t>(c)];
        Rng noise(Rng::mix(Rng::mix(Rng::mix(scene.seed, kNoise), cell_key(v, c)),
                           static_cast<uint64_t>(t)));
        for (int d = 0; d < scene.feature_dim; ++d) {
          dst[d] = clean[static_cast<size_t>(d)] + scene.noise_scale * noise.uniform(-1.0, 1.0);
        }
      }
      step.views.push_back(std::move(grid));
    }

    // Ground truth importance: task patches plus patches whose similarity to
    // the previous frame falls below tau.
    std::set<int> important;
    for (int v = 0; v < 2; ++v) {
      const int base_tok = v * cells;
      for (int c : scene.task_patches[static_cast<size_t>(v)]) important.insert(base_tok + c);
      if (!prev_frames.empty()) {
        const Mat sim = patch_similarity(prev_frames[static_cast<size_t>(v)],
                                         step.views[static_cast<size_t>(v)]);
        for (int c = 0; c < cells; ++c) {
          if (sim.v[static_cast<size_t>(c)] < scene.sim_tau) important.insert(base_tok + c);
        }
      } else {
        for (int c : cover[static_cast<size_t>(v)]) important.insert(base_tok + c);
      }
    }
    step.truth.important.assign(important.begin(), important.end());

    // Target: clean readout over the important set (no noise), so pruning
    // only unimportant tokens cannot move the prediction at zero noise.
    {
      std::vector<double> centroid(static_cast<size_t>(scene.feature_dim), 0.0);
      int count = 0;
      for (int tok : step.truth.important) {
        const int v = tok / cells;
        const int c = tok % cells;
        const std::vector<double>& clean = cover[static_cast<size_t>(v)].count(c)
                                               ? arm[static_cast<size_t>(v)]
                                               : base[static_cast<size_t>(v)][static_cast<size_t>(c)];
        for (int d = 0; d < scene.feature_dim; ++d) centroid[static_cast<size_t>(d)] += clean[static_cast<size_t>(d)];
        ++count;
      }
      if (count > 0) {
        for (auto& x : centroid) x /= count;
      }
      step.truth.target = apply_readout(readout, centroid);
    }

    prev_frames = step.views;
    ep.steps.push_back(std::move(step));
  }
  return ep;
}

TokenLayout scene_layout(const SceneSpec& scene, int text_len, int action_len) {
  return TokenLayout::make(scene.num_views, scene.grid_n * scene.grid_n, text_len, action_len);
}

AttentionBiasSpec attention_bias_for(const SceneSpec& scene, const TokenLayout& layout, int step) {
  // Every task key gets at least kBiasFloor * margin so that a large margin
  // lifts the whole task set above the background.
  constexpr double kBiasFloor = 0.02;
  AttentionBiasSpec bias;
  bias.key_bias.assign(static_cast<size_t>(layout.seq_len()), 0.0);
  if (scene.bias_margin == 0.0) return bias;
  for (int v = 0; v < scene.num_views; ++v) {
    const int base_tok = layout.views[static_cast<size_t>(v)].begin;
    for (int c : scene.task_patches[static_cast<size_t>(v)]) {
      const double s = std::clamp(scene.salience_base * salience_base_at(scene, v, c) +
                                      scene.salience_jitter * jitter_at(scene, v, c, step),
                                  0.0, 1.0);
      bias.key_bias[static_cast<size_t>(base_tok + c)] =
          scene.bias_margin * (kBiasFloor + std::pow(s, scene.bias_power));
    }
  }
  return bias;
}

Mat embeddings_for(const SceneSpec& scene, const Episode& episode, int step,
                   const TokenLayout& layout) {
  if (step < 0 || step >= static_cast<int>(episode.steps.size()))
    throw std::out_of_range("step out of range");
  const EpisodeStep& es = episode.steps[static_cast<size_t>(step)];
  Mat emb(layout.seq_len(), scene.feature_dim);
  const int n = scene.grid_n;
  for (int v = 0; v < scene.num_views; ++v) {
    const auto& range = layout.views[static_cast<size_t>(v)];
    const PatchFeatureGrid& grid = es.views[static_cast<size_t>(v)];
    for (int c = 0; c < n * n; ++c) {
      const auto src = grid.patch(c / n, c % n);
      std::copy(src.begin(), src.end(), emb.row(range.begin + c));
    }
  }
  for (int i = layout.text.first; i < layout.text.second; ++i) {
    Rng rng(Rng::mix(Rng::mix(scene.seed, kTextFeature), static_cast<uint64_t>(i)));
    const auto vec = unit_vector(rng, scene.feature_dim);
    std::copy(vec.begin(), vec.end(), emb.row(i));
  }
  for (int i = layout.action.first; i < layout.action.second; ++i) {
    Rng rng(Rng::mix(Rng::mix(scene.seed, kActionFeature), static_cast<uint64_t>(i)));
    const auto vec = unit_vector(rng, scene.feature_dim);
    std::copy(vec.begin(), vec.end(), emb.row(i));
  }
  return emb;
}

std::pair<ActionDelta, double> action_oracle(const SceneSpec& scene, const TokenLayout& layout,
                                             const std::vector<PatchFeatureGrid>& grids,
                                             const GroundTruth& truth,
                                             const std::vector<int>& retained) {
  std::set<int> retained_set(retained.begin(), retained.end());
  std::vector<double> centroid(static_cast<size_t>(scene.feature_dim), 0.0);
  int count = 0;
  for (int tok : truth.important) {
    if (!retained_set.count(tok)) continue;
    const int v = layout.view_of(tok);
    if (v < 0) continue;
    const int c = tok - layout.views[static_cast<size_t>(v)].begin;
    const auto feat = grids[static_cast<size_t>(v)].patch(c / scene.grid_n, c % scene.grid_n);
    for (int d = 0; d < scene.feature_dim; ++d) centroid[static_cast<size_t>(d)] += feat[d];
    ++count;
  }
  if (count > 0) {
    for (auto& x : centroid) x /= count;
  }
  const ActionDelta pred = apply_readout(readout_matrix(scene), centroid);
  return {pred, delta_distance(pred, truth.target)};
}

}  // namespace vlaprune

// SPDX-License-Identifier: Apache-2.0
#include "vlaprune/dump.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace vlaprune {

namespace {

constexpr char kMagic[8] = {'V', 'L', 'P', 'R', 'D', 'U', 'M', 'P'};
constexpr uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
  T v;
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw std::runtime_error("episode dump truncated");
  return v;
}

void put_ints(std::ostream& os, const std::vector<int>& v) {
  put<uint32_t>(os, static_cast<uint32_t>(v.size()));
  for (int x : v) put<int32_t>(os, static_cast<int32_t>(x));
}

std::vector<int> get_ints(std::istream& is) {
  const uint32_t n = get<uint32_t>(is);
  std::vector<int> v(n);
  for (auto& x : v) x = get<int32_t>(is);
  return v;
}

void put_delta(std::ostream& os, const ActionDelta& d) {
  put(os, d.dx);
  put(os, d.dy);
  put(os, d.dz);
  put(os, d.d_alpha);
  put(os, d.d_beta);
  put(os, d.d_gamma);
  put(os, d.gripper);
}

ActionDelta get_delta(std::istream& is) {
  ActionDelta d;
  d.dx = get<double>(is);
  d.dy = get<double>(is);
  d.dz = get<double>(is);
  d.d_alpha = get<double>(is);
  d.d_beta = get<double>(is);
  d.d_gamma = get<double>(is);
  d.gripper = get<double>(is);
  return d;
}

}  // namespace

void save_episode(const std::string& path, const Episode& episode) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  f.write(kMagic, sizeof(kMagic));
  put(f, kVersion);

  const SceneSpec& s = episode.scene;
  put<int32_t>(f, s.grid_n);
  put<int32_t>(f, s.num_views);
  put<int32_t>(f, s.feature_dim);
  put(f, s.noise_scale);
  put(f, s.seed);
  put(f, s.bias_margin);
  put(f, s.bias_power);
  put(f, s.salience_base);
  put(f, s.salience_jitter);
  put(f, s.sim_tau);
  put<int32_t>(f, s.footprint_third);
  put<int32_t>(f, s.footprint_wrist);
  for (const auto& cells : s.task_patches) put_ints(f, cells);

  const TrajectorySpec& t = episode.traj;
  put<int32_t>(f, t.start.i);
  put<int32_t>(f, t.start.j);
  put<int32_t>(f, t.object.i);
  put<int32_t>(f, t.object.j);
  put<int32_t>(f, t.goal.i);
  put<int32_t>(f, t.goal.j);
  put<uint32_t>(f, static_cast<uint32_t>(t.phases.size()));
  for (const auto& p : t.phases) {
    put<int32_t>(f, static_cast<int32_t>(p.kind));
    put<int32_t>(f, p.duration);
    put(f, p.speed);
    put(f, p.rot_speed);
    put(f, p.dz_sign);
  }

  put<uint32_t>(f, static_cast<uint32_t>(episode.steps.size()));
  for (const auto& st : episode.steps) {
    put<int32_t>(f, static_cast<int32_t>(st.phase));
    put_delta(f, st.action);
    put_ints(f, st.truth.important);
    put_delta(f, st.truth.target);
    for (const auto& grid : st.views) {
      for (double x : grid.data) put(f, x);
    }
  }
  if (!f) throw std::runtime_error("write failed: " + path);
}

Episode load_episode(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for reading: " + path);
  char magic[8];
  f.read(magic, sizeof(magic));
  if (!f || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("not an episode dump: " + path);
  const uint32_t version = get<uint32_t>(f);
  if (version != kVersion) throw std::runtime_error("unsupported episode dump version");

  Episode ep;
  SceneSpec& s = ep.scene;
  s.grid_n = get<int32_t>(f);
  s.num_views = get<int32_t>(f);
  s.feature_dim = get<int32_t>(f);
  s.noise_scale = get<double>(f);
  s.seed = get<uint64_t>(f);
  s.bias_margin = get<double>(f);
  s.bias_power = get<double>(f);
  s.salience_base = get<double>(f);
  s.salience_jitter = get<double>(f);
  s.sim_tau = get<double>(f);
  s.footprint_third = get<int32_t>(f);
  s.footprint_wrist = get<int32_t>(f);
  s.task_patches.clear();
  for (int v = 0; v < s.num_views; ++v) s.task_patches.push_back(get_ints(f));
  s.validate();

  TrajectorySpec& t = ep.traj;
  t.start.i = get<int32_t>(f);
  t.start.j = get<int32_t>(f);
  t.object.i = get<int32_t>(f);
  t.object.j = get<int32_t>(f);
  t.goal.i = get<int32_t>(f);
  t.goal.j = get<int32_t>(f);
  const uint32_t num_phases = get<uint32_t>(f);
  t.phases.resize(num_phases);
  for (auto& p : t.phases) {
    p.kind = static_cast<PhaseKind>(get<int32_t>(f));
    p.duration = get<int32_t>(f);
    p.speed = get<double>(f);
    p.rot_speed = get<double>(f);
    p.dz_sign = get<double>(f);
  }
  t.validate();

  const uint32_t num_steps = get<uint32_t>(f);
  ep.steps.resize(num_steps);
  for (auto& st : ep.steps) {
    st.phase = static_cast<PhaseKind>(get<int32_t>(f));
    st.action = get_delta(f);
    st.truth.important = get_ints(f);
    st.truth.target = get_delta(f);
    st.views.clear();
    for (int v = 0; v < s.num_views; ++v) {
      PatchFeatureGrid grid(s.grid_n, s.feature_dim);
      for (auto& x : grid.data) x = get<double>(f);
      st.views.push_back(std::move(grid));
    }
  }
  return ep;
}

}  // namespace vlaprune

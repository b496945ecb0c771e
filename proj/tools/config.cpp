// SPDX-License-Identifier: Apache-2.0
#include "config.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace vlaprune::cli {

using nlohmann::json;

namespace {

json load_json_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("config file not found: " + path);
  json j;
  f >> j;
  return j;
}

void parse_model(const json& j, ModelConfig& m) {
  m.num_layers = j.value("layers", m.num_layers);
  m.hidden_dim = j.value("hidden", m.hidden_dim);
  m.num_heads = j.value("heads", m.num_heads);
  m.ffn_dim = j.value("ffn", m.ffn_dim);
  m.seed = j.value("seed", m.seed);
}

void parse_scene(const json& j, SceneSpec& s, std::string& preset) {
  preset = j.value("preset", preset);
  if (preset == "small") s = SceneSpec::small_preset(s.seed);
  else if (preset == "standard") s = SceneSpec::standard(s.grid_n, s.feature_dim, s.seed);
  else throw std::runtime_error("unknown scene preset: " + preset);
  if (j.contains("grid_n") || j.contains("feature_dim")) {
    s = SceneSpec::standard(j.value("grid_n", s.grid_n), j.value("feature_dim", s.feature_dim),
                            s.seed);
  }
  s.seed = j.value("seed", s.seed);
  s.noise_scale = j.value("noise_scale", s.noise_scale);
  s.bias_margin = j.value("bias_margin", s.bias_margin);
  s.bias_power = j.value("bias_power", s.bias_power);
  s.salience_base = j.value("salience_base", s.salience_base);
  s.salience_jitter = j.value("salience_jitter", s.salience_jitter);
  s.sim_tau = j.value("sim_tau", s.sim_tau);
  s.footprint_third = j.value("footprint_third", s.footprint_third);
  s.footprint_wrist = j.value("footprint_wrist", s.footprint_wrist);
  if (j.contains("task_patches")) {
    s.task_patches = j.at("task_patches").get<std::vector<std::vector<int>>>();
  }
}

PhaseKind phase_from_name(const std::string& name) {
  if (name == "targeting") return PhaseKind::kTargeting;
  if (name == "approaching") return PhaseKind::kApproaching;
  if (name == "transferring") return PhaseKind::kTransferring;
  if (name == "placing") return PhaseKind::kPlacing;
  throw std::runtime_error("unknown phase kind: " + name);
}

void parse_trajectory(const json& j, TrajectorySpec& t) {
  if (j.contains("phases")) {
    t.phases.clear();
    for (const auto& p : j.at("phases")) {
      TrajectoryPhase ph;
      ph.kind = phase_from_name(p.at("kind").get<std::string>());
      ph.duration = p.at("duration").get<int>();
      ph.speed = p.value("speed", 0.0);
      ph.rot_speed = p.value("rot_speed", 0.0);
      ph.dz_sign = p.value("dz_sign", 0.0);
      t.phases.push_back(ph);
    }
  }
  auto grid_pos = [](const json& arr) {
    return GridPos{arr.at(0).get<int>(), arr.at(1).get<int>()};
  };
  if (j.contains("start")) t.start = grid_pos(j.at("start"));
  if (j.contains("object")) t.object = grid_pos(j.at("object"));
  if (j.contains("goal")) t.goal = grid_pos(j.at("goal"));
}

void parse_pruner(const json& j, PrunerConfig& p) {
  p.alpha = j.value("alpha", p.alpha);
  p.tau = j.value("tau", p.tau);
  p.k_d = j.value("k_d", p.k_d);
  p.sigmoid_k = j.value("sigmoid_k", p.sigmoid_k);
  p.epsilon = j.value("epsilon", p.epsilon);
  p.ema_beta = j.value("beta", p.ema_beta);
  p.retention = j.value("retention", p.retention);
  p.frame_speed_scale = j.value("frame_speed_scale", p.frame_speed_scale);
  p.hit_rate_k = j.value("hit_rate_k", p.hit_rate_k);
  p.random_seed = j.value("random_seed", p.random_seed);
  p.enable_static = j.value("enable_static", p.enable_static);
  p.enable_dynamic = j.value("enable_dynamic", p.enable_dynamic);
  p.enable_controller = j.value("enable_controller", p.enable_controller);
  if (j.contains("offset_form")) {
    const std::string form = j.at("offset_form").get<std::string>();
    if (form == "prose") p.offset_form = FrameOffsetForm::kProse;
    else if (form == "algorithm1") p.offset_form = FrameOffsetForm::kAlgorithmOne;
    else throw std::runtime_error("offset_form must be 'prose' or 'algorithm1'");
  }
  if (j.contains("direction")) {
    const std::string dir = j.at("direction").get<std::string>();
    if (dir == "text_to_visual") p.direction = ScoreDirection::kTextQueryToVisualKey;
    else if (dir == "visual_to_text") p.direction = ScoreDirection::kVisualQueryToTextKey;
    else throw std::runtime_error("direction must be 'text_to_visual' or 'visual_to_text'");
  }
  if (j.contains("aggregation")) {
    const std::string agg = j.at("aggregation").get<std::string>();
    if (agg == "mean") p.aggregation = GlobalAggregation::kMeanOverLayers;
    else if (agg == "last") p.aggregation = GlobalAggregation::kLastLayerOnly;
    else throw std::runtime_error("aggregation must be 'mean' or 'last'");
  }
  p.controller.v_t_th = j.value("v_t_th", p.controller.v_t_th);
  p.controller.v_r_th = j.value("v_r_th", p.controller.v_r_th);
  p.controller.v_z_th = j.value("v_z_th", p.controller.v_z_th);
  if (j.contains("strategy")) p.strategy = strategy_from_name(j.at("strategy").get<std::string>());
}

}  // namespace

void RunSetup::validate() const {
  model.validate();
  scene.validate();
  trajectory.validate();
  if (scene.feature_dim != model.hidden_dim)
    throw std::runtime_error("scene feature_dim must equal model hidden dim");
  if (episodes <= 0 || workers <= 0 || timing_reps <= 0)
    throw std::runtime_error("episodes, workers and timing_reps must be positive");
  if (text_len <= 0 || action_len <= 0)
    throw std::runtime_error("text_len and action_len must be positive");
  if (pruner.alpha <= 0.0 || pruner.alpha > 1.0)
    throw std::runtime_error("alpha must lie in (0, 1]");
  if (pruner.tau < -1.0 || pruner.tau > 1.0) throw std::runtime_error("tau must lie in [-1, 1]");
  if (pruner.k_d < 0) throw std::runtime_error("k_d must be non-negative");
  for (const auto& s : strategies) strategy_from_name(s);  // throws on unknown
  pruner.schedule_for(model.num_layers);                   // validates schedule params
}

RunSetup load_setup(const std::string& config_path) {
  RunSetup setup;
  if (config_path.empty()) return setup;
  const json j = load_json_file(config_path);

  if (j.contains("model")) parse_model(j.at("model"), setup.model);
  if (j.contains("scene_file"))
    parse_scene(load_json_file(j.at("scene_file").get<std::string>()), setup.scene,
                setup.scene_preset);
  if (j.contains("scene")) parse_scene(j.at("scene"), setup.scene, setup.scene_preset);
  if (j.contains("trajectory_file"))
    parse_trajectory(load_json_file(j.at("trajectory_file").get<std::string>()), setup.trajectory);
  if (j.contains("trajectory")) parse_trajectory(j.at("trajectory"), setup.trajectory);
  if (j.contains("pruner")) parse_pruner(j.at("pruner"), setup.pruner);

  if (j.contains("run")) {
    const json& r = j.at("run");
    setup.episodes = r.value("episodes", setup.episodes);
    setup.seed_base = r.value("seed_base", setup.seed_base);
    setup.steps = r.value("steps", setup.steps);
    setup.text_len = r.value("text_len", setup.text_len);
    setup.action_len = r.value("action_len", setup.action_len);
    setup.workers = r.value("workers", setup.workers);
    setup.out_dir = r.value("out_dir", setup.out_dir);
    setup.baseline_episodes = r.value("baseline_episodes", setup.baseline_episodes);
    setup.timing_reps = r.value("timing_reps", setup.timing_reps);
    if (r.contains("strategies"))
      setup.strategies = r.at("strategies").get<std::vector<std::string>>();
  }
  return setup;
}

void apply_alpha_preset(RunSetup& setup, const std::string& preset, const std::string& suite) {
  double alpha = 0.0;
  if (preset == "paper-main") {
    if (suite == "spatial") alpha = 1.0;
    else if (suite == "goal") alpha = 0.8;
    else if (suite == "object") alpha = 0.6;
    else if (suite == "long") alpha = 0.6;
  } else if (preset == "paper-appendix") {
    if (suite == "long") alpha = 1.0;
    else if (suite == "goal") alpha = 0.8;
    else if (suite == "object") alpha = 0.6;
    else if (suite == "spatial") alpha = 0.6;
  } else {
    throw std::runtime_error("unknown preset: " + preset +
                             " (expected paper-main or paper-appendix)");
  }
  if (alpha == 0.0)
    throw std::runtime_error("unknown suite: " + suite +
                             " (expected spatial, object, goal or long)");
  setup.pruner.alpha = alpha;
}

std::string resolve_out_dir(const std::string& flag_value, const std::string& verb) {
  std::string dir = flag_value;
  if (dir.empty()) {
    if (const char* env = std::getenv("VLAPRUNE_OUT")) dir = std::string(env) + "/" + verb;
    else dir = "vlaprune_out/" + verb;
  }
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace vlaprune::cli

// SPDX-License-Identifier: Apache-2.0
#include "report.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <future>
#include <stdexcept>

#include "json.hpp"

namespace vlaprune::cli {

using nlohmann::json;
using clock_type = std::chrono::steady_clock;

std::vector<EpisodeRun> run_strategy(const RunSetup& setup, const Model& model,
                                     Strategy strategy, int episodes) {
  const TokenLayout layout = setup.layout();
  PrunerConfig cfg = setup.pruner;
  cfg.strategy = strategy;
  const int steps = setup.steps > 0 ? setup.steps : setup.trajectory.total_steps();

  std::vector<EpisodeRun> out(static_cast<size_t>(episodes));
  const int workers = std::max(1, std::min(setup.workers, episodes));
  std::vector<std::future<void>> tasks;
  for (int w = 0; w < workers; ++w) {
    tasks.push_back(std::async(std::launch::async, [&, w]() {
      for (int e = w; e < episodes; e += workers) {
        SceneSpec scene = setup.scene;
        scene.seed = setup.seed_base + static_cast<uint64_t>(e);
        const Episode ep = generate_episode(scene, setup.trajectory, steps);
        EpisodeRun run;
        run.strategy = strategy_name(strategy);
        run.episode = e;
        run.seed = scene.seed;
        run.rows = run_episode(model, layout, ep, cfg);
        out[static_cast<size_t>(e)] = std::move(run);
      }
    }));
  }
  for (auto& t : tasks) t.get();
  return out;
}

StrategySummary summarize(const std::string& strategy, const std::vector<EpisodeRun>& runs) {
  StrategySummary s;
  s.strategy = strategy;
  s.episodes = static_cast<int>(runs.size());
  s.retained_fraction_histogram.assign(10, 0);
  int static_steps = 0;
  for (const auto& run : runs) {
    for (const auto& r : run.rows) {
      ++s.steps;
      s.mean_hit_rate += r.hit_rate_12;
      s.mean_recall += r.important_recall;
      s.mean_action_error += r.action_error;
      s.mean_action_error_unpruned += r.action_error_unpruned;
      s.mean_flops_reduction += r.flops_reduction;
      if (r.static_applied) {
        s.mean_static_pruned += r.static_pruned_fraction;
        ++static_steps;
        if (r.count_global + r.count_dynamic + r.count_local != r.retained_visual)
          ++s.invariant_violations;
      }
      const double retained_frac =
          static_cast<double>(r.retained_visual) / static_cast<double>(r.visual_total);
      const int bin = std::min(9, static_cast<int>(retained_frac * 10.0));
      ++s.retained_fraction_histogram[static_cast<size_t>(bin)];
      if (r.hit_rate_12 < 0.0 || r.hit_rate_12 > 1.0) ++s.invariant_violations;
      if (r.retained_visual + r.pruned_visual != r.visual_total) ++s.invariant_violations;
    }
  }
  if (s.steps > 0) {
    s.mean_hit_rate /= s.steps;
    s.mean_recall /= s.steps;
    s.mean_action_error /= s.steps;
    s.mean_action_error_unpruned /= s.steps;
    s.mean_flops_reduction /= s.steps;
  }
  if (static_steps > 0) s.mean_static_pruned /= static_steps;
  return s;
}

void measure_timing(const RunSetup& setup, const Model& model, Strategy strategy,
                    StrategySummary& summary) {
  const TokenLayout layout = setup.layout();
  PrunerConfig cfg = setup.pruner;
  cfg.strategy = strategy;
  const int steps = setup.steps > 0 ? setup.steps : setup.trajectory.total_steps();
  SceneSpec scene = setup.scene;
  scene.seed = setup.seed_base;
  const Episode ep = generate_episode(scene, setup.trajectory, steps);

  // Drive the pipeline to a representative mid-episode step and keep that
  // step's realized retention schedule.
  GenerationPipeline pipe(model, layout, cfg);
  StepResult rep;
  const int rep_step = std::max(1, steps / 2);
  for (int t = 0; t <= rep_step; ++t) rep = pipe.run_generation(ep, t);

  const Mat emb = embeddings_for(scene, ep, rep_step, layout);
  const AttentionBiasSpec bias = attention_bias_for(scene, layout, rep_step);
  std::vector<int> all(static_cast<size_t>(layout.seq_len()));
  for (int i = 0; i < layout.seq_len(); ++i) all[static_cast<size_t>(i)] = i;

  auto run_unpruned = [&]() {
    const auto t0 = clock_type::now();
    model.forward_masked(emb, layout, all, bias, {});
    return std::chrono::duration<double>(clock_type::now() - t0).count();
  };
  auto run_pruned = [&]() {
    const auto t0 = clock_type::now();
    Checkpoint ck = model.begin(emb, layout, all, bias);
    model.advance(ck, 2, {}, nullptr);
    if (!rep.static_retained.empty()) model.retain(ck, rep.static_retained);
    for (const auto& [layer, keep] : rep.layer_retained) {
      model.advance(ck, layer, {}, nullptr);
      model.retain(ck, keep);
    }
    model.advance(ck, model.config().num_layers, {}, nullptr);
    model.finish(ck);
    return std::chrono::duration<double>(clock_type::now() - t0).count();
  };

  run_unpruned();
  run_pruned();  // warm-up
  std::vector<double> un, pr;
  for (int i = 0; i < setup.timing_reps; ++i) un.push_back(run_unpruned());
  for (int i = 0; i < setup.timing_reps; ++i) pr.push_back(run_pruned());
  std::sort(un.begin(), un.end());
  std::sort(pr.begin(), pr.end());
  summary.unpruned_median_s = un[un.size() / 2];
  summary.pruned_median_s = pr[pr.size() / 2];
  summary.speedup = summary.unpruned_median_s / summary.pruned_median_s;
}

namespace {

json row_to_json(const EpisodeRun& run, const StepMetrics& r) {
  json j;
  j["schema"] = "vlaprune.metrics.v1";
  j["strategy"] = run.strategy;
  j["episode"] = run.episode;
  j["seed"] = run.seed;
  j["step"] = r.step;
  j["phase"] = phase_name(r.phase);
  j["mode"] = (r.mode == ActionMode::kFine) ? "fine" : "coarse";
  j["k_base"] = r.k_base;
  j["static_applied"] = r.static_applied;
  j["visual_total"] = r.visual_total;
  j["retained_visual"] = r.retained_visual;
  j["pruned_visual"] = r.pruned_visual;
  j["counts"] = {{"global", r.count_global},
                 {"dynamic", r.count_dynamic},
                 {"local", r.count_local}};
  j["static_pruned_fraction"] = r.static_pruned_fraction;
  j["hit_rate_12"] = r.hit_rate_12;
  j["layer_tokens"] = r.layer_tokens;
  j["op_count"] = r.op_count;
  j["flops"] = {{"pruned", r.flops_exact_pruned},
                {"full", r.flops_exact_full},
                {"reduction", r.flops_reduction}};
  j["action_error"] = r.action_error;
  j["action_error_unpruned"] = r.action_error_unpruned;
  j["important_recall"] = r.important_recall;
  j["forward_seconds"] = r.forward_seconds;
  return j;
}

}  // namespace

void write_metrics_jsonl(const std::string& path, const std::vector<EpisodeRun>& runs) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  for (const auto& run : runs) {
    for (const auto& r : run.rows) f << row_to_json(run, r).dump() << "\n";
  }
}

void write_summary_json(const std::string& path, const RunSetup& setup,
                        const std::vector<StrategySummary>& summaries) {
  json j;
  j["schema"] = "vlaprune.summary.v1";
  j["config"] = {{"alpha", setup.pruner.alpha},
                 {"tau", setup.pruner.tau},
                 {"k_d", setup.pruner.k_d},
                 {"retention", setup.pruner.retention},
                 {"beta", setup.pruner.ema_beta},
                 {"sigmoid_k", setup.pruner.sigmoid_k},
                 {"epsilon", setup.pruner.epsilon},
                 {"layers", setup.model.num_layers},
                 {"hidden", setup.model.hidden_dim},
                 {"visual_tokens", setup.layout().visual_count()},
                 {"episodes", setup.episodes},
                 {"seed_base", setup.seed_base}};
  j["strategies"] = json::array();
  for (const auto& s : summaries) {
    j["strategies"].push_back({{"strategy", s.strategy},
                               {"episodes", s.episodes},
                               {"steps", s.steps},
                               {"mean_static_pruned_fraction", s.mean_static_pruned},
                               {"mean_hit_rate", s.mean_hit_rate},
                               {"mean_important_recall", s.mean_recall},
                               {"mean_action_error", s.mean_action_error},
                               {"mean_action_error_unpruned", s.mean_action_error_unpruned},
                               {"mean_flops_reduction", s.mean_flops_reduction},
                               {"retained_fraction_histogram", s.retained_fraction_histogram},
                               {"unpruned_median_s", s.unpruned_median_s},
                               {"pruned_median_s", s.pruned_median_s},
                               {"speedup", s.speedup},
                               {"invariant_violations", s.invariant_violations}});
  }
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  f << j.dump(2) << "\n";
}

void print_summary_table(const std::vector<StrategySummary>& summaries) {
  std::printf("%-12s %6s %6s %9s %8s %8s %9s %9s %8s\n", "strategy", "eps", "steps",
              "staticcut", "hitrate", "recall", "error", "flopscut", "speedup");
  for (const auto& s : summaries) {
    std::printf("%-12s %6d %6d %9.3f %8.3f %8.3f %9.4f %9.3f %7.2fx\n", s.strategy.c_str(),
                s.episodes, s.steps, s.mean_static_pruned, s.mean_hit_rate, s.mean_recall,
                s.mean_action_error, s.mean_flops_reduction, s.speedup);
  }
}

}  // namespace vlaprune::cli

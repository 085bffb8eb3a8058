#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "gaitlab/clred.hpp"
#include "gaitlab/csv.hpp"
#include "gaitlab/hybrid_sim.hpp"
#include "gaitlab/scenario.hpp"

namespace gaitlab {

struct CommandResult {
  bool scenario_ok = true;   ///< false marks a gait failure, not a program error
  nlohmann::json summary;
};

namespace detail {

inline void write_step_records(const std::string& path, const std::vector<StepRecord>& recs) {
  CsvWriter csv(path, {"step", "period", "th1dot_minus", "step_length", "speed",
                       "min_clearance", "min_Fz", "settled"});
  for (const auto& r : recs) {
    csv.row({static_cast<double>(r.index), r.period, r.th1dot_minus, r.step_length,
             r.speed, r.min_clearance, r.min_Fz, r.settled ? 1.0 : 0.0});
  }
}

inline double now_seconds() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch()).count();
}

}  // namespace detail

/// Nonlinear run: dense trajectory (states, torques, ground reactions,
/// swing-foot height) plus per-step descriptors.
inline CommandResult cmd_simulate(const ScenarioConfig& cfg, const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  GaitTrace trace;
  const double horizon = cfg.run.horizon.value_or(std::numeric_limits<double>::infinity());
  const int steps = cfg.run.horizon ? std::max(cfg.run.steps, 100000) : cfg.run.steps;
  const GaitResult res = run_gait(cfg.physical, cfg.gait, cfg.sim, cfg.run.initial_th1dot,
                                  steps, cfg.terrain, cfg.run.t_set_overrides, &trace,
                                  horizon);

  CsvWriter tr(out_dir + "/trace.csv",
               {"t", "x", "z", "th1", "th2", "th3", "th4", "xd", "zd", "th1d", "th2d",
                "th3d", "th4d", "u2", "u3", "Fx", "Fz", "zbar"});
  for (const auto& s : trace.samples) {
    tr.row({s.t, s.q[0], s.q[1], s.q[2], s.q[3], s.q[4], s.q[5], s.qd[0], s.qd[1],
            s.qd[2], s.qd[3], s.qd[4], s.qd[5], s.u2, s.u3, s.Fx, s.Fz, s.zbar});
  }
  detail::write_step_records(out_dir + "/steps.csv", res.records);

  CommandResult out;
  out.scenario_ok = res.ok;
  out.summary = {{"command", "simulate"},
                 {"config_hash", scenario_hash(cfg)},
                 {"steps_completed", res.records.size()},
                 {"ok", res.ok},
                 {"failure", to_string(res.failure)},
                 {"failed_step", res.failed_step},
                 {"trace_samples", trace.samples.size()}};
  return out;
}

/// Closed-form walkability verdict plus per-step descriptors.
inline CommandResult cmd_predict(const ScenarioConfig& cfg, const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  const WalkabilityResult res =
      walkability(cfg.physical, cfg.gait, cfg.linearization, cfg.run.initial_th1dot,
                  cfg.terrain, cfg.run.t_set_overrides, cfg.run.steps);
  detail::write_step_records(out_dir + "/steps.csv", res.records);

  nlohmann::json verdict = {{"command", "predict"},
                            {"config_hash", scenario_hash(cfg)},
                            {"walkable", res.walkable},
                            {"steps_requested", cfg.run.steps},
                            {"steps_completed", res.records.size()},
                            {"failed_step", res.failed_step},
                            {"failure", to_string(res.failure)}};
  if (!res.records.empty()) {
    const StepRecord avg = steady_descriptors(res.records, cfg.run.average_window);
    verdict["steady"] = {{"period", avg.period},
                         {"th1dot_minus", avg.th1dot_minus},
                         {"step_length", avg.step_length},
                         {"speed", avg.speed}};
  }
  std::ofstream(out_dir + "/verdict.json") << verdict.dump(2) << "\n";

  CommandResult out;
  out.scenario_ok = res.walkable;
  out.summary = verdict;
  return out;
}

namespace detail {

struct SweepPoint {
  bool nonlinear = false;
  double kappa = 0.0;
  double beta = 0.0;
  // results
  bool ok = false;
  std::string status = "pending";
  StepRecord steady;
};

inline void run_sweep_point(const ScenarioConfig& cfg, SweepPoint& pt,
                            double seed_th1dot) {
  GaitParams gait = cfg.gait;
  gait.beta = pt.beta;
  try {
    if (pt.nonlinear) {
      const GaitResult res = run_gait(cfg.physical, gait, cfg.sim, seed_th1dot,
                                      cfg.sweep.nonlinear_steps);
      if (res.ok) {
        pt.ok = true;
        pt.status = "ok";
        pt.steady = steady_descriptors(res.records, cfg.sweep.nonlinear_average);
      } else {
        pt.status = to_string(res.failure);
      }
    } else {
      const auto lin = LinearizationConfig::from_kappa(gait, pt.kappa);
      const WalkabilityResult res =
          walkability(cfg.physical, gait, lin, cfg.run.initial_th1dot, {}, {},
                      cfg.sweep.settle_steps + cfg.sweep.average_steps);
      if (res.walkable) {
        pt.ok = true;
        pt.status = "ok";
        pt.steady = steady_descriptors(res.records, cfg.sweep.average_steps);
      } else {
        pt.status = to_string(res.failure);
      }
    }
  } catch (const std::exception&) {
    pt.status = "numeric-error";
  }
}

}  // namespace detail

/// Steady gait descriptors versus beta, one closed-form curve per kappa plus
/// a coarser integrated reference. Grid points run on a worker pool; rows
/// come out in deterministic (model, kappa, beta) order and failed points
/// are emitted with their failure marker rather than dropped.
inline CommandResult cmd_sweep(const ScenarioConfig& cfg, const std::string& out_dir,
                               int workers = 0) {
  std::filesystem::create_directories(out_dir);
  const SweepSpec& sw = cfg.sweep;

  std::vector<detail::SweepPoint> points;
  for (double kappa : sw.kappas) {
    for (double beta = sw.beta_min; beta <= sw.beta_max + 1e-12; beta += sw.beta_step) {
      points.push_back({false, kappa, beta});
    }
  }
  const size_t n_clred = points.size();
  const bool want_nonlinear = cfg.run.model != ModelChoice::Clred;
  if (want_nonlinear) {
    for (double beta = sw.beta_min; beta <= sw.beta_max + 1e-12;
         beta += sw.nonlinear_beta_step) {
      points.push_back({true, 0.0, beta});
    }
  }

  // Closed-form points first: their steady velocities seed the integrated
  // runs so those converge well inside the step budget.
  if (workers <= 0) workers = static_cast<int>(std::thread::hardware_concurrency());
  workers = std::max(workers, 1);
  auto run_range = [&](size_t begin, size_t end) {
    std::atomic<size_t> next{begin};
    auto body = [&] {
      for (size_t i = next.fetch_add(1); i < end; i = next.fetch_add(1)) {
        double seed = cfg.run.initial_th1dot;
        if (points[i].nonlinear) {
          for (size_t j = 0; j < n_clred; ++j) {
            if (points[j].ok && std::abs(points[j].beta - points[i].beta) < 1e-9 &&
                std::abs(points[j].kappa + 0.5) < 1e-9) {
              seed = points[j].steady.th1dot_minus;
              break;
            }
          }
        }
        detail::run_sweep_point(cfg, points[i], seed);
      }
    };
    std::vector<std::thread> pool;
    for (int w = 1; w < workers; ++w) pool.emplace_back(body);
    body();
    for (auto& th : pool) th.join();
  };
  run_range(0, n_clred);
  run_range(n_clred, points.size());

  const struct {
    const char* file;
    double StepRecord::*field;
  } tables[] = {{"sweep_period.csv", &StepRecord::period},
                {"sweep_th1dot.csv", &StepRecord::th1dot_minus},
                {"sweep_step_length.csv", &StepRecord::step_length},
                {"sweep_speed.csv", &StepRecord::speed}};
  for (const auto& tab : tables) {
    CsvWriter csv(out_dir + "/" + tab.file, {"model", "kappa", "beta", "value", "status"});
    for (const auto& pt : points) {
      csv.row(std::vector<std::string>{
          pt.nonlinear ? "nonlinear" : "clred",
          pt.nonlinear ? "" : format_number(pt.kappa), format_number(pt.beta),
          pt.ok ? format_number(pt.steady.*tab.field) : "nan", pt.status});
    }
  }

  size_t failures = 0;
  for (const auto& pt : points) failures += pt.ok ? 0 : 1;
  CommandResult out;
  out.summary = {{"command", "sweep"},
                 {"config_hash", scenario_hash(cfg)},
                 {"points", points.size()},
                 {"failed_points", failures},
                 {"workers", workers}};
  return out;
}

/// Wall-clock comparison of the integrated and closed-form pipelines on the
/// same scenario.
inline CommandResult cmd_bench(const ScenarioConfig& cfg, const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);

  const double t0 = detail::now_seconds();
  const GaitResult nl = run_gait(cfg.physical, cfg.gait, cfg.sim, cfg.run.initial_th1dot,
                                 cfg.run.steps, cfg.terrain, cfg.run.t_set_overrides);
  const double t1 = detail::now_seconds();
  const WalkabilityResult cl =
      walkability(cfg.physical, cfg.gait, cfg.linearization, cfg.run.initial_th1dot,
                  cfg.terrain, cfg.run.t_set_overrides, cfg.run.steps);
  const double t2 = detail::now_seconds();

  const double wall_nl = t1 - t0, wall_cl = t2 - t1;
  nlohmann::json report = {
      {"command", "bench"},
      {"config_hash", scenario_hash(cfg)},
      {"steps", cfg.run.steps},
      {"nonlinear",
       {{"wall_s", wall_nl}, {"dt", cfg.sim.dt}, {"completed", nl.records.size()},
        {"ok", nl.ok}, {"failure", to_string(nl.failure)}}},
      {"clred",
       {{"wall_s", wall_cl}, {"quadrature_panels", ClredOptions{}.panels},
        {"completed", cl.records.size()}, {"ok", cl.walkable},
        {"failure", to_string(cl.failure)}}},
      {"speedup", wall_cl > 0.0 ? wall_nl / wall_cl : 0.0}};
  std::ofstream(out_dir + "/bench.json") << report.dump(2) << "\n";

  CommandResult out;
  out.scenario_ok = nl.ok && cl.walkable;
  out.summary = report;
  return out;
}

}  // namespace gaitlab

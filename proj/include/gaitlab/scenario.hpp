#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "gaitlab/clred.hpp"
#include "gaitlab/hybrid_sim.hpp"
#include "gaitlab/params.hpp"
#include "gaitlab/types.hpp"

namespace gaitlab {

enum class ModelChoice { Nonlinear, Clred, Both };

inline const char* to_string(ModelChoice m) {
  switch (m) {
    case ModelChoice::Nonlinear: return "nonlinear";
    case ModelChoice::Clred: return "clred";
    case ModelChoice::Both: return "both";
  }
  return "unknown";
}

inline ModelChoice model_from_string(const std::string& s) {
  if (s == "nonlinear") return ModelChoice::Nonlinear;
  if (s == "clred") return ModelChoice::Clred;
  if (s == "both") return ModelChoice::Both;
  throw std::invalid_argument("run.model must be nonlinear, clred or both");
}

struct RunConfig {
  int steps = 30;
  ModelChoice model = ModelChoice::Both;
  double initial_th1dot = 0.8;
  std::string out_dir;
  std::optional<double> horizon;          ///< stop the simulation near this time [s]
  int average_window = 10;                ///< steady descriptors: last n steps
  std::map<int, double> t_set_overrides;  ///< per-step settling times
};

struct SweepSpec {
  double beta_min = 0.1;
  double beta_max = 1.5;
  double beta_step = 0.01;
  std::vector<double> kappas{0.0, -0.1, -0.2, -0.3, -0.4, -0.5, -0.6};
  int settle_steps = 1000;  ///< discarded before averaging (closed-form model)
  int average_steps = 20;
  double nonlinear_beta_step = 0.1;  ///< reference curve grid (integration is slow)
  int nonlinear_steps = 30;
  int nonlinear_average = 10;

  void validate() const {
    if (!(beta_step > 0.0)) throw std::invalid_argument("sweep.beta_step must be positive");
    if (!(nonlinear_beta_step > 0.0))
      throw std::invalid_argument("sweep.nonlinear_beta_step must be positive");
    if (beta_max < beta_min) throw std::invalid_argument("sweep.beta_max < sweep.beta_min");
    if (settle_steps < 0 || average_steps < 1 || nonlinear_steps < 1 || nonlinear_average < 1)
      throw std::invalid_argument("sweep step counts must be positive");
  }
};

/// One structured-text document drives every experiment. Sections mirror the
/// library's parameter structs; every field is optional and defaults to the
/// reference setup. Unknown keys are rejected so typos fail loudly.
struct ScenarioConfig {
  PhysicalParams physical;
  GaitParams gait;
  LinearizationConfig linearization = LinearizationConfig{-0.5, -0.05};
  SimConfig sim;
  TerrainProfile terrain;
  RunConfig run;
  SweepSpec sweep;

  void validate() const {
    physical.validate();
    gait.validate();
    sim.validate();
    sweep.validate();
    if (run.steps < 0) throw std::invalid_argument("run.steps must be non-negative");
    if (run.average_window < 1) throw std::invalid_argument("run.average_window must be >= 1");
    if (run.horizon && !(*run.horizon > 0.0))
      throw std::invalid_argument("run.horizon must be positive");
    for (const auto& [step, T] : run.t_set_overrides) {
      if (step < 0 || !(T > 0.0))
        throw std::invalid_argument("run.T_set_overrides entries need step >= 0 and T_set > 0");
    }
    for (const auto& [idx, dh] : terrain.drops) {
      if (idx < 1) throw std::invalid_argument("terrain drops are keyed by impact index >= 1");
      if (!std::isfinite(dh) || std::abs(dh) > 0.5 * (physical.L1 + physical.L2))
        throw std::invalid_argument("terrain drop too large for the leg geometry");
    }
  }
};

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& j, const std::string& section,
                                std::initializer_list<const char*> known) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : known) ok = ok || it.key() == k;
    if (!ok) throw std::invalid_argument("unknown key '" + it.key() + "' in " + section);
  }
}

inline double num(const nlohmann::json& j, const char* key, double fallback) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_number()) throw std::invalid_argument(std::string(key) + " must be a number");
  return j[key].get<double>();
}

inline int integer(const nlohmann::json& j, const char* key, int fallback) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_number_integer()) throw std::invalid_argument(std::string(key) + " must be an integer");
  return j[key].get<int>();
}

}  // namespace detail

inline ScenarioConfig parse_scenario(const nlohmann::json& j) {
  using detail::integer;
  using detail::num;
  using detail::reject_unknown_keys;

  reject_unknown_keys(j, "config",
                      {"physical", "gait", "linearization", "sim", "terrain", "run", "sweep"});
  ScenarioConfig cfg;

  if (j.contains("physical")) {
    const auto& s = j["physical"];
    reject_unknown_keys(s, "physical", {"m1", "m2", "L1", "L2", "r1", "r2", "g"});
    cfg.physical = PhysicalParams::from_offsets(
        num(s, "m1", 1.0), num(s, "m2", 1.0), num(s, "L1", 0.5), num(s, "L2", 0.5),
        num(s, "r1", 0.25), num(s, "r2", 0.25), num(s, "g", 9.81));
  }
  if (j.contains("gait")) {
    const auto& s = j["gait"];
    reject_unknown_keys(s, "gait", {"alpha", "beta", "gamma", "T_set"});
    cfg.gait.alpha = num(s, "alpha", cfg.gait.alpha);
    cfg.gait.beta = num(s, "beta", cfg.gait.beta);
    cfg.gait.gamma = num(s, "gamma", cfg.gait.gamma);
    cfg.gait.T_set = num(s, "T_set", cfg.gait.T_set);
  }
  {
    double kappa = -0.5;
    if (j.contains("linearization")) {
      const auto& s = j["linearization"];
      reject_unknown_keys(s, "linearization", {"kappa"});
      kappa = num(s, "kappa", kappa);
    }
    cfg.linearization = LinearizationConfig::from_kappa(cfg.gait, kappa);
  }
  if (j.contains("sim")) {
    const auto& s = j["sim"];
    reject_unknown_keys(s, "sim", {"dt", "arming_threshold", "bisection_tol",
                                   "max_step_duration", "trace_stride"});
    cfg.sim.dt = num(s, "dt", cfg.sim.dt);
    cfg.sim.arming_threshold = num(s, "arming_threshold", cfg.sim.arming_threshold);
    cfg.sim.bisection_tol = num(s, "bisection_tol", cfg.sim.bisection_tol);
    cfg.sim.max_step_duration = num(s, "max_step_duration", cfg.sim.max_step_duration);
    cfg.sim.trace_stride = integer(s, "trace_stride", cfg.sim.trace_stride);
  }
  if (j.contains("terrain")) {
    const auto& s = j["terrain"];
    reject_unknown_keys(s, "terrain", {"drops"});
    if (s.contains("drops")) {
      for (const auto& d : s["drops"]) {
        reject_unknown_keys(d, "terrain.drops[]", {"impact", "dh"});
        if (!d.contains("impact") || !d.contains("dh"))
          throw std::invalid_argument("terrain drop needs impact and dh");
        cfg.terrain.drops[d["impact"].get<int>()] = d["dh"].get<double>();
      }
    }
  }
  if (j.contains("run")) {
    const auto& s = j["run"];
    reject_unknown_keys(s, "run", {"steps", "model", "initial_th1dot", "out_dir", "horizon",
                                   "average_window", "T_set_overrides"});
    cfg.run.steps = integer(s, "steps", cfg.run.steps);
    if (s.contains("model")) cfg.run.model = model_from_string(s["model"].get<std::string>());
    cfg.run.initial_th1dot = num(s, "initial_th1dot", cfg.run.initial_th1dot);
    if (s.contains("out_dir")) cfg.run.out_dir = s["out_dir"].get<std::string>();
    if (s.contains("horizon")) cfg.run.horizon = num(s, "horizon", 0.0);
    cfg.run.average_window = integer(s, "average_window", cfg.run.average_window);
    if (s.contains("T_set_overrides")) {
      for (const auto& o : s["T_set_overrides"]) {
        reject_unknown_keys(o, "run.T_set_overrides[]", {"step", "T_set"});
        if (!o.contains("step") || !o.contains("T_set"))
          throw std::invalid_argument("T_set override needs step and T_set");
        cfg.run.t_set_overrides[o["step"].get<int>()] = o["T_set"].get<double>();
      }
    }
  }
  if (j.contains("sweep")) {
    const auto& s = j["sweep"];
    reject_unknown_keys(s, "sweep",
                        {"beta_min", "beta_max", "beta_step", "kappas", "settle_steps",
                         "average_steps", "nonlinear_beta_step", "nonlinear_steps",
                         "nonlinear_average"});
    cfg.sweep.beta_min = num(s, "beta_min", cfg.sweep.beta_min);
    cfg.sweep.beta_max = num(s, "beta_max", cfg.sweep.beta_max);
    cfg.sweep.beta_step = num(s, "beta_step", cfg.sweep.beta_step);
    if (s.contains("kappas")) cfg.sweep.kappas = s["kappas"].get<std::vector<double>>();
    cfg.sweep.settle_steps = integer(s, "settle_steps", cfg.sweep.settle_steps);
    cfg.sweep.average_steps = integer(s, "average_steps", cfg.sweep.average_steps);
    cfg.sweep.nonlinear_beta_step = num(s, "nonlinear_beta_step", cfg.sweep.nonlinear_beta_step);
    cfg.sweep.nonlinear_steps = integer(s, "nonlinear_steps", cfg.sweep.nonlinear_steps);
    cfg.sweep.nonlinear_average = integer(s, "nonlinear_average", cfg.sweep.nonlinear_average);
  }

  cfg.validate();
  return cfg;
}

inline ScenarioConfig load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("config parse error: ") + e.what());
  }
  return parse_scenario(j);
}

/// Canonical serialization, used for the reproducibility hash in reports.
inline nlohmann::json scenario_to_json(const ScenarioConfig& c) {
  nlohmann::json j;
  j["physical"] = {{"m1", c.physical.m1}, {"m2", c.physical.m2}, {"L1", c.physical.L1},
                   {"L2", c.physical.L2}, {"r1", c.physical.r1}, {"r2", c.physical.r2},
                   {"g", c.physical.g}};
  j["gait"] = {{"alpha", c.gait.alpha}, {"beta", c.gait.beta},
               {"gamma", c.gait.gamma}, {"T_set", c.gait.T_set}};
  j["linearization"] = {{"kappa", c.linearization.kappa}};
  j["sim"] = {{"dt", c.sim.dt}, {"arming_threshold", c.sim.arming_threshold},
              {"bisection_tol", c.sim.bisection_tol},
              {"max_step_duration", c.sim.max_step_duration},
              {"trace_stride", c.sim.trace_stride}};
  auto drops = nlohmann::json::array();
  for (const auto& [idx, dh] : c.terrain.drops) drops.push_back({{"impact", idx}, {"dh", dh}});
  j["terrain"] = {{"drops", drops}};
  auto overrides = nlohmann::json::array();
  for (const auto& [step, T] : c.run.t_set_overrides)
    overrides.push_back({{"step", step}, {"T_set", T}});
  j["run"] = {{"steps", c.run.steps},
              {"model", to_string(c.run.model)},
              {"initial_th1dot", c.run.initial_th1dot},
              {"average_window", c.run.average_window},
              {"T_set_overrides", overrides}};
  if (c.run.horizon) j["run"]["horizon"] = *c.run.horizon;
  return j;
}

/// FNV-1a over the canonical config text; stable across runs and platforms.
inline std::string scenario_hash(const ScenarioConfig& c) {
  const std::string s = scenario_to_json(c).dump();
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace gaitlab

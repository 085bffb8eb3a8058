#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <stdexcept>
#include <vector>

#include "gaitlab/biped6dof.hpp"
#include "gaitlab/gait_controller.hpp"
#include "gaitlab/params.hpp"
#include "gaitlab/types.hpp"

namespace gaitlab {

// ---------------------------------------------------------------------------
// Fixed-step simulation of the controlled nonlinear model with touchdown
// detection. Classical RK4; the stance constraints are linear in q, so the
// flow preserves them up to roundoff, and a projection after every step
// removes what little drift accumulates.
// ---------------------------------------------------------------------------

struct SimConfig {
  double dt = 1e-4;
  double arming_threshold = 1e-3;  ///< swing height that arms touchdown detection [m]
  double bisection_tol = 1e-10;    ///< touchdown time tolerance [s]
  double max_step_duration = 10.0; ///< give up on a step after this long [s]
  int trace_stride = 10;           ///< record every n-th integration step

  void validate() const {
    if (!(dt > 0.0)) throw std::invalid_argument("dt must be positive");
    if (!(bisection_tol > 0.0) || !(bisection_tol < dt))
      throw std::invalid_argument("bisection_tol must be in (0, dt)");
    if (!(arming_threshold > 0.0)) throw std::invalid_argument("arming_threshold must be positive");
    if (!(max_step_duration > 0.0)) throw std::invalid_argument("max_step_duration must be positive");
    if (trace_stride < 1) throw std::invalid_argument("trace_stride must be >= 1");
  }
};

struct TraceSample {
  double t = 0.0;  ///< global time across the whole run
  Vec6 q = Vec6::Zero();
  Vec6 qd = Vec6::Zero();
  double u2 = 0.0, u3 = 0.0;
  double Fx = 0.0, Fz = 0.0;
  double zbar = 0.0;  ///< swing-foot height above the current stance plane
};

struct GaitTrace {
  std::vector<TraceSample> samples;
};

struct StepResult {
  bool ok = false;
  StepFailure failure = StepFailure::None;
  FullState pre_impact;
  StepRecord record;
};

namespace detail {

inline void project_constraints(const GaitParams& gait, double x0, double z0,
                                FullState& s) {
  s.q[0] = x0;
  s.q[1] = z0;
  s.q[2] = s.q[3] + gait.beta;
  s.qd[0] = 0.0;
  s.qd[1] = 0.0;
  s.qd[2] = s.qd[3];
}

inline FullState rk4_step(const PhysicalParams& p, const GaitParams& gait,
                          const TrajectoryCoeffs& k, const FullState& s, double h,
                          ControlledAccel* eval_at_start = nullptr) {
  const ControlledAccel a1 = controlled_accel(p, gait, k, s.q, s.qd, s.t);
  if (eval_at_start) *eval_at_start = a1;
  const ControlledAccel a2 = controlled_accel(p, gait, k, s.q + 0.5 * h * s.qd,
                                              s.qd + 0.5 * h * a1.qdd, s.t + 0.5 * h);
  const ControlledAccel a3 =
      controlled_accel(p, gait, k, s.q + 0.5 * h * (s.qd + 0.5 * h * a1.qdd),
                       s.qd + 0.5 * h * a2.qdd, s.t + 0.5 * h);
  const ControlledAccel a4 = controlled_accel(p, gait, k, s.q + h * (s.qd + 0.5 * h * a2.qdd),
                                              s.qd + h * a3.qdd, s.t + h);
  FullState out;
  out.q = s.q + h / 6.0 * (s.qd + 2.0 * (s.qd + 0.5 * h * a1.qdd) +
                           2.0 * (s.qd + 0.5 * h * a2.qdd) + (s.qd + h * a3.qdd));
  out.qd = s.qd + h / 6.0 * (a1.qdd + 2.0 * a2.qdd + 2.0 * a3.qdd + a4.qdd);
  out.t = s.t + h;
  return out;
}

}  // namespace detail

/// Integrates one step from a post-impact state until touchdown, the step
/// duration cap, or a contact violation. Touchdown is the armed downward
/// crossing of the swing-foot height through dh (relative to the current
/// stance plane), located by bisection on the integrator substep.
inline StepResult integrate_step(const PhysicalParams& p, const GaitParams& gait,
                                 const SimConfig& cfg, const FullState& post,
                                 double th1dot_minus, int step_index = 0,
                                 std::optional<double> T_override = {}, double dh = 0.0,
                                 GaitTrace* trace = nullptr, double t_offset = 0.0) {
  const double T_eff = T_override.value_or(gait.effective_T_set());
  const double xi = xi_coefficient(p, gait);
  const TrajectoryCoeffs coeffs = compute_coeffs(gait, xi, th1dot_minus, T_eff);

  const double x0 = post.q[0], z0 = post.q[1];
  auto swing_height = [&](const FullState& s) {
    return swing_foot_position(p, s.q).z - z0;
  };

  StepResult out;
  out.record.index = step_index;
  out.record.min_Fz = std::numeric_limits<double>::infinity();
  out.record.min_clearance = std::numeric_limits<double>::infinity();

  FullState s = post;
  s.t = 0.0;
  bool armed = false;
  long iter = 0;
  while (s.t < cfg.max_step_duration) {
    const FullState prev = s;
    ControlledAccel eval;
    s = detail::rk4_step(p, gait, coeffs, prev, cfg.dt, &eval);
    detail::project_constraints(gait, x0, z0, s);

    out.record.min_Fz = std::min(out.record.min_Fz, eval.forces.Fz);
    if (eval.forces.Fz <= 0.0) {
      out.failure = StepFailure::ContactViolation;
      out.pre_impact = prev;
      return out;
    }
    if (trace && iter % cfg.trace_stride == 0) {
      trace->samples.push_back({t_offset + prev.t, prev.q, prev.qd, eval.u[1], eval.u[2],
                                eval.forces.Fx, eval.forces.Fz, swing_height(prev)});
    }
    ++iter;

    const double zb_prev = swing_height(prev);
    const double zb = swing_height(s);
    if (!armed && zb > cfg.arming_threshold) armed = true;
    if (armed) {
      out.record.min_clearance = std::min(out.record.min_clearance, zb_prev);
      if (zb - dh <= 0.0) {
        // bisect the event time inside [prev.t, prev.t + dt]
        double lo = 0.0, hi = cfg.dt;
        FullState hit = s;
        while (hi - lo > cfg.bisection_tol) {
          const double mid = 0.5 * (lo + hi);
          FullState m = detail::rk4_step(p, gait, coeffs, prev, mid);
          detail::project_constraints(gait, x0, z0, m);
          if (swing_height(m) - dh <= 0.0) {
            hi = mid;
            hit = m;
          } else {
            lo = mid;
          }
        }
        const ControlledAccel at_hit =
            controlled_accel(p, gait, coeffs, hit.q, hit.qd, hit.t);
        if (trace) {
          trace->samples.push_back({t_offset + hit.t, hit.q, hit.qd, at_hit.u[1],
                                    at_hit.u[2], at_hit.forces.Fx, at_hit.forces.Fz,
                                    swing_height(hit)});
        }
        out.ok = true;
        out.pre_impact = hit;
        out.record.period = hit.t;
        out.record.th1dot_minus = hit.qd[2];
        out.record.step_length = swing_foot_position(p, hit.q).x - x0;
        out.record.speed = out.record.step_length / out.record.period;
        out.record.min_Fz = std::min(out.record.min_Fz, at_hit.forces.Fz);
        out.record.settled = hit.t >= T_eff;
        return out;
      }
    }
  }
  out.failure = StepFailure::NoImpact;
  out.pre_impact = s;
  return out;
}

struct GaitResult {
  bool ok = false;
  StepFailure failure = StepFailure::None;
  int failed_step = -1;
  std::vector<StepRecord> records;
  FullState final_state;
};

/// Runs the multi-step gait loop from the flat touchdown posture. Trajectory
/// coefficients are rebuilt at every touchdown from the measured pre-impact
/// velocity. A touchdown before the settling time ends the run: the posture
/// is not at its target, so the collision model does not apply.
inline GaitResult run_gait(const PhysicalParams& p, const GaitParams& gait,
                           const SimConfig& cfg, double th1dot0, int n_steps,
                           const TerrainProfile& terrain = {},
                           const std::map<int, double>& t_set_overrides = {},
                           GaitTrace* trace = nullptr,
                           double horizon = std::numeric_limits<double>::infinity()) {
  FullState state = post_impact_state(p, gait, impact_posture_theta2(p, gait), th1dot0);
  double th1dot = th1dot0;
  double t_global = 0.0;

  GaitResult out;
  for (int i = 0; i < n_steps && t_global < horizon; ++i) {
    std::optional<double> T_over;
    if (auto it = t_set_overrides.find(i); it != t_set_overrides.end()) T_over = it->second;
    StepResult r = integrate_step(p, gait, cfg, state, th1dot, i, T_over,
                                  terrain.drop_at(i + 1), trace, t_global);
    if (!r.ok) {
      out.failure = r.failure;
      out.failed_step = i;
      out.final_state = r.pre_impact;
      return out;
    }
    if (!r.record.settled) {
      out.failure = StepFailure::ControlIncomplete;
      out.failed_step = i;
      out.final_state = r.pre_impact;
      return out;
    }
    t_global += r.record.period;
    out.records.push_back(r.record);
    state = impact_map(p, gait, r.pre_impact).state;
    th1dot = r.record.th1dot_minus;
  }
  out.ok = true;
  out.final_state = state;
  return out;
}

/// Averages the last `window` records into one steady-state descriptor set.
inline StepRecord steady_descriptors(const std::vector<StepRecord>& records, int window) {
  if (records.empty() || window < 1) return {};
  const size_t n = std::min<size_t>(window, records.size());
  StepRecord avg;
  avg.index = records.back().index;
  avg.min_Fz = std::numeric_limits<double>::infinity();
  avg.min_clearance = std::numeric_limits<double>::infinity();
  for (size_t i = records.size() - n; i < records.size(); ++i) {
    const StepRecord& r = records[i];
    avg.period += r.period;
    avg.th1dot_minus += r.th1dot_minus;
    avg.step_length += r.step_length;
    avg.speed += r.speed;
    avg.min_Fz = std::min(avg.min_Fz, r.min_Fz);
    avg.min_clearance = std::min(avg.min_clearance, r.min_clearance);
    avg.settled = avg.settled && r.settled;
  }
  avg.period /= n;
  avg.th1dot_minus /= n;
  avg.step_length /= n;
  avg.speed /= n;
  return avg;
}

}  // namespace gaitlab

#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <stdexcept>
#include <tuple>
#include <vector>

#include "gaitlab/biped6dof.hpp"
#include "gaitlab/gait_controller.hpp"
#include "gaitlab/params.hpp"
#include "gaitlab/types.hpp"

namespace gaitlab {

// ---------------------------------------------------------------------------
// Reduced 3-DOF model. With the stance foot pinned and the stance knee
// locked, velocities live in the range of V (qd = V qbd, qb = (th2, th3,
// th4)) and projecting the full dynamics through V gives
//
//   Mb qbdd + gb(th2) = Sb (u2, u3)
//
// with a constant diagonal Mb and a gravity vector whose only nonzero entry
// is gb1(th2) = -m g (L1 sin(th2 + beta) + L2 sin th2). No velocity terms
// survive the projection.
// ---------------------------------------------------------------------------

/// Velocity reduction map qd = V qbd.
inline const Mat6x3& reduction_matrix() {
  static const Mat6x3 V = [] {
    Mat6x3 v = Mat6x3::Zero();
    v(2, 0) = 1.0;
    v(3, 0) = 1.0;
    v(4, 1) = 1.0;
    v(5, 2) = 1.0;
    return v;
  }();
  return V;
}

struct ReducedModel {
  PhysicalParams p;
  GaitParams gait;
  Mat3 M;
  Mat3x2 S;

  double gravity1(double th2) const {
    return -p.total_mass() * p.g *
           (p.L1 * std::sin(th2 + gait.beta) + p.L2 * std::sin(th2));
  }
  double gravity1_deriv(double th2) const {
    return -p.total_mass() * p.g *
           (p.L1 * std::cos(th2 + gait.beta) + p.L2 * std::cos(th2));
  }
  Vec3 gravity(const Vec3& qb) const { return Vec3(gravity1(qb[0]), 0.0, 0.0); }

  /// Forward dynamics of the reduced model with the exact gravity term.
  Vec3 accel(const Vec3& qb, const Vec2& u) const {
    return M.inverse() * (S * u - gravity(qb));
  }
};

inline ReducedModel reduce(const PhysicalParams& p, const GaitParams& gait) {
  const double m = p.total_mass();
  const double cb = std::cos(gait.beta);
  ReducedModel rm{p, gait, Mat3::Zero(), Mat3x2::Zero()};
  rm.M(0, 0) = m * p.L1 * p.L1 + (p.m1 + 2.0 * p.m2) * m * p.L2 * p.L2 / (2.0 * p.m2) +
               2.0 * m * p.L1 * p.L2 * cb + p.I1 + p.I2;
  rm.M(1, 1) = p.m1 * m * p.L2 * p.L2 / (2.0 * p.m2) + p.I2;
  rm.M(2, 2) = p.I1;
  rm.S << 1.0, 0.0, -1.0, 1.0, 0.0, -1.0;
  return rm;
}

/// Expansion point for the gravity linearization, th2* = kappa * beta.
struct LinearizationConfig {
  double kappa = -0.5;
  double theta2_star = 0.0;

  static LinearizationConfig from_kappa(const GaitParams& gait, double kappa) {
    return {kappa, kappa * gait.beta};
  }
};

// ---------------------------------------------------------------------------
// Controlled linearized reduced model. Linearizing gravity about th2* and
// substituting the output-linearizing torques turns each step phase into an
// LTI system
//
//   xd = A x + b1 + b2 v2(t) + b3 v3(t),   x = (qb, qbd),
//
// whose transition matrix has a closed form: the lower-left block of A is
// omega^2 on its first column only, so exp(A t) assembles from cosh/sinh of
// omega t. After the settling time v = 0 and only (th2, th2d) matters,
// giving a 2x2 phase with the same omega.
// ---------------------------------------------------------------------------

struct LinearizedSystem {
  ReducedModel rm;
  double theta2_star = 0.0;
  Mat3 G = Mat3::Zero();       ///< gravity gradient, only (0,0) nonzero
  Vec3 g_beta = Vec3::Zero();  ///< affine gravity offset (propulsive torque)
  Mat6 A = Mat6::Zero();
  Vec6 b1 = Vec6::Zero();
  Vec6 b2 = Vec6::Zero();
  Vec6 b3 = Vec6::Zero();
  double omega = 0.0;          ///< fall-phase frequency, omega^2 = A(3,0)
  double b1_scalar = 0.0;      ///< fall-phase forcing, b1[3]
};

/// First-order gravity model about th2*: G qb + g_beta.
inline std::pair<Mat3, Vec3> linearize_gravity(const PhysicalParams& p,
                                               const GaitParams& gait,
                                               const LinearizationConfig& cfg) {
  const ReducedModel rm = reduce(p, gait);
  const double g1 = rm.gravity1(cfg.theta2_star);
  const double g1p = rm.gravity1_deriv(cfg.theta2_star);
  Mat3 G = Mat3::Zero();
  G(0, 0) = g1p;
  return {G, Vec3(g1 - g1p * cfg.theta2_star, 0.0, 0.0)};
}

inline LinearizedSystem build_state_space(const PhysicalParams& p, const GaitParams& gait,
                                          const LinearizationConfig& cfg) {
  LinearizedSystem sys;
  sys.rm = reduce(p, gait);
  sys.theta2_star = cfg.theta2_star;
  std::tie(sys.G, sys.g_beta) = linearize_gravity(p, gait, cfg);

  const Mat3 W = sys.rm.M.inverse();
  const Mat2 SWS = sys.rm.S.transpose() * W * sys.rm.S;
  const Mat3x2 gain = sys.rm.S * SWS.inverse();
  const Mat3 proj = gain * sys.rm.S.transpose() * W - Mat3::Identity();

  sys.A.topRightCorner<3, 3>().setIdentity();
  sys.A.bottomLeftCorner<3, 3>() = W * proj * sys.G;
  sys.b1.tail<3>() = W * proj * sys.g_beta;
  sys.b2.tail<3>() = W * gain * Vec2(1.0, 0.0);
  sys.b3.tail<3>() = W * gain * Vec2(0.0, 1.0);

  // Closed forms for the common-mode frequency and forcing; they must agree
  // with the assembled blocks, which the tests pin down.
  const double mm = p.m2 * (p.m1 + p.m2) * p.g;
  const double cs = p.L1 * std::cos(cfg.theta2_star + gait.beta) + p.L2 * std::cos(cfg.theta2_star);
  const double sn = p.L1 * std::sin(cfg.theta2_star + gait.beta) + p.L2 * std::sin(cfg.theta2_star);
  const double N2 = mm * cs;
  const double N3 = mm * sn - mm * cfg.theta2_star * cs;
  const double D2 = (p.m1 + p.m2) * (p.m1 + p.m2) * p.L2 * p.L2 +
                    p.m2 * ((p.m1 + p.m2) * p.L1 * p.L1 + p.I1 + p.I2) +
                    p.m2 * p.total_mass() * p.L1 * p.L2 * std::cos(gait.beta);
  if (!(N2 / D2 > 0.0)) {
    throw std::domain_error("invalid linearization: expansion point beyond the upright range");
  }
  sys.omega = std::sqrt(N2 / D2);
  sys.b1_scalar = N3 / D2;
  return sys;
}

/// Torques realizing ydd = v on the linearized reduced model.
inline Vec2 control_input_reduced(const LinearizedSystem& sys, const Vec3& qb,
                                  const Vec2& v) {
  const Mat3 W = sys.rm.M.inverse();
  const Mat2 SWS = sys.rm.S.transpose() * W * sys.rm.S;
  return SWS.inverse() * (v + sys.rm.S.transpose() * W * (sys.G * qb + sys.g_beta));
}

/// exp(A t) in closed form. A^2 is block-diagonal with the rank-one block
/// omega^2 * ones * e1^T, which is omega^2 times an idempotent, so the power
/// series collapses to cosh/sinh terms.
inline Mat6 controlled_transition(const LinearizedSystem& sys, double t) {
  const double w = sys.omega;
  const double ch = std::cosh(w * t), sh = std::sinh(w * t);
  Mat3 P = Mat3::Zero();
  P.col(0).setOnes();
  Mat6 E = Mat6::Zero();
  E.topLeftCorner<3, 3>() = Mat3::Identity() + (ch - 1.0) * P;
  E.topRightCorner<3, 3>() = t * Mat3::Identity() + (sh / w - t) * P;
  E.bottomLeftCorner<3, 3>() = w * sh * P;
  E.bottomRightCorner<3, 3>() = E.topLeftCorner<3, 3>();
  return E;
}

/// Fall-phase transition on (th2, th2d).
inline Mat2 fall_transition(const LinearizedSystem& sys, double dt) {
  const double w = sys.omega;
  Mat2 E;
  E << std::cosh(w * dt), std::sinh(w * dt) / w,
       w * std::sinh(w * dt), std::cosh(w * dt);
  return E;
}

// ---------------------------------------------------------------------------
// Convolution integrals. Propagating to the settling time needs
//
//   Eta1 = int exp(-A tau) b1 dtau,  Etak = int exp(-A tau) bk vk(tau) dtau,
//
// over (0, T]. v2 is affine in the pre-impact velocity, so Eta2 splits into
// a fixed part plus th1dot^- times a unit part and per-touchdown recall is
// two vector operations. Composite Gauss-Legendre quadrature covers all of
// them uniformly (v3 is not polynomial); prefix sums at the panel boundaries
// let intermediate states be evaluated in closed form as well.
// ---------------------------------------------------------------------------

struct EtaSet {
  double T = 0.0;
  int panels = 0;
  // prefix integrals over (0, j*T/panels], index 0..panels
  std::vector<Vec6> h1, h2a, h2b, h3;

  Vec6 eta1() const { return h1.back(); }
  Vec6 eta2(double th1dot_minus) const { return h2a.back() + th1dot_minus * h2b.back(); }
  Vec6 eta3() const { return h3.back(); }
};

namespace detail {

inline const std::pair<std::array<double, 8>, std::array<double, 8>>& gauss8() {
  // 8-point Gauss-Legendre nodes/weights on [-1, 1]
  static const std::pair<std::array<double, 8>, std::array<double, 8>> nw = {
      {{-0.9602898564975363, -0.7966664774136267, -0.5255324099163290,
        -0.1834346424956498, 0.1834346424956498, 0.5255324099163290,
        0.7966664774136267, 0.9602898564975363}},
      {{0.1012285362903763, 0.2223810344533745, 0.3137066458778873,
        0.3626837833783620, 0.3626837833783620, 0.3137066458778873,
        0.2223810344533745, 0.1012285362903763}}};
  return nw;
}

}  // namespace detail

inline EtaSet precompute_etas(const PhysicalParams& p, const GaitParams& gait,
                              const LinearizedSystem& sys, double T_set,
                              int panels = 64) {
  const double xi = xi_coefficient(p, gait);
  const TrajectoryCoeffs ka = compute_coeffs(gait, xi, 0.0, T_set);
  TrajectoryCoeffs kb = compute_coeffs(gait, xi, 1.0, T_set);
  for (int i = 0; i < 6; ++i) kb.a[i] -= ka.a[i];

  auto quintic_accel = [](const TrajectoryCoeffs& k, double t) {
    double y = 0.0;
    for (int i = 5; i >= 2; --i) y = y * t + i * (i - 1) * k.a[i];
    return y;
  };
  const double w = M_PI / T_set;
  auto knee_accel = [&](double t) {
    const double s = std::sin(w * t), c = std::cos(w * t);
    return -gait.gamma * 3.0 * w * w * (2.0 * s * c * c - s * s * s);
  };

  EtaSet et;
  et.T = T_set;
  et.panels = panels;
  et.h1.assign(panels + 1, Vec6::Zero());
  et.h2a.assign(panels + 1, Vec6::Zero());
  et.h2b.assign(panels + 1, Vec6::Zero());
  et.h3.assign(panels + 1, Vec6::Zero());

  const auto& [nodes, weights] = detail::gauss8();
  const double h = T_set / panels;
  for (int j = 0; j < panels; ++j) {
    Vec6 a1 = Vec6::Zero(), a2a = Vec6::Zero(), a2b = Vec6::Zero(), a3 = Vec6::Zero();
    for (int n = 0; n < 8; ++n) {
      const double tau = j * h + 0.5 * h * (nodes[n] + 1.0);
      const Mat6 Em = controlled_transition(sys, -tau);
      a1 += weights[n] * (Em * sys.b1);
      const Vec6 eb2 = Em * sys.b2;
      a2a += weights[n] * quintic_accel(ka, tau) * eb2;
      a2b += weights[n] * quintic_accel(kb, tau) * eb2;
      a3 += weights[n] * knee_accel(tau) * (Em * sys.b3);
    }
    et.h1[j + 1] = et.h1[j] + 0.5 * h * a1;
    et.h2a[j + 1] = et.h2a[j] + 0.5 * h * a2a;
    et.h2b[j + 1] = et.h2b[j] + 0.5 * h * a2b;
    et.h3[j + 1] = et.h3[j] + 0.5 * h * a3;
  }
  return et;
}

/// State at the settling time from the post-impact state, in closed form.
inline Vec6 propagate_controlled(const LinearizedSystem& sys, const EtaSet& et,
                                 const Vec6& x_plus, double th1dot_minus) {
  return controlled_transition(sys, et.T) *
         (x_plus + et.eta1() + et.eta2(th1dot_minus) + et.eta3());
}

/// State at panel boundary j (t = j T / panels) of the controlled phase.
inline Vec6 controlled_state_at(const LinearizedSystem& sys, const EtaSet& et,
                                const Vec6& x_plus, double th1dot_minus, int j) {
  const Vec6 pre = x_plus + et.h1[j] + et.h2a[j] + th1dot_minus * et.h2b[j] + et.h3[j];
  return controlled_transition(sys, et.T * j / et.panels) * pre;
}

/// Fall phase: xb(dt) = e^(Ab dt) (xb + Ab^-1 bb1) - Ab^-1 bb1 with
/// Ab^-1 bb1 = (b1 / omega^2, 0).
inline Vec2 propagate_fall(const LinearizedSystem& sys, const Vec2& xbar, double dt) {
  const Vec2 shift(sys.b1_scalar / (sys.omega * sys.omega), 0.0);
  return fall_transition(sys, dt) * (xbar + shift) - shift;
}

struct ImpactTime {
  bool found = false;
  double dt = 0.0;       ///< fall duration past the settling time
  double theta2 = 0.0;   ///< thigh angle at touchdown
  double theta2dot = 0.0;
};

/// Touchdown instant of the fall phase: the swing-foot height in the locked
/// posture reaches the terrain offset dh. Brackets by doubling from T/8 and
/// bisects; fails if no crossing happens within the horizon.
inline ImpactTime impact_time(const PhysicalParams& p, const GaitParams& gait,
                              const LinearizedSystem& sys, const Vec2& xbar_at_T,
                              double dh, double T_set, double horizon = 10.0) {
  auto height = [&](double dt) {
    return locked_swing_height(p, gait, propagate_fall(sys, xbar_at_T, dt)[0]) - dh;
  };
  if (height(0.0) <= 0.0) {
    throw std::domain_error("impact_time: already at or below the landing height");
  }
  double hi = T_set / 8.0;
  while (height(hi) > 0.0) {
    // a thigh angle outside the upright range means the robot fell over
    // (backward or spun out); the linear model stops being meaningful there
    if (std::abs(propagate_fall(sys, xbar_at_T, hi)[0]) > M_PI / 2.0) return {};
    hi *= 2.0;
    if (hi > horizon) return {};
  }
  double lo = 0.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (height(mid) <= 0.0 ? hi : lo) = mid;
    if (std::abs(height(0.5 * (lo + hi))) < 1e-13) break;
  }
  const double dt = 0.5 * (lo + hi);
  const Vec2 xb = propagate_fall(sys, xbar_at_T, dt);
  return {true, dt, xb[0], xb[1]};
}

// ---------------------------------------------------------------------------
// Step-to-step map and walkability
// ---------------------------------------------------------------------------

struct ClredOptions {
  int panels = 64;                 ///< quadrature panels, also ground-check samples
  double arming_threshold = 1e-3;  ///< swing height that arms touchdown detection [m]
  double fall_horizon = 10.0;      ///< give up on a touchdown after this long [s]
};

struct ClredStepResult {
  bool ok = false;
  StepFailure failure = StepFailure::None;
  StepRecord record;
  double theta2_impact = 0.0;   ///< pre-impact thigh angle, seeds the next step
  double th1dot_next = 0.0;
};

/// Iterates the closed-form step map: impact reset, matrix-exponential
/// propagation to the settling time, hyperbolic fall, touchdown bisection.
/// The state space depends only on (params, beta, kappa) and is built once;
/// the convolution integrals are cached per settling-time value and the
/// velocity-dependent part is reassembled each touchdown.
class ClredEngine {
 public:
  ClredEngine(const PhysicalParams& p, const GaitParams& gait,
              const LinearizationConfig& cfg, ClredOptions opts = {})
      : p_(p), gait_(gait), opts_(opts), sys_(build_state_space(p, gait, cfg)),
        xi_(xi_coefficient(p, gait)) {}

  const LinearizedSystem& system() const { return sys_; }
  double xi() const { return xi_; }

  /// One step: from the touchdown posture (theta2_posture, th1dot_minus) to
  /// the next touchdown, landing dh below the current stance plane.
  ClredStepResult step(int index, double theta2_posture, double th1dot_minus,
                       double dh = 0.0, std::optional<double> T_override = {}) {
    const double T = T_override.value_or(gait_.effective_T_set());
    const EtaSet& et = etas_for(T);

    Vec6 x0;
    x0 << theta2_posture - gait_.alpha, theta2_posture, theta2_posture + gait_.beta,
        xi_ * th1dot_minus, th1dot_minus, th1dot_minus;

    // Controlled phase: sampled ground check with the arming rule (the swing
    // foot starts exactly on the ground, so the detector must see clearance
    // first).
    bool armed = false;
    double min_clear = std::numeric_limits<double>::infinity();
    for (int j = 1; j <= et.panels; ++j) {
      const Vec6 xj = controlled_state_at(sys_, et, x0, th1dot_minus, j);
      const double zb = swing_height(xj);
      if (!armed && zb > opts_.arming_threshold) armed = true;
      if (armed) {
        min_clear = std::min(min_clear, zb);
        if (zb - dh <= 0.0) {
          ClredStepResult r;
          r.failure = StepFailure::ControlIncomplete;
          r.record.index = index;
          r.record.settled = false;
          return r;
        }
      }
    }

    const Vec6 xT = propagate_controlled(sys_, et, x0, th1dot_minus);
    const Vec2 xbar(xT[0], xT[3]);
    const ImpactTime hit = impact_time(p_, gait_, sys_, xbar, dh, T, opts_.fall_horizon);
    if (!hit.found) {
      ClredStepResult r;
      r.failure = StepFailure::NoImpact;
      r.record.index = index;
      return r;
    }

    ClredStepResult r;
    r.ok = true;
    r.theta2_impact = hit.theta2;
    r.th1dot_next = hit.theta2dot;
    r.record.index = index;
    r.record.period = T + hit.dt;
    r.record.th1dot_minus = hit.theta2dot;
    r.record.step_length = step_length(p_, gait_, hit.theta2);
    r.record.speed = r.record.step_length / r.record.period;
    r.record.min_clearance = min_clear;
    r.record.min_Fz = std::numeric_limits<double>::quiet_NaN();
    r.record.settled = true;
    return r;
  }

 private:
  double swing_height(const Vec6& x) const {
    const double b = gait_.beta;
    return p_.L1 * std::cos(x[0] + b) + p_.L2 * std::cos(x[0]) -
           p_.L2 * std::cos(x[1]) - p_.L1 * std::cos(x[2]);
  }

  const EtaSet& etas_for(double T) {
    auto it = eta_cache_.find(T);
    if (it == eta_cache_.end()) {
      it = eta_cache_.emplace(T, precompute_etas(p_, gait_, sys_, T, opts_.panels)).first;
    }
    return it->second;
  }

  PhysicalParams p_;
  GaitParams gait_;
  ClredOptions opts_;
  LinearizedSystem sys_;
  double xi_;
  std::map<double, EtaSet> eta_cache_;
};

struct WalkabilityResult {
  bool walkable = false;
  int failed_step = -1;
  StepFailure failure = StepFailure::None;
  std::vector<StepRecord> records;
};

/// Multi-step verdict without numerical integration. Starts from the flat
/// touchdown posture; terrain drops are keyed by the touchdown index ending
/// each step, settling-time overrides by the step index.
inline WalkabilityResult walkability(const PhysicalParams& p, const GaitParams& gait,
                                     const LinearizationConfig& cfg, double th1dot0,
                                     const TerrainProfile& terrain,
                                     const std::map<int, double>& t_set_overrides,
                                     int n_steps, ClredOptions opts = {}) {
  ClredEngine engine(p, gait, cfg, opts);
  double theta2 = impact_posture_theta2(p, gait);
  double th1dot = th1dot0;
  WalkabilityResult out;
  out.records.reserve(static_cast<size_t>(std::max(n_steps, 0)));
  for (int i = 0; i < n_steps; ++i) {
    std::optional<double> T_over;
    if (auto it = t_set_overrides.find(i); it != t_set_overrides.end()) T_over = it->second;
    const ClredStepResult r = engine.step(i, theta2, th1dot, terrain.drop_at(i + 1), T_over);
    if (!r.ok) {
      out.failed_step = i;
      out.failure = r.failure;
      return out;
    }
    out.records.push_back(r.record);
    theta2 = r.theta2_impact;
    th1dot = r.th1dot_next;
  }
  out.walkable = true;
  return out;
}

}  // namespace gaitlab

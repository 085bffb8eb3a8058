#pragma once

#include <cmath>
#include <stdexcept>

#include "gaitlab/params.hpp"
#include "gaitlab/types.hpp"

namespace gaitlab {

// ---------------------------------------------------------------------------
// Model terms of the full 6-DOF constrained dynamics
//
//   M(q) qdd + C(q, qd) qd + g(q) = S u + Jc^T lambda,   Jc qd = 0
//
// The stance foot is pinned (xd = zd = 0) and the stance knee is locked
// (th1d = th2d). lambda = (Fx, Fz, knee force).
// ---------------------------------------------------------------------------

inline Mat6 mass_matrix(const PhysicalParams& p, const Vec6& q) {
  const double m = p.total_mass();
  const double C1 = std::cos(q[2]), S1 = std::sin(q[2]);
  const double C2 = std::cos(q[3]), S2 = std::sin(q[3]);
  const double C12 = std::cos(q[2] - q[3]);
  Mat6 M = Mat6::Zero();
  M(0, 0) = m;
  M(0, 2) = M(2, 0) = m * p.L1 * C1;
  M(0, 3) = M(3, 0) = m * p.L2 * C2;
  M(1, 1) = m;
  M(1, 2) = M(2, 1) = -m * p.L1 * S1;
  M(1, 3) = M(3, 1) = -m * p.L2 * S2;
  M(2, 2) = m * p.L1 * p.L1 + p.I1;
  M(2, 3) = M(3, 2) = m * p.L1 * p.L2 * C12;
  M(3, 3) = (p.m1 + 2.0 * p.m2) * m * p.L2 * p.L2 / (2.0 * p.m2) + p.I2;
  M(4, 4) = p.m1 * m * p.L2 * p.L2 / (2.0 * p.m2) + p.I2;
  M(5, 5) = p.I1;
  return M;
}

inline Mat6 velocity_matrix(const PhysicalParams& p, const Vec6& q, const Vec6& qd) {
  const double m = p.total_mass();
  const double C1 = std::cos(q[2]), S1 = std::sin(q[2]);
  const double C2 = std::cos(q[3]), S2 = std::sin(q[3]);
  const double S12 = std::sin(q[2] - q[3]);
  const double d1 = qd[2], d2 = qd[3];
  Mat6 C = Mat6::Zero();
  C(0, 2) = -m * p.L1 * d1 * S1;
  C(0, 3) = -m * p.L2 * d2 * S2;
  C(1, 2) = -m * p.L1 * d1 * C1;
  C(1, 3) = -m * p.L2 * d2 * C2;
  C(2, 3) = m * p.L1 * p.L2 * d2 * S12;
  C(3, 2) = -m * p.L1 * p.L2 * d1 * S12;
  return C;
}

inline Vec6 gravity_vector(const PhysicalParams& p, const Vec6& q) {
  const double m = p.total_mass();
  Vec6 g = Vec6::Zero();
  g[1] = m * p.g;
  g[2] = -m * p.g * p.L1 * std::sin(q[2]);
  g[3] = -m * p.g * p.L2 * std::sin(q[3]);
  return g;
}

/// Torque routing: u = (stance knee, hip, swing knee). The stance knee is
/// mechanically locked, so u1 never acts on the constrained motion.
inline const Mat6x3& drive_matrix() {
  static const Mat6x3 S = [] {
    Mat6x3 s = Mat6x3::Zero();
    s(2, 0) = 1.0;
    s(3, 0) = -1.0;
    s(3, 1) = 1.0;
    s(4, 1) = -1.0;
    s(4, 2) = 1.0;
    s(5, 2) = -1.0;
    return s;
  }();
  return S;
}

/// Stance constraints: pinned foot and locked stance knee.
inline const Mat3x6& contact_jacobian() {
  static const Mat3x6 J = [] {
    Mat3x6 j = Mat3x6::Zero();
    j(0, 0) = 1.0;
    j(1, 1) = 1.0;
    j(2, 2) = 1.0;
    j(2, 3) = -1.0;
    return j;
  }();
  return J;
}

struct ConstraintForces {
  double Fx = 0.0;
  double Fz = 0.0;
  double knee = 0.0;
};

struct AccelResult {
  Vec6 qdd;
  ConstraintForces forces;
};

namespace detail {

using Mat9 = Eigen::Matrix<double, 9, 9>;
using Vec9 = Eigen::Matrix<double, 9, 1>;

/// Factored stance-dynamics KKT system at one (q, qd). Lets the controller
/// reuse a single factorization for torque probes and the final solve.
struct KktSystem {
  Eigen::PartialPivLU<Mat9> lu;
  Vec9 rhs_drift;  // -C qd - g stacked over zero constraint rows

  KktSystem(const PhysicalParams& p, const Vec6& q, const Vec6& qd) {
    Mat9 K = Mat9::Zero();
    K.topLeftCorner<6, 6>() = mass_matrix(p, q);
    K.topRightCorner<6, 3>() = -contact_jacobian().transpose();
    K.bottomLeftCorner<3, 6>() = contact_jacobian();
    lu.compute(K);
    rhs_drift.setZero();
    rhs_drift.head<6>() = -velocity_matrix(p, q, qd) * qd - gravity_vector(p, q);
  }

  AccelResult solve(const Vec3& u) const {
    Vec9 rhs = rhs_drift;
    rhs.head<6>() += drive_matrix() * u;
    Vec9 sol = lu.solve(rhs);
    if (!sol.allFinite()) throw std::domain_error("degenerate stance configuration");
    return {sol.head<6>(), {sol[6], sol[7], sol[8]}};
  }
};

}  // namespace detail

/// Constrained forward dynamics with the ground-reaction and knee multipliers.
inline AccelResult constrained_accel(const PhysicalParams& p, const Vec6& q,
                                     const Vec6& qd, const Vec3& u) {
  return detail::KktSystem(p, q, qd).solve(u);
}

struct FootPoint {
  double x = 0.0;
  double z = 0.0;
};

/// Swing-foot position; z is absolute (the stance foot sits at height q[1]).
inline FootPoint swing_foot_position(const PhysicalParams& p, const Vec6& q) {
  return {q[0] + p.L1 * std::sin(q[2]) + p.L2 * std::sin(q[3]) -
              p.L2 * std::sin(q[4]) - p.L1 * std::sin(q[5]),
          q[1] + p.L1 * std::cos(q[2]) + p.L2 * std::cos(q[3]) -
              p.L2 * std::cos(q[4]) - p.L1 * std::cos(q[5])};
}

inline double kinetic_energy(const PhysicalParams& p, const Vec6& q, const Vec6& qd) {
  return 0.5 * qd.dot(mass_matrix(p, q) * qd);
}

/// The whole-leg COMs sit at the hip, so the potential is m g z_hip.
inline double potential_energy(const PhysicalParams& p, const Vec6& q) {
  return p.total_mass() * p.g * (q[1] + p.L1 * std::cos(q[2]) + p.L2 * std::cos(q[3]));
}

// ---------------------------------------------------------------------------
// Touchdown geometry with both knees locked at beta and the hip at the
// target angle alpha. th2 alone parameterizes the posture:
//   th1 = th2 + beta, th3 = th2 - alpha, th4 = th2 - alpha + beta.
// ---------------------------------------------------------------------------

/// Swing-foot height above the stance plane in the locked touchdown posture.
inline double locked_swing_height(const PhysicalParams& p, const GaitParams& gait,
                                  double th2) {
  const double a = gait.alpha, b = gait.beta;
  return p.L1 * std::cos(th2 + b) + p.L2 * std::cos(th2) -
         p.L2 * std::cos(th2 - a) - p.L1 * std::cos(th2 - a + b);
}

/// Horizontal distance between the feet in the locked touchdown posture.
inline double step_length(const PhysicalParams& p, const GaitParams& gait, double th2) {
  const double a = gait.alpha, b = gait.beta;
  return p.L1 * std::sin(th2 + b) + p.L2 * std::sin(th2) -
         p.L2 * std::sin(th2 - a) - p.L1 * std::sin(th2 - a + b);
}

/// Thigh angle at which the locked posture touches flat ground. The root of
/// L1 sin(u + beta) + L2 sin(u) shifted by alpha/2; unique in the upright
/// range, equals (alpha - beta) / 2 for L1 = L2.
inline double impact_posture_theta2(const PhysicalParams& p, const GaitParams& gait) {
  const double b = gait.beta;
  auto f = [&](double u) { return p.L1 * std::sin(u + b) + p.L2 * std::sin(u); };
  double lo = -b - 1e-12, hi = 1e-12;
  for (int i = 0; i < 200 && hi - lo > 1e-16; ++i) {
    const double mid = 0.5 * (lo + hi);
    (f(mid) <= 0.0 ? lo : hi) = mid;
  }
  return gait.alpha / 2.0 + 0.5 * (lo + hi);
}

// ---------------------------------------------------------------------------
// Inelastic touchdown
// ---------------------------------------------------------------------------

/// Velocity constraints active during the collision: the landing foot sticks
/// and both knees stay locked. Angles are the pre-relabel ones.
inline Mat4x6 impact_jacobian(const PhysicalParams& p, const Vec6& q) {
  Mat4x6 J = Mat4x6::Zero();
  J(0, 0) = 1.0;
  J(0, 2) = p.L1 * std::cos(q[2]);
  J(0, 3) = p.L2 * std::cos(q[3]);
  J(0, 4) = -p.L2 * std::cos(q[4]);
  J(0, 5) = -p.L1 * std::cos(q[5]);
  J(1, 1) = 1.0;
  J(1, 2) = -p.L1 * std::sin(q[2]);
  J(1, 3) = -p.L2 * std::sin(q[3]);
  J(1, 4) = p.L2 * std::sin(q[4]);
  J(1, 5) = p.L1 * std::sin(q[5]);
  J(2, 2) = 1.0;
  J(2, 3) = -1.0;
  J(3, 4) = 1.0;
  J(3, 5) = -1.0;
  return J;
}

/// Post-impact velocity to pre-impact stance velocity ratio, closed form.
/// Depends only on masses, lengths, alpha and beta.
inline double xi_coefficient(const PhysicalParams& p, const GaitParams& gait) {
  const double ca = std::cos(gait.alpha), cb = std::cos(gait.beta);
  const double m = p.total_mass();
  const double N1 = p.m1 * (p.m1 + p.m2) * p.L2 * p.L2 + p.m2 * (p.I1 + p.I2) +
                    p.m2 * m * ca * (p.L1 * p.L1 + p.L2 * p.L2 + 2.0 * p.L1 * p.L2 * cb);
  const double D1 = (p.m1 + p.m2) * (p.m1 + 2.0 * p.m2) * p.L2 * p.L2 +
                    p.m2 * (m * p.L1 * p.L1 + p.I1 + p.I2) +
                    2.0 * p.m2 * m * p.L1 * p.L2 * cb;
  return N1 / D1;
}

struct ImpactResult {
  FullState state;        ///< relabeled post-impact state, t reset to zero
  Vec6 pre_relabel_qd;    ///< collision solution before the leg exchange
  Vec4 impulse;
};

/// Instantaneous inelastic collision followed by the stance/swing exchange.
/// Solves momentum conservation against the four sticking/locking constraints,
/// then relabels: new angles are the old ones in reverse order, the new
/// origin is the landing point of the old swing foot.
inline ImpactResult impact_map(const PhysicalParams& p, const GaitParams& gait,
                               const FullState& pre, double posture_tol = 1e-6) {
  if (std::abs(pre.q[2] - pre.q[3] - gait.beta) > posture_tol ||
      std::abs(pre.q[4] - pre.q[5] + gait.beta) > posture_tol) {
    throw std::domain_error("impact posture violated: knees not locked at beta");
  }
  using Mat10 = Eigen::Matrix<double, 10, 10>;
  using Vec10 = Eigen::Matrix<double, 10, 1>;
  const Mat6 M = mass_matrix(p, pre.q);
  const Mat4x6 JI = impact_jacobian(p, pre.q);
  Mat10 K = Mat10::Zero();
  K.topLeftCorner<6, 6>() = M;
  K.topRightCorner<6, 4>() = -JI.transpose();
  K.bottomLeftCorner<4, 6>() = JI;
  Vec10 rhs = Vec10::Zero();
  rhs.head<6>() = M * pre.qd;
  const Vec10 sol = Mat10(K).partialPivLu().solve(rhs);
  if (!sol.allFinite()) throw std::domain_error("degenerate impact configuration");

  const Vec6 qd_pre = sol.head<6>();
  const FootPoint foot = swing_foot_position(p, pre.q);
  FullState post;
  post.q << foot.x, foot.z, pre.q[5], pre.q[4], pre.q[3], pre.q[2];
  post.qd << 0.0, 0.0, qd_pre[5], qd_pre[4], qd_pre[3], qd_pre[2];
  post.t = 0.0;
  return {post, qd_pre, sol.tail<4>()};
}

/// State right after a touchdown at the locked posture parameterized by the
/// pre-impact thigh angle, with the closed-form velocity reset applied.
inline FullState post_impact_state(const PhysicalParams& p, const GaitParams& gait,
                                   double th2_minus, double th1dot_minus,
                                   double x = 0.0, double z = 0.0) {
  const double xi = xi_coefficient(p, gait);
  const double a = gait.alpha, b = gait.beta;
  FullState s;
  s.q << x, z, th2_minus - a + b, th2_minus - a, th2_minus, th2_minus + b;
  s.qd << 0.0, 0.0, xi * th1dot_minus, xi * th1dot_minus, th1dot_minus, th1dot_minus;
  s.t = 0.0;
  return s;
}

}  // namespace gaitlab

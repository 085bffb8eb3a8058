#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <stdexcept>

#include "gaitlab/biped6dof.hpp"
#include "gaitlab/params.hpp"
#include "gaitlab/types.hpp"

namespace gaitlab {

// ---------------------------------------------------------------------------
// Output-following control. The controlled outputs are the relative hip and
// swing-knee angles y = (th2 - th3, th3 - th4). The hip output follows a
// quintic from -alpha to alpha whose initial value and rate match the actual
// post-impact state, so no PD feedback is needed; the swing knee dips by
// gamma on a sin^3 profile and returns to -beta. Past the settling time both
// outputs hold their touchdown targets.
// ---------------------------------------------------------------------------

/// Quintic coefficients for one step. Rebuilt at every touchdown because the
/// initial rate depends on the pre-impact stance velocity.
struct TrajectoryCoeffs {
  std::array<double, 6> a{};   // y_d1(t) = sum a[k] t^k, a[2] == 0
  double th1dot_minus = 0.0;
  double T = 0.0;              // settling time these coefficients were built for
};

inline TrajectoryCoeffs compute_coeffs(const GaitParams& gait, double xi,
                                       double th1dot_minus,
                                       std::optional<double> T_set = {}) {
  const double T = T_set.value_or(gait.effective_T_set());
  if (!(T > 0.0)) throw std::invalid_argument("settling time must be positive");
  const double al = gait.alpha;
  const double c = (xi - 1.0) * th1dot_minus;
  TrajectoryCoeffs k;
  k.a = {-al,
         c,
         0.0,
         (20.0 * al - 6.0 * c * T) / (T * T * T),
         (-30.0 * al + 8.0 * c * T) / (T * T * T * T),
         (12.0 * al - 3.0 * c * T) / (T * T * T * T * T)};
  k.th1dot_minus = th1dot_minus;
  k.T = T;
  return k;
}

struct OutputTarget {
  Vec2 y;
  Vec2 yd;
  Vec2 ydd;
};

inline OutputTarget desired_output(const GaitParams& gait, const TrajectoryCoeffs& k,
                                   double t) {
  OutputTarget out;
  if (t > k.T) {
    out.y << gait.alpha, -gait.beta;
    out.yd.setZero();
    out.ydd.setZero();
    return out;
  }
  // Factored form of the quintic: the endpoint conditions put a triple root
  // of y - alpha at t = T, so evaluating through (s - 1) powers keeps the
  // endpoint identities exact instead of cancelling large power-basis terms.
  //   y    = A + m^3 (C s^2 + (6A - B) s + 2A)
  //   y'   = m^2 (5C s^2 + 2B s + B) / T
  //   y''  = m (2 (5C s^2 + 2B s + B) + m (10C s + 2B)) / T^2
  // with s = t/T, m = s - 1, A = alpha, B = a1 T, C = 12A - 3B.
  const double A = -k.a[0];
  const double B = k.a[1] * k.T;
  const double C = 12.0 * A - 3.0 * B;
  const double s = t / k.T;
  const double m = s - 1.0;
  const double inner = (5.0 * C * s + 2.0 * B) * s + B;
  const double y1 = A + m * m * m * ((C * s + (6.0 * A - B)) * s + 2.0 * A);
  const double y1d = m * m * inner / k.T;
  const double y1dd = m * (2.0 * inner + m * (10.0 * C * s + 2.0 * B)) / (k.T * k.T);

  const double w = M_PI / k.T;
  const double sn = std::sin(w * t), cs = std::cos(w * t);
  out.y << y1, -gait.beta - gait.gamma * sn * sn * sn;
  out.yd << y1d, -gait.gamma * 3.0 * w * sn * sn * cs;
  out.ydd << y1dd, -gait.gamma * 3.0 * w * w * (2.0 * sn * cs * cs - sn * sn * sn);
  return out;
}

namespace detail {

/// Rows extracting ydd = (th2dd - th3dd, th3dd - th4dd) from qdd.
inline const Eigen::Matrix<double, 2, 6>& output_accel_map() {
  static const Eigen::Matrix<double, 2, 6> E = [] {
    Eigen::Matrix<double, 2, 6> e = Eigen::Matrix<double, 2, 6>::Zero();
    e(0, 3) = 1.0;
    e(0, 4) = -1.0;
    e(1, 4) = 1.0;
    e(1, 5) = -1.0;
    return e;
  }();
  return E;
}

struct TorqueSolve {
  Vec3 u;
  AccelResult accel;
};

/// The constrained dynamics is affine in (u2, u3): one factorization of the
/// stance KKT system serves the zero-torque solve, the two unit-torque
/// probes, and the output-matching combination.
inline TorqueSolve solve_output_torques(const PhysicalParams& p, const Vec6& q,
                                        const Vec6& qd, const Vec2& v) {
  const KktSystem kkt(p, q, qd);
  const AccelResult base = kkt.solve(Vec3::Zero());
  const AccelResult p2 = kkt.solve(Vec3(0.0, 1.0, 0.0));
  const AccelResult p3 = kkt.solve(Vec3(0.0, 0.0, 1.0));
  const auto& E = output_accel_map();

  const Vec2 y0 = E * base.qdd;
  Mat2 D;
  D.col(0) = E * (p2.qdd - base.qdd);
  D.col(1) = E * (p3.qdd - base.qdd);
  if (std::abs(D.determinant()) < 1e-12) {
    throw std::domain_error("output decoupling matrix is singular");
  }
  const Vec2 u23 = D.partialPivLu().solve(v - y0);

  TorqueSolve out;
  out.u << 0.0, u23[0], u23[1];
  out.accel.qdd = base.qdd + u23[0] * (p2.qdd - base.qdd) + u23[1] * (p3.qdd - base.qdd);
  out.accel.forces.Fx =
      base.forces.Fx + u23[0] * (p2.forces.Fx - base.forces.Fx) + u23[1] * (p3.forces.Fx - base.forces.Fx);
  out.accel.forces.Fz =
      base.forces.Fz + u23[0] * (p2.forces.Fz - base.forces.Fz) + u23[1] * (p3.forces.Fz - base.forces.Fz);
  out.accel.forces.knee =
      base.forces.knee + u23[0] * (p2.forces.knee - base.forces.knee) + u23[1] * (p3.forces.knee - base.forces.knee);
  return out;
}

}  // namespace detail

/// Joint torques (u1 = 0) that realize ydd = v on the full constrained model.
inline Vec3 control_input_full(const PhysicalParams& p, const GaitParams& /*gait*/,
                               const Vec6& q, const Vec6& qd, const Vec2& v) {
  return detail::solve_output_torques(p, q, qd, v).u;
}

struct ControlledAccel {
  Vec3 u;
  Vec6 qdd;
  ConstraintForces forces;
};

/// One controlled-dynamics evaluation: acceleration command from the target
/// trajectory (zero past the settling time), torques, and the resulting
/// constrained acceleration, sharing a single KKT factorization.
inline ControlledAccel controlled_accel(const PhysicalParams& p, const GaitParams& gait,
                                        const TrajectoryCoeffs& k, const Vec6& q,
                                        const Vec6& qd, double t) {
  const Vec2 v = t <= k.T ? desired_output(gait, k, t).ydd : Vec2::Zero().eval();
  const auto sol = detail::solve_output_torques(p, q, qd, v);
  return {sol.u, sol.accel.qdd, sol.accel.forces};
}

}  // namespace gaitlab

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <unsupported/Eigen/MatrixFunctions>

#include "gaitlab/clred.hpp"
#include "gaitlab/gait_controller.hpp"
#include "gaitlab/hybrid_sim.hpp"
#include "test_support.hpp"

using namespace gaitlab;
using gaitlab::testing::random_constrained_state;
using gaitlab::testing::uniform;

namespace {

const PhysicalParams P = default_params();
const GaitParams G = default_gait();

GaitParams with_beta(double beta) {
  GaitParams g = G;
  g.beta = beta;
  return g;
}

/// Dense RK4 on xd = A x + b1 + b2 v2 + b3 v3 with the trajectory commands.
Vec6 integrate_controlled(const LinearizedSystem& sys, const GaitParams& g,
                          const TrajectoryCoeffs& k, Vec6 x, double T, double dt) {
  auto f = [&](const Vec6& xx, double t) {
    const Vec2 v = desired_output(g, k, t).ydd;
    return (sys.A * xx + sys.b1 + sys.b2 * v[0] + sys.b3 * v[1]).eval();
  };
  const long n = std::lround(T / dt);
  for (long i = 0; i < n; ++i) {
    const double t = i * dt;
    const Vec6 k1 = f(x, t);
    const Vec6 k2 = f(x + 0.5 * dt * k1, t + 0.5 * dt);
    const Vec6 k3 = f(x + 0.5 * dt * k2, t + 0.5 * dt);
    const Vec6 k4 = f(x + dt * k3, t + dt);
    x += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  return x;
}

}  // namespace

TEST_CASE("reduced mass matrix values") {
  const ReducedModel rm0 = reduce(P, with_beta(0.0));
  REQUIRE(std::abs(rm0.M(0, 0) - 4.625) < 1e-14);
  const ReducedModel rm = reduce(P, G);
  REQUIRE(rm.M.isDiagonal(0.0));
  REQUIRE(rm.M(1, 1) > 0.0);
  REQUIRE(rm.M(2, 2) == P.I1);
  // only the first gravity component is nonzero
  const Vec3 gv = rm.gravity(Vec3(0.3, -0.8, 1.1));
  REQUIRE(gv[1] == 0.0);
  REQUIRE(gv[2] == 0.0);
}

TEST_CASE("reduced dynamics equals the constrained full dynamics through V") {
  for (int i = 0; i < 100; ++i) {
    GaitParams g = with_beta(uniform(0.0, 1.0));
    const ReducedModel rm = reduce(P, g);
    const FullState s = random_constrained_state(g);
    const Vec2 u(uniform(-5, 5), uniform(-5, 5));
    const AccelResult full = constrained_accel(P, s.q, s.qd, Vec3(0.0, u[0], u[1]));
    const Vec3 qbdd = rm.accel(Vec3(s.q[3], s.q[4], s.q[5]), u);
    REQUIRE((full.qdd - reduction_matrix() * qbdd).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("gravity linearization") {
  SECTION("zero offset with a straight knee at the upright expansion point") {
    const auto [Gm, gb] = linearize_gravity(P, with_beta(0.0),
                                            LinearizationConfig::from_kappa(with_beta(0.0), 0.0));
    REQUIRE(gb.cwiseAbs().maxCoeff() < 1e-15);
    REQUIRE(Gm(0, 0) < 0.0);
  }

  SECTION("propulsive offset equals the knee-bend torque") {
    const auto [Gm, gb] = linearize_gravity(P, G, LinearizationConfig{0.0, 0.0});
    const double expected = -P.total_mass() * P.g * P.L1 * std::sin(G.beta);
    REQUIRE(std::abs(gb[0] - expected) < 1e-12);
    REQUIRE(std::abs(gb[0] + 1.958) < 1e-3);
    REQUIRE(gb[1] == 0.0);
    REQUIRE(gb[2] == 0.0);
  }

  SECTION("tangency: the residual is second order in the offset") {
    const GaitParams g = with_beta(0.5);
    const ReducedModel rm = reduce(P, g);
    auto residual = [&](const LinearizationConfig& cfg, double h) {
      const auto [Gm, gb] = linearize_gravity(P, g, cfg);
      const double th = cfg.theta2_star + h;
      return std::abs(rm.gravity1(th) - (Gm(0, 0) * th + gb[0]));
    };
    const LinearizationConfig cfg = LinearizationConfig::from_kappa(g, -0.3);
    const double ratio = residual(cfg, 2e-3) / residual(cfg, 1e-3);
    REQUIRE(ratio > 3.6);
    REQUIRE(ratio < 4.4);

    // kappa = -0.5 with equal link lengths sits on an inflection of the
    // gravity term, one order better: that expansion point is special
    const LinearizationConfig mid = LinearizationConfig::from_kappa(g, -0.5);
    REQUIRE(residual(mid, 2e-3) / residual(mid, 1e-3) > 7.0);
  }
}

TEST_CASE("state-space realization structure and closed forms") {
  const GaitParams g = with_beta(0.5);
  const LinearizedSystem sys = build_state_space(P, g, LinearizationConfig::from_kappa(g, -0.5));

  // sparse shape: identity upper-right, first column of the lower-left
  REQUIRE(sys.A.topLeftCorner<3, 3>().cwiseAbs().maxCoeff() == 0.0);
  REQUIRE((sys.A.topRightCorner<3, 3>() - Mat3::Identity()).cwiseAbs().maxCoeff() == 0.0);
  REQUIRE(sys.A.bottomRightCorner<3, 3>().cwiseAbs().maxCoeff() == 0.0);
  REQUIRE(sys.A.bottomLeftCorner<3, 3>().rightCols<2>().cwiseAbs().maxCoeff() < 1e-14);

  // all three lower-left entries carry the same omega^2
  const double w2 = sys.omega * sys.omega;
  REQUIRE(std::abs(sys.A(3, 0) - w2) < 1e-12);
  REQUIRE(std::abs(sys.A(4, 0) - w2) < 1e-12);
  REQUIRE(std::abs(sys.A(5, 0) - w2) < 1e-12);
  REQUIRE(std::abs(sys.b1[3] - sys.b1_scalar) < 1e-12);
  REQUIRE(std::abs(sys.b1[4] - sys.b1_scalar) < 1e-12);
  REQUIRE(std::abs(sys.b1[5] - sys.b1_scalar) < 1e-12);
  REQUIRE(sys.b1.head<3>().cwiseAbs().maxCoeff() == 0.0);

  REQUIRE(std::abs(sys.omega - 2.756) < 2e-3);

  // upright expansion point: the forcing reduces to the knee-bend term
  const LinearizedSystem sys0 = build_state_space(P, g, LinearizationConfig{0.0, 0.0});
  const double D2 = (P.m1 + P.m2) * (P.m1 + P.m2) * P.L2 * P.L2 +
                    P.m2 * ((P.m1 + P.m2) * P.L1 * P.L1 + P.I1 + P.I2) +
                    P.m2 * P.total_mass() * P.L1 * P.L2 * std::cos(g.beta);
  REQUIRE(std::abs(sys0.b1_scalar -
                   P.m2 * (P.m1 + P.m2) * P.g * P.L1 * std::sin(g.beta) / D2) < 1e-12);

  // leaning past the upright range has no oscillation frequency
  REQUIRE_THROWS_AS(build_state_space(P, g, LinearizationConfig{0.0, 2.0}),
                    std::domain_error);
}

TEST_CASE("closed-form transition equals the dense matrix exponential") {
  const GaitParams g = with_beta(0.5);
  const LinearizedSystem sys = build_state_space(P, g, LinearizationConfig::from_kappa(g, -0.5));
  for (int i = 0; i < 20; ++i) {
    const double t = uniform(-2.0, 2.0);
    const Mat6 dense = (sys.A * t).exp();
    REQUIRE((controlled_transition(sys, t) - dense).cwiseAbs().maxCoeff() < 1e-12);
  }
  const Mat2 Ab = (Mat2() << 0.0, 1.0, sys.omega * sys.omega, 0.0).finished();
  for (double t : {0.05, 0.4, 1.3}) {
    REQUIRE((fall_transition(sys, t) - (Ab * t).exp().eval()).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("convolution integrals") {
  SECTION("zero forcing gives zero integrals") {
    const GaitParams g0 = with_beta(0.0);
    const LinearizedSystem sys = build_state_space(P, g0, LinearizationConfig{0.0, 0.0});
    REQUIRE(sys.b1.cwiseAbs().maxCoeff() < 1e-14);
    const EtaSet et = precompute_etas(P, g0, sys, g0.T_set);
    REQUIRE(et.eta1().cwiseAbs().maxCoeff() < 1e-13);

    GaitParams g_nok = G;
    g_nok.gamma = 0.0;
    const LinearizedSystem sys2 =
        build_state_space(P, g_nok, LinearizationConfig::from_kappa(g_nok, -0.5));
    const EtaSet et2 = precompute_etas(P, g_nok, sys2, g_nok.T_set);
    REQUIRE(et2.eta3().cwiseAbs().maxCoeff() < 1e-13);
  }

  SECTION("affine split matches direct quadrature and panel doubling") {
    const GaitParams g = with_beta(0.5);
    const LinearizedSystem sys =
        build_state_space(P, g, LinearizationConfig::from_kappa(g, -0.5));
    const EtaSet et = precompute_etas(P, g, sys, g.T_set, 64);
    const EtaSet et2 = precompute_etas(P, g, sys, g.T_set, 128);
    REQUIRE((et.eta1() - et2.eta1()).cwiseAbs().maxCoeff() < 1e-10);
    REQUIRE((et.eta3() - et2.eta3()).cwiseAbs().maxCoeff() < 1e-10);

    const double xi = xi_coefficient(P, g);
    for (double w : {0.0, 0.37, 0.8, 1.6}) {
      // independent fine-grid Simpson quadrature of the full v2 integrand
      const TrajectoryCoeffs k = compute_coeffs(g, xi, w, g.T_set);
      const int n = 20000;
      const double h = g.T_set / n;
      Vec6 acc = Vec6::Zero();
      for (int i = 0; i <= n; ++i) {
        const double tau = i * h;
        const double weight = (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0);
        acc += weight * desired_output(g, k, tau).ydd[0] *
               (controlled_transition(sys, -tau) * sys.b2);
      }
      acc *= h / 3.0;
      REQUIRE((et.eta2(w) - acc).cwiseAbs().maxCoeff() < 1e-10);
      REQUIRE((et.eta2(w) - et2.eta2(w)).cwiseAbs().maxCoeff() < 1e-10);
    }
  }
}

TEST_CASE("closed-form propagation against dense integration") {
  const GaitParams g = with_beta(0.5);
  const LinearizedSystem sys = build_state_space(P, g, LinearizationConfig::from_kappa(g, -0.5));
  const EtaSet et = precompute_etas(P, g, sys, g.T_set);
  const double xi = xi_coefficient(P, g);
  const double th2 = impact_posture_theta2(P, g);

  for (double w : {0.5, 0.8, 1.1}) {
    Vec6 x0;
    x0 << th2 - g.alpha, th2, th2 + g.beta, xi * w, w, w;
    const Vec6 closed = propagate_controlled(sys, et, x0, w);
    const TrajectoryCoeffs k = compute_coeffs(g, xi, w, g.T_set);
    const Vec6 dense = integrate_controlled(sys, g, k, x0, g.T_set, 1e-5);
    REQUIRE((closed - dense).cwiseAbs().maxCoeff() < 1e-8);

    // intermediate closed-form states are on the same trajectory
    const Vec6 mid_closed = controlled_state_at(sys, et, x0, w, et.panels / 2);
    const Vec6 mid_dense = integrate_controlled(sys, g, k, x0, g.T_set / 2.0, 1e-5);
    REQUIRE((mid_closed - mid_dense).cwiseAbs().maxCoeff() < 1e-8);
  }

  SECTION("short-horizon expansion") {
    const double T = 1e-3;
    Vec6 x0;
    x0 << 0.1, -0.2, 0.3, 0.4, 0.5, 0.6;
    Mat6 series = Mat6::Identity();
    Mat6 power = Mat6::Identity();
    double fact = 1.0;
    for (int k = 1; k <= 5; ++k) {
      power = (power * (sys.A * T)).eval();
      fact *= k;
      series += power / fact;
    }
    REQUIRE((controlled_transition(sys, T) * x0 - series * x0).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("fall phase propagation") {
  const GaitParams g = with_beta(0.5);
  const LinearizedSystem sys = build_state_space(P, g, LinearizationConfig::from_kappa(g, -0.5));

  const Vec2 x0(0.12, 0.9);
  REQUIRE((propagate_fall(sys, x0, 0.0) - x0).cwiseAbs().maxCoeff() < 1e-15);

  const Vec2 eq(-sys.b1_scalar / (sys.omega * sys.omega), 0.0);
  for (double dt : {0.1, 0.7, 2.0}) {
    REQUIRE((propagate_fall(sys, eq, dt) - eq).cwiseAbs().maxCoeff() < 1e-12);
  }

  SECTION("matches dense integration to 1e-10") {
    Vec2 x = x0;
    const double dt = 1e-6;
    auto f = [&](const Vec2& xx) {
      return Vec2(xx[1], sys.omega * sys.omega * xx[0] + sys.b1_scalar);
    };
    for (int i = 0; i < 200000; ++i) {
      const Vec2 k1 = f(x);
      const Vec2 k2 = f(x + 0.5 * dt * k1);
      const Vec2 k3 = f(x + 0.5 * dt * k2);
      const Vec2 k4 = f(x + dt * k3);
      x += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    REQUIRE((propagate_fall(sys, x0, 0.2) - x).cwiseAbs().maxCoeff() < 1e-10);
  }

  SECTION("hyperbolic energy integral is conserved") {
    const double c = sys.b1_scalar / (sys.omega * sys.omega);
    auto energy = [&](const Vec2& xx) {
      return 0.5 * xx[1] * xx[1] -
             0.5 * sys.omega * sys.omega * (xx[0] + c) * (xx[0] + c);
    };
    const double e0 = energy(x0);
    for (double dt : {0.05, 0.3, 0.8, 1.5}) {
      REQUIRE(std::abs(energy(propagate_fall(sys, x0, dt)) - e0) < 1e-10);
    }
  }
}

TEST_CASE("touchdown time bisection") {
  const GaitParams g = with_beta(0.7);
  const LinearizedSystem sys = build_state_space(P, g, LinearizationConfig::from_kappa(g, -0.5));
  const double th2_flat = impact_posture_theta2(P, g);

  // a settled state a little before touchdown, falling forward
  const Vec2 xT(th2_flat - 0.15, 0.8);
  REQUIRE(locked_swing_height(P, g, xT[0]) > 0.0);

  const ImpactTime flat = impact_time(P, g, sys, xT, 0.0, g.T_set);
  REQUIRE(flat.found);
  REQUIRE(std::abs(locked_swing_height(P, g, flat.theta2)) < 1e-12);
  REQUIRE(std::abs(flat.theta2 - th2_flat) < 1e-9);

  SECTION("bisection root agrees with a dense scan") {
    double prev = 0.0;
    double bracket_lo = -1.0, bracket_hi = -1.0;
    for (int i = 1; i <= 40000; ++i) {
      const double dt = i * 1e-4;
      const double zb = locked_swing_height(P, g, propagate_fall(sys, xT, dt)[0]);
      if (zb <= 0.0) {
        bracket_lo = prev;
        bracket_hi = dt;
        break;
      }
      prev = dt;
    }
    REQUIRE(bracket_lo >= 0.0);
    REQUIRE(flat.dt > bracket_lo - 1e-9);
    REQUIRE(flat.dt < bracket_hi + 1e-9);
  }

  SECTION("a descent lands later and further fallen") {
    const ImpactTime low = impact_time(P, g, sys, xT, -0.02, g.T_set);
    REQUIRE(low.found);
    REQUIRE(low.theta2 > flat.theta2);
    REQUIRE(low.dt > flat.dt);
    REQUIRE(std::abs(locked_swing_height(P, g, low.theta2) + 0.02) < 1e-12);
  }

  SECTION("falling backward never lands") {
    const Vec2 back(th2_flat - 0.3, -0.8);
    REQUIRE_FALSE(impact_time(P, g, sys, back, 0.0, g.T_set).found);
  }
}

TEST_CASE("step map fixed point and orderings") {
  const GaitParams g = with_beta(0.5);
  ClredEngine engine(P, g, LinearizationConfig::from_kappa(g, -0.5));

  // the fixed point attracts across its basin (roughly [0.65, 0.875] here;
  // outside it the very first steps fail as too-slow or too-fast)
  for (double w0 : {0.70, 0.85}) {
    double th2 = impact_posture_theta2(P, g);
    double w = w0;
    double prev_w = 0.0;
    int steps = 0;
    for (; steps < 60; ++steps) {
      const ClredStepResult r = engine.step(steps, th2, w);
      REQUIRE(r.ok);
      prev_w = w;
      th2 = r.theta2_impact;
      w = r.th1dot_next;
      if (steps > 2 && std::abs(w - prev_w) < 1e-10) break;
    }
    REQUIRE(steps < 50);
    REQUIRE(std::abs(w - 0.742284) < 5e-4);
  }

  // steady descriptors and the expansion-point orderings
  const WalkabilityResult half =
      walkability(P, g, LinearizationConfig::from_kappa(g, -0.5), 0.8, {}, {}, 1020);
  const WalkabilityResult zero =
      walkability(P, g, LinearizationConfig::from_kappa(g, 0.0), 0.8, {}, {}, 1020);
  REQUIRE(half.walkable);
  REQUIRE(zero.walkable);
  const StepRecord sh = steady_descriptors(half.records, 20);
  const StepRecord sz = steady_descriptors(zero.records, 20);
  REQUIRE(std::abs(sh.period - 1.022330) < 5e-4);
  REQUIRE(std::abs(sh.th1dot_minus - 0.742284) < 5e-4);
  REQUIRE(sz.period < sh.period);
  REQUIRE(sz.th1dot_minus > sh.th1dot_minus);
}

TEST_CASE("step length geometry") {
  GaitParams g = G;
  g.alpha = 0.0;
  REQUIRE(std::abs(step_length(P, g, 0.37)) < 1e-15);

  // at the touchdown posture the step shortens monotonically with the bend
  double prev = std::numeric_limits<double>::infinity();
  for (double beta = 0.0; beta <= 1.0 + 1e-9; beta += 0.1) {
    const GaitParams gb = with_beta(beta);
    const double len = step_length(P, gb, impact_posture_theta2(P, gb));
    REQUIRE(len < prev);
    REQUIRE(len > 0.0);
    prev = len;
  }
}

TEST_CASE("walkability verdicts") {
  SECTION("zero steps is vacuously walkable") {
    const WalkabilityResult r = walkability(P, G, LinearizationConfig::from_kappa(G, -0.5),
                                            0.8, {}, {}, 0);
    REQUIRE(r.walkable);
    REQUIRE(r.records.empty());
  }

  SECTION("flat ground baseline walks") {
    const GaitParams g = with_beta(0.7);
    const WalkabilityResult r = walkability(P, g, LinearizationConfig::from_kappa(g, -0.5),
                                            0.8, {}, {}, 20);
    REQUIRE(r.walkable);
    REQUIRE(r.records.size() == 20);
  }

  SECTION("descending a small step needs a shortened settling time") {
    const GaitParams g = with_beta(0.7);
    const LinearizationConfig lin = LinearizationConfig::from_kappa(g, -0.5);
    TerrainProfile terrain;
    terrain.drops[10] = -0.02;

    auto verdict = [&](double T_prime) {
      return walkability(P, g, lin, 0.8, terrain, {{10, T_prime}}, 20);
    };
    const WalkabilityResult keep = verdict(0.6);
    REQUIRE_FALSE(keep.walkable);
    REQUIRE(keep.failed_step == 10);
    REQUIRE(keep.failure == StepFailure::ControlIncomplete);

    REQUIRE(verdict(0.5).walkable);

    const WalkabilityResult rush = verdict(0.4);
    REQUIRE_FALSE(rush.walkable);
    REQUIRE(rush.failed_step == 11);
  }
}

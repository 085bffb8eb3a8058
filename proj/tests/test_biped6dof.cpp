#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "gaitlab/biped6dof.hpp"
#include "test_support.hpp"

using namespace gaitlab;
using gaitlab::testing::block_elimination_accel;
using gaitlab::testing::random_constrained_state;
using gaitlab::testing::random_q;
using gaitlab::testing::random_qd;
using gaitlab::testing::uniform;

namespace {
const PhysicalParams P = default_params();
const GaitParams G = default_gait();
}  // namespace

TEST_CASE("mass matrix entries and symmetry") {
  Vec6 q = Vec6::Zero();
  const Mat6 M0 = mass_matrix(P, q);
  REQUIRE(std::abs(M0(2, 3) - P.total_mass() * P.L1 * P.L2) < 1e-15);  // 4*0.5*0.5 = 1
  REQUIRE(std::abs(M0(2, 3) - 1.0) < 1e-15);
  REQUIRE(std::abs(M0(0, 0) - 4.0) < 1e-15);

  for (int i = 0; i < 20; ++i) {
    const Mat6 M = mass_matrix(P, random_q());
    REQUIRE((M - M.transpose()).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("mass matrix is positive definite at random configurations") {
  for (int i = 0; i < 100; ++i) {
    const Mat6 M = mass_matrix(P, random_q());
    Eigen::SelfAdjointEigenSolver<Mat6> eig(M);
    REQUIRE(eig.eigenvalues().minCoeff() > 0.0);
  }
}

TEST_CASE("velocity matrix basics") {
  const Vec6 q = random_q();
  REQUIRE(velocity_matrix(P, q, Vec6::Zero()).cwiseAbs().maxCoeff() == 0.0);

  Vec6 qa = random_q();
  qa[2] = qa[3];  // S12 = 0
  const Mat6 C = velocity_matrix(P, qa, random_qd());
  REQUIRE(C(2, 3) == 0.0);
  REQUIRE(C(3, 2) == 0.0);
}

TEST_CASE("Mdot - 2C is skew-symmetric") {
  const double h = 1e-6;
  for (int i = 0; i < 100; ++i) {
    const Vec6 q = random_q();
    const Vec6 qd = random_qd();
    const Mat6 Mdot =
        (mass_matrix(P, q + h * qd) - mass_matrix(P, q - h * qd)) / (2.0 * h);
    const Mat6 S = Mdot - 2.0 * velocity_matrix(P, q, qd);
    REQUIRE((S + S.transpose()).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("gravity vector values and potential gradient") {
  Vec6 q = Vec6::Zero();
  Vec6 g = gravity_vector(P, q);
  REQUIRE(g[0] == 0.0);
  REQUIRE(std::abs(g[1] - P.total_mass() * P.g) < 1e-15);
  REQUIRE(g.tail<4>().cwiseAbs().maxCoeff() == 0.0);

  q[2] = 0.1;
  g = gravity_vector(P, q);
  REQUIRE(std::abs(g[2] + P.total_mass() * P.g * P.L1 * std::sin(0.1)) < 1e-15);

  const double h = 1e-6;
  for (int i = 0; i < 100; ++i) {
    const Vec6 qr = random_q();
    const Vec6 gr = gravity_vector(P, qr);
    for (int k = 0; k < 6; ++k) {
      Vec6 qp = qr, qm = qr;
      qp[k] += h;
      qm[k] -= h;
      const double fd = (potential_energy(P, qp) - potential_energy(P, qm)) / (2.0 * h);
      REQUIRE(std::abs(gr[k] - fd) < 1e-6);
    }
  }
}

TEST_CASE("constrained accelerations satisfy the constraints") {
  for (int i = 0; i < 100; ++i) {
    const FullState s = random_constrained_state(G);
    const Vec3 u(0.0, uniform(-5, 5), uniform(-5, 5));
    const AccelResult r = constrained_accel(P, s.q, s.qd, u);
    REQUIRE((contact_jacobian() * r.qdd).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("multiplier solve agrees with block elimination") {
  for (int i = 0; i < 100; ++i) {
    const FullState s = random_constrained_state(G);
    const Vec3 u(0.0, uniform(-5, 5), uniform(-5, 5));
    const AccelResult r = constrained_accel(P, s.q, s.qd, u);
    const auto [qdd, lambda] = block_elimination_accel(P, s.q, s.qd, u);
    REQUIRE((r.qdd - qdd).cwiseAbs().maxCoeff() < 1e-10);
    REQUIRE(std::abs(r.forces.Fx - lambda[0]) < 1e-10);
    REQUIRE(std::abs(r.forces.Fz - lambda[1]) < 1e-10);
    REQUIRE(std::abs(r.forces.knee - lambda[2]) < 1e-10);
  }
}

TEST_CASE("vertical reaction is positive for upright rest poses") {
  for (int i = 0; i < 20; ++i) {
    FullState s;
    const double th2 = uniform(-0.3, 0.3);
    s.q << 0.0, 0.0, th2 + G.beta, th2, uniform(-0.5, 0.5), uniform(-0.5, 0.5);
    const AccelResult r = constrained_accel(P, s.q, Vec6::Zero(), Vec3::Zero());
    REQUIRE(r.forces.Fz > 0.0);
  }
}

TEST_CASE("swing foot height vanishes at the touchdown posture") {
  const double th2 = impact_posture_theta2(P, G);
  REQUIRE(std::abs(locked_swing_height(P, G, th2)) < 1e-12);
  // equal link lengths make the root (alpha - beta) / 2
  REQUIRE(std::abs(th2 - (G.alpha - G.beta) / 2.0) < 1e-12);

  // coincident legs: th3 = th2, th4 = th1 at ground level
  Vec6 q;
  q << 0.3, 0.0, 0.4, 0.2, 0.2, 0.4;
  REQUIRE(std::abs(swing_foot_position(P, q).z) < 1e-15);
}

TEST_CASE("xi closed form against the full collision solve") {
  const double xi = xi_coefficient(P, G);
  REQUIRE(std::abs(xi - 0.884169276262484) < 1e-12);

  // gamma and the settling time never enter
  GaitParams g2 = G;
  g2.gamma = 1.3;
  g2.T_set = 0.2;
  REQUIRE(xi_coefficient(P, g2) == xi);

  // larger swing angle dissipates more
  GaitParams g0 = G;
  g0.alpha = 1e-9;
  REQUIRE(xi < xi_coefficient(P, g0));

  // full solve over the (alpha, beta) grid
  for (int ia = 0; ia < 20; ++ia) {
    for (int ib = 0; ib < 20; ++ib) {
      GaitParams g = G;
      g.alpha = (M_PI / 4.0) * ia / 19.0;
      g.beta = 1.0 * ib / 19.0;
      const double th2 = impact_posture_theta2(P, g);
      const FullState pre = [&] {
        FullState s;
        s.q << 0.0, 0.0, th2 + g.beta, th2, th2 - g.alpha, th2 - g.alpha + g.beta;
        s.qd << 0.0, 0.0, 0.9, 0.9, 0.9, 0.9;
        return s;
      }();
      const ImpactResult r = impact_map(P, g, pre);
      REQUIRE(std::abs(r.state.qd[2] / 0.9 - xi_coefficient(P, g)) < 1e-10);
      // kinetic energy cannot grow across a plastic collision
      REQUIRE(kinetic_energy(P, r.state.q, r.state.qd) <=
              kinetic_energy(P, pre.q, pre.qd) + 1e-12);
    }
  }
}

TEST_CASE("impact map properties") {
  const double th2 = impact_posture_theta2(P, G);
  FullState pre;
  pre.q << 0.2, 0.0, th2 + G.beta, th2, th2 - G.alpha, th2 - G.alpha + G.beta;

  SECTION("zero velocity maps to zero velocity") {
    pre.qd.setZero();
    const ImpactResult r = impact_map(P, G, pre);
    REQUIRE(r.state.qd.cwiseAbs().maxCoeff() < 1e-14);
  }

  SECTION("sticking and locking rows hold before relabeling") {
    pre.qd << 0.0, 0.0, 0.8, 0.8, 0.8, 0.8;
    const ImpactResult r = impact_map(P, G, pre);
    REQUIRE((impact_jacobian(P, pre.q) * r.pre_relabel_qd).cwiseAbs().maxCoeff() < 1e-10);
    // relabeled state keeps the stance knee locked and both feet consistent
    REQUIRE(std::abs(r.state.q[2] - r.state.q[3] - G.beta) < 1e-14);
    REQUIRE(std::abs(r.state.qd[2] - r.state.qd[3]) < 1e-12);
  }

  SECTION("kinetic energy never increases over random impact velocities") {
    for (int i = 0; i < 100; ++i) {
      const double w = uniform(-2.0, 2.0);
      pre.qd << 0.0, 0.0, w, w, w, w;
      const ImpactResult r = impact_map(P, G, pre);
      REQUIRE(kinetic_energy(P, r.state.q, r.state.qd) <=
              kinetic_energy(P, pre.q, pre.qd) + 1e-12);
    }
  }

  SECTION("violated posture is rejected") {
    pre.q[4] += 0.01;  // swing knee no longer locked at beta
    pre.qd.setZero();
    REQUIRE_THROWS_AS(impact_map(P, G, pre), std::domain_error);
  }
}

TEST_CASE("post impact state construction") {
  const double th2 = impact_posture_theta2(P, G);
  const FullState s = post_impact_state(P, G, th2, 0.8);
  const double xi = xi_coefficient(P, G);
  REQUIRE(std::abs(s.q[2] - s.q[3] - G.beta) < 1e-15);
  REQUIRE(std::abs((s.q[3] - s.q[4]) + G.alpha) < 1e-15);  // relative hip at -alpha
  REQUIRE(std::abs((s.q[4] - s.q[5]) + G.beta) < 1e-15);   // swing knee at -beta
  REQUIRE(s.qd[2] == xi * 0.8);
  REQUIRE(s.qd[4] == 0.8);

  // consistency with the collision solve applied at the touchdown posture
  FullState pre;
  pre.q << 0.0, 0.0, th2 + G.beta, th2, th2 - G.alpha, th2 - G.alpha + G.beta;
  pre.qd << 0.0, 0.0, 0.8, 0.8, 0.8, 0.8;
  const ImpactResult r = impact_map(P, G, pre);
  REQUIRE((r.state.q.tail<4>() - s.q.tail<4>()).cwiseAbs().maxCoeff() < 1e-14);
  REQUIRE((r.state.qd - s.qd).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("rejects non-physical parameters") {
  REQUIRE_THROWS_AS(PhysicalParams::from_offsets(-1.0, 1.0, 0.5, 0.5, 0.25, 0.25),
                    std::invalid_argument);
  REQUIRE_THROWS_AS(PhysicalParams::from_offsets(1.0, 1.0, 0.0, 0.5, 0.25, 0.25),
                    std::invalid_argument);
  GaitParams g = default_gait();
  g.T_set = 0.0;
  REQUIRE_THROWS_AS(g.validate(), std::invalid_argument);
}

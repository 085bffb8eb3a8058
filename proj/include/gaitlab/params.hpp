#pragma once

#include <cmath>
#include <optional>
#include <stdexcept>

namespace gaitlab {

/// Mass and geometry of the biped. Each leg is a lower-leg frame (mass m1,
/// length L1 from foot to knee) and a thigh frame (mass m2, length L2 from
/// knee to hip). On each frame the mass is split into two point masses at
/// distance r1 (resp. r2) from the frame COM, so I1 = m1 r1^2, I2 = m2 r2^2.
/// The thigh COM sits at L2 (1 + m1/m2) from the knee, which places the COM
/// of every whole leg exactly at the hip.
struct PhysicalParams {
  double m1 = 1.0;
  double m2 = 1.0;
  double L1 = 0.5;
  double L2 = 0.5;
  double r1 = 0.25;
  double r2 = 0.25;
  double I1 = 0.0625;
  double I2 = 0.0625;
  double g = 9.81;

  /// Total mass m = 2 (m1 + m2).
  double total_mass() const { return 2.0 * (m1 + m2); }

  /// Knee-to-COM distance of the thigh frame.
  double thigh_com_offset() const { return L2 * (1.0 + m1 / m2); }

  void validate() const {
    if (!(m1 > 0.0) || !(m2 > 0.0)) throw std::invalid_argument("masses must be positive");
    if (!(L1 > 0.0) || !(L2 > 0.0)) throw std::invalid_argument("link lengths must be positive");
    if (!(r1 > 0.0) || !(r2 > 0.0)) throw std::invalid_argument("mass offsets must be positive");
    if (!(I1 > 0.0) || !(I2 > 0.0)) throw std::invalid_argument("inertias must be positive");
    if (!(g > 0.0)) throw std::invalid_argument("gravity must be positive");
  }

  static PhysicalParams from_offsets(double m1, double m2, double L1, double L2,
                                     double r1, double r2, double g = 9.81) {
    PhysicalParams p{m1, m2, L1, L2, r1, r2, m1 * r1 * r1, m2 * r2 * r2, g};
    p.validate();
    return p;
  }
};

inline PhysicalParams default_params() { return PhysicalParams{}; }

/// Gait-shaping constants. alpha is the relative hip angle at touchdown,
/// beta the fixed knee bend, gamma the extra mid-swing knee flexion, and
/// T_set the settling time by which the swing leg must reach the touchdown
/// posture. T_override, when set, replaces T_set for a single step.
struct GaitParams {
  double alpha = M_PI / 6.0;
  double beta = 0.1;
  double gamma = 0.3;
  double T_set = 0.7;
  std::optional<double> T_override;

  double effective_T_set() const { return T_override.value_or(T_set); }

  void validate() const {
    if (!(T_set > 0.0)) throw std::invalid_argument("T_set must be positive");
    if (T_override && !(*T_override > 0.0)) throw std::invalid_argument("T_override must be positive");
    if (!(beta >= 0.0) || !(beta < M_PI / 2.0)) throw std::invalid_argument("beta must be in [0, pi/2)");
    if (!(gamma >= 0.0)) throw std::invalid_argument("gamma must be non-negative");
    if (!(alpha > 0.0) || !(alpha < M_PI / 2.0)) throw std::invalid_argument("alpha must be in (0, pi/2)");
  }
};

inline GaitParams default_gait() { return GaitParams{}; }

}  // namespace gaitlab

#pragma once

#include <Eigen/Dense>

#include <map>
#include <string>
#include <vector>

namespace gaitlab {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Mat6 = Eigen::Matrix<double, 6, 6>;
using Mat3x2 = Eigen::Matrix<double, 3, 2>;
using Mat6x3 = Eigen::Matrix<double, 6, 3>;
using Mat3x6 = Eigen::Matrix<double, 3, 6>;
using Mat4x6 = Eigen::Matrix<double, 4, 6>;

/// Full configuration of the planar kneed biped.
/// q = (x, z, th1, th2, th3, th4): stance foot position, stance lower-leg,
/// stance thigh, swing thigh and swing lower-leg absolute angles from
/// vertical. t is the time since the last touchdown.
struct FullState {
  Vec6 q = Vec6::Zero();
  Vec6 qd = Vec6::Zero();
  double t = 0.0;
};

/// Why a step (or a whole gait) ended abnormally.
enum class StepFailure {
  None,
  NoImpact,           ///< swing foot never reached the ground within the horizon
  ControlIncomplete,  ///< touchdown happened before the settling time
  ContactViolation,   ///< vertical ground reaction force dropped to zero
};

inline const char* to_string(StepFailure f) {
  switch (f) {
    case StepFailure::None: return "none";
    case StepFailure::NoImpact: return "no-impact";
    case StepFailure::ControlIncomplete: return "control-incomplete";
    case StepFailure::ContactViolation: return "contact-violation";
  }
  return "unknown";
}

/// Per-step gait descriptors.
struct StepRecord {
  int index = 0;
  double period = 0.0;          ///< time between consecutive touchdowns [s]
  double th1dot_minus = 0.0;    ///< stance angular velocity just before touchdown [rad/s]
  double step_length = 0.0;     ///< horizontal distance between the feet at touchdown [m]
  double speed = 0.0;           ///< step_length / period [m/s]
  double min_clearance = 0.0;   ///< smallest armed swing-foot height before touchdown [m]
  double min_Fz = 0.0;          ///< smallest vertical ground reaction during the step [N]
  bool settled = true;          ///< touchdown happened after the settling time
};

/// Ground height changes keyed by touchdown index (1-based; the starting
/// posture is touchdown 0). drop_at(i) is the height of touchdown i's landing
/// spot relative to the current stance plane, negative for a descent.
struct TerrainProfile {
  std::map<int, double> drops;

  double drop_at(int impact_index) const {
    auto it = drops.find(impact_index);
    return it == drops.end() ? 0.0 : it->second;
  }
  bool flat() const { return drops.empty(); }
};

}  // namespace gaitlab

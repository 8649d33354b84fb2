// 3-DOF revolute point-foot leg: forward kinematics, geometric Jacobian and
// the inverse kinematics the gait generator needs. Stands in for a real
// robot's kinematic chain.

#ifndef INEKF_LEG_KINEMATICS_H
#define INEKF_LEG_KINEMATICS_H

#include <array>

#include "inekf/lie.h"

namespace inekf {

/// Joint angles (hip roll, hip pitch, knee pitch), radians.
using JointAngles = Eigen::Vector3d;

/// Hip-roll / hip-pitch / knee-pitch chain with two links. At zero angles the
/// leg hangs straight down from the hip; positive knee pitch (about +y) swings
/// the foot toward -x.
struct LegModel {
  Vec3 hip_offset{0.0, 0.1, -0.2};  // body -> hip, m
  double thigh_length = 0.4;        // m
  double shank_length = 0.4;        // m
  std::array<Vec3, 3> joint_axes{Vec3::UnitX(), Vec3::UnitY(), Vec3::UnitY()};

  static LegModel left_default() { return LegModel{}; }
  static LegModel right_default() {
    LegModel m;
    m.hip_offset.y() = -m.hip_offset.y();
    return m;
  }
};

/// Foot position in the body frame.
Vec3 fk_position(const LegModel& model, const JointAngles& alpha);

/// Contact frame orientation, body<-contact.
Rot3 fk_rotation(const LegModel& model, const JointAngles& alpha);

/// Geometric (manipulator) Jacobian of the foot position: column i is
/// axis_i x (foot - joint_origin_i), axes expressed in the body frame.
Mat3 leg_jacobian(const LegModel& model, const JointAngles& alpha);

/// Closed-form inverse kinematics for the default roll-pitch-pitch axis
/// layout. Throws std::invalid_argument for other layouts and
/// std::runtime_error when the target is out of reach.
JointAngles inverse_kinematics(const LegModel& model, const Vec3& foot_body);

}  // namespace inekf

#endif  // INEKF_LEG_KINEMATICS_H

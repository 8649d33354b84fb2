#include "inekf/leg_kinematics.h"

#include <Eigen/Geometry>

#include <cmath>
#include <stdexcept>

namespace inekf {

namespace {

struct Chain {
  Rot3 r1, r12, r123;  // cumulative rotations after joints 1, 2, 3
  Vec3 knee, foot;     // body frame
};

Chain evaluate_chain(const LegModel& m, const JointAngles& alpha) {
  Chain c;
  c.r1 = so3_exp(m.joint_axes[0] * alpha[0]);
  c.r12 = c.r1 * so3_exp(m.joint_axes[1] * alpha[1]);
  c.r123 = c.r12 * so3_exp(m.joint_axes[2] * alpha[2]);
  c.knee = m.hip_offset + c.r12 * Vec3(0, 0, -m.thigh_length);
  c.foot = c.knee + c.r123 * Vec3(0, 0, -m.shank_length);
  return c;
}

}  // namespace

Vec3 fk_position(const LegModel& model, const JointAngles& alpha) {
  return evaluate_chain(model, alpha).foot;
}

Rot3 fk_rotation(const LegModel& model, const JointAngles& alpha) {
  return evaluate_chain(model, alpha).r123;
}

Mat3 leg_jacobian(const LegModel& model, const JointAngles& alpha) {
  const Chain c = evaluate_chain(model, alpha);
  const Vec3 z0 = model.joint_axes[0];
  const Vec3 z1 = c.r1 * model.joint_axes[1];
  const Vec3 z2 = c.r12 * model.joint_axes[2];
  Mat3 jac;
  jac.col(0) = z0.cross(c.foot - model.hip_offset);
  jac.col(1) = z1.cross(c.foot - model.hip_offset);
  jac.col(2) = z2.cross(c.foot - c.knee);
  return jac;
}

JointAngles inverse_kinematics(const LegModel& model, const Vec3& foot_body) {
  if (model.joint_axes[0] != Vec3::UnitX() ||
      model.joint_axes[1] != Vec3::UnitY() ||
      model.joint_axes[2] != Vec3::UnitY())
    throw std::invalid_argument(
        "inverse_kinematics: only the roll-pitch-pitch axis layout is supported");

  const Vec3 r = foot_body - model.hip_offset;
  const double rho = std::hypot(r.y(), r.z());
  const double roll = (rho > 0.0) ? std::atan2(r.y(), -r.z()) : 0.0;

  // After undoing the roll, the leg lies in the hip x-z plane.
  const double ux = r.x();
  const double uz = -rho;
  const double l1 = model.thigh_length, l2 = model.shank_length;
  const double d2 = ux * ux + uz * uz;
  const double cos_knee = (d2 - l1 * l1 - l2 * l2) / (2.0 * l1 * l2);
  if (cos_knee > 1.0 || cos_knee < -1.0)
    throw std::runtime_error("inverse_kinematics: target out of reach");
  const double knee = std::acos(cos_knee);

  // q = foot position before the hip pitch is applied.
  const double qx = -l2 * std::sin(knee);
  const double qz = -l1 - l2 * std::cos(knee);
  double pitch = std::atan2(ux, uz) - std::atan2(qx, qz);
  if (pitch > M_PI) pitch -= 2.0 * M_PI;
  if (pitch < -M_PI) pitch += 2.0 * M_PI;

  return JointAngles(roll, pitch, knee);
}

}  // namespace inekf

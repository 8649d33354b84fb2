// Discrete strapdown mean propagation shared by both filters, so their mean
// trajectories are bitwise comparable.

#ifndef INEKF_STRAPDOWN_H
#define INEKF_STRAPDOWN_H

#include "inekf/lie.h"

namespace inekf {

struct StrapdownPose {
  Rot3 orientation;
  Vec3 velocity;
  Vec3 position;
};

/// Zero-order-hold Euler step:
///   R+ = R exp((w - bg) dt)
///   v+ = v + R (a - ba) dt + g dt
///   p+ = p + v dt + 1/2 R (a - ba) dt^2 + 1/2 g dt^2
inline StrapdownPose strapdown_step(const Rot3& orientation, const Vec3& velocity,
                                    const Vec3& position, const Vec3& gyro,
                                    const Vec3& accel, const Vec3& gyro_bias,
                                    const Vec3& accel_bias, const Vec3& gravity,
                                    double dt) {
  const Vec3 w = gyro - gyro_bias;
  const Vec3 a_world = orientation * (accel - accel_bias);
  StrapdownPose next;
  next.orientation = orientation * so3_exp(w * dt);
  next.velocity = velocity + a_world * dt + gravity * dt;
  next.position = position + velocity * dt + 0.5 * a_world * dt * dt +
                  0.5 * gravity * dt * dt;
  return next;
}

}  // namespace inekf

#endif  // INEKF_STRAPDOWN_H

// Quaternion-based error-state EKF over the same state vector as the
// invariant filter (orientation, velocity, position, contacts, IMU biases),
// used as the comparison baseline.
//
// Attitude error is a local (body-frame) multiplicative small-angle vector,
// R = R_hat exp(skew(dtheta)), and the error ordering matches the invariant
// filter exactly, so covariances and metrics are directly comparable. Unlike
// the invariant filter, the linearization depends on the current estimate:
// the accelerometer coupling -R_hat skew(a - ba) enters F, and the
// measurement Jacobian carries skew(R_hat^T (d - p)).

#ifndef INEKF_QEKF_H
#define INEKF_QEKF_H

#include <Eigen/Geometry>
#include <vector>

#include "inekf/state.h"

namespace inekf {

struct QekfState {
  Eigen::Quaterniond orientation{1, 0, 0, 0};  // world<-body, unit norm
  Vec3 velocity = Vec3::Zero();
  Vec3 position = Vec3::Zero();
  std::vector<ContactPoint> contacts;
  ImuBias bias;
  Eigen::MatrixXd cov;  // error ordering (dtheta, dv, dp, dd_1.., dbg, dba)

  int num_contacts() const { return static_cast<int>(contacts.size()); }
  int dim() const { return 9 + 3 * num_contacts() + 6; }
  int bias_offset() const { return 9 + 3 * num_contacts(); }
  Rot3 rotation() const { return orientation.toRotationMatrix(); }

  int contact_index(int id) const {
    for (size_t i = 0; i < contacts.size(); ++i)
      if (contacts[i].id == id) return static_cast<int>(i);
    return -1;
  }

  /// Mean as a NavState (for shared metrics).
  NavState nav_state() const {
    NavState s;
    s.orientation = rotation();
    s.velocity = velocity;
    s.position = position;
    s.contacts = contacts;
    return s;
  }
};

class QuaternionEkf {
 public:
  using Options = EstimatorOptions;

  QuaternionEkf() : QuaternionEkf(Options{}) {}
  explicit QuaternionEkf(Options options) : opt_(std::move(options)) {}

  const Options& options() const { return opt_; }

  /// Same discrete strapdown mean step as the invariant filter; covariance
  /// through the error-state Jacobian linearized at the current estimate.
  QekfState propagate(const QekfState& state, const ImuSample& imu, double dt) const;

  /// Continuous error-state dynamics Jacobian F.
  Eigen::MatrixXd error_dynamics(const QekfState& state, const ImuSample& imu) const;

  /// FK position update, residual fk_p - R^T (d - p), multiplicative
  /// quaternion correction.
  QekfState update_kinematics(const QekfState& state,
                              const std::vector<KinematicMeasurement>& meas) const;

  QekfState add_contact(const QekfState& state, const KinematicMeasurement& meas) const;
  QekfState remove_contact(const QekfState& state, int id) const;

 private:
  Eigen::MatrixXd process_noise_cont(const QekfState& state) const;

  Options opt_;
};

}  // namespace inekf

#endif  // INEKF_QEKF_H

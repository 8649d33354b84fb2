// State, measurement, and noise types shared by the filters.

#ifndef INEKF_STATE_H
#define INEKF_STATE_H

#include <Eigen/Core>
#include <stdexcept>
#include <vector>

#include "inekf/lie.h"

namespace inekf {

/// One tracked contact point: id plus world-frame position.
struct ContactPoint {
  int id = 0;
  Vec3 position = Vec3::Zero();
};

/// World-frame navigation state plus the tracked contact set.
/// Contacts are kept in insertion order; that order fixes the block layout
/// of covariance and tangent vectors.
struct NavState {
  Rot3 orientation = Mat3::Identity();  // world<-body
  Vec3 velocity = Vec3::Zero();         // m/s, world
  Vec3 position = Vec3::Zero();         // m, world
  std::vector<ContactPoint> contacts;

  int num_contacts() const { return static_cast<int>(contacts.size()); }

  /// Index of a contact id in the block layout, or -1.
  int contact_index(int id) const {
    for (size_t i = 0; i < contacts.size(); ++i)
      if (contacts[i].id == id) return static_cast<int>(i);
    return -1;
  }

  /// Embeds the state as an SE_{N+2}(3) element with columns (v, p, d_1..d_N).
  GroupElement to_group() const {
    std::vector<Vec3> cols;
    cols.reserve(2 + contacts.size());
    cols.push_back(velocity);
    cols.push_back(position);
    for (const auto& c : contacts) cols.push_back(c.position);
    return GroupElement(orientation, std::move(cols));
  }

  /// Inverse of to_group() given the contact ids.
  static NavState from_group(const GroupElement& g, const std::vector<int>& ids) {
    if (g.num_columns() != static_cast<int>(ids.size()) + 2)
      throw std::invalid_argument("from_group: column/id count mismatch");
    NavState s;
    s.orientation = g.rotation();
    s.velocity = g.column(0);
    s.position = g.column(1);
    s.contacts.resize(ids.size());
    for (size_t i = 0; i < ids.size(); ++i)
      s.contacts[i] = {ids[i], g.column(2 + static_cast<int>(i))};
    return s;
  }
};

/// Additive IMU biases, slowly varying.
struct ImuBias {
  Vec3 gyro = Vec3::Zero();   // rad/s
  Vec3 accel = Vec3::Zero();  // m/s^2

  Eigen::Matrix<double, 6, 1> vector() const {
    Eigen::Matrix<double, 6, 1> v;
    v << gyro, accel;
    return v;
  }
};

/// Full filter state: navigation mean, bias parameters, and the covariance
/// of the error (xi_R, xi_v, xi_p, xi_d1..dN, zeta_g, zeta_a).
struct FilterState {
  NavState nav;
  ImuBias bias;
  Eigen::MatrixXd cov;  // (9 + 3N + 6) square

  /// Error-state dimension for N tracked contacts.
  int dim() const { return 9 + 3 * nav.num_contacts() + 6; }

  /// Block offset of the bias part of the error state.
  int bias_offset() const { return 9 + 3 * nav.num_contacts(); }
};

/// Raw IMU reading, body frame.
struct ImuSample {
  Vec3 gyro = Vec3::Zero();   // rad/s, bias + noise included
  Vec3 accel = Vec3::Zero();  // m/s^2 specific force, bias + noise included
  double timestamp = 0.0;     // s
};

/// One contact's forward-kinematics measurement derived from joint encoders.
struct KinematicMeasurement {
  int contact_id = 0;
  Vec3 fk_position = Vec3::Zero();         // body frame
  Rot3 fk_rotation = Mat3::Identity();     // body<-contact
  Eigen::MatrixXd jacobian;                // 3 x M geometric Jacobian
  Eigen::MatrixXd encoder_cov;             // M x M, symmetric PSD
};

/// Isotropic noise standard deviations (Table-style, one scalar per channel).
struct NoiseParams {
  double gyro_std = 0.002;          // rad/s
  double accel_std = 0.04;          // m/s^2
  double gyro_bias_std = 0.001;     // rad/s (random walk)
  double accel_bias_std = 0.001;    // m/s^2 (random walk)
  double contact_vel_std = 0.05;    // m/s
  double encoder_std = 1.0 * M_PI / 180.0;  // rad
};

/// Configuration shared by both filters.
struct EstimatorOptions {
  Vec3 gravity{0.0, 0.0, -9.81};
  /// When false, the bias error blocks are frozen: no bias columns in the
  /// error dynamics, no bias process noise, and the update gain leaves the
  /// bias estimate untouched. The bias mean still calibrates the inputs.
  bool estimate_bias = true;
  NoiseParams noise;
};

}  // namespace inekf

#endif  // INEKF_STATE_H

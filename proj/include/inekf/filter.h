// Contact-aided right-invariant EKF.
//
// The state lives on SE_{N+2}(3) x R^6: orientation, velocity, position and
// N contact points as the group part, IMU biases as a vector parameter. The
// covariance is over the right-invariant error
//   (xi_R, xi_v, xi_p, xi_d1..dN, zeta_g, zeta_a).
//
// Propagation integrates the strapdown equations and the Riccati equation of
// the invariant error; corrections come from forward-kinematics contact
// position measurements, which have right-invariant observation structure,
// so the innovation depends only on the invariant error. Contacts are added
// and removed on the fly by covariance augmentation/marginalization.

#ifndef INEKF_FILTER_H
#define INEKF_FILTER_H

#include <string>
#include <vector>

#include "inekf/state.h"

namespace inekf {

class ContactInekf {
 public:
  using Options = EstimatorOptions;

  ContactInekf() : ContactInekf(Options{}) {}
  explicit ContactInekf(Options options) : opt_(std::move(options)) {}

  const Options& options() const { return opt_; }

  /// IMU propagation over dt: strapdown mean step plus
  /// P+ = Phi P Phi^T + Qk with Phi = expm(A dt) and Qk = Phi Qt Phi^T dt.
  /// Throws std::invalid_argument on dt <= 0 or non-finite input.
  FilterState propagate(const FilterState& state, const ImuSample& imu,
                        double dt) const;

  /// Continuous-time error dynamics matrix A for the current state.
  /// Without bias estimation this is state-independent (blocks skew(g) and I
  /// only); with it, the bias columns -R, -skew(v)R, -skew(p)R, -skew(d_i)R
  /// appear.
  Eigen::MatrixXd build_A(const FilterState& state) const;

  /// Discrete state-transition matrix expm(A dt). Uses the degree-3
  /// nilpotent closed form when A is bias-free, scaling-and-squaring Pade
  /// otherwise.
  Eigen::MatrixXd transition_matrix(const FilterState& state, double dt) const;

  /// Joint update from the forward-kinematics measurements of one or more
  /// currently tracked contacts (single stacked gain computation).
  /// Throws std::invalid_argument for an untracked contact id and
  /// std::runtime_error when the innovation covariance is ill-conditioned.
  FilterState update_kinematics(const FilterState& state,
                                const std::vector<KinematicMeasurement>& meas) const;

  /// Starts tracking meas.contact_id: mean d = p + R fk_p, covariance
  /// augmented by the linear map that copies the position error rows plus
  /// encoder noise through R J_v. Throws on duplicate id.
  FilterState add_contact(const FilterState& state,
                          const KinematicMeasurement& meas) const;

  /// Marginalizes a tracked contact: its rows and columns are deleted,
  /// every remaining entry is preserved bit-identically. Throws on unknown id.
  FilterState remove_contact(const FilterState& state, int id) const;

 private:
  Eigen::MatrixXd process_noise_cont(const FilterState& state) const;

  Options opt_;
};

/// Deterministic part of the continuous dynamics in the matrix embedding:
/// d/dt X = [R skew(w), R a + g, v, 0, ...; 0]. Inputs are bias-corrected.
Eigen::MatrixXd continuous_dynamics(const GroupElement& x, const Vec3& gyro,
                                    const Vec3& accel, const Vec3& gravity);

/// Bias-free error dynamics matrix A for the canonical single-contact
/// configuration (12-dim error state).
Eigen::MatrixXd single_contact_error_dynamics(const Vec3& gravity);

/// Discrete observability matrix [H; H Phi; ...; H Phi^(n-1)] of the
/// single-contact bias-free filter.
Eigen::MatrixXd observability_matrix(int n_steps, double dt,
                                     const Vec3& gravity = Vec3(0, 0, -9.81));

/// Dimension of the unobservable subspace of the single-contact bias-free
/// filter (numerical rank deficiency of the observability matrix).
int unobservable_dim(int n_steps = 10, double dt = 0.01,
                     const Vec3& gravity = Vec3(0, 0, -9.81));

/// Right-invariant error log(estimate * truth^-1) as a tangent vector.
/// Requires identical contact id sets; truth columns are aligned to the
/// estimate's contact order. Throws std::invalid_argument on mismatch.
TangentVector right_invariant_error(const NavState& truth, const NavState& estimate);

/// Pure formatting helper: state mean as CSV fields
/// roll,pitch,yaw [deg], v, p, bg, ba with 9 significant digits.
std::string csv_fields(const FilterState& state);

}  // namespace inekf

#endif  // INEKF_FILTER_H

// Matrix Lie group operations for SO(3) and SE_K(3).
//
// SE_K(3) generalizes SE(3) to a rotation plus K translation-like columns
// (velocity, position, contact points, ...). An element embeds as the
// (3+K)x(3+K) block matrix
//
//   [ R  c_1 ... c_K ]
//   [ 0      I_K     ]
//
// Tangent vectors are ordered (xi_R, xi_c1, ..., xi_cK), dimension 3(K+1).

#ifndef INEKF_LIE_H
#define INEKF_LIE_H

#include <Eigen/Core>
#include <vector>

namespace inekf {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
/// 3x3 orthonormal matrix with det +1 (world<-body convention throughout).
using Rot3 = Eigen::Matrix3d;
/// Log-space error/increment vector, ordered (xi_R, xi_c1, ..., xi_cK).
using TangentVector = Eigen::VectorXd;

/// Angle threshold below which exp/log/Jacobian coefficients switch to
/// their 2nd-order Taylor expansions.
inline constexpr double kSmallAngle = 1e-8;

/// Skew-symmetric matrix such that skew(v) * w = v x w.
Mat3 skew(const Vec3& v);

/// SO(3) exponential map (Rodrigues form).
Rot3 so3_exp(const Vec3& w);

/// SO(3) logarithm; returns the principal axis-angle vector, norm <= pi.
/// At angle pi the axis sign is chosen so its first nonzero component is
/// positive.
Vec3 so3_log(const Rot3& R);

/// Left Jacobian of SO(3):
///   J_l(w) = I + (1-cos t)/t^2 skew(w) + (t-sin t)/t^3 skew(w)^2,  t = |w|.
Mat3 so3_left_jacobian(const Vec3& w);

/// Inverse of the SO(3) left Jacobian (closed form).
Mat3 so3_left_jacobian_inverse(const Vec3& w);

/// True if R is orthonormal with det +1 within tol (Frobenius).
bool is_rotation(const Mat3& R, double tol = 1e-9);

/// Element of SE_K(3): a rotation plus K >= 1 translation-like columns.
class GroupElement {
 public:
  /// Identity element with K columns.
  explicit GroupElement(int num_columns);
  GroupElement(const Rot3& rotation, std::vector<Vec3> columns);

  static GroupElement identity(int num_columns) { return GroupElement(num_columns); }

  int num_columns() const { return static_cast<int>(columns_.size()); }
  /// Tangent-space dimension, 3(K+1).
  int dof() const { return 3 * (num_columns() + 1); }

  const Rot3& rotation() const { return rotation_; }
  const Vec3& column(int i) const { return columns_[i]; }
  const std::vector<Vec3>& columns() const { return columns_; }

  /// Dense (3+K)x(3+K) matrix embedding.
  Eigen::MatrixXd matrix() const;

 private:
  Rot3 rotation_;
  std::vector<Vec3> columns_;
};

/// Group product. Columns compose as a.R * b.c_i + a.c_i.
GroupElement compose(const GroupElement& a, const GroupElement& b);
inline GroupElement operator*(const GroupElement& a, const GroupElement& b) {
  return compose(a, b);
}

/// Group inverse: rotation R^T, columns -R^T c_i.
GroupElement inverse(const GroupElement& x);

/// Exponential map of SE_K(3). Closed form via the SO(3) left Jacobian:
/// rotation = so3_exp(xi_R), column_i = J_l(xi_R) xi_ci.
/// K is inferred from dim(xi) = 3(K+1); throws std::invalid_argument on a
/// dimension that is not a multiple of 3 at least 6.
GroupElement group_exp(const TangentVector& xi);

/// Logarithm of SE_K(3), inverse of group_exp.
TangentVector group_log(const GroupElement& x);

/// Vector -> Lie algebra map: top-left block skew(xi_R), column j equal to
/// xi_cj, bottom K rows zero.
Eigen::MatrixXd lift(const TangentVector& xi);

/// Reads a tangent vector back out of a Lie-algebra matrix.
TangentVector unlift(const Eigen::MatrixXd& m);

/// Matrix adjoint Ad_X, size 3(K+1). Block diagonal R with first block
/// column skew(c_i) R; satisfies X lift(xi) X^-1 = lift(Ad_X xi).
Eigen::MatrixXd adjoint(const GroupElement& x);

/// Euler angles (roll, pitch, yaw), convention R = Rz(yaw) Ry(pitch) Rx(roll).
Vec3 rpy_from_rotation(const Rot3& r);
Rot3 rotation_from_rpy(const Vec3& rpy);

}  // namespace inekf

#endif  // INEKF_LIE_H

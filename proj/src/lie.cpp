#include "inekf/lie.h"

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>

namespace inekf {

Mat3 skew(const Vec3& v) {
  Mat3 s;
  // clang-format off
  s <<     0, -v.z(),  v.y(),
       v.z(),      0, -v.x(),
      -v.y(),  v.x(),      0;
  // clang-format on
  return s;
}

namespace {
// (1 - cos t)/t^2 as 2 sin^2(t/2)/t^2: free of the 1-cos cancellation that
// would otherwise corrupt coefficients of the linear skew term for small t.
double one_minus_cos_over_t2(double theta, double theta2) {
  const double s = std::sin(0.5 * theta);
  return 2.0 * s * s / theta2;
}
}  // namespace

Rot3 so3_exp(const Vec3& w) {
  const double theta2 = w.squaredNorm();
  const Mat3 W = skew(w);
  double a, b;  // R = I + a W + b W^2
  if (theta2 < kSmallAngle * kSmallAngle) {
    a = 1.0 - theta2 / 6.0;
    b = 0.5 - theta2 / 24.0;
  } else {
    const double theta = std::sqrt(theta2);
    a = std::sin(theta) / theta;
    b = one_minus_cos_over_t2(theta, theta2);
  }
  return Mat3::Identity() + a * W + b * W * W;
}

Vec3 so3_log(const Rot3& R) {
  // vee(R - R^T)/2 = sin(theta) * axis
  const Vec3 sin_axis(0.5 * (R(2, 1) - R(1, 2)),
                      0.5 * (R(0, 2) - R(2, 0)),
                      0.5 * (R(1, 0) - R(0, 1)));
  const double cos_theta = std::min(1.0, std::max(-1.0, 0.5 * (R.trace() - 1.0)));
  const double theta = std::acos(cos_theta);

  if (theta < kSmallAngle) {
    return sin_axis;  // theta/sin(theta) -> 1
  }
  if (theta < M_PI - 1e-4) {
    return (theta / std::sin(theta)) * sin_axis;
  }

  // Near pi the antisymmetric part degrades; recover the axis from the
  // symmetric part instead: R + R^T = 2I + 2(1-cos)(aa^T - I).
  const Mat3 outer = (0.5 * (R + R.transpose()) - cos_theta * Mat3::Identity()) /
                     (1.0 - cos_theta);
  int k = 0;
  outer.diagonal().maxCoeff(&k);
  Vec3 axis = outer.col(k) / std::sqrt(outer(k, k));
  axis.normalize();

  const double sin_norm = sin_axis.norm();
  if (sin_norm > 1e-10) {
    // Continuity with the theta < pi branch.
    if (axis.dot(sin_axis) < 0) axis = -axis;
  } else {
    // Exactly pi: sign convention, first nonzero component positive.
    for (int i = 0; i < 3; ++i) {
      if (std::abs(axis[i]) > 1e-12) {
        if (axis[i] < 0) axis = -axis;
        break;
      }
    }
  }
  return theta * axis;
}

Mat3 so3_left_jacobian(const Vec3& w) {
  const double theta2 = w.squaredNorm();
  const Mat3 W = skew(w);
  double a, b;  // J_l = I + a W + b W^2
  if (theta2 < kSmallAngle * kSmallAngle) {
    a = 0.5 - theta2 / 24.0;
    b = 1.0 / 6.0 - theta2 / 120.0;
  } else {
    const double theta = std::sqrt(theta2);
    a = one_minus_cos_over_t2(theta, theta2);
    b = (theta - std::sin(theta)) / (theta2 * theta);
  }
  return Mat3::Identity() + a * W + b * W * W;
}

Mat3 so3_left_jacobian_inverse(const Vec3& w) {
  const double theta2 = w.squaredNorm();
  const Mat3 W = skew(w);
  double c;  // J_l^-1 = I - W/2 + c W^2
  if (theta2 < kSmallAngle * kSmallAngle) {
    c = 1.0 / 12.0 + theta2 / 720.0;
  } else {
    // 1/t^2 - (1+cos t)/(2 t sin t) rewritten with half angles; the residual
    // 1/t^2 cancellation only ever multiplies W^2 ~ t^2 and stays O(eps).
    const double theta = std::sqrt(theta2);
    c = 1.0 / theta2 -
        std::cos(0.5 * theta) / (2.0 * theta * std::sin(0.5 * theta));
  }
  return Mat3::Identity() - 0.5 * W + c * W * W;
}

bool is_rotation(const Mat3& R, double tol) {
  return (R.transpose() * R - Mat3::Identity()).norm() < tol &&
         std::abs(R.determinant() - 1.0) < tol;
}

GroupElement::GroupElement(int num_columns)
    : rotation_(Mat3::Identity()), columns_(static_cast<size_t>(num_columns), Vec3::Zero()) {
  if (num_columns < 1) throw std::invalid_argument("GroupElement: need K >= 1 columns");
}

GroupElement::GroupElement(const Rot3& rotation, std::vector<Vec3> columns)
    : rotation_(rotation), columns_(std::move(columns)) {
  if (columns_.empty()) throw std::invalid_argument("GroupElement: need K >= 1 columns");
}

Eigen::MatrixXd GroupElement::matrix() const {
  const int k = num_columns();
  Eigen::MatrixXd m = Eigen::MatrixXd::Identity(3 + k, 3 + k);
  m.topLeftCorner<3, 3>() = rotation_;
  for (int i = 0; i < k; ++i) m.block<3, 1>(0, 3 + i) = columns_[i];
  return m;
}

GroupElement compose(const GroupElement& a, const GroupElement& b) {
  if (a.num_columns() != b.num_columns())
    throw std::invalid_argument("compose: column count mismatch");
  std::vector<Vec3> cols(a.num_columns());
  for (int i = 0; i < a.num_columns(); ++i)
    cols[i] = a.rotation() * b.column(i) + a.column(i);
  return GroupElement(a.rotation() * b.rotation(), std::move(cols));
}

GroupElement inverse(const GroupElement& x) {
  const Rot3 rt = x.rotation().transpose();
  std::vector<Vec3> cols(x.num_columns());
  for (int i = 0; i < x.num_columns(); ++i) cols[i] = -(rt * x.column(i));
  return GroupElement(rt, std::move(cols));
}

namespace {
int columns_from_dim(Eigen::Index dim) {
  if (dim < 6 || dim % 3 != 0)
    throw std::invalid_argument("tangent vector dimension must be 3(K+1), K >= 1");
  return static_cast<int>(dim / 3) - 1;
}
}  // namespace

GroupElement group_exp(const TangentVector& xi) {
  const int k = columns_from_dim(xi.size());
  const Vec3 xi_r = xi.head<3>();
  const Mat3 jl = so3_left_jacobian(xi_r);
  std::vector<Vec3> cols(k);
  for (int i = 0; i < k; ++i) cols[i] = jl * xi.segment<3>(3 + 3 * i);
  return GroupElement(so3_exp(xi_r), std::move(cols));
}

TangentVector group_log(const GroupElement& x) {
  const int k = x.num_columns();
  TangentVector xi(3 * (k + 1));
  const Vec3 xi_r = so3_log(x.rotation());
  xi.head<3>() = xi_r;
  const Mat3 jl_inv = so3_left_jacobian_inverse(xi_r);
  for (int i = 0; i < k; ++i) xi.segment<3>(3 + 3 * i) = jl_inv * x.column(i);
  return xi;
}

Eigen::MatrixXd lift(const TangentVector& xi) {
  const int k = columns_from_dim(xi.size());
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(3 + k, 3 + k);
  m.topLeftCorner<3, 3>() = skew(xi.head<3>());
  for (int i = 0; i < k; ++i) m.block<3, 1>(0, 3 + i) = xi.segment<3>(3 + 3 * i);
  return m;
}

TangentVector unlift(const Eigen::MatrixXd& m) {
  if (m.rows() != m.cols() || m.rows() < 4)
    throw std::invalid_argument("unlift: expected square (3+K)x(3+K) matrix, K >= 1");
  const int k = static_cast<int>(m.rows()) - 3;
  TangentVector xi(3 * (k + 1));
  xi[0] = m(2, 1);
  xi[1] = m(0, 2);
  xi[2] = m(1, 0);
  for (int i = 0; i < k; ++i) xi.segment<3>(3 + 3 * i) = m.block<3, 1>(0, 3 + i);
  return xi;
}

Vec3 rpy_from_rotation(const Rot3& r) {
  const double pitch = -std::asin(std::min(1.0, std::max(-1.0, r(2, 0))));
  return Vec3(std::atan2(r(2, 1), r(2, 2)), pitch, std::atan2(r(1, 0), r(0, 0)));
}

Rot3 rotation_from_rpy(const Vec3& rpy) {
  return so3_exp(Vec3(0, 0, rpy.z())) * so3_exp(Vec3(0, rpy.y(), 0)) *
         so3_exp(Vec3(rpy.x(), 0, 0));
}

Eigen::MatrixXd adjoint(const GroupElement& x) {
  const int k = x.num_columns();
  const int n = 3 * (k + 1);
  Eigen::MatrixXd ad = Eigen::MatrixXd::Zero(n, n);
  ad.topLeftCorner<3, 3>() = x.rotation();
  for (int i = 0; i < k; ++i) {
    ad.block<3, 3>(3 + 3 * i, 3 + 3 * i) = x.rotation();
    ad.block<3, 3>(3 + 3 * i, 0) = skew(x.column(i)) * x.rotation();
  }
  return ad;
}

}  // namespace inekf

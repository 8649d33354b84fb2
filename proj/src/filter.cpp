#include "inekf/filter.h"

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <utility>

#include "inekf/strapdown.h"

namespace inekf {

namespace {

std::vector<int> contact_ids(const NavState& nav) {
  std::vector<int> ids;
  ids.reserve(nav.contacts.size());
  for (const auto& c : nav.contacts) ids.push_back(c.id);
  return ids;
}

void check_measurement_shape(const KinematicMeasurement& meas) {
  if (meas.jacobian.rows() != 3)
    throw std::invalid_argument("kinematic measurement: jacobian must have 3 rows");
  if (meas.encoder_cov.rows() != meas.encoder_cov.cols() ||
      meas.encoder_cov.rows() != meas.jacobian.cols())
    throw std::invalid_argument("kinematic measurement: encoder_cov must be MxM");
}

}  // namespace

FilterState ContactInekf::propagate(const FilterState& state, const ImuSample& imu,
                                    double dt) const {
  if (!(dt > 0.0)) throw std::invalid_argument("propagate: dt must be positive");
  if (!imu.gyro.allFinite() || !imu.accel.allFinite() || !std::isfinite(dt))
    throw std::invalid_argument("propagate: non-finite input");

  FilterState next = state;
  const StrapdownPose pose = strapdown_step(
      state.nav.orientation, state.nav.velocity, state.nav.position, imu.gyro,
      imu.accel, state.bias.gyro, state.bias.accel, opt_.gravity, dt);
  next.nav.orientation = pose.orientation;
  next.nav.velocity = pose.velocity;
  next.nav.position = pose.position;
  // Contacts and biases are constant through propagation.

  const Eigen::MatrixXd phi = transition_matrix(state, dt);
  const Eigen::MatrixXd qk = phi * process_noise_cont(state) * phi.transpose() * dt;
  next.cov = phi * state.cov * phi.transpose() + qk;
  return next;
}

Eigen::MatrixXd ContactInekf::build_A(const FilterState& state) const {
  const int n = state.nav.num_contacts();
  const int d = state.dim();
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(d, d);
  a.block<3, 3>(3, 0) = skew(opt_.gravity);
  a.block<3, 3>(6, 3) = Mat3::Identity();
  if (opt_.estimate_bias) {
    const int bo = state.bias_offset();
    const Rot3& r = state.nav.orientation;
    a.block<3, 3>(0, bo) = -r;
    a.block<3, 3>(3, bo) = -skew(state.nav.velocity) * r;
    a.block<3, 3>(3, bo + 3) = -r;
    a.block<3, 3>(6, bo) = -skew(state.nav.position) * r;
    for (int i = 0; i < n; ++i)
      a.block<3, 3>(9 + 3 * i, bo) = -skew(state.nav.contacts[i].position) * r;
  }
  return a;
}

Eigen::MatrixXd ContactInekf::transition_matrix(const FilterState& state,
                                                double dt) const {
  const Eigen::MatrixXd a = build_A(state);
  if (!opt_.estimate_bias) {
    // Bias-free A is nilpotent of degree 3; the exponential is polynomial.
    const Eigen::MatrixXd adt = a * dt;
    return Eigen::MatrixXd::Identity(a.rows(), a.cols()) + adt + 0.5 * adt * adt;
  }
  return (a * dt).exp();
}

Eigen::MatrixXd ContactInekf::process_noise_cont(const FilterState& state) const {
  const int n = state.nav.num_contacts();
  const int d = state.dim();
  const int xdim = 9 + 3 * n;
  const NoiseParams& ns = opt_.noise;

  Eigen::MatrixXd cov_w = Eigen::MatrixXd::Zero(d, d);
  cov_w.block<3, 3>(0, 0) = ns.gyro_std * ns.gyro_std * Mat3::Identity();
  cov_w.block<3, 3>(3, 3) = ns.accel_std * ns.accel_std * Mat3::Identity();
  // Position rows carry no direct noise. Contact rows: fk_R Cov(w^v) fk_R^T,
  // which for the isotropic Cov(w^v) used here is exactly contact_vel_std^2 I
  // regardless of the contact frame orientation.
  for (int i = 0; i < n; ++i)
    cov_w.block<3, 3>(9 + 3 * i, 9 + 3 * i) =
        ns.contact_vel_std * ns.contact_vel_std * Mat3::Identity();
  if (opt_.estimate_bias) {
    cov_w.block<3, 3>(xdim, xdim) =
        ns.gyro_bias_std * ns.gyro_bias_std * Mat3::Identity();
    cov_w.block<3, 3>(xdim + 3, xdim + 3) =
        ns.accel_bias_std * ns.accel_bias_std * Mat3::Identity();
  }

  Eigen::MatrixXd w = Eigen::MatrixXd::Identity(d, d);
  w.topLeftCorner(xdim, xdim) = adjoint(state.nav.to_group());
  return w * cov_w * w.transpose();
}

FilterState ContactInekf::update_kinematics(
    const FilterState& state, const std::vector<KinematicMeasurement>& meas) const {
  if (meas.empty()) return state;

  const int n = state.nav.num_contacts();
  const int d = state.dim();
  const int m = static_cast<int>(meas.size());
  const Rot3& r = state.nav.orientation;

  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(3 * m, d);
  Eigen::MatrixXd nhat = Eigen::MatrixXd::Zero(3 * m, 3 * m);
  Eigen::VectorXd innov(3 * m);
  for (int j = 0; j < m; ++j) {
    const int idx = state.nav.contact_index(meas[j].contact_id);
    if (idx < 0)
      throw std::invalid_argument("update_kinematics: contact id " +
                                  std::to_string(meas[j].contact_id) +
                                  " is not tracked");
    check_measurement_shape(meas[j]);
    const int row = 3 * j;
    h.block<3, 3>(row, 6) = -Mat3::Identity();
    h.block<3, 3>(row, 9 + 3 * idx) = Mat3::Identity();
    nhat.block<3, 3>(row, row) =
        r * meas[j].jacobian * meas[j].encoder_cov * meas[j].jacobian.transpose() *
        r.transpose();
    innov.segment<3>(row) = r * meas[j].fk_position + state.nav.position -
                            state.nav.contacts[idx].position;
  }

  Eigen::MatrixXd s = h * state.cov * h.transpose() + nhat;
  s = 0.5 * (s + s.transpose());
  {
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s);
    const double lmin = es.eigenvalues().minCoeff();
    const double lmax = es.eigenvalues().maxCoeff();
    if (!(lmin > 0.0) || lmax / lmin > 1e12)
      throw std::runtime_error("update_kinematics: innovation covariance ill-conditioned");
  }

  // K = P H^T S^-1, via factorization of S.
  const Eigen::MatrixXd gain = s.ldlt().solve(h * state.cov).transpose();
  const Eigen::VectorXd delta = gain * innov;

  FilterState next = state;
  const GroupElement corrected =
      compose(group_exp(delta.head(9 + 3 * n)), state.nav.to_group());
  next.nav = NavState::from_group(corrected, contact_ids(state.nav));
  next.bias.gyro += delta.segment<3>(state.bias_offset());
  next.bias.accel += delta.segment<3>(state.bias_offset() + 3);

  const Eigen::MatrixXd pnew =
      (Eigen::MatrixXd::Identity(d, d) - gain * h) * state.cov;
  next.cov = 0.5 * (pnew + pnew.transpose());
  return next;
}

FilterState ContactInekf::add_contact(const FilterState& state,
                                      const KinematicMeasurement& meas) const {
  if (state.nav.contact_index(meas.contact_id) >= 0)
    throw std::invalid_argument("add_contact: contact id " +
                                std::to_string(meas.contact_id) +
                                " already tracked");
  check_measurement_shape(meas);

  const int d = state.dim();
  const int ins = state.bias_offset();  // new block goes before the biases
  const int mcols = static_cast<int>(meas.jacobian.cols());

  // New error rows copy the position rows; biases shift through unchanged.
  Eigen::MatrixXd fa = Eigen::MatrixXd::Zero(d + 3, d);
  fa.topLeftCorner(ins, ins).setIdentity();
  fa.block<3, 3>(ins, 6).setIdentity();
  fa.block<6, 6>(ins + 3, ins).setIdentity();

  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(d + 3, mcols);
  g.block(ins, 0, 3, mcols) = state.nav.orientation * meas.jacobian;

  FilterState next = state;
  next.nav.contacts.push_back(
      {meas.contact_id,
       state.nav.position + state.nav.orientation * meas.fk_position});
  next.cov = fa * state.cov * fa.transpose() +
             g * meas.encoder_cov * g.transpose();
  return next;
}

FilterState ContactInekf::remove_contact(const FilterState& state, int id) const {
  const int idx = state.nav.contact_index(id);
  if (idx < 0)
    throw std::invalid_argument("remove_contact: contact id " + std::to_string(id) +
                                " is not tracked");
  const int d = state.dim();
  const int off = 9 + 3 * idx;
  const int tail = d - off - 3;

  // Row/column deletion; retained blocks are copied, not recomputed.
  Eigen::MatrixXd pnew(d - 3, d - 3);
  pnew.topLeftCorner(off, off) = state.cov.topLeftCorner(off, off);
  pnew.topRightCorner(off, tail) = state.cov.topRightCorner(off, tail);
  pnew.bottomLeftCorner(tail, off) = state.cov.bottomLeftCorner(tail, off);
  pnew.bottomRightCorner(tail, tail) = state.cov.bottomRightCorner(tail, tail);

  FilterState next = state;
  next.nav.contacts.erase(next.nav.contacts.begin() + idx);
  next.cov = std::move(pnew);
  return next;
}

Eigen::MatrixXd continuous_dynamics(const GroupElement& x, const Vec3& gyro,
                                    const Vec3& accel, const Vec3& gravity) {
  if (x.num_columns() < 2)
    throw std::invalid_argument("continuous_dynamics: need at least (v, p) columns");
  const int k = x.num_columns();
  Eigen::MatrixXd f = Eigen::MatrixXd::Zero(3 + k, 3 + k);
  f.topLeftCorner<3, 3>() = x.rotation() * skew(gyro);
  f.block<3, 1>(0, 3) = x.rotation() * accel + gravity;
  f.block<3, 1>(0, 4) = x.column(0);
  // Contact columns are stationary.
  return f;
}

Eigen::MatrixXd single_contact_error_dynamics(const Vec3& gravity) {
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(12, 12);
  a.block<3, 3>(3, 0) = skew(gravity);
  a.block<3, 3>(6, 3) = Mat3::Identity();
  return a;
}

Eigen::MatrixXd observability_matrix(int n_steps, double dt, const Vec3& gravity) {
  const Eigen::MatrixXd a = single_contact_error_dynamics(gravity);
  const Eigen::MatrixXd adt = a * dt;
  const Eigen::MatrixXd phi =
      Eigen::MatrixXd::Identity(12, 12) + adt + 0.5 * adt * adt;  // A^3 = 0

  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(3, 12);
  h.block<3, 3>(0, 6) = -Mat3::Identity();
  h.block<3, 3>(0, 9) = Mat3::Identity();

  Eigen::MatrixXd obs(3 * n_steps, 12);
  Eigen::MatrixXd phi_k = Eigen::MatrixXd::Identity(12, 12);
  for (int k = 0; k < n_steps; ++k) {
    obs.middleRows<3>(3 * k) = h * phi_k;
    phi_k = phi_k * phi;
  }
  return obs;
}

int unobservable_dim(int n_steps, double dt, const Vec3& gravity) {
  const Eigen::MatrixXd obs = observability_matrix(n_steps, dt, gravity);
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(obs);
  const double smax = svd.singularValues().maxCoeff();
  int rank = 0;
  for (int i = 0; i < svd.singularValues().size(); ++i)
    if (svd.singularValues()[i] > 1e-8 * smax) ++rank;
  return 12 - rank;
}

TangentVector right_invariant_error(const NavState& truth, const NavState& estimate) {
  if (truth.num_contacts() != estimate.num_contacts())
    throw std::invalid_argument("right_invariant_error: contact sets differ");
  NavState aligned;
  aligned.orientation = truth.orientation;
  aligned.velocity = truth.velocity;
  aligned.position = truth.position;
  aligned.contacts.reserve(truth.contacts.size());
  for (const auto& c : estimate.contacts) {
    const int idx = truth.contact_index(c.id);
    if (idx < 0)
      throw std::invalid_argument("right_invariant_error: contact sets differ");
    aligned.contacts.push_back(truth.contacts[idx]);
  }
  return group_log(compose(estimate.to_group(), inverse(aligned.to_group())));
}

std::string csv_fields(const FilterState& state) {
  const Vec3 rpy = rpy_from_rotation(state.nav.orientation) * 180.0 / M_PI;
  double vals[15] = {rpy.x(),
                     rpy.y(),
                     rpy.z(),
                     state.nav.velocity.x(),
                     state.nav.velocity.y(),
                     state.nav.velocity.z(),
                     state.nav.position.x(),
                     state.nav.position.y(),
                     state.nav.position.z(),
                     state.bias.gyro.x(),
                     state.bias.gyro.y(),
                     state.bias.gyro.z(),
                     state.bias.accel.x(),
                     state.bias.accel.y(),
                     state.bias.accel.z()};
  std::string out;
  char buf[40];
  for (int i = 0; i < 15; ++i) {
    std::snprintf(buf, sizeof(buf), "%.9g", vals[i]);
    if (i) out += ',';
    out += buf;
  }
  return out;
}

}  // namespace inekf

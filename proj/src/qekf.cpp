#include "inekf/qekf.h"

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <stdexcept>

#include "inekf/strapdown.h"

namespace inekf {

namespace {

void check_measurement_shape(const KinematicMeasurement& meas) {
  if (meas.jacobian.rows() != 3)
    throw std::invalid_argument("kinematic measurement: jacobian must have 3 rows");
  if (meas.encoder_cov.rows() != meas.encoder_cov.cols() ||
      meas.encoder_cov.rows() != meas.jacobian.cols())
    throw std::invalid_argument("kinematic measurement: encoder_cov must be MxM");
}

}  // namespace

QekfState QuaternionEkf::propagate(const QekfState& state, const ImuSample& imu,
                                   double dt) const {
  if (!(dt > 0.0)) throw std::invalid_argument("propagate: dt must be positive");
  if (!imu.gyro.allFinite() || !imu.accel.allFinite() || !std::isfinite(dt))
    throw std::invalid_argument("propagate: non-finite input");

  QekfState next = state;
  const Rot3 r = state.rotation();
  const StrapdownPose pose =
      strapdown_step(r, state.velocity, state.position, imu.gyro, imu.accel,
                     state.bias.gyro, state.bias.accel, opt_.gravity, dt);
  next.velocity = pose.velocity;
  next.position = pose.position;
  next.orientation =
      (state.orientation *
       Eigen::Quaterniond(so3_exp((imu.gyro - state.bias.gyro) * dt)))
          .normalized();

  const Eigen::MatrixXd f = error_dynamics(state, imu);
  const Eigen::MatrixXd phi = (f * dt).exp();
  const Eigen::MatrixXd qk =
      phi * process_noise_cont(state) * phi.transpose() * dt;
  next.cov = phi * state.cov * phi.transpose() + qk;
  return next;
}

Eigen::MatrixXd QuaternionEkf::error_dynamics(const QekfState& state,
                                              const ImuSample& imu) const {
  const int d = state.dim();
  const Rot3 r = state.rotation();
  Eigen::MatrixXd f = Eigen::MatrixXd::Zero(d, d);
  f.block<3, 3>(0, 0) = -skew(imu.gyro - state.bias.gyro);
  f.block<3, 3>(3, 0) = -r * skew(imu.accel - state.bias.accel);
  f.block<3, 3>(6, 3) = Mat3::Identity();
  if (opt_.estimate_bias) {
    const int bo = state.bias_offset();
    f.block<3, 3>(0, bo) = -Mat3::Identity();
    f.block<3, 3>(3, bo + 3) = -r;
  }
  return f;
}

Eigen::MatrixXd QuaternionEkf::process_noise_cont(const QekfState& state) const {
  const int d = state.dim();
  const NoiseParams& ns = opt_.noise;
  const Rot3 r = state.rotation();
  Eigen::MatrixXd q = Eigen::MatrixXd::Zero(d, d);
  q.block<3, 3>(0, 0) = ns.gyro_std * ns.gyro_std * Mat3::Identity();
  q.block<3, 3>(3, 3) =
      r * (ns.accel_std * ns.accel_std * Mat3::Identity()) * r.transpose();
  for (int i = 0; i < state.num_contacts(); ++i)
    q.block<3, 3>(9 + 3 * i, 9 + 3 * i) =
        ns.contact_vel_std * ns.contact_vel_std * Mat3::Identity();
  if (opt_.estimate_bias) {
    const int bo = state.bias_offset();
    q.block<3, 3>(bo, bo) = ns.gyro_bias_std * ns.gyro_bias_std * Mat3::Identity();
    q.block<3, 3>(bo + 3, bo + 3) =
        ns.accel_bias_std * ns.accel_bias_std * Mat3::Identity();
  }
  return q;
}

QekfState QuaternionEkf::update_kinematics(
    const QekfState& state, const std::vector<KinematicMeasurement>& meas) const {
  if (meas.empty()) return state;

  const int d = state.dim();
  const int m = static_cast<int>(meas.size());
  const Rot3 r = state.rotation();
  const Rot3 rt = r.transpose();

  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(3 * m, d);
  Eigen::MatrixXd noise = Eigen::MatrixXd::Zero(3 * m, 3 * m);
  Eigen::VectorXd residual(3 * m);
  for (int j = 0; j < m; ++j) {
    const int idx = state.contact_index(meas[j].contact_id);
    if (idx < 0)
      throw std::invalid_argument("update_kinematics: contact id " +
                                  std::to_string(meas[j].contact_id) +
                                  " is not tracked");
    check_measurement_shape(meas[j]);
    const int row = 3 * j;
    const Vec3 rel_body = rt * (state.contacts[idx].position - state.position);
    h.block<3, 3>(row, 0) = skew(rel_body);
    h.block<3, 3>(row, 6) = -rt;
    h.block<3, 3>(row, 9 + 3 * idx) = rt;
    noise.block<3, 3>(row, row) =
        meas[j].jacobian * meas[j].encoder_cov * meas[j].jacobian.transpose();
    residual.segment<3>(row) = meas[j].fk_position - rel_body;
  }

  Eigen::MatrixXd s = h * state.cov * h.transpose() + noise;
  s = 0.5 * (s + s.transpose());
  {
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s);
    const double lmin = es.eigenvalues().minCoeff();
    const double lmax = es.eigenvalues().maxCoeff();
    if (!(lmin > 0.0) || lmax / lmin > 1e12)
      throw std::runtime_error(
          "update_kinematics: innovation covariance ill-conditioned");
  }

  const Eigen::MatrixXd gain = s.ldlt().solve(h * state.cov).transpose();
  const Eigen::VectorXd delta = gain * residual;

  QekfState next = state;
  next.orientation =
      (state.orientation * Eigen::Quaterniond(so3_exp(delta.head<3>())))
          .normalized();
  next.velocity += delta.segment<3>(3);
  next.position += delta.segment<3>(6);
  for (int i = 0; i < state.num_contacts(); ++i)
    next.contacts[i].position += delta.segment<3>(9 + 3 * i);
  next.bias.gyro += delta.segment<3>(state.bias_offset());
  next.bias.accel += delta.segment<3>(state.bias_offset() + 3);

  const Eigen::MatrixXd pnew =
      (Eigen::MatrixXd::Identity(d, d) - gain * h) * state.cov;
  next.cov = 0.5 * (pnew + pnew.transpose());
  return next;
}

QekfState QuaternionEkf::add_contact(const QekfState& state,
                                     const KinematicMeasurement& meas) const {
  if (state.contact_index(meas.contact_id) >= 0)
    throw std::invalid_argument("add_contact: contact id " +
                                std::to_string(meas.contact_id) +
                                " already tracked");
  check_measurement_shape(meas);

  const int d = state.dim();
  const int ins = state.bias_offset();
  const int mcols = static_cast<int>(meas.jacobian.cols());
  const Rot3 r = state.rotation();

  // dd = dp - R skew(fk_p) dtheta - R J_v w_alpha: unlike the invariant
  // filter, the new error couples to the attitude error.
  Eigen::MatrixXd fa = Eigen::MatrixXd::Zero(d + 3, d);
  fa.topLeftCorner(ins, ins).setIdentity();
  fa.block<3, 3>(ins, 0) = -r * skew(meas.fk_position);
  fa.block<3, 3>(ins, 6).setIdentity();
  fa.block<6, 6>(ins + 3, ins).setIdentity();

  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(d + 3, mcols);
  g.block(ins, 0, 3, mcols) = -r * meas.jacobian;

  QekfState next = state;
  next.contacts.push_back(
      {meas.contact_id, state.position + r * meas.fk_position});
  next.cov = fa * state.cov * fa.transpose() + g * meas.encoder_cov * g.transpose();
  return next;
}

QekfState QuaternionEkf::remove_contact(const QekfState& state, int id) const {
  const int idx = state.contact_index(id);
  if (idx < 0)
    throw std::invalid_argument("remove_contact: contact id " + std::to_string(id) +
                                " is not tracked");
  const int d = state.dim();
  const int off = 9 + 3 * idx;
  const int tail = d - off - 3;

  Eigen::MatrixXd pnew(d - 3, d - 3);
  pnew.topLeftCorner(off, off) = state.cov.topLeftCorner(off, off);
  pnew.topRightCorner(off, tail) = state.cov.topRightCorner(off, tail);
  pnew.bottomLeftCorner(tail, off) = state.cov.bottomLeftCorner(tail, off);
  pnew.bottomRightCorner(tail, tail) = state.cov.bottomRightCorner(tail, tail);

  QekfState next = state;
  next.contacts.erase(next.contacts.begin() + idx);
  next.cov = std::move(pnew);
  return next;
}

}  // namespace inekf

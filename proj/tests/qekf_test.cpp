#include "inekf/qekf.h"

#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>
#include <optional>

#include "inekf/filter.h"
#include "inekf/gait.h"
#include "inekf/leg_kinematics.h"
#include "test_support.h"

using namespace inekf;
using test_support::Rng;

namespace {

QekfState make_qekf_state(const Rot3& r, const Vec3& v, const Vec3& p,
                          const std::vector<ContactPoint>& contacts,
                          double diag_cov = 1.0) {
  QekfState s;
  s.orientation = Eigen::Quaterniond(r).normalized();
  s.velocity = v;
  s.position = p;
  s.contacts = contacts;
  s.cov = diag_cov * Eigen::MatrixXd::Identity(s.dim(), s.dim());
  return s;
}

KinematicMeasurement make_meas(int id, const Vec3& fk_p, double encoder_var) {
  KinematicMeasurement m;
  m.contact_id = id;
  m.fk_position = fk_p;
  m.jacobian = Mat3::Identity();
  m.encoder_cov = encoder_var * Mat3::Identity();
  return m;
}

}  // namespace

TEST(QekfPropagate, MeanMatchesInvariantFilter) {
  // Same discrete strapdown equations; only the covariances differ.
  const QuaternionEkf qekf;
  const ContactInekf inekf_filter;
  Rng rng(51);

  QekfState q = make_qekf_state(so3_exp(rng.uniform_vec3(-1, 1)),
                                rng.uniform_vec3(-1, 1), rng.uniform_vec3(-1, 1),
                                {{0, Vec3(0.1, 0.1, 0)}}, 0.1);
  FilterState f;
  f.nav.orientation = q.rotation();
  f.nav.velocity = q.velocity;
  f.nav.position = q.position;
  f.nav.contacts = q.contacts;
  f.bias.gyro = Vec3(0.01, -0.02, 0.005);
  f.cov = 0.1 * Eigen::MatrixXd::Identity(18, 18);
  q.bias = f.bias;

  for (int k = 0; k < 100; ++k) {
    ImuSample imu;
    imu.gyro = rng.uniform_vec3(-1, 1);
    imu.accel = Vec3(0, 0, 9.81) + rng.uniform_vec3(-2, 2);
    q = qekf.propagate(q, imu, 0.005);
    f = inekf_filter.propagate(f, imu, 0.005);
    ASSERT_LT((q.rotation() - f.nav.orientation).norm(), 1e-12);
    ASSERT_LT((q.velocity - f.nav.velocity).norm(), 1e-12);
    ASSERT_LT((q.position - f.nav.position).norm(), 1e-12);
    ASSERT_NEAR(q.orientation.norm(), 1.0, 1e-12);
  }
}

TEST(QekfPropagate, HoverYawGrowsUnboundedRollPitchBounded) {
  // Stationary robot with contact updates: yaw variance keeps growing (it is
  // unobservable), roll/pitch variances plateau through the gravity coupling.
  const QuaternionEkf qekf;
  QekfState s = make_qekf_state(Mat3::Identity(), Vec3::Zero(), Vec3(0, 0, 0.9),
                                {{0, Vec3(0, 0.1, 0)}, {1, Vec3(0, -0.1, 0)}}, 0.0);
  s.cov.block<3, 3>(0, 0) = 1e-4 * Mat3::Identity();

  ImuSample imu;
  imu.accel = Vec3(0, 0, 9.81);
  const KinematicMeasurement m0 =
      make_meas(0, Vec3(0, 0.1, 0) - Vec3(0, 0, 0.9), 1e-4);
  const KinematicMeasurement m1 =
      make_meas(1, Vec3(0, -0.1, 0) - Vec3(0, 0, 0.9), 1e-4);

  double yaw_mid = 0, roll_mid = 0, pitch_mid = 0;
  for (int k = 0; k < 10000; ++k) {
    s = qekf.propagate(s, imu, 0.005);
    if (k % 4 == 0) s = qekf.update_kinematics(s, {m0, m1});
    if (k == 2000) {
      yaw_mid = s.cov(2, 2);
      roll_mid = s.cov(0, 0);
      pitch_mid = s.cov(1, 1);
    }
  }
  EXPECT_GT(s.cov(2, 2), 3.0 * yaw_mid);   // keeps growing
  EXPECT_LT(s.cov(0, 0), 1.5 * roll_mid);  // plateaued
  EXPECT_LT(s.cov(1, 1), 1.5 * pitch_mid);
  EXPECT_LT(s.cov(0, 0), 0.05 * s.cov(2, 2));
}

TEST(QekfUpdate, ZeroResidualKeepsMean) {
  const QuaternionEkf qekf;
  Rng rng(52);
  const Rot3 r = so3_exp(rng.uniform_vec3(-0.5, 0.5));
  QekfState s = make_qekf_state(r, rng.uniform_vec3(-1, 1), Vec3(0, 0, 0.9),
                                {{0, Vec3(0.1, 0.1, 0)}}, 0.3);
  const Vec3 rel = s.rotation().transpose() *
                   (s.contacts[0].position - s.position);
  const QekfState next = qekf.update_kinematics(s, {make_meas(0, rel, 1e-4)});
  EXPECT_LT((next.rotation() - s.rotation()).norm(), 1e-14);
  EXPECT_LT((next.velocity - s.velocity).norm(), 1e-14);
  EXPECT_LT((next.position - s.position).norm(), 1e-14);
  EXPECT_LT((next.contacts[0].position - s.contacts[0].position).norm(), 1e-14);
}

TEST(QekfUpdate, MatchesInvariantCorrectionAtTruth) {
  // Identical priors at identity attitude with zero attitude uncertainty:
  // the measurement Jacobians coincide, so the two filters apply the same
  // correction.
  const QuaternionEkf qekf;
  const ContactInekf inekf_filter;

  const Vec3 p(0, 0, 0.9);
  const Vec3 d(0.2, 0.1, 0);
  Eigen::MatrixXd p0 = Eigen::MatrixXd::Zero(18, 18);
  p0.block<3, 3>(3, 3) = 0.5 * Mat3::Identity();
  p0.block<3, 3>(6, 6) = 0.02 * Mat3::Identity();
  p0.block<3, 3>(9, 9) = 0.02 * Mat3::Identity();

  QekfState q = make_qekf_state(Mat3::Identity(), Vec3::Zero(), p, {{0, d}});
  q.cov = p0;
  FilterState f;
  f.nav.position = p;
  f.nav.contacts = {{0, d}};
  f.cov = p0;

  // Zero residual: posterior means equal the prior.
  const KinematicMeasurement exact = make_meas(0, d - p, 1e-4);
  EXPECT_LT((qekf.update_kinematics(q, {exact}).position - p).norm(), 1e-14);
  EXPECT_LT((inekf_filter.update_kinematics(f, {exact}).nav.position - p).norm(),
            1e-14);

  // Small residual: posterior means agree well below the 1e-6 tolerance.
  const KinematicMeasurement off =
      make_meas(0, d - p + Vec3(3e-4, -2e-4, 1e-4), 1e-4);
  const QekfState q1 = qekf.update_kinematics(q, {off});
  const FilterState f1 = inekf_filter.update_kinematics(f, {off});
  EXPECT_LT((q1.position - f1.nav.position).norm(), 1e-6);
  EXPECT_LT((q1.velocity - f1.nav.velocity).norm(), 1e-6);
  EXPECT_LT((q1.contacts[0].position - f1.nav.contacts[0].position).norm(), 1e-6);
  EXPECT_LT((q1.rotation() - f1.nav.orientation).norm(), 1e-6);
}

TEST(QekfUpdate, ResidualsWhitenOnConvergedRun) {
  // After convergence the normalized innovation squared follows a chi-square
  // with 3 dof per contact measurement.
  GaitConfig g;
  g.duration = 6.0;
  g.imu_rate = 200;
  g.encoder_rate = 500;
  g.seed = 99;
  const auto [truth, stream] = generate(g);

  QuaternionEkf::Options opt;
  opt.estimate_bias = false;
  opt.noise = g.noise;
  const QuaternionEkf qekf(opt);

  QekfState s;
  s.orientation = Eigen::Quaterniond(truth.samples[0].nav.orientation);
  s.velocity = truth.samples[0].nav.velocity;
  s.position = truth.samples[0].nav.position;
  s.cov = Eigen::MatrixXd::Zero(15, 15);
  s.cov.block<3, 3>(0, 0) = 1e-4 * Mat3::Identity();
  s.cov.block<3, 3>(3, 3) = 1e-2 * Mat3::Identity();
  s.cov.block<3, 3>(6, 6) = 1e-4 * Mat3::Identity();

  const LegModel legs[2] = {LegModel::left_default(), LegModel::right_default()};
  bool active[2] = {false, false};
  std::optional<ImuSample> pending;
  double t_state = 0;
  std::vector<double> nis;

  for (const SensorEvent& ev : stream.events) {
    const double t = event_time(ev);
    if (pending && t > t_state) {
      s = qekf.propagate(s, *pending, t - t_state);
      t_state = t;
    }
    if (const auto* c = std::get_if<ContactEvent>(&ev)) {
      active[c->leg] = c->in_contact;
      if (!c->in_contact && s.contact_index(c->leg) >= 0)
        s = qekf.remove_contact(s, c->leg);
    } else if (const auto* e = std::get_if<EncoderSample>(&ev)) {
      if (!active[e->leg]) continue;
      KinematicMeasurement m;
      m.contact_id = e->leg;
      m.fk_position = fk_position(legs[e->leg], e->angles);
      m.fk_rotation = fk_rotation(legs[e->leg], e->angles);
      m.jacobian = leg_jacobian(legs[e->leg], e->angles);
      m.encoder_cov =
          g.noise.encoder_std * g.noise.encoder_std * Mat3::Identity();
      if (s.contact_index(e->leg) < 0) {
        s = qekf.add_contact(s, m);
        continue;
      }
      if (t > 2.0) {  // converged region
        const Rot3 rt = s.rotation().transpose();
        const int idx = s.contact_index(e->leg);
        const Vec3 rel = rt * (s.contacts[idx].position - s.position);
        Eigen::MatrixXd h = Eigen::MatrixXd::Zero(3, s.dim());
        h.block<3, 3>(0, 0) = skew(rel);
        h.block<3, 3>(0, 6) = -rt;
        h.block<3, 3>(0, 9 + 3 * idx) = rt;
        const Mat3 smat = h * s.cov * h.transpose() +
                          m.jacobian * m.encoder_cov * m.jacobian.transpose();
        const Vec3 resid = m.fk_position - rel;
        nis.push_back(resid.dot(smat.ldlt().solve(resid)));
      }
      s = qekf.update_kinematics(s, {m});
    } else if (const auto* im = std::get_if<ImuSample>(&ev)) {
      pending = *im;
      t_state = t;
    }
  }

  ASSERT_GT(nis.size(), 500u);
  const double q95 = test_support::chi2_quantile(3, 0.95);
  long below = 0;
  double mean = 0;
  for (double v : nis) {
    mean += v;
    if (v < q95) ++below;
  }
  mean /= static_cast<double>(nis.size());
  const double coverage = static_cast<double>(below) / nis.size();
  EXPECT_GT(coverage, 0.9);
  EXPECT_LE(coverage, 1.0);
  EXPECT_GT(mean, 0.5) << "wildly overconservative";
  EXPECT_LT(mean, 6.0) << "inconsistent (E[chi2_3] = 3)";
}

TEST(QekfAgreesWithInvariantUnderSmallNoise, TenSecondRun) {
  // Perfect initialization, small noise: the two filters linearize about the
  // same point and should produce nearly identical estimates.
  GaitConfig g;
  g.duration = 10.0;
  g.imu_rate = 200;
  g.encoder_rate = 500;
  g.seed = 5;
  g.noise.gyro_std = 4e-5;
  g.noise.accel_std = 8e-4;
  g.noise.encoder_std = 0.02 * M_PI / 180.0;
  g.noise.contact_vel_std = 0.001;
  const auto [truth, stream] = generate(g);

  // The filters keep their nominal (Table-style) noise model; only the
  // environment is quiet. Identical linearization points then make the two
  // estimates nearly indistinguishable.
  EstimatorOptions opt;
  opt.estimate_bias = false;
  const QuaternionEkf qekf(opt);
  const ContactInekf inekf_filter(opt);

  QekfState q;
  q.orientation = Eigen::Quaterniond(truth.samples[0].nav.orientation);
  q.velocity = truth.samples[0].nav.velocity;
  q.position = truth.samples[0].nav.position;
  q.cov = Eigen::MatrixXd::Zero(15, 15);
  FilterState f;
  f.nav = truth.samples[0].nav;
  f.nav.contacts.clear();
  f.cov = Eigen::MatrixXd::Zero(15, 15);
  for (auto* cov : {&q.cov, &f.cov}) {
    cov->block<3, 3>(0, 0) = 1e-4 * Mat3::Identity();
    cov->block<3, 3>(3, 3) = 1e-2 * Mat3::Identity();
    cov->block<3, 3>(6, 6) = 1e-4 * Mat3::Identity();
  }

  const LegModel legs[2] = {LegModel::left_default(), LegModel::right_default()};
  bool active[2] = {false, false};
  std::optional<ImuSample> pending;
  double t_state = 0;
  double max_pos_diff = 0, max_att_diff = 0;

  for (const SensorEvent& ev : stream.events) {
    const double t = event_time(ev);
    if (pending && t > t_state) {
      q = qekf.propagate(q, *pending, t - t_state);
      f = inekf_filter.propagate(f, *pending, t - t_state);
      t_state = t;
    }
    if (const auto* c = std::get_if<ContactEvent>(&ev)) {
      active[c->leg] = c->in_contact;
      if (!c->in_contact && q.contact_index(c->leg) >= 0) {
        q = qekf.remove_contact(q, c->leg);
        f = inekf_filter.remove_contact(f, c->leg);
      }
    } else if (const auto* e = std::get_if<EncoderSample>(&ev)) {
      if (!active[e->leg]) continue;
      KinematicMeasurement m;
      m.contact_id = e->leg;
      m.fk_position = fk_position(legs[e->leg], e->angles);
      m.fk_rotation = fk_rotation(legs[e->leg], e->angles);
      m.jacobian = leg_jacobian(legs[e->leg], e->angles);
      m.encoder_cov =
          g.noise.encoder_std * g.noise.encoder_std * Mat3::Identity();
      if (q.contact_index(e->leg) < 0) {
        q = qekf.add_contact(q, m);
        f = inekf_filter.add_contact(f, m);
      } else {
        q = qekf.update_kinematics(q, {m});
        f = inekf_filter.update_kinematics(f, {m});
      }
    } else if (const auto* im = std::get_if<ImuSample>(&ev)) {
      pending = *im;
      t_state = t;
      max_pos_diff = std::max(max_pos_diff, (q.position - f.nav.position).norm());
      max_att_diff = std::max(
          max_att_diff,
          so3_log(q.rotation().transpose() * f.nav.orientation).norm());
    }
  }

  EXPECT_LT(max_pos_diff, 1e-3);                // 1 mm
  EXPECT_LT(max_att_diff, 0.1 * M_PI / 180.0);  // 0.1 deg
}

TEST(QekfContacts, AddRemoveMirrorsInvariantStructure) {
  const QuaternionEkf qekf;
  Rng rng(53);
  const Rot3 r = so3_exp(rng.uniform_vec3(-0.5, 0.5));
  QekfState s = make_qekf_state(r, rng.uniform_vec3(-1, 1), Vec3(0, 0, 0.9), {});
  Eigen::MatrixXd b = Eigen::MatrixXd::NullaryExpr(
      15, 15, [&rng](Eigen::Index, Eigen::Index) { return rng.uniform(-1, 1); });
  s.cov = b * b.transpose();

  const Vec3 fk(0.1, 0.05, -0.85);
  const QekfState added = qekf.add_contact(s, make_meas(4, fk, 0.0));
  ASSERT_EQ(added.num_contacts(), 1);
  EXPECT_LT((added.contacts[0].position - (s.position + r * fk)).norm(), 1e-15);

  // Zero encoder noise: F_a carries the attitude coupling -R skew(fk_p).
  const Mat3 coupling = -r * skew(fk);
  const Mat3 expected_dd =
      s.cov.block<3, 3>(6, 6) +
      coupling * s.cov.block<3, 3>(0, 0) * coupling.transpose() +
      coupling * s.cov.block<3, 3>(0, 6) +
      s.cov.block<3, 3>(6, 0) * coupling.transpose();
  EXPECT_LT((added.cov.block<3, 3>(9, 9) - expected_dd).norm(), 1e-12);

  const QekfState back = qekf.remove_contact(added, 4);
  EXPECT_TRUE((back.cov.array() == s.cov.array()).all());
  EXPECT_THROW(qekf.remove_contact(back, 4), std::invalid_argument);
  EXPECT_THROW(qekf.add_contact(added, make_meas(4, fk, 0.0)),
               std::invalid_argument);
}

TEST(QekfCovariance, StaysSymmetricPsdAndUnitQuaternion) {
  const QuaternionEkf qekf;
  Rng rng(54);
  QekfState s = make_qekf_state(Mat3::Identity(), Vec3::Zero(), Vec3(0, 0, 0.9),
                                {{0, Vec3(0.1, 0.1, 0)}}, 0.1);
  for (int k = 0; k < 2000; ++k) {
    ImuSample imu;
    imu.gyro = rng.uniform_vec3(-0.3, 0.3);
    imu.accel = Vec3(0, 0, 9.81) + rng.uniform_vec3(-0.5, 0.5);
    s = qekf.propagate(s, imu, 0.005);
    if (k % 5 == 0) {
      const Vec3 rel = s.rotation().transpose() *
                       (s.contacts[0].position - s.position);
      s = qekf.update_kinematics(
          s, {make_meas(0, rel + rng.uniform_vec3(-0.005, 0.005), 1e-4)});
    }
    if (k % 200 == 0) {
      ASSERT_LT((s.cov - s.cov.transpose()).norm(), 1e-9);
      const double min_eig = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(
                                 0.5 * (s.cov + s.cov.transpose()))
                                 .eigenvalues()
                                 .minCoeff();
      ASSERT_GT(min_eig, -1e-9);
      ASSERT_NEAR(s.orientation.norm(), 1.0, 1e-12);
    }
  }
}

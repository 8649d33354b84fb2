#include "inekf/gait.h"

#include <gtest/gtest.h>

#include <cmath>
#include <optional>

#include "inekf/filter.h"
#include "inekf/leg_kinematics.h"
#include "test_support.h"

using namespace inekf;

namespace {

GaitConfig desk_config() {
  GaitConfig g;
  g.duration = 6.0;
  g.imu_rate = 200;
  g.encoder_rate = 500;
  g.seed = 3;
  return g;
}

}  // namespace

TEST(Gait, StancePinInvariant) {
  // While a contact flag is true, body pose + FK of the true encoder angles
  // must reproduce the pinned world foot position exactly.
  const GaitTrajectory traj(desk_config());
  double worst = 0;
  for (double t = 0; t < 6.0; t += 0.003) {
    const NavState s = traj.truth(t);
    for (const ContactPoint& c : s.contacts) {
      const JointAngles a = traj.joint_angles(t, c.id);
      const Vec3 rebuilt =
          s.position + s.orientation * fk_position(traj.leg_model(c.id), a);
      worst = std::max(worst, (rebuilt - c.position).norm());
    }
  }
  EXPECT_LT(worst, 1e-12);
}

TEST(Gait, StanceFootNeverMoves) {
  const GaitTrajectory traj(desk_config());
  // Sample each leg densely; within one contiguous contact interval the world
  // position must be constant to the bit.
  for (int leg = 0; leg < 2; ++leg) {
    std::optional<Vec3> pinned;
    for (double t = 0; t < 6.0; t += 0.001) {
      if (!traj.in_contact(t, leg)) {
        pinned.reset();
        continue;
      }
      const Vec3 p = traj.foot_position_world(t, leg);
      if (pinned) {
        EXPECT_EQ((*pinned - p).norm(), 0.0) << "leg " << leg << " t " << t;
      }
      pinned = p;
    }
  }
}

TEST(Gait, StationaryConfigIsStatic) {
  GaitConfig g = desk_config();
  g.v_start = 0.0;
  g.v_end = 0.0;  // no stepping
  const GaitTrajectory traj(g);
  for (double t : {0.5, 1.0, 3.0, 5.9}) {
    const NavState s = traj.truth(t);
    EXPECT_LT(traj.angular_velocity_body(t).norm(), 1e-15) << t;
    // After the settle the body is at rest: specific force is -R^T g exactly.
    if (t > g.drop_duration) {
      EXPECT_LT((traj.specific_force_body(t) -
                 (-(s.orientation.transpose() * g.gravity)))
                    .norm(),
                1e-12);
      EXPECT_LT(s.velocity.norm(), 1e-15);
    }
    EXPECT_EQ(s.num_contacts(), 2);
  }
}

TEST(Gait, SplineConsistency) {
  // Re-differentiate the analytic truth numerically; must match the emitted
  // velocity/acceleration/angular velocity.
  const GaitTrajectory traj(desk_config());
  const double h = 1e-5;
  for (double t = 0.05; t < 5.9; t += 0.173) {
    const NavState mid = traj.truth(t);
    const NavState lo = traj.truth(t - h);
    const NavState hi = traj.truth(t + h);

    const Vec3 v_fd = (hi.position - lo.position) / (2 * h);
    EXPECT_LT((v_fd - mid.velocity).norm(), 1e-6) << t;

    const Vec3 a_fd = (hi.velocity - lo.velocity) / (2 * h);
    EXPECT_LT((a_fd - traj.acceleration_world(t)).norm(), 1e-6) << t;

    const Mat3 dr_fd = (hi.orientation - lo.orientation) / (2 * h);
    const Mat3 dr_analytic =
        mid.orientation * skew(traj.angular_velocity_body(t));
    EXPECT_LT((dr_fd - dr_analytic).norm(), 1e-6) << t;
  }
}

TEST(Gait, NoiseStandardDeviationsMatchConfig) {
  GaitConfig g;
  g.duration = 60.0;
  g.imu_rate = 800.0;
  g.encoder_rate = 500.0;
  g.seed = 17;
  g.true_bias.gyro = Vec3(0.002, -0.001, 0.003);
  const GaitTrajectory traj(g);
  const auto [truth, stream] = generate(g);

  double gyro_sq = 0, accel_sq = 0, enc_sq = 0;
  long n_gyro = 0, n_enc = 0;
  for (const SensorEvent& ev : stream.events) {
    if (const auto* s = std::get_if<ImuSample>(&ev)) {
      const Vec3 gn = s->gyro - traj.angular_velocity_body(s->timestamp) -
                      g.true_bias.gyro;
      const Vec3 an = s->accel - traj.specific_force_body(s->timestamp) -
                      g.true_bias.accel;
      gyro_sq += gn.squaredNorm();
      accel_sq += an.squaredNorm();
      n_gyro += 3;
    } else if (const auto* e = std::get_if<EncoderSample>(&ev)) {
      const JointAngles clean = traj.joint_angles(e->timestamp, e->leg);
      enc_sq += (e->angles - clean).squaredNorm();
      n_enc += 3;
    }
  }
  ASSERT_GT(n_gyro, 100000);
  ASSERT_GT(n_enc, 100000);
  EXPECT_NEAR(std::sqrt(gyro_sq / n_gyro), g.noise.gyro_std,
              0.03 * g.noise.gyro_std);
  EXPECT_NEAR(std::sqrt(accel_sq / n_gyro), g.noise.accel_std,
              0.03 * g.noise.accel_std);
  EXPECT_NEAR(std::sqrt(enc_sq / n_enc), g.noise.encoder_std,
              0.03 * g.noise.encoder_std);

  GaussianSampler slip = contact_slip_sampler(g);
  double slip_sq = 0;
  for (int i = 0; i < 100000; ++i)
    slip_sq += std::pow(slip.normal(g.noise.contact_vel_std), 2);
  EXPECT_NEAR(std::sqrt(slip_sq / 100000), g.noise.contact_vel_std,
              0.03 * g.noise.contact_vel_std);
}

TEST(Gait, StreamsAreByteReproduciblePerSeed) {
  const GaitConfig g = desk_config();
  const auto [truth1, stream1] = generate(g);
  const auto [truth2, stream2] = generate(g);
  ASSERT_EQ(stream1.events.size(), stream2.events.size());
  for (size_t i = 0; i < stream1.events.size(); ++i) {
    ASSERT_EQ(stream1.events[i].index(), stream2.events[i].index());
    if (const auto* a = std::get_if<ImuSample>(&stream1.events[i])) {
      const auto* b = std::get_if<ImuSample>(&stream2.events[i]);
      ASSERT_TRUE((a->gyro.array() == b->gyro.array()).all());
      ASSERT_TRUE((a->accel.array() == b->accel.array()).all());
      ASSERT_EQ(a->timestamp, b->timestamp);
    } else if (const auto* a2 = std::get_if<EncoderSample>(&stream1.events[i])) {
      const auto* b2 = std::get_if<EncoderSample>(&stream2.events[i]);
      ASSERT_TRUE((a2->angles.array() == b2->angles.array()).all());
    }
  }

  GaitConfig g2 = g;
  g2.seed = g.seed + 1;
  const auto [truth3, stream3] = generate(g2);
  bool any_diff = false;
  for (size_t i = 0; i < stream1.events.size() && !any_diff; ++i) {
    const auto* a = std::get_if<ImuSample>(&stream1.events[i]);
    const auto* b = std::get_if<ImuSample>(&stream3.events[i]);
    if (a && b && a->gyro != b->gyro) any_diff = true;
  }
  EXPECT_TRUE(any_diff);
}

TEST(Gait, StreamTimestampsMonotone) {
  const auto [truth, stream] = generate(desk_config());
  double last = -1.0;
  for (const SensorEvent& ev : stream.events) {
    ASSERT_GE(event_time(ev), last);
    last = event_time(ev);
  }
  for (size_t i = 1; i < truth.samples.size(); ++i)
    ASSERT_GT(truth.samples[i].timestamp, truth.samples[i - 1].timestamp);
}

TEST(Gait, ContactScheduleAlternatesAndQuantizes) {
  const GaitConfig g = desk_config();
  const GaitTrajectory traj(g);
  const auto schedule = traj.contact_schedule();
  ASSERT_GE(schedule.size(), 4u);
  EXPECT_EQ(schedule[0].timestamp, 0.0);
  EXPECT_TRUE(schedule[0].in_contact);
  EXPECT_TRUE(schedule[1].in_contact);

  int last_swing_leg = -1;
  for (size_t i = 2; i < schedule.size(); ++i) {
    const ContactEvent& ev = schedule[i];
    // Transitions land exactly on the encoder clock.
    const double ticks = ev.timestamp * g.encoder_rate;
    EXPECT_EQ(ticks, std::round(ticks));
    if (!ev.in_contact) {
      EXPECT_NE(ev.leg, last_swing_leg);  // legs alternate
      last_swing_leg = ev.leg;
    }
  }
}

TEST(Gait, UnreachableTargetThrowsWithTimestamp) {
  GaitConfig g = desk_config();
  g.body_height = 1.2;  // hip 1.0 m above ground, legs reach 0.8 m
  try {
    generate(g);
    FAIL() << "expected unreachable-pose error";
  } catch (const std::runtime_error& ex) {
    EXPECT_NE(std::string(ex.what()).find("unreachable at t="), std::string::npos);
  }
}

TEST(Gait, InvalidConfigThrows) {
  GaitConfig g = desk_config();
  g.imu_rate = 0;
  EXPECT_THROW(GaitTrajectory{g}, std::invalid_argument);
  g = desk_config();
  g.double_support_fraction = 1.0;
  EXPECT_THROW(GaitTrajectory{g}, std::invalid_argument);
  g = desk_config();
  g.step_duration = -1;
  EXPECT_THROW(GaitTrajectory{g}, std::invalid_argument);
}

TEST(InitialSampler, ReproducibleBoundedAndCentered) {
  const auto [r1, v1] = initial_sampler(123);
  const auto [r2, v2] = initial_sampler(123);
  EXPECT_TRUE((r1.array() == r2.array()).all());
  EXPECT_TRUE((v1.array() == v2.array()).all());

  const double range = 30.0 * M_PI / 180.0;
  Vec3 rpy_mean = Vec3::Zero(), vel_mean = Vec3::Zero();
  Vec3 rpy_min = Vec3::Constant(1e9), rpy_max = Vec3::Constant(-1e9);
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    const auto [r, v] = initial_sampler(1000 + i);
    const Vec3 rpy = rpy_from_rotation(r);
    rpy_mean += rpy;
    vel_mean += v;
    rpy_min = rpy_min.cwiseMin(rpy);
    rpy_max = rpy_max.cwiseMax(rpy);
    ASSERT_LE(v.cwiseAbs().maxCoeff(), 1.0);
  }
  rpy_mean /= n;
  vel_mean /= n;
  EXPECT_LE(rpy_max.maxCoeff(), range + 1e-9);
  EXPECT_GE(rpy_min.minCoeff(), -range - 1e-9);
  EXPECT_LT(rpy_mean.cwiseAbs().maxCoeff(), 1.0 * M_PI / 180.0);
  EXPECT_LT(vel_mean.cwiseAbs().maxCoeff(), 0.02);

  const auto [r0, v0] = initial_sampler(5, range, 1.0, /*zero=*/true);
  EXPECT_TRUE(r0.isApprox(Mat3::Identity(), 0.0));
  EXPECT_TRUE(v0.isZero(0.0));
}

TEST(Gait, ZeroNoiseStreamKeepsTruthInitializedFilterOnTruth) {
  // The defining simulator/filter agreement check: clean stream, filter
  // started at the truth, RMS position error stays below 1 mm for 10 s.
  GaitConfig g;
  g.duration = 10.0;
  g.seed = 7;
  g.noise.gyro_std = 0;
  g.noise.accel_std = 0;
  g.noise.encoder_std = 0;
  const auto [truth, stream] = generate(g);

  EstimatorOptions opt;
  opt.estimate_bias = false;
  const ContactInekf filter(opt);
  FilterState s;
  s.nav = truth.samples[0].nav;
  s.nav.contacts.clear();
  s.cov = Eigen::MatrixXd::Zero(15, 15);
  s.cov.block<3, 3>(0, 0) = 1e-6 * Mat3::Identity();
  s.cov.block<3, 3>(3, 3) = 1e-6 * Mat3::Identity();
  s.cov.block<3, 3>(6, 6) = 1e-6 * Mat3::Identity();

  const LegModel legs[2] = {LegModel::left_default(), LegModel::right_default()};
  bool active[2] = {false, false};
  std::optional<ImuSample> pending;
  double t_state = 0;
  double err_sq = 0;
  long n = 0, imu_count = 0;

  for (const SensorEvent& ev : stream.events) {
    const double t = event_time(ev);
    if (pending && t > t_state) {
      s = filter.propagate(s, *pending, t - t_state);
      t_state = t;
    }
    if (const auto* c = std::get_if<ContactEvent>(&ev)) {
      active[c->leg] = c->in_contact;
      if (!c->in_contact && s.nav.contact_index(c->leg) >= 0)
        s = filter.remove_contact(s, c->leg);
    } else if (const auto* e = std::get_if<EncoderSample>(&ev)) {
      if (!active[e->leg]) continue;
      KinematicMeasurement m;
      m.contact_id = e->leg;
      m.fk_position = fk_position(legs[e->leg], e->angles);
      m.fk_rotation = fk_rotation(legs[e->leg], e->angles);
      m.jacobian = leg_jacobian(legs[e->leg], e->angles);
      m.encoder_cov = std::pow(1.0 * M_PI / 180.0, 2) * Mat3::Identity();
      if (s.nav.contact_index(e->leg) < 0)
        s = filter.add_contact(s, m);
      else
        s = filter.update_kinematics(s, {m});
    } else if (const auto* im = std::get_if<ImuSample>(&ev)) {
      pending = *im;
      t_state = t;
      err_sq += (s.nav.position -
                 truth.samples[static_cast<size_t>(imu_count)].nav.position)
                    .squaredNorm();
      ++n;
      ++imu_count;
    }
  }
  EXPECT_LT(std::sqrt(err_sq / static_cast<double>(n)), 1e-3);
}

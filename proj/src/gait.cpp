#include "inekf/gait.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace inekf {

namespace {

// Second-order jet: a scalar signal's value and first two time derivatives.
// Lets the trajectory be differentiated exactly by composition.
struct Jet {
  double v = 0.0, d1 = 0.0, d2 = 0.0;
};

Jet constant(double c) { return {c, 0.0, 0.0}; }

Jet operator+(const Jet& a, const Jet& b) {
  return {a.v + b.v, a.d1 + b.d1, a.d2 + b.d2};
}
Jet operator-(const Jet& a, const Jet& b) {
  return {a.v - b.v, a.d1 - b.d1, a.d2 - b.d2};
}
Jet operator*(const Jet& a, const Jet& b) {
  return {a.v * b.v, a.d1 * b.v + a.v * b.d1,
          a.d2 * b.v + 2.0 * a.d1 * b.d1 + a.v * b.d2};
}
Jet operator*(double s, const Jet& a) { return {s * a.v, s * a.d1, s * a.d2}; }

Jet jet_sin(const Jet& u) {
  const double s = std::sin(u.v), c = std::cos(u.v);
  return {s, c * u.d1, c * u.d2 - s * u.d1 * u.d1};
}

// Quintic smoothstep over [t0, t0+span] as a function of time.
Jet smoothstep(double t, double t0, double span) {
  if (t <= t0) return {0.0, 0.0, 0.0};
  if (t >= t0 + span) return {1.0, 0.0, 0.0};
  const double u = (t - t0) / span;
  const double s = u * u * u * (10.0 + u * (-15.0 + 6.0 * u));
  const double ds = 30.0 * u * u * (1.0 - u) * (1.0 - u);
  const double d2s = 60.0 * u * (1.0 - u) * (1.0 - 2.0 * u);
  return {s, ds / span, d2s / (span * span)};
}

// Sinusoid sin(w (t - t0) + phase) as a jet.
Jet oscillation(double t, double t0, double w, double phase) {
  return jet_sin(Jet{w * (t - t0) + phase, w, 0.0});
}

int event_rank(const SensorEvent& ev) {
  // Contact transitions first, then encoders, then the IMU sample.
  if (std::holds_alternative<ContactEvent>(ev)) return 0;
  if (std::holds_alternative<EncoderSample>(ev)) return 1;
  return 2;
}

int event_leg(const SensorEvent& ev) {
  if (const auto* c = std::get_if<ContactEvent>(&ev)) return c->leg;
  if (const auto* e = std::get_if<EncoderSample>(&ev)) return e->leg;
  return 0;
}

}  // namespace

double event_time(const SensorEvent& ev) {
  return std::visit([](const auto& e) { return e.timestamp; }, ev);
}

GaitTrajectory::GaitTrajectory(GaitConfig config) : cfg_(std::move(config)) {
  if (cfg_.imu_rate <= 0 || cfg_.encoder_rate <= 0)
    throw std::invalid_argument("gait: sensor rates must be positive");
  if (cfg_.duration <= 0 || cfg_.step_duration <= 0 || cfg_.drop_duration <= 0)
    throw std::invalid_argument("gait: durations must be positive");
  if (cfg_.double_support_fraction < 0 || cfg_.double_support_fraction >= 1)
    throw std::invalid_argument("gait: double_support_fraction must be in [0,1)");
  if (cfg_.ramp_time < 0 || cfg_.step_height < 0)
    throw std::invalid_argument("gait: negative ramp_time or step_height");
  if (cfg_.lean_period <= 0)
    throw std::invalid_argument("gait: lean_period must be positive");
  if (cfg_.leg.thigh_length <= 0 || cfg_.leg.shank_length <= 0)
    throw std::invalid_argument("gait: link lengths must be positive");

  legs_[0] = cfg_.leg;
  legs_[1] = cfg_.leg;
  legs_[1].hip_offset.y() = -legs_[1].hip_offset.y();
  walk_start_ = cfg_.drop_duration;

  const Vec3 init_foot[2] = {Vec3(0.0, legs_[0].hip_offset.y(), 0.0),
                             Vec3(0.0, legs_[1].hip_offset.y(), 0.0)};
  schedule_.push_back({0.0, 0, true});
  schedule_.push_back({0.0, 1, true});

  if (!cfg_.walking()) {
    for (int leg = 0; leg < 2; ++leg)
      phases_[leg].push_back(
          {0.0, std::numeric_limits<double>::infinity(), false,
           init_foot[leg], init_foot[leg]});
    return;
  }

  const double ts = cfg_.step_duration;
  const double lambda = cfg_.double_support_fraction;
  const auto quantize = [this](double t) {
    return std::round(t * cfg_.encoder_rate) / cfg_.encoder_rate;
  };

  double stance_start[2] = {0.0, 0.0};
  Vec3 stance_pos[2] = {init_foot[0], init_foot[1]};
  for (int k = 0;; ++k) {
    const double t0 = walk_start_ + k * ts;
    if (t0 >= cfg_.duration) break;
    const int sw = (k % 2 == 0) ? 1 : 0;  // right leg swings first
    const double liftoff = quantize(t0 + lambda * ts);
    const double touchdown = quantize(t0 + ts);
    if (liftoff >= cfg_.duration) break;
    if (touchdown <= liftoff)
      throw std::invalid_argument("gait: swing shorter than the encoder period");

    // Place the foot where the body will be halfway through its stance.
    const double t_mid = touchdown + 0.5 * (1.0 + lambda) * ts;
    const Vec3 target(body_x(t_mid), init_foot[sw].y(), 0.0);

    phases_[sw].push_back({stance_start[sw], liftoff, false, stance_pos[sw],
                           stance_pos[sw]});
    phases_[sw].push_back({liftoff, touchdown, true, stance_pos[sw], target});
    stance_start[sw] = touchdown;
    stance_pos[sw] = target;
    schedule_.push_back({liftoff, sw, false});
    schedule_.push_back({touchdown, sw, true});
  }
  for (int leg = 0; leg < 2; ++leg)
    phases_[leg].push_back({stance_start[leg],
                            std::numeric_limits<double>::infinity(), false,
                            stance_pos[leg], stance_pos[leg]});

  std::stable_sort(schedule_.begin(), schedule_.end(),
                   [](const ContactEvent& a, const ContactEvent& b) {
                     return a.timestamp < b.timestamp;
                   });
}

double GaitTrajectory::body_x(double t) const {
  if (!cfg_.walking() || t <= walk_start_) return 0.0;
  const double tau = t - walk_start_;
  const double tr = cfg_.ramp_time;
  const double dv = cfg_.v_end - cfg_.v_start;
  if (tr <= 0.0 || tau >= tr) {
    const double x_ramp = tr <= 0.0 ? 0.0 : cfg_.v_start * tr + dv * tr * 0.5;
    const double tau_in_ramp = tr <= 0.0 ? 0.0 : tr;
    return x_ramp + cfg_.v_end * (tau - tau_in_ramp);
  }
  const double u = tau / tr;
  const double su = u * u * u * u * (2.5 + u * (-3.0 + u));  // integral of smoothstep
  return cfg_.v_start * tau + dv * tr * su;
}

GaitTrajectory::BodyKinematics GaitTrajectory::body(double t) const {
  const double ts = cfg_.step_duration;
  const double w_step = 2.0 * M_PI / ts;
  const double w_stride = M_PI / ts;

  // Forward progress.
  Jet x = constant(0.0);
  if (cfg_.walking() && t > walk_start_) {
    const double tau = t - walk_start_;
    const double tr = cfg_.ramp_time;
    const double dv = cfg_.v_end - cfg_.v_start;
    if (tr <= 0.0 || tau >= tr) {
      x = Jet{body_x(t), cfg_.v_end, 0.0};
    } else {
      const double u = tau / tr;
      const double su = u * u * u * u * (2.5 + u * (-3.0 + u));
      const double s = u * u * u * (10.0 + u * (-15.0 + 6.0 * u));
      const double ds = 30.0 * u * u * (1.0 - u) * (1.0 - u);
      x = Jet{cfg_.v_start * tau + dv * tr * su, cfg_.v_start + dv * s,
              dv * ds / tr};
    }
  }

  // Oscillations fade in with the walk envelope so standing is exactly static.
  Jet env = constant(0.0);
  if (cfg_.walking()) {
    const double env_span = std::max(cfg_.ramp_time, cfg_.step_duration);
    env = smoothstep(t, walk_start_, env_span);
  }

  const Jet sway = env * (cfg_.sway_amplitude *
                          oscillation(t, walk_start_, w_stride, 0.0));
  const Jet bob = env * (cfg_.bob_amplitude *
                         oscillation(t, walk_start_, w_step, -M_PI_2));
  const Jet drop = cfg_.drop * smoothstep(t, 0.0, cfg_.drop_duration);
  const Jet z = constant(cfg_.body_height) - drop + bob;

  const double w_lean = 2.0 * M_PI / cfg_.lean_period;
  const Jet roll =
      env * (cfg_.rock_amplitude.x() *
                 oscillation(t, walk_start_, w_stride, M_PI_2) +
             cfg_.lean_amplitude * oscillation(t, walk_start_, w_lean, 0.0));
  const Jet pitch =
      env * (cfg_.rock_amplitude.y() * oscillation(t, walk_start_, w_step, 0.0) +
             cfg_.lean_amplitude * oscillation(t, walk_start_, w_lean, M_PI_2));
  const Jet yaw = env * (cfg_.rock_amplitude.z() *
                         oscillation(t, walk_start_, w_stride, M_PI / 4.0));

  BodyKinematics out;
  out.position = Vec3(x.v, sway.v, z.v);
  out.velocity = Vec3(x.d1, sway.d1, z.d1);
  out.acceleration = Vec3(x.d2, sway.d2, z.d2);

  // R = Rz(yaw) Ry(pitch) Rx(roll); body angular velocity by the chain rule.
  const Rot3 rx = so3_exp(Vec3(roll.v, 0, 0));
  const Rot3 ry = so3_exp(Vec3(0, pitch.v, 0));
  const Rot3 rz = so3_exp(Vec3(0, 0, yaw.v));
  out.rotation = rz * ry * rx;
  out.angular_velocity = rx.transpose() * (ry.transpose() * Vec3(0, 0, yaw.d1) +
                                           Vec3(0, pitch.d1, 0)) +
                         Vec3(roll.d1, 0, 0);
  return out;
}

const GaitTrajectory::Phase& GaitTrajectory::phase_at(double t, int leg) const {
  const auto& ph = phases_[leg];
  // Last phase whose start is <= t.
  size_t lo = 0;
  for (size_t i = 0; i < ph.size(); ++i) {
    if (ph[i].t0 <= t) lo = i;
    else break;
  }
  return ph[lo];
}

bool GaitTrajectory::in_contact(double t, int leg) const {
  return !phase_at(t, leg).swing;
}

Vec3 GaitTrajectory::foot_position_world(double t, int leg) const {
  const Phase& ph = phase_at(t, leg);
  if (!ph.swing) return ph.from;
  const double s = (t - ph.t0) / (ph.t1 - ph.t0);
  const double along = s - std::sin(2.0 * M_PI * s) / (2.0 * M_PI);  // cycloid
  Vec3 p = ph.from + (ph.to - ph.from) * along;
  p.z() = cfg_.step_height * 0.5 * (1.0 - std::cos(2.0 * M_PI * s));
  return p;
}

JointAngles GaitTrajectory::joint_angles(double t, int leg) const {
  const BodyKinematics b = body(t);
  const Vec3 rel =
      b.rotation.transpose() * (foot_position_world(t, leg) - b.position);
  try {
    return inverse_kinematics(legs_[leg], rel);
  } catch (const std::runtime_error&) {
    throw std::runtime_error("gait: foot " + std::to_string(leg) +
                             " unreachable at t=" + std::to_string(t));
  }
}

NavState GaitTrajectory::truth(double t) const {
  const BodyKinematics b = body(t);
  NavState s;
  s.orientation = b.rotation;
  s.velocity = b.velocity;
  s.position = b.position;
  for (int leg = 0; leg < 2; ++leg)
    if (in_contact(t, leg))
      s.contacts.push_back({leg, foot_position_world(t, leg)});
  return s;
}

Vec3 GaitTrajectory::angular_velocity_body(double t) const {
  return body(t).angular_velocity;
}

Vec3 GaitTrajectory::acceleration_world(double t) const {
  return body(t).acceleration;
}

Vec3 GaitTrajectory::specific_force_body(double t) const {
  const BodyKinematics b = body(t);
  return b.rotation.transpose() * (b.acceleration - cfg_.gravity);
}

std::pair<TruthRecord, SensorStream> generate(const GaitConfig& config) {
  const GaitTrajectory traj(config);
  GaussianSampler imu_rng(derive_seed(config.seed, 1));
  GaussianSampler enc_rng(derive_seed(config.seed, 2));

  TruthRecord truth;
  SensorStream stream;

  const long n_imu = static_cast<long>(config.duration * config.imu_rate + 1e-9);
  truth.samples.reserve(n_imu + 1);
  for (long k = 0; k <= n_imu; ++k) {
    const double t = static_cast<double>(k) / config.imu_rate;
    truth.samples.push_back({t, traj.truth(t), config.true_bias});

    ImuSample s;
    s.timestamp = t;
    s.gyro = traj.angular_velocity_body(t) + config.true_bias.gyro +
             imu_rng.normal_vec3(config.noise.gyro_std);
    s.accel = traj.specific_force_body(t) + config.true_bias.accel +
              imu_rng.normal_vec3(config.noise.accel_std);
    stream.events.emplace_back(s);
  }

  const long n_enc =
      static_cast<long>(config.duration * config.encoder_rate + 1e-9);
  for (long j = 0; j <= n_enc; ++j) {
    const double t = static_cast<double>(j) / config.encoder_rate;
    for (int leg = 0; leg < 2; ++leg) {
      EncoderSample e;
      e.timestamp = t;
      e.leg = leg;
      e.angles = traj.joint_angles(t, leg) +
                 enc_rng.normal_vec3(config.noise.encoder_std);
      stream.events.emplace_back(e);
    }
  }

  for (const ContactEvent& ev : traj.contact_schedule())
    if (ev.timestamp <= config.duration) stream.events.emplace_back(ev);

  std::stable_sort(stream.events.begin(), stream.events.end(),
                   [](const SensorEvent& a, const SensorEvent& b) {
                     const double ta = event_time(a), tb = event_time(b);
                     if (ta != tb) return ta < tb;
                     if (event_rank(a) != event_rank(b))
                       return event_rank(a) < event_rank(b);
                     return event_leg(a) < event_leg(b);
                   });
  return {std::move(truth), std::move(stream)};
}

GaussianSampler contact_slip_sampler(const GaitConfig& config) {
  return GaussianSampler(derive_seed(config.seed, 3));
}

std::pair<Rot3, Vec3> initial_sampler(uint64_t seed, double euler_range,
                                      double vel_range, bool zero) {
  if (zero) return {Mat3::Identity(), Vec3::Zero()};
  GaussianSampler rng(derive_seed(seed, 4));
  const Vec3 rpy(rng.uniform(-euler_range, euler_range),
                 rng.uniform(-euler_range, euler_range),
                 rng.uniform(-euler_range, euler_range));
  const Vec3 vel(rng.uniform(-vel_range, vel_range),
                 rng.uniform(-vel_range, vel_range),
                 rng.uniform(-vel_range, vel_range));
  return {rotation_from_rpy(rpy), vel};
}

}  // namespace inekf

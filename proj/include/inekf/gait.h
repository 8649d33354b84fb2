// Synthetic walking-gait generator: ground-truth trajectory plus noisy IMU,
// encoder, and binary contact streams.
//
// The body pose is built from closed-form C^2 signals (quintic speed ramp,
// envelope-scaled sinusoidal sway/bob/rock), so true angular velocity and
// acceleration come from exact differentiation, not numerics. Stance feet are
// pinned exactly: encoder angles are the inverse kinematics of the true
// body-to-foot transform, which makes the generated measurements kinematically
// consistent to machine precision.

#ifndef INEKF_GAIT_H
#define INEKF_GAIT_H

#include <cstdint>
#include <utility>
#include <variant>
#include <vector>

#include "inekf/leg_kinematics.h"
#include "inekf/random.h"
#include "inekf/state.h"

namespace inekf {

struct GaitConfig {
  double duration = 10.0;        // s
  double imu_rate = 800.0;       // Hz
  double encoder_rate = 2000.0;  // Hz

  double step_duration = 0.4;            // s per step
  double double_support_fraction = 0.2;  // fraction of each step
  double v_start = 0.0;                  // m/s
  double v_end = 0.3;                    // m/s
  double ramp_time = 2.0;                // s to ramp v_start -> v_end
  double step_height = 0.05;             // swing apex, m

  double body_height = 0.92;    // m before the initial settle
  double drop = 0.02;           // initial vertical settle, m
  double drop_duration = 0.2;   // s

  // Walking body oscillation; scaled by the walk envelope so a stationary
  // configuration is exactly static.
  double sway_amplitude = 0.008;  // lateral, m
  double bob_amplitude = 0.003;   // vertical, m
  Vec3 rock_amplitude{0.6 * M_PI / 180.0, 0.4 * M_PI / 180.0,
                      0.8 * M_PI / 180.0};  // roll/pitch/yaw, rad

  // Slow circular body lean. Low frequency keeps the discretization error
  // negligible while the large tilt makes the z gyro bias identifiable
  // through gravity and the contact lever arms.
  double lean_amplitude = 6.0 * M_PI / 180.0;  // rad
  double lean_period = 6.0;                    // s

  Vec3 gravity{0.0, 0.0, -9.81};
  uint64_t seed = 1;
  NoiseParams noise;       // measurement corruption (zero stds = clean stream)
  ImuBias true_bias;       // constant true IMU biases added to measurements
  LegModel leg;            // left leg; the right leg mirrors hip_offset.y

  /// Stationary configurations (no commanded speed) never step.
  bool walking() const { return v_start != 0.0 || v_end != 0.0; }
};

/// Joint angles of one leg at one encoder tick. Legs: 0 = left, 1 = right.
struct EncoderSample {
  double timestamp = 0.0;
  int leg = 0;
  JointAngles angles = JointAngles::Zero();
};

/// Binary contact transition for one leg.
struct ContactEvent {
  double timestamp = 0.0;
  int leg = 0;
  bool in_contact = false;
};

using SensorEvent = std::variant<ImuSample, EncoderSample, ContactEvent>;

double event_time(const SensorEvent& ev);

/// Time-ordered event sequence. At equal timestamps contact transitions come
/// first, then encoder samples, then the IMU sample.
struct SensorStream {
  std::vector<SensorEvent> events;
};

struct TruthSample {
  double timestamp = 0.0;
  NavState nav;  // contacts = currently pinned feet (ids 0/1)
  ImuBias bias;
};

struct TruthRecord {
  std::vector<TruthSample> samples;  // at IMU rate
};

/// Analytic ground-truth trajectory. All queries are pure functions of time,
/// evaluable at arbitrary t in [0, duration].
class GaitTrajectory {
 public:
  /// Plans the footstep sequence; throws std::invalid_argument on a bad
  /// config. Unreachable poses surface from joint_angles()/generate() as
  /// std::runtime_error naming the offending timestamp.
  explicit GaitTrajectory(GaitConfig config);

  const GaitConfig& config() const { return cfg_; }
  const LegModel& leg_model(int leg) const { return legs_[leg]; }

  /// Body truth including the contact set of pinned feet.
  NavState truth(double t) const;

  Vec3 angular_velocity_body(double t) const;
  Vec3 acceleration_world(double t) const;
  /// Accelerometer truth R^T (a - g).
  Vec3 specific_force_body(double t) const;

  bool in_contact(double t, int leg) const;
  Vec3 foot_position_world(double t, int leg) const;
  /// IK joint angles; throws std::runtime_error naming the timestamp if the
  /// foot is unreachable.
  JointAngles joint_angles(double t, int leg) const;

  /// All contact transitions (including the initial flags at t = 0),
  /// quantized to the encoder clock.
  std::vector<ContactEvent> contact_schedule() const { return schedule_; }

 private:
  struct Phase {  // one stance or swing interval of a leg
    double t0, t1;
    bool swing;
    Vec3 from, to;  // world; stance holds `from`
  };

  struct BodyKinematics {
    Rot3 rotation;
    Vec3 position, velocity, acceleration, angular_velocity;
  };

  BodyKinematics body(double t) const;
  double body_x(double t) const;
  const Phase& phase_at(double t, int leg) const;

  GaitConfig cfg_;
  LegModel legs_[2];
  double walk_start_ = 0.0;
  std::vector<Phase> phases_[2];
  std::vector<ContactEvent> schedule_;
};

/// Generates the truth record (at IMU rate) and the corrupted sensor stream.
/// Deterministic per config.seed; the noise generator is mt19937_64 with
/// Box-Muller (see random.h).
std::pair<TruthRecord, SensorStream> generate(const GaitConfig& config);

/// The slip-velocity distribution assumed by the zero-velocity contact
/// measurement model, exposed for noise-model validation. It is never applied
/// to the truth: stance feet stay exactly pinned.
GaussianSampler contact_slip_sampler(const GaitConfig& config);

/// Random initial estimate draw: per-axis uniform roll/pitch/yaw within
/// +-euler_range and per-axis uniform velocity within +-vel_range,
/// deterministic per seed. `zero` forces the unperturbed baseline draw.
std::pair<Rot3, Vec3> initial_sampler(uint64_t seed,
                                      double euler_range = 30.0 * M_PI / 180.0,
                                      double vel_range = 1.0,
                                      bool zero = false);

}  // namespace inekf

#endif  // INEKF_GAIT_H

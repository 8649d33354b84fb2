#include "inekf/mc.h"

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <thread>

#include "inekf/filter.h"
#include "inekf/qekf.h"

namespace inekf {

namespace {

constexpr double kDeg = M_PI / 180.0;
constexpr double kInf = std::numeric_limits<double>::infinity();

std::string fmt9(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

double wrap_deg(double d) {
  d = std::fmod(d + 180.0, 360.0);
  if (d < 0) d += 360.0;
  return d - 180.0;
}

KinematicMeasurement measurement_from_encoders(int leg, const JointAngles& angles,
                                               const LegModel& model,
                                               double encoder_std) {
  KinematicMeasurement m;
  m.contact_id = leg;
  m.fk_position = fk_position(model, angles);
  m.fk_rotation = fk_rotation(model, angles);
  m.jacobian = leg_jacobian(model, angles);
  m.encoder_cov = encoder_std * encoder_std * Mat3::Identity();
  return m;
}

// Uniform replay interface over the two filters.
class FilterAdapter {
 public:
  virtual ~FilterAdapter() = default;
  virtual void propagate(const ImuSample& imu, double dt) = 0;
  virtual void update(const std::vector<KinematicMeasurement>& meas) = 0;
  virtual void add_contact(const KinematicMeasurement& meas) = 0;
  virtual void remove_contact(int id) = 0;
  virtual bool tracks(int id) const = 0;
  virtual NavState nav() const = 0;
  virtual ImuBias bias() const = 0;
  virtual bool finite() const = 0;
  virtual ErrorView error_view(const NavState& truth,
                               const ImuBias& truth_bias) const = 0;
};

// Indices of the error blocks for the contacts common to estimate and truth,
// in the estimate's tracking order.
std::vector<int> common_contact_selection(const NavState& estimate,
                                          const NavState& truth) {
  std::vector<int> sel;
  for (int i = 0; i < estimate.num_contacts(); ++i)
    if (truth.contact_index(estimate.contacts[i].id) >= 0) sel.push_back(i);
  return sel;
}

std::vector<Eigen::VectorXd> translation_nulls(int dim, int n_contacts) {
  std::vector<Eigen::VectorXd> nulls;
  for (int axis = 0; axis < 3; ++axis) {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(dim);
    v[6 + axis] = 1.0;
    for (int c = 0; c < n_contacts; ++c) v[9 + 3 * c + axis] = 1.0;
    nulls.push_back(v);
  }
  return nulls;
}

class InekfAdapter final : public FilterAdapter {
 public:
  InekfAdapter(const ContactInekf::Options& opt, FilterState init)
      : filter_(opt), state_(std::move(init)) {}

  void propagate(const ImuSample& imu, double dt) override {
    state_ = filter_.propagate(state_, imu, dt);
  }
  void update(const std::vector<KinematicMeasurement>& meas) override {
    state_ = filter_.update_kinematics(state_, meas);
  }
  void add_contact(const KinematicMeasurement& meas) override {
    state_ = filter_.add_contact(state_, meas);
  }
  void remove_contact(int id) override {
    state_ = filter_.remove_contact(state_, id);
  }
  bool tracks(int id) const override { return state_.nav.contact_index(id) >= 0; }
  NavState nav() const override { return state_.nav; }
  ImuBias bias() const override { return state_.bias; }

  bool finite() const override {
    return state_.nav.orientation.allFinite() && state_.nav.velocity.allFinite() &&
           state_.nav.position.allFinite() && state_.cov.allFinite();
  }

  ErrorView error_view(const NavState& truth,
                       const ImuBias& truth_bias) const override {
    const std::vector<int> sel = common_contact_selection(state_.nav, truth);
    NavState est_sel = state_.nav;
    est_sel.contacts.clear();
    NavState truth_sel = truth;
    truth_sel.contacts.clear();
    for (int i : sel) {
      const ContactPoint& c = state_.nav.contacts[i];
      est_sel.contacts.push_back(c);
      truth_sel.contacts.push_back(
          {c.id, truth.contacts[truth.contact_index(c.id)].position});
    }

    const TangentVector xi = right_invariant_error(truth_sel, est_sel);
    const bool with_bias = filter_.options().estimate_bias;
    const int nsel = static_cast<int>(sel.size());
    const int edim = 9 + 3 * nsel + (with_bias ? 6 : 0);

    ErrorView view;
    view.error.resize(edim);
    view.error.head(9 + 3 * nsel) = xi;
    if (with_bias) {
      view.error.segment<3>(9 + 3 * nsel) = state_.bias.gyro - truth_bias.gyro;
      view.error.segment<3>(9 + 3 * nsel + 3) =
          state_.bias.accel - truth_bias.accel;
    }

    std::vector<int> idx;
    for (int i = 0; i < 9; ++i) idx.push_back(i);
    for (int i : sel)
      for (int k = 0; k < 3; ++k) idx.push_back(9 + 3 * i + k);
    if (with_bias)
      for (int k = 0; k < 6; ++k) idx.push_back(state_.bias_offset() + k);
    view.cov.resize(edim, edim);
    for (int r = 0; r < edim; ++r)
      for (int c = 0; c < edim; ++c) view.cov(r, c) = state_.cov(idx[r], idx[c]);

    // Right-invariant coordinates: yaw null is the gravity direction itself.
    Eigen::VectorXd yaw = Eigen::VectorXd::Zero(edim);
    yaw.head<3>() = filter_.options().gravity.normalized();
    view.null_dirs.push_back(yaw);
    for (auto& t : translation_nulls(edim, nsel)) view.null_dirs.push_back(t);
    return view;
  }

 private:
  ContactInekf filter_;
  FilterState state_;
};

class QekfAdapter final : public FilterAdapter {
 public:
  QekfAdapter(const QuaternionEkf::Options& opt, QekfState init)
      : filter_(opt), state_(std::move(init)) {}

  void propagate(const ImuSample& imu, double dt) override {
    state_ = filter_.propagate(state_, imu, dt);
  }
  void update(const std::vector<KinematicMeasurement>& meas) override {
    state_ = filter_.update_kinematics(state_, meas);
  }
  void add_contact(const KinematicMeasurement& meas) override {
    state_ = filter_.add_contact(state_, meas);
  }
  void remove_contact(int id) override {
    state_ = filter_.remove_contact(state_, id);
  }
  bool tracks(int id) const override { return state_.contact_index(id) >= 0; }
  NavState nav() const override { return state_.nav_state(); }
  ImuBias bias() const override { return state_.bias; }

  bool finite() const override {
    return state_.orientation.coeffs().allFinite() &&
           state_.velocity.allFinite() && state_.position.allFinite() &&
           state_.cov.allFinite();
  }

  ErrorView error_view(const NavState& truth,
                       const ImuBias& truth_bias) const override {
    const NavState est = state_.nav_state();
    const std::vector<int> sel = common_contact_selection(est, truth);
    const bool with_bias = filter_.options().estimate_bias;
    const int nsel = static_cast<int>(sel.size());
    const int edim = 9 + 3 * nsel + (with_bias ? 6 : 0);
    const Rot3 r = state_.rotation();

    ErrorView view;
    view.error.resize(edim);
    // Local multiplicative attitude error, additive the rest: truth = est + err.
    view.error.head<3>() = so3_log(r.transpose() * truth.orientation);
    view.error.segment<3>(3) = truth.velocity - state_.velocity;
    view.error.segment<3>(6) = truth.position - state_.position;
    for (int k = 0; k < nsel; ++k) {
      const ContactPoint& c = est.contacts[sel[k]];
      view.error.segment<3>(9 + 3 * k) =
          truth.contacts[truth.contact_index(c.id)].position - c.position;
    }
    if (with_bias) {
      view.error.segment<3>(9 + 3 * nsel) = truth_bias.gyro - state_.bias.gyro;
      view.error.segment<3>(9 + 3 * nsel + 3) =
          truth_bias.accel - state_.bias.accel;
    }

    std::vector<int> idx;
    for (int i = 0; i < 9; ++i) idx.push_back(i);
    for (int i : sel)
      for (int k = 0; k < 3; ++k) idx.push_back(9 + 3 * i + k);
    if (with_bias)
      for (int k = 0; k < 6; ++k) idx.push_back(state_.bias_offset() + k);
    view.cov.resize(edim, edim);
    for (int rr = 0; rr < edim; ++rr)
      for (int cc = 0; cc < edim; ++cc) view.cov(rr, cc) = state_.cov(idx[rr], idx[cc]);

    // A global rotation about gravity moves every additive state with it.
    const Vec3 gdir = filter_.options().gravity.normalized();
    Eigen::VectorXd yaw = Eigen::VectorXd::Zero(edim);
    yaw.head<3>() = r.transpose() * gdir;
    yaw.segment<3>(3) = gdir.cross(state_.velocity);
    yaw.segment<3>(6) = gdir.cross(state_.position);
    for (int k = 0; k < nsel; ++k)
      yaw.segment<3>(9 + 3 * k) = gdir.cross(est.contacts[sel[k]].position);
    view.null_dirs.push_back(yaw);
    for (auto& t : translation_nulls(edim, nsel)) view.null_dirs.push_back(t);
    return view;
  }

 private:
  QuaternionEkf filter_;
  QekfState state_;
};

TrialRow make_row(const TruthSample& ts, const FilterAdapter& f) {
  TrialRow row;
  row.t = ts.timestamp;
  const NavState est = f.nav();
  row.rpy_true_deg = rpy_from_rotation(ts.nav.orientation) / kDeg;
  row.rpy_est_deg = rpy_from_rotation(est.orientation) / kDeg;
  row.vel_body_true = ts.nav.orientation.transpose() * ts.nav.velocity;
  row.vel_body_est = est.orientation.transpose() * est.velocity;
  row.pos_err = est.position - ts.nav.position;
  row.bias_gyro = f.bias().gyro;
  row.bias_accel = f.bias().accel;
  const ErrorView view = f.error_view(ts.nav, ts.bias);
  row.nees = nees(view);
  row.nees_dof = static_cast<int>(view.error.size() - view.null_dirs.size());
  return row;
}

double convergence_time(const std::vector<TrialRow>& rows,
                        const ConvergenceThresholds& conv) {
  if (rows.empty()) return kInf;
  const auto converged_at = [&conv](const TrialRow& r) {
    const double droll = wrap_deg(r.rpy_est_deg.x() - r.rpy_true_deg.x());
    const double dpitch = wrap_deg(r.rpy_est_deg.y() - r.rpy_true_deg.y());
    return std::abs(droll) < conv.angle_deg && std::abs(dpitch) < conv.angle_deg &&
           (r.vel_body_est - r.vel_body_true).norm() < conv.velocity;
  };
  long last_fail = -1;
  for (size_t i = 0; i < rows.size(); ++i)
    if (!converged_at(rows[i])) last_fail = static_cast<long>(i);
  const size_t start = static_cast<size_t>(last_fail + 1);
  if (start >= rows.size()) return kInf;
  const double t0 = rows[start].t;
  if (rows.back().t - t0 < conv.dwell) return kInf;
  return t0;
}

double nearest_rank_quantile(std::vector<double> v, double q) {
  if (v.empty()) return kInf;
  std::sort(v.begin(), v.end());
  const size_t idx = std::min(
      v.size() - 1,
      static_cast<size_t>(std::ceil(q * static_cast<double>(v.size())) - 1));
  return v[std::max<size_t>(idx, 0)];
}

}  // namespace

std::string to_string(FilterKind kind) {
  return kind == FilterKind::riekf ? "riekf" : "qekf";
}

double nees(const ErrorView& view) {
  if (view.error.size() == 0 || view.error.norm() == 0.0) return 0.0;
  const int n = static_cast<int>(view.error.size());
  Eigen::VectorXd err = view.error;
  Eigen::MatrixXd cov = view.cov;
  if (!view.null_dirs.empty()) {
    const int k = static_cast<int>(view.null_dirs.size());
    Eigen::MatrixXd nulls(n, k);
    for (int i = 0; i < k; ++i) nulls.col(i) = view.null_dirs[i].normalized();
    const Eigen::HouseholderQR<Eigen::MatrixXd> qr(nulls);
    const Eigen::MatrixXd q = qr.householderQ();
    const Eigen::MatrixXd basis = q.rightCols(n - k);  // observable subspace
    err = basis.transpose() * view.error;
    cov = basis.transpose() * view.cov * basis;
  }
  const double value = err.dot(cov.ldlt().solve(err));
  return std::isfinite(value) ? std::max(value, 0.0) : kInf;
}

void HarnessConfig::apply_preset(const std::string& name) {
  if (name == "desk") {
    gait.imu_rate = 200.0;
    gait.encoder_rate = 500.0;
    gait.duration = 8.0;
  } else if (name == "paper") {
    gait.imu_rate = 800.0;
    gait.encoder_rate = 2000.0;
    gait.duration = 10.0;
  } else {
    throw std::runtime_error("unknown preset '" + name + "' (desk|paper)");
  }
}

HarnessConfig HarnessConfig::from_config(const KeyValueConfig& kv) {
  static const std::vector<std::string> known = {
      "preset", "trials", "seed", "filter", "out", "log_rate", "estimate_bias",
      "threads", "min_median_ratio", "final_window",
      "conv.angle_deg", "conv.velocity", "conv.dwell",
      "init_std.orientation_deg", "init_std.velocity", "init_std.position",
      "init_std.contact", "init_std.gyro_bias", "init_std.accel_bias",
      "init.euler_range_deg", "init.vel_range", "init.zero_error",
      "gait.duration", "gait.imu_rate", "gait.encoder_rate",
      "gait.step_duration", "gait.double_support_fraction", "gait.v_start",
      "gait.v_end", "gait.ramp_time", "gait.step_height", "gait.body_height",
      "gait.drop", "gait.drop_duration", "gait.sway", "gait.bob",
      "gait.rock_roll_deg", "gait.rock_pitch_deg", "gait.rock_yaw_deg",
      "gait.lean_deg", "gait.lean_period", "gait.gravity_z",
      "noise.gyro_std", "noise.accel_std", "noise.gyro_bias_std",
      "noise.accel_bias_std", "noise.contact_vel_std", "noise.encoder_std_deg",
      "true_bias.gyro", "true_bias.accel",
      "leg.hip_offset", "leg.thigh", "leg.shank"};
  for (const auto& [key, value] : kv.entries()) {
    (void)value;
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw std::runtime_error("config: unknown key '" + key + "'");
  }

  HarnessConfig c;
  if (kv.has("preset")) c.apply_preset(kv.get_string("preset", ""));

  c.trials = kv.get_int("trials", c.trials);
  c.seed = kv.get_uint64("seed", c.seed);
  c.filter = kv.get_string("filter", c.filter);
  c.out_dir = kv.get_string("out", c.out_dir);
  c.log_rate = kv.get_double("log_rate", c.log_rate);
  c.estimate_bias = kv.get_bool("estimate_bias", c.estimate_bias);
  c.threads = kv.get_int("threads", c.threads);
  c.min_median_ratio = kv.get_double("min_median_ratio", c.min_median_ratio);
  c.final_window = kv.get_double("final_window", c.final_window);

  c.conv.angle_deg = kv.get_double("conv.angle_deg", c.conv.angle_deg);
  c.conv.velocity = kv.get_double("conv.velocity", c.conv.velocity);
  c.conv.dwell = kv.get_double("conv.dwell", c.conv.dwell);

  c.init_std.orientation =
      kv.get_double("init_std.orientation_deg", c.init_std.orientation / kDeg) * kDeg;
  c.init_std.velocity = kv.get_double("init_std.velocity", c.init_std.velocity);
  c.init_std.position = kv.get_double("init_std.position", c.init_std.position);
  c.init_std.contact = kv.get_double("init_std.contact", c.init_std.contact);
  c.init_std.gyro_bias = kv.get_double("init_std.gyro_bias", c.init_std.gyro_bias);
  c.init_std.accel_bias =
      kv.get_double("init_std.accel_bias", c.init_std.accel_bias);

  c.init_euler_range =
      kv.get_double("init.euler_range_deg", c.init_euler_range / kDeg) * kDeg;
  c.init_vel_range = kv.get_double("init.vel_range", c.init_vel_range);
  c.zero_init_error = kv.get_bool("init.zero_error", c.zero_init_error);

  GaitConfig& g = c.gait;
  g.duration = kv.get_double("gait.duration", g.duration);
  g.imu_rate = kv.get_double("gait.imu_rate", g.imu_rate);
  g.encoder_rate = kv.get_double("gait.encoder_rate", g.encoder_rate);
  g.step_duration = kv.get_double("gait.step_duration", g.step_duration);
  g.double_support_fraction =
      kv.get_double("gait.double_support_fraction", g.double_support_fraction);
  g.v_start = kv.get_double("gait.v_start", g.v_start);
  g.v_end = kv.get_double("gait.v_end", g.v_end);
  g.ramp_time = kv.get_double("gait.ramp_time", g.ramp_time);
  g.step_height = kv.get_double("gait.step_height", g.step_height);
  g.body_height = kv.get_double("gait.body_height", g.body_height);
  g.drop = kv.get_double("gait.drop", g.drop);
  g.drop_duration = kv.get_double("gait.drop_duration", g.drop_duration);
  g.sway_amplitude = kv.get_double("gait.sway", g.sway_amplitude);
  g.bob_amplitude = kv.get_double("gait.bob", g.bob_amplitude);
  g.rock_amplitude.x() =
      kv.get_double("gait.rock_roll_deg", g.rock_amplitude.x() / kDeg) * kDeg;
  g.rock_amplitude.y() =
      kv.get_double("gait.rock_pitch_deg", g.rock_amplitude.y() / kDeg) * kDeg;
  g.rock_amplitude.z() =
      kv.get_double("gait.rock_yaw_deg", g.rock_amplitude.z() / kDeg) * kDeg;
  g.lean_amplitude =
      kv.get_double("gait.lean_deg", g.lean_amplitude / kDeg) * kDeg;
  g.lean_period = kv.get_double("gait.lean_period", g.lean_period);
  g.gravity.z() = kv.get_double("gait.gravity_z", g.gravity.z());

  g.noise.gyro_std = kv.get_double("noise.gyro_std", g.noise.gyro_std);
  g.noise.accel_std = kv.get_double("noise.accel_std", g.noise.accel_std);
  g.noise.gyro_bias_std =
      kv.get_double("noise.gyro_bias_std", g.noise.gyro_bias_std);
  g.noise.accel_bias_std =
      kv.get_double("noise.accel_bias_std", g.noise.accel_bias_std);
  g.noise.contact_vel_std =
      kv.get_double("noise.contact_vel_std", g.noise.contact_vel_std);
  g.noise.encoder_std =
      kv.get_double("noise.encoder_std_deg", g.noise.encoder_std / kDeg) * kDeg;

  g.true_bias.gyro = kv.get_vec3("true_bias.gyro", g.true_bias.gyro);
  g.true_bias.accel = kv.get_vec3("true_bias.accel", g.true_bias.accel);

  g.leg.hip_offset = kv.get_vec3("leg.hip_offset", g.leg.hip_offset);
  g.leg.thigh_length = kv.get_double("leg.thigh", g.leg.thigh_length);
  g.leg.shank_length = kv.get_double("leg.shank", g.leg.shank_length);

  if (c.filter != "riekf" && c.filter != "qekf" && c.filter != "both")
    throw std::runtime_error("config: filter must be riekf, qekf or both");
  if (c.trials < 1) throw std::runtime_error("config: trials must be >= 1");
  if (c.log_rate <= 0) throw std::runtime_error("config: log_rate must be > 0");
  const double ratio = g.imu_rate / c.log_rate;
  if (std::abs(ratio - std::round(ratio)) > 1e-9 || ratio < 1.0)
    throw std::runtime_error("config: log_rate must divide gait.imu_rate");

  g.seed = c.seed;  // one shared stream per experiment
  return c;
}

std::string HarnessConfig::echo() const {
  std::map<std::string, std::string> m;
  m["trials"] = std::to_string(trials);
  m["seed"] = std::to_string(seed);
  m["filter"] = filter;
  m["out"] = out_dir;
  m["log_rate"] = fmt9(log_rate);
  m["estimate_bias"] = estimate_bias ? "true" : "false";
  m["threads"] = std::to_string(threads);
  m["min_median_ratio"] = fmt9(min_median_ratio);
  m["final_window"] = fmt9(final_window);
  m["conv.angle_deg"] = fmt9(conv.angle_deg);
  m["conv.velocity"] = fmt9(conv.velocity);
  m["conv.dwell"] = fmt9(conv.dwell);
  m["init_std.orientation_deg"] = fmt9(init_std.orientation / kDeg);
  m["init_std.velocity"] = fmt9(init_std.velocity);
  m["init_std.position"] = fmt9(init_std.position);
  m["init_std.contact"] = fmt9(init_std.contact);
  m["init_std.gyro_bias"] = fmt9(init_std.gyro_bias);
  m["init_std.accel_bias"] = fmt9(init_std.accel_bias);
  m["init.euler_range_deg"] = fmt9(init_euler_range / kDeg);
  m["init.vel_range"] = fmt9(init_vel_range);
  m["init.zero_error"] = zero_init_error ? "true" : "false";
  m["gait.duration"] = fmt9(gait.duration);
  m["gait.imu_rate"] = fmt9(gait.imu_rate);
  m["gait.encoder_rate"] = fmt9(gait.encoder_rate);
  m["gait.step_duration"] = fmt9(gait.step_duration);
  m["gait.double_support_fraction"] = fmt9(gait.double_support_fraction);
  m["gait.v_start"] = fmt9(gait.v_start);
  m["gait.v_end"] = fmt9(gait.v_end);
  m["gait.ramp_time"] = fmt9(gait.ramp_time);
  m["gait.step_height"] = fmt9(gait.step_height);
  m["gait.body_height"] = fmt9(gait.body_height);
  m["gait.drop"] = fmt9(gait.drop);
  m["gait.drop_duration"] = fmt9(gait.drop_duration);
  m["gait.sway"] = fmt9(gait.sway_amplitude);
  m["gait.bob"] = fmt9(gait.bob_amplitude);
  m["gait.rock_roll_deg"] = fmt9(gait.rock_amplitude.x() / kDeg);
  m["gait.rock_pitch_deg"] = fmt9(gait.rock_amplitude.y() / kDeg);
  m["gait.rock_yaw_deg"] = fmt9(gait.rock_amplitude.z() / kDeg);
  m["gait.lean_deg"] = fmt9(gait.lean_amplitude / kDeg);
  m["gait.lean_period"] = fmt9(gait.lean_period);
  m["gait.gravity_z"] = fmt9(gait.gravity.z());
  m["noise.gyro_std"] = fmt9(gait.noise.gyro_std);
  m["noise.accel_std"] = fmt9(gait.noise.accel_std);
  m["noise.gyro_bias_std"] = fmt9(gait.noise.gyro_bias_std);
  m["noise.accel_bias_std"] = fmt9(gait.noise.accel_bias_std);
  m["noise.contact_vel_std"] = fmt9(gait.noise.contact_vel_std);
  m["noise.encoder_std_deg"] = fmt9(gait.noise.encoder_std / kDeg);
  m["true_bias.gyro"] = fmt9(gait.true_bias.gyro.x()) + ", " +
                        fmt9(gait.true_bias.gyro.y()) + ", " +
                        fmt9(gait.true_bias.gyro.z());
  m["true_bias.accel"] = fmt9(gait.true_bias.accel.x()) + ", " +
                         fmt9(gait.true_bias.accel.y()) + ", " +
                         fmt9(gait.true_bias.accel.z());
  m["leg.hip_offset"] = fmt9(gait.leg.hip_offset.x()) + ", " +
                        fmt9(gait.leg.hip_offset.y()) + ", " +
                        fmt9(gait.leg.hip_offset.z());
  m["leg.thigh"] = fmt9(gait.leg.thigh_length);
  m["leg.shank"] = fmt9(gait.leg.shank_length);

  std::string out;
  for (const auto& [k, v] : m) out += k + " = " + v + "\n";
  return out;
}

TrialRecord run_trial(const HarnessConfig& cfg, const TruthRecord& truth,
                      const SensorStream& stream, FilterKind kind, int trial_id) {
  TrialRecord rec;
  rec.trial_id = trial_id;
  rec.seed = derive_seed(cfg.seed, 1000 + static_cast<uint64_t>(trial_id));
  rec.kind = kind;

  const auto [r0, v0] = initial_sampler(rec.seed, cfg.init_euler_range,
                                        cfg.init_vel_range, cfg.zero_init_error);
  const TruthSample& t0 = truth.samples.front();

  EstimatorOptions opt;
  opt.gravity = cfg.gait.gravity;
  opt.estimate_bias = cfg.estimate_bias;
  opt.noise = cfg.gait.noise;

  Eigen::MatrixXd p0 = Eigen::MatrixXd::Zero(15, 15);
  p0.block<3, 3>(0, 0) =
      cfg.init_std.orientation * cfg.init_std.orientation * Mat3::Identity();
  p0.block<3, 3>(3, 3) =
      cfg.init_std.velocity * cfg.init_std.velocity * Mat3::Identity();
  p0.block<3, 3>(6, 6) =
      cfg.init_std.position * cfg.init_std.position * Mat3::Identity();
  if (cfg.estimate_bias) {
    p0.block<3, 3>(9, 9) =
        cfg.init_std.gyro_bias * cfg.init_std.gyro_bias * Mat3::Identity();
    p0.block<3, 3>(12, 12) =
        cfg.init_std.accel_bias * cfg.init_std.accel_bias * Mat3::Identity();
  }

  std::unique_ptr<FilterAdapter> adapter;
  if (kind == FilterKind::riekf) {
    FilterState init;
    init.nav.orientation = r0;
    init.nav.velocity = v0;
    init.nav.position = t0.nav.position;
    init.cov = p0;
    adapter = std::make_unique<InekfAdapter>(opt, std::move(init));
  } else {
    QekfState init;
    init.orientation = Eigen::Quaterniond(r0).normalized();
    init.velocity = v0;
    init.position = t0.nav.position;
    init.cov = p0;
    adapter = std::make_unique<QekfAdapter>(opt, std::move(init));
  }

  const LegModel legs[2] = {LegModel(cfg.gait.leg), [&] {
                              LegModel m = cfg.gait.leg;
                              m.hip_offset.y() = -m.hip_offset.y();
                              return m;
                            }()};
  const double enc_std = cfg.gait.noise.encoder_std;
  const long log_every =
      static_cast<long>(std::llround(cfg.gait.imu_rate / cfg.log_rate));

  bool active[2] = {false, false};
  std::optional<ImuSample> pending;
  double t_state = 0.0;
  long imu_count = 0;

  const auto advance_to = [&](double t) {
    if (pending && t > t_state) {
      adapter->propagate(*pending, t - t_state);
      t_state = t;
    }
  };

  const auto& events = stream.events;
  try {
    size_t i = 0;
    while (i < events.size()) {
      const double t = event_time(events[i]);
      size_t j = i;
      while (j < events.size() && event_time(events[j]) == t) ++j;

      advance_to(t);

      // Contact transitions first.
      for (size_t k = i; k < j; ++k) {
        if (const auto* c = std::get_if<ContactEvent>(&events[k])) {
          active[c->leg] = c->in_contact;
          if (!c->in_contact && adapter->tracks(c->leg))
            adapter->remove_contact(c->leg);
        }
      }
      // Encoder samples: new contacts are initialized, tracked ones update.
      std::vector<KinematicMeasurement> updates;
      for (size_t k = i; k < j; ++k) {
        if (const auto* e = std::get_if<EncoderSample>(&events[k])) {
          if (!active[e->leg]) continue;
          const KinematicMeasurement m =
              measurement_from_encoders(e->leg, e->angles, legs[e->leg], enc_std);
          if (adapter->tracks(e->leg))
            updates.push_back(m);
          else
            adapter->add_contact(m);
        }
      }
      if (!updates.empty()) adapter->update(updates);
      // IMU sample: becomes the zero-order-hold input; log against truth.
      for (size_t k = i; k < j; ++k) {
        if (const auto* s = std::get_if<ImuSample>(&events[k])) {
          pending = *s;
          t_state = t;
          if (imu_count % log_every == 0)
            rec.rows.push_back(
                make_row(truth.samples[static_cast<size_t>(imu_count)], *adapter));
          ++imu_count;
        }
      }

      if (!adapter->finite()) {
        rec.diverged = true;
        rec.diverged_at = t;
        break;
      }
      i = j;
    }
  } catch (const std::runtime_error&) {
    rec.diverged = true;
    rec.diverged_at = t_state;
  }

  if (!rec.diverged) rec.convergence_time = convergence_time(rec.rows, cfg.conv);
  return rec;
}

const FilterSummary* SummaryMetrics::find(FilterKind kind) const {
  for (const auto& f : filters)
    if (f.kind == kind) return &f;
  return nullptr;
}

SummaryMetrics summarize(const std::vector<TrialRecord>& records,
                         const HarnessConfig& cfg) {
  SummaryMetrics out;
  for (const FilterKind kind : {FilterKind::riekf, FilterKind::qekf}) {
    FilterSummary s;
    s.kind = kind;
    std::vector<double> conv_times;
    double sq_roll = 0, sq_pitch = 0, sq_vel = 0, nees_sum = 0;
    long n_final = 0, n_nees = 0;
    for (const TrialRecord& rec : records) {
      if (rec.kind != kind) continue;
      ++s.trials;
      if (rec.diverged) ++s.diverged;
      conv_times.push_back(rec.convergence_time);
      if (std::isfinite(rec.convergence_time)) {
        ++s.converged;
        const double t_cut = rec.rows.back().t - cfg.final_window;
        for (const TrialRow& r : rec.rows) {
          if (r.t < t_cut) continue;
          sq_roll += std::pow(wrap_deg(r.rpy_est_deg.x() - r.rpy_true_deg.x()), 2);
          sq_pitch += std::pow(wrap_deg(r.rpy_est_deg.y() - r.rpy_true_deg.y()), 2);
          sq_vel += (r.vel_body_est - r.vel_body_true).squaredNorm();
          ++n_final;
          if (std::isfinite(r.nees)) {
            nees_sum += r.nees;
            ++n_nees;
          }
        }
      }
    }
    if (s.trials == 0) continue;
    s.converged_fraction = static_cast<double>(s.converged) / s.trials;
    s.median_convergence = nearest_rank_quantile(conv_times, 0.5);
    const double q75 = nearest_rank_quantile(conv_times, 0.75);
    const double q25 = nearest_rank_quantile(conv_times, 0.25);
    s.iqr_convergence = std::isinf(q75) ? kInf : q75 - q25;
    if (n_final > 0) {
      s.final_rms_roll_deg = std::sqrt(sq_roll / n_final);
      s.final_rms_pitch_deg = std::sqrt(sq_pitch / n_final);
      s.final_rms_vel = std::sqrt(sq_vel / n_final);
    }
    if (n_nees > 0) s.mean_nees = nees_sum / n_nees;
    out.filters.push_back(s);
  }
  return out;
}

std::string trial_csv(const TrialRecord& rec) {
  std::string out =
      "t,roll_true_deg,pitch_true_deg,yaw_true_deg,roll_est_deg,pitch_est_deg,"
      "yaw_est_deg,vx_body_true,vy_body_true,vz_body_true,vx_body_est,"
      "vy_body_est,vz_body_est,pos_err_x,pos_err_y,pos_err_z,bias_gyro_x,"
      "bias_gyro_y,bias_gyro_z,bias_accel_x,bias_accel_y,bias_accel_z,nees\n";
  for (const TrialRow& r : rec.rows) {
    const double vals[] = {r.t,
                           r.rpy_true_deg.x(), r.rpy_true_deg.y(), r.rpy_true_deg.z(),
                           r.rpy_est_deg.x(), r.rpy_est_deg.y(), r.rpy_est_deg.z(),
                           r.vel_body_true.x(), r.vel_body_true.y(), r.vel_body_true.z(),
                           r.vel_body_est.x(), r.vel_body_est.y(), r.vel_body_est.z(),
                           r.pos_err.x(), r.pos_err.y(), r.pos_err.z(),
                           r.bias_gyro.x(), r.bias_gyro.y(), r.bias_gyro.z(),
                           r.bias_accel.x(), r.bias_accel.y(), r.bias_accel.z(),
                           r.nees};
    for (size_t i = 0; i < std::size(vals); ++i) {
      if (i) out += ',';
      out += fmt9(vals[i]);
    }
    out += '\n';
  }
  return out;
}

std::string summary_csv(const SummaryMetrics& summary) {
  std::string out =
      "filter,trials,converged,diverged,converged_fraction,"
      "median_convergence_s,iqr_convergence_s,final_rms_roll_deg,"
      "final_rms_pitch_deg,final_rms_vel_mps,mean_nees\n";
  for (const FilterSummary& s : summary.filters) {
    out += to_string(s.kind) + ',' + std::to_string(s.trials) + ',' +
           std::to_string(s.converged) + ',' + std::to_string(s.diverged) + ',' +
           fmt9(s.converged_fraction) + ',' + fmt9(s.median_convergence) + ',' +
           fmt9(s.iqr_convergence) + ',' + fmt9(s.final_rms_roll_deg) + ',' +
           fmt9(s.final_rms_pitch_deg) + ',' + fmt9(s.final_rms_vel) + ',' +
           fmt9(s.mean_nees) + '\n';
  }
  return out;
}

std::string stream_csv(const TruthRecord& truth, const SensorStream& stream) {
  // Generic schema: t,kind,leg,v1..v9; unused fields stay empty.
  std::string out = "t,kind,leg,v1,v2,v3,v4,v5,v6,v7,v8,v9\n";
  const auto row = [&out](double t, const char* kind, const std::string& leg,
                          const std::vector<double>& vals) {
    out += fmt9(t);
    out += ',';
    out += kind;
    out += ',';
    out += leg;
    for (size_t i = 0; i < 9; ++i) {
      out += ',';
      if (i < vals.size()) out += fmt9(vals[i]);
    }
    out += '\n';
  };

  size_t ti = 0;
  for (const SensorEvent& ev : stream.events) {
    if (const auto* s = std::get_if<ImuSample>(&ev)) {
      // Interleave the truth row at its IMU tick.
      if (ti < truth.samples.size()) {
        const TruthSample& tr = truth.samples[ti++];
        const Vec3 rpy = rpy_from_rotation(tr.nav.orientation) / kDeg;
        row(tr.timestamp, "truth", "",
            {rpy.x(), rpy.y(), rpy.z(), tr.nav.velocity.x(), tr.nav.velocity.y(),
             tr.nav.velocity.z(), tr.nav.position.x(), tr.nav.position.y(),
             tr.nav.position.z()});
      }
      row(s->timestamp, "imu", "",
          {s->gyro.x(), s->gyro.y(), s->gyro.z(), s->accel.x(), s->accel.y(),
           s->accel.z()});
    } else if (const auto* e = std::get_if<EncoderSample>(&ev)) {
      row(e->timestamp, "encoder", std::to_string(e->leg),
          {e->angles[0], e->angles[1], e->angles[2]});
    } else if (const auto* c = std::get_if<ContactEvent>(&ev)) {
      row(c->timestamp, "contact", std::to_string(c->leg),
          {c->in_contact ? 1.0 : 0.0});
    }
  }
  return out;
}

int run_experiment(const HarnessConfig& cfg, SummaryMetrics* out_summary) {
  const auto [truth, stream] = generate(cfg.gait);

  std::vector<FilterKind> kinds;
  if (cfg.filter == "riekf" || cfg.filter == "both")
    kinds.push_back(FilterKind::riekf);
  if (cfg.filter == "qekf" || cfg.filter == "both")
    kinds.push_back(FilterKind::qekf);

  const size_t n_jobs = static_cast<size_t>(cfg.trials) * kinds.size();
  std::vector<TrialRecord> records(n_jobs);
  std::atomic<size_t> next{0};
  const unsigned n_threads = std::max(
      1u, cfg.threads > 0 ? static_cast<unsigned>(cfg.threads)
                          : std::thread::hardware_concurrency());
  const auto worker = [&] {
    for (;;) {
      const size_t idx = next.fetch_add(1);
      if (idx >= n_jobs) return;
      const int trial = static_cast<int>(idx / kinds.size());
      const FilterKind kind = kinds[idx % kinds.size()];
      records[idx] = run_trial(cfg, truth, stream, kind, trial);
    }
  };
  std::vector<std::thread> pool;
  for (unsigned i = 0; i + 1 < n_threads && i + 1 < n_jobs; ++i)
    pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();

  const SummaryMetrics summary = summarize(records, cfg);
  if (out_summary) *out_summary = summary;

  namespace fs = std::filesystem;
  fs::create_directories(fs::path(cfg.out_dir) / "trials");
  for (const TrialRecord& rec : records) {
    char name[64];
    std::snprintf(name, sizeof(name), "trial_%03d_%s.csv", rec.trial_id,
                  to_string(rec.kind).c_str());
    std::ofstream f(fs::path(cfg.out_dir) / "trials" / name);
    f << trial_csv(rec);
  }
  {
    std::ofstream f(fs::path(cfg.out_dir) / "summary.csv");
    f << summary_csv(summary);
  }
  {
    std::ofstream f(fs::path(cfg.out_dir) / "config-echo.txt");
    f << cfg.echo();
  }

  for (const FilterSummary& s : summary.filters) {
    std::printf(
        "%-6s trials=%d converged=%.0f%% diverged=%d median=%ss iqr=%ss "
        "rms(roll,pitch)=(%.3f,%.3f)deg rms(v)=%.4f m/s mean NEES=%.2f\n",
        to_string(s.kind).c_str(), s.trials, 100.0 * s.converged_fraction,
        s.diverged, fmt9(s.median_convergence).c_str(),
        fmt9(s.iqr_convergence).c_str(), s.final_rms_roll_deg,
        s.final_rms_pitch_deg, s.final_rms_vel, s.mean_nees);
  }
  return 0;
}

}  // namespace inekf

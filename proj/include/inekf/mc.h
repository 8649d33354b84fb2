// Monte-Carlo convergence experiment: both filters replayed over one shared
// sensor stream from randomized initial estimates, per-trial logs, and
// summary convergence metrics.

#ifndef INEKF_MC_H
#define INEKF_MC_H

#include <optional>
#include <string>
#include <vector>

#include "inekf/config.h"
#include "inekf/gait.h"

namespace inekf {

enum class FilterKind { riekf, qekf };

std::string to_string(FilterKind kind);

/// Convergence = roll and pitch errors below angle_deg AND body-frame
/// velocity error norm below velocity, holding from some time t to the end
/// of the trial with at least `dwell` seconds of margin.
struct ConvergenceThresholds {
  double angle_deg = 2.0;
  double velocity = 0.1;  // m/s
  double dwell = 0.5;     // s
};

/// Per-axis initial standard deviations of the error state.
struct InitialStd {
  double orientation = 30.0 * M_PI / 180.0;  // rad
  double velocity = 1.0;                     // m/s
  double position = 0.1;                     // m
  double contact = 0.1;                      // m (applied through augmentation)
  double gyro_bias = 0.005;                  // rad/s
  double accel_bias = 0.05;                  // m/s^2
};

struct HarnessConfig {
  GaitConfig gait;
  int trials = 100;
  uint64_t seed = 42;
  std::string filter = "both";  // riekf | qekf | both
  std::string out_dir = "out";
  double log_rate = 100.0;  // Hz, must divide the IMU rate
  bool estimate_bias = false;
  ConvergenceThresholds conv;
  InitialStd init_std;
  double init_euler_range = 30.0 * M_PI / 180.0;
  double init_vel_range = 1.0;
  bool zero_init_error = false;
  double final_window = 2.0;      // s of trailing data for the RMS metrics
  double min_median_ratio = 1.5;  // regression guard on qekf/riekf medians
  int threads = 0;                // 0 = hardware concurrency

  /// desk: 200/500 Hz rates, 8 s. paper: 800/2000 Hz, 10 s.
  void apply_preset(const std::string& name);

  /// Reads every recognized key; throws std::runtime_error on unknown keys
  /// or unparseable values.
  static HarnessConfig from_config(const KeyValueConfig& kv);

  /// Key = value echo of the effective configuration.
  std::string echo() const;
};

struct TrialRow {
  double t = 0.0;
  Vec3 rpy_true_deg = Vec3::Zero();
  Vec3 rpy_est_deg = Vec3::Zero();
  Vec3 vel_body_true = Vec3::Zero();
  Vec3 vel_body_est = Vec3::Zero();
  Vec3 pos_err = Vec3::Zero();
  Vec3 bias_gyro = Vec3::Zero();
  Vec3 bias_accel = Vec3::Zero();
  double nees = 0.0;
  int nees_dof = 0;  // observable dimension the NEES was computed over
};

struct TrialRecord {
  int trial_id = 0;
  uint64_t seed = 0;
  FilterKind kind = FilterKind::riekf;
  std::vector<TrialRow> rows;
  bool diverged = false;
  double diverged_at = 0.0;
  double convergence_time = std::numeric_limits<double>::infinity();
};

struct FilterSummary {
  FilterKind kind = FilterKind::riekf;
  int trials = 0;
  int converged = 0;
  int diverged = 0;
  double converged_fraction = 0.0;
  double median_convergence = 0.0;  // s; +inf when under half converge
  double iqr_convergence = 0.0;
  double final_rms_roll_deg = 0.0;
  double final_rms_pitch_deg = 0.0;
  double final_rms_vel = 0.0;
  double mean_nees = 0.0;
};

struct SummaryMetrics {
  std::vector<FilterSummary> filters;
  const FilterSummary* find(FilterKind kind) const;
};

/// Error vector in the filter's own convention, its covariance, and the
/// directions spanning the unobservable subspace at this instant.
struct ErrorView {
  Eigen::VectorXd error;
  Eigen::MatrixXd cov;
  std::vector<Eigen::VectorXd> null_dirs;
};

/// Normalized estimation error squared over the observable subspace: the
/// null directions are projected out, the rest is whitened by the restricted
/// covariance.
double nees(const ErrorView& view);

/// Replays one filter over the shared stream from the trial's sampled
/// initial estimate. Deterministic per (config, trial_id).
TrialRecord run_trial(const HarnessConfig& cfg, const TruthRecord& truth,
                      const SensorStream& stream, FilterKind kind, int trial_id);

/// Post-processing of a finished record set.
SummaryMetrics summarize(const std::vector<TrialRecord>& records,
                         const HarnessConfig& cfg);

std::string trial_csv(const TrialRecord& record);
std::string summary_csv(const SummaryMetrics& summary);
std::string stream_csv(const TruthRecord& truth, const SensorStream& stream);

/// Full experiment: generate the shared stream, run every trial (parallel,
/// merged in trial order), write trials/*.csv, summary.csv and config-echo.txt
/// under cfg.out_dir, and print the summary table. Returns 0 on completion;
/// configuration problems throw before any work starts.
int run_experiment(const HarnessConfig& cfg, SummaryMetrics* out_summary = nullptr);

}  // namespace inekf

#endif  // INEKF_MC_H

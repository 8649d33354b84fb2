// Deterministic random sampling with a fully specified algorithm:
// mt19937_64 raw draws, mapped to [0,1) as (x >> 11) * 2^-53, Gaussians via
// the Box-Muller transform. Avoids std::*_distribution, whose output is
// implementation-defined, so identical seeds give identical streams anywhere.

#ifndef INEKF_RANDOM_H
#define INEKF_RANDOM_H

#include <cstdint>
#include <random>

#include <Eigen/Core>

namespace inekf {

/// splitmix64 mix function; used to derive independent per-stream seeds.
uint64_t splitmix64(uint64_t x);

/// Seed for sub-stream `stream` of a master seed.
inline uint64_t derive_seed(uint64_t master, uint64_t stream) {
  return splitmix64(splitmix64(master) + stream);
}

class GaussianSampler {
 public:
  explicit GaussianSampler(uint64_t seed) : gen_(seed) {}

  /// Uniform in [0,1).
  double uniform01() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Standard normal via Box-Muller (pairs cached).
  double standard_normal();

  double normal(double stddev) { return stddev * standard_normal(); }

  Eigen::Vector3d normal_vec3(double stddev) {
    return {normal(stddev), normal(stddev), normal(stddev)};
  }

 private:
  std::mt19937_64 gen_;
  double cached_ = 0.0;
  bool has_cached_ = false;
};

}  // namespace inekf

#endif  // INEKF_RANDOM_H

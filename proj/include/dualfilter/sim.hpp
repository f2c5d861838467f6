#pragma once

#include <cmath>
#include <cstdint>
#include <iosfwd>
#include <random>
#include <vector>

#include "dualfilter/models.hpp"

namespace dualfilter {

/// SplitMix64 finaliser; used to derive independent per-path seeds from
/// (master seed, path index, stream) so Monte-Carlo runs do not depend on
/// how paths are scheduled across threads.
std::uint64_t mix_seed(std::uint64_t x);
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index, std::uint64_t stream = 0);

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double normal() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }
  double exponential(double rate) { return -std::log1p(-uniform()) / rate; }
  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

/// Uniform grid 0 = t_0 < ... < t_N = horizon.
struct TimeGrid {
  double dt = 0.0;
  long steps = 0;

  double horizon() const { return dt * static_cast<double>(steps); }
  double t(long k) const { return dt * static_cast<double>(k); }

  /// Grid with step dt covering [0, horizon]; dt must divide horizon to 1e-9.
  static TimeGrid covering(double horizon, double dt);
};

/// Piecewise-constant cadlag state path. `times[0] = 0` and state `states[k]`
/// holds on [times[k], times[k+1]).
struct StatePath {
  std::vector<double> times;
  std::vector<int> states;
  double horizon = 0.0;

  int state_at(double t) const;
  int initial() const { return states.front(); }
  int terminal() const { return states.back(); }
  std::size_t jump_count() const { return states.size() - 1; }
};

/// Observation increments dZ_k on [t_k, t_k + dt); column k is an m-vector.
struct ObservationPath {
  TimeGrid grid;
  Mat increments;

  Eigen::Index obs_dim() const { return increments.rows(); }
  long steps() const { return grid.steps; }
  /// Increments for steps [begin, end).
  ObservationPath slice(long begin, long end) const;
};

enum class Measure { physical, reference };

StatePath simulate_ctmc(const HmmModel& model, double horizon, std::uint64_t seed);

/// Start from a fixed state instead of sampling the prior.
StatePath simulate_ctmc_from(const Mat& rate, int x0, double horizon, Rng& rng);

/// Exact integral of h(X_s) over [t0, t1] along the path (m-vector).
Vec integrate_obs(const StatePath& path, const Mat& obs, double t0, double t1);

ObservationPath simulate_observation(const StatePath& path, const Mat& obs, double dt,
                                     std::uint64_t seed, Measure measure);

struct LinearGaussianSample {
  TimeGrid grid;
  Mat states;  // d x (N + 1)
  ObservationPath obs;
};

LinearGaussianSample simulate_linear_gaussian(const LinearGaussianModel& model, double horizon,
                                              double dt, std::uint64_t seed);

/// Exact distribution sample from a probability vector.
int sample_discrete(const Vec& p, Rng& rng);

void write_state_csv(std::ostream& os, const StatePath& path);
void write_observation_csv(std::ostream& os, const ObservationPath& obs);

}  // namespace dualfilter

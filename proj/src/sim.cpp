#include "dualfilter/sim.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <stdexcept>

namespace dualfilter {

namespace {
constexpr double kAbsorbing = 1e-14;
}

std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index, std::uint64_t stream) {
  return mix_seed(mix_seed(mix_seed(master) ^ index) ^ (stream * 0xd1b54a32d192ed03ULL));
}

TimeGrid TimeGrid::covering(double horizon, double dt) {
  if (!(horizon > 0.0) || !(dt > 0.0)) throw std::invalid_argument("time grid needs horizon > 0 and dt > 0");
  const double ratio = horizon / dt;
  const long steps = std::lround(ratio);
  if (steps < 1 || std::abs(static_cast<double>(steps) * dt - horizon) > 1e-9 * std::max(1.0, horizon)) {
    throw std::invalid_argument("dt does not divide the horizon");
  }
  return TimeGrid{horizon / static_cast<double>(steps), steps};
}

int StatePath::state_at(double t) const {
  auto it = std::upper_bound(times.begin(), times.end(), t);
  const auto k = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, (it - times.begin()) - 1));
  return states[k];
}

ObservationPath ObservationPath::slice(long begin, long end) const {
  if (begin < 0 || end > steps() || begin > end) throw std::invalid_argument("observation slice out of range");
  ObservationPath out;
  out.grid = TimeGrid{grid.dt, end - begin};
  out.increments = increments.middleCols(begin, end - begin);
  return out;
}

int sample_discrete(const Vec& p, Rng& rng) {
  const double u = rng.uniform() * p.sum();
  double acc = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    acc += p(i);
    if (u < acc) return static_cast<int>(i);
  }
  for (Eigen::Index i = p.size() - 1; i >= 0; --i) {
    if (p(i) > 0.0) return static_cast<int>(i);
  }
  return 0;
}

StatePath simulate_ctmc_from(const Mat& rate, int x0, double horizon, Rng& rng) {
  if (!(horizon > 0.0)) throw std::invalid_argument("simulate_ctmc: horizon must be positive");
  const auto d = rate.rows();
  StatePath path;
  path.horizon = horizon;
  path.times.push_back(0.0);
  path.states.push_back(x0);
  int state = x0;
  double t = 0.0;
  Vec jump(d);
  for (;;) {
    const double out_rate = -rate(state, state);
    if (out_rate <= kAbsorbing) break;
    t += rng.exponential(out_rate);
    if (t >= horizon) break;
    for (Eigen::Index j = 0; j < d; ++j) jump(j) = (j == state) ? 0.0 : std::max(rate(state, j), 0.0);
    state = sample_discrete(jump, rng);
    path.times.push_back(t);
    path.states.push_back(state);
  }
  return path;
}

StatePath simulate_ctmc(const HmmModel& model, double horizon, std::uint64_t seed) {
  Rng rng(seed);
  const int x0 = sample_discrete(model.prior, rng);
  return simulate_ctmc_from(model.rate, x0, horizon, rng);
}

Vec integrate_obs(const StatePath& path, const Mat& obs, double t0, double t1) {
  Vec acc = Vec::Zero(obs.cols());
  auto it = std::upper_bound(path.times.begin(), path.times.end(), t0);
  std::size_t k = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, (it - path.times.begin()) - 1));
  double left = t0;
  while (left < t1) {
    const double right = (k + 1 < path.times.size()) ? std::min(path.times[k + 1], t1) : t1;
    if (right > left) acc += (right - left) * obs.row(path.states[k]).transpose();
    left = right;
    ++k;
  }
  return acc;
}

ObservationPath simulate_observation(const StatePath& path, const Mat& obs, double dt,
                                     std::uint64_t seed, Measure measure) {
  ObservationPath out;
  out.grid = TimeGrid::covering(path.horizon, dt);
  const auto m = obs.cols();
  const long n = out.grid.steps;
  const double sdt = std::sqrt(out.grid.dt);
  out.increments.resize(m, n);
  Rng rng(seed);

  // Walk the jump list once, accumulating the drift of each step.
  std::size_t seg = 0;
  for (long k = 0; k < n; ++k) {
    const double t0 = out.grid.t(k);
    const double t1 = (k + 1 == n) ? path.horizon : out.grid.t(k + 1);
    Vec drift = Vec::Zero(m);
    if (measure == Measure::physical) {
      double left = t0;
      while (left < t1) {
        while (seg + 1 < path.times.size() && path.times[seg + 1] <= left) ++seg;
        const double right = (seg + 1 < path.times.size()) ? std::min(path.times[seg + 1], t1) : t1;
        drift += (right - left) * obs.row(path.states[seg]).transpose();
        left = right;
      }
    }
    for (Eigen::Index j = 0; j < m; ++j) out.increments(j, k) = drift(j) + sdt * rng.normal();
  }
  return out;
}

LinearGaussianSample simulate_linear_gaussian(const LinearGaussianModel& model, double horizon,
                                              double dt, std::uint64_t seed) {
  require_valid(model);
  LinearGaussianSample out;
  out.grid = TimeGrid::covering(horizon, dt);
  const auto d = model.dim();
  const auto m = model.obs_dim();
  const auto p = model.sigma.cols();
  const long n = out.grid.steps;
  const double h = out.grid.dt;
  const double sh = std::sqrt(h);
  Rng rng(seed);

  // cov0 may be singular; use the symmetric square root.
  Eigen::SelfAdjointEigenSolver<Mat> es(model.cov0);
  Mat root = es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();

  out.states.resize(d, n + 1);
  Vec xi(d);
  for (Eigen::Index i = 0; i < d; ++i) xi(i) = rng.normal();
  out.states.col(0) = model.mean0 + root * xi;

  out.obs.grid = out.grid;
  out.obs.increments.resize(m, n);
  Vec b(p), w(m);
  for (long k = 0; k < n; ++k) {
    const Vec x = out.states.col(k);
    for (Eigen::Index i = 0; i < p; ++i) b(i) = rng.normal();
    for (Eigen::Index j = 0; j < m; ++j) w(j) = rng.normal();
    out.obs.increments.col(k) = model.h_mat.transpose() * x * h + sh * w;
    out.states.col(k + 1) = x + model.a_mat.transpose() * x * h + sh * model.sigma * b;
  }
  return out;
}

void write_state_csv(std::ostream& os, const StatePath& path) {
  os << "t,state\n" << std::setprecision(17);
  for (std::size_t k = 0; k < path.states.size(); ++k) os << path.times[k] << "," << path.states[k] << "\n";
}

void write_observation_csv(std::ostream& os, const ObservationPath& obs) {
  os << "t";
  for (Eigen::Index j = 0; j < obs.obs_dim(); ++j) os << ",dZ_" << j + 1;
  os << "\n" << std::setprecision(17);
  for (long k = 0; k < obs.steps(); ++k) {
    os << obs.grid.t(k);
    for (Eigen::Index j = 0; j < obs.obs_dim(); ++j) os << "," << obs.increments(j, k);
    os << "\n";
  }
}

}  // namespace dualfilter

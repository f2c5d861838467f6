#pragma once

// Random model generators and independent oracles shared by the unit and
// acceptance suites. Nothing here calls the library's numerical kernels.

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "dualfilter/models.hpp"
#include "dualfilter/sim.hpp"

namespace testsupport {

using dualfilter::HmmModel;
using dualfilter::LinearGaussianModel;
using dualfilter::Mat;
using dualfilter::Vec;

class Gen {
 public:
  explicit Gen(std::uint64_t seed) : eng_(seed) {}

  double uniform(double lo = 0.0, double hi = 1.0) { return std::uniform_real_distribution<double>(lo, hi)(eng_); }
  double normal() { return std::normal_distribution<double>(0.0, 1.0)(eng_); }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(eng_); }

  Vec simplex(Eigen::Index d, double floor = 0.0) {
    Vec p(d);
    for (Eigen::Index i = 0; i < d; ++i) p(i) = floor + std::exponential_distribution<double>(1.0)(eng_);
    return p / p.sum();
  }

  Mat gaussian(Eigen::Index r, Eigen::Index c) {
    Mat m(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
      for (Eigen::Index j = 0; j < c; ++j) m(i, j) = normal();
    return m;
  }

  /// Dense generator with off-diagonal rates in [lo, hi].
  Mat rate(Eigen::Index d, double lo = 0.2, double hi = 2.0) {
    Mat a = Mat::Zero(d, d);
    for (Eigen::Index i = 0; i < d; ++i) {
      for (Eigen::Index j = 0; j < d; ++j) {
        if (i != j) a(i, j) = uniform(lo, hi);
      }
      a(i, i) = -a.row(i).sum();
    }
    return a;
  }

  HmmModel hmm(Eigen::Index d, Eigen::Index m = 1, double h_scale = 1.5) {
    HmmModel model{rate(d), Mat(d, m), simplex(d, 0.1)};
    for (Eigen::Index i = 0; i < d; ++i)
      for (Eigen::Index j = 0; j < m; ++j) model.obs(i, j) = uniform(-h_scale, h_scale);
    return model;
  }

  Mat spd(Eigen::Index d, double shift = 0.2) {
    const Mat g = gaussian(d, d);
    return g * g.transpose() / static_cast<double>(d) + shift * Mat::Identity(d, d);
  }

  /// Linear-Gaussian model; with `stable` the drift A^T has spectral abscissa <= -0.1.
  LinearGaussianModel linear_gaussian(Eigen::Index d, Eigen::Index m, Eigen::Index p, bool stable) {
    Mat a = gaussian(d, d) / std::sqrt(static_cast<double>(d));
    if (stable) {
      Eigen::EigenSolver<Mat> es(a, false);
      const double abscissa = es.eigenvalues().real().maxCoeff();
      a -= (abscissa + 0.1 + uniform(0.0, 0.5)) * Mat::Identity(d, d);
    }
    LinearGaussianModel model;
    model.a_mat = a;
    model.h_mat = gaussian(d, m);
    model.sigma = gaussian(d, p) * 0.7;
    model.mean0 = gaussian(d, 1).col(0);
    model.cov0 = spd(d, 0.3);
    return model;
  }

  std::mt19937_64& engine() { return eng_; }

 private:
  std::mt19937_64 eng_;
};

/// exp(A t) by uniformization: sum_k Poisson(lambda t; k) (I + A / lambda)^k.
inline Mat uniformized_transition(const Mat& a, double t) {
  const auto d = a.rows();
  const double lambda = std::max(1e-12, (-a.diagonal()).maxCoeff());
  const Mat step = Mat::Identity(d, d) + a / lambda;
  const double lt = lambda * t;
  Mat power = Mat::Identity(d, d);
  Mat out = Mat::Zero(d, d);
  double weight = std::exp(-lt);
  for (int k = 0; k < 400; ++k) {
    out += weight * power;
    power = power * step;
    weight *= lt / (k + 1);
    if (weight < 1e-300 && k > lt) break;
  }
  return out;
}

/// Gaussian density (up to a constant) of the increment dZ_k given X_{k+1} = i.
inline Vec gaussian_emission(const Mat& obs, const Mat& dz, long k, double dt) {
  Vec e(obs.rows());
  for (Eigen::Index i = 0; i < obs.rows(); ++i) {
    const Vec r = dz.col(k) - obs.row(i).transpose() * dt;
    e(i) = std::exp(-r.squaredNorm() / (2.0 * dt));
  }
  return e;
}

/// Scaled forward (alpha) recursion of the discrete HMM; column k is P(X_k | dZ_0..dZ_{k-1}).
inline Mat discrete_filter(const Mat& transition, const Mat& obs, const Vec& prior, const Mat& dz, double dt) {
  const auto d = transition.rows();
  const long n = dz.cols();
  Mat alpha(d, n + 1);
  alpha.col(0) = prior;
  for (long k = 0; k < n; ++k) {
    Vec next = Vec::Zero(d);
    for (Eigen::Index j = 0; j < d; ++j)
      for (Eigen::Index i = 0; i < d; ++i) next(j) += alpha(i, k) * transition(i, j);
    next = next.cwiseProduct(gaussian_emission(obs, dz, k, dt));
    alpha.col(k + 1) = next / next.sum();
  }
  return alpha;
}

/// Classic scaled alpha-beta recursion for the same discrete HMM.
inline Mat discrete_forward_backward(const Mat& transition, const Mat& obs, const Vec& prior, const Mat& dz,
                                     double dt) {
  const auto d = transition.rows();
  const long n = dz.cols();
  auto emission = [&](long k) { return gaussian_emission(obs, dz, k, dt); };
  const Mat alpha = discrete_filter(transition, obs, prior, dz, dt);
  Mat beta(d, n + 1);
  beta.col(n) = Vec::Ones(d);
  for (long k = n - 1; k >= 0; --k) {
    const Vec e = emission(k);
    Vec prev = Vec::Zero(d);
    for (Eigen::Index i = 0; i < d; ++i)
      for (Eigen::Index j = 0; j < d; ++j) prev(i) += transition(i, j) * e(j) * beta(j, k + 1);
    beta.col(k) = prev / prev.sum();
  }
  Mat gamma(d, n + 1);
  for (long k = 0; k <= n; ++k) {
    const Vec g = alpha.col(k).cwiseProduct(beta.col(k));
    gamma.col(k) = g / g.sum();
  }
  return gamma;
}

inline double total_variation(const Vec& p, const Vec& q) { return 0.5 * (p - q).cwiseAbs().sum(); }

}  // namespace testsupport

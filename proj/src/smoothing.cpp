#include "dualfilter/smoothing.hpp"

#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <stdexcept>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

namespace dualfilter {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kMaxCondition = 1e12;
constexpr double kMinEigenvalue = 1e-10;

Vec safe_log(const Vec& v) {
  Vec out(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) out(i) = v(i) > 0.0 ? std::log(v(i)) : kNegInf;
  return out;
}

}  // namespace

SmoothingPath forward_backward_smoother(const HmmModel& model, const ObservationPath& obs) {
  require_valid(model);
  if (obs.obs_dim() != model.obs_dim()) throw std::invalid_argument("observation dimension differs from model");
  const SplittingKernel kernel(model.rate, model.obs, obs.grid.dt);
  const auto d = model.dim();
  const long n = obs.steps();
  SmoothingPath out{obs.grid, Mat(d, n + 1), Mat(d, n + 1), Mat(d, n + 1), Vec(n + 1)};

  std::vector<Vec> loglik(static_cast<std::size_t>(n));
  for (long k = 0; k < n; ++k) loglik[static_cast<std::size_t>(k)] = kernel.log_likelihood(obs.increments.col(k));

  Vec p = model.prior;
  double scale = 0.0;
  out.log_forward.col(0) = safe_log(p);
  for (long k = 0; k < n; ++k) {
    const Vec& l = loglik[static_cast<std::size_t>(k)];
    const double top = l.maxCoeff();
    p = (kernel.transition_t() * p).cwiseProduct((l.array() - top).exp().matrix());
    const double mass = p.sum();
    p /= mass;
    scale += top + std::log(mass);
    out.log_forward.col(k + 1) = safe_log(p).array() + scale;
  }

  Vec q = Vec::Ones(d);
  scale = 0.0;
  out.log_backward.col(n) = Vec::Zero(d);
  for (long k = n - 1; k >= 0; --k) {
    const Vec& l = loglik[static_cast<std::size_t>(k)];
    const double top = l.maxCoeff();
    q = kernel.transition() * q.cwiseProduct((l.array() - top).exp().matrix());
    const double big = q.maxCoeff();
    q /= big;
    scale += top + std::log(big);
    out.log_backward.col(k) = safe_log(q).array() + scale;
  }

  for (long k = 0; k <= n; ++k) {
    const Vec s = out.log_forward.col(k) + out.log_backward.col(k);
    const double top = s.maxCoeff();
    Vec w = (s.array() - top).exp().matrix();
    const double mass = w.sum();
    out.smoothed.col(k) = w / mass;
    out.log_normalizer(k) = top + std::log(mass);
  }
  return out;
}

namespace {

/// Kalman-Bucy filter integrated by RK4 on the joint (Sigma, xhat) system with
/// zdot = dZ_k / dt on step k, stored on the quarter-step grid (4N + 1 points).
struct DenseForward {
  std::vector<Mat> sigma;
  std::vector<Vec> mean;
  Mat zdot;  // m x N
  double quarter = 0.0;
};

DenseForward dense_forward(const LinearGaussianModel& model, const ObservationPath& obs) {
  require_valid(model);
  if (obs.obs_dim() != model.obs_dim()) throw std::invalid_argument("observation dimension differs from model");
  const long n = obs.steps();
  const double h = 0.25 * obs.grid.dt;
  const Mat& a = model.a_mat;
  const Mat& hm = model.h_mat;
  const Mat hht = hm * hm.transpose();
  const Mat q = model.process_cov();

  DenseForward out;
  out.quarter = h;
  out.zdot = obs.increments / obs.grid.dt;
  out.sigma.reserve(static_cast<std::size_t>(4 * n + 1));
  out.mean.reserve(static_cast<std::size_t>(4 * n + 1));
  Mat s = model.cov0;
  Vec m = model.mean0;
  out.sigma.push_back(s);
  out.mean.push_back(m);

  auto mean_rhs = [&](const Mat& sig, const Vec& x, const Vec& zd) -> Vec {
    return a.transpose() * x + sig * hm * (zd - hm.transpose() * x);
  };
  for (long k = 0; k < n; ++k) {
    const Vec zd = out.zdot.col(k);
    for (int sub = 0; sub < 4; ++sub) {
      const Mat k1s = riccati_rhs(a, hht, q, s);
      const Vec k1m = mean_rhs(s, m, zd);
      const Mat s2 = s + 0.5 * h * k1s;
      const Vec m2 = m + 0.5 * h * k1m;
      const Mat k2s = riccati_rhs(a, hht, q, s2);
      const Vec k2m = mean_rhs(s2, m2, zd);
      const Mat s3 = s + 0.5 * h * k2s;
      const Vec m3 = m + 0.5 * h * k2m;
      const Mat k3s = riccati_rhs(a, hht, q, s3);
      const Vec k3m = mean_rhs(s3, m3, zd);
      const Mat s4 = s + h * k3s;
      const Vec m4 = m + h * k3m;
      const Mat k4s = riccati_rhs(a, hht, q, s4);
      const Vec k4m = mean_rhs(s4, m4, zd);
      s = symmetrize(s + (h / 6.0) * (k1s + 2.0 * k2s + 2.0 * k3s + k4s));
      m = m + (h / 6.0) * (k1m + 2.0 * k2m + 2.0 * k3m + k4m);
      if (min_eigenvalue(s) < -1e-6) throw NumericalFailure("smoother forward pass: covariance lost definiteness", k);
      out.sigma.push_back(s);
      out.mean.push_back(m);
    }
  }
  return out;
}

GaussianSmoothingPath filtered_part(const DenseForward& fw, const ObservationPath& obs) {
  const long n = obs.steps();
  const auto d = fw.mean.front().size();
  GaussianSmoothingPath out;
  out.grid = obs.grid;
  out.filtered.resize(d, n + 1);
  out.smoothed.resize(d, n + 1);
  for (long k = 0; k <= n; ++k) {
    out.filtered.col(k) = fw.mean[static_cast<std::size_t>(4 * k)];
    out.filter_covs.push_back(fw.sigma[static_cast<std::size_t>(4 * k)]);
  }
  return out;
}

/// Simpson quadrature of |zdot - H^T xhat|^2 over each half step.
double innovation_energy(const DenseForward& fw, const Mat& h_mat) {
  double total = 0.0;
  const long n = fw.zdot.cols();
  for (long k = 0; k < n; ++k) {
    auto r = [&](long idx) {
      return (fw.zdot.col(k) - h_mat.transpose() * fw.mean[static_cast<std::size_t>(idx)]).squaredNorm();
    };
    for (long j = 4 * k; j < 4 * k + 4; j += 2) total += (2.0 * fw.quarter / 6.0) * (r(j) + 4.0 * r(j + 1) + r(j + 2));
  }
  return total;
}

double condition_number(const Mat& s) {
  Eigen::SelfAdjointEigenSolver<Mat> es(s, Eigen::EigenvaluesOnly);
  const double lo = es.eigenvalues().minCoeff();
  const double hi = es.eigenvalues().maxCoeff();
  return lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
}

}  // namespace

GaussianSmoothingPath rts_smoother(const LinearGaussianModel& model, const ObservationPath& obs) {
  const DenseForward fw = dense_forward(model, obs);
  GaussianSmoothingPath out = filtered_part(fw, obs);
  const long n = obs.steps();
  const auto d = model.dim();
  const Mat& a = model.a_mat;
  const Mat& hm = model.h_mat;
  const Mat hht = hm * hm.transpose();
  const double h = 2.0 * fw.quarter;

  for (long k = 0; k <= n; ++k) {
    if (condition_number(fw.sigma[static_cast<std::size_t>(4 * k)]) > kMaxCondition) {
      throw NumericalFailure("rts_smoother: filter covariance ill-conditioned", k);
    }
  }

  // Reversed-time fields for the adjoint variables.
  auto lambda_rhs = [&](long idx, const Vec& lam, const Vec& zd) -> Vec {
    const Mat& s = fw.sigma[static_cast<std::size_t>(idx)];
    return (a - hht * s) * lam + hm * (zd - hm.transpose() * fw.mean[static_cast<std::size_t>(idx)]);
  };
  auto cap_rhs = [&](long idx, const Mat& cap) -> Mat {
    const Mat closed = a - hht * fw.sigma[static_cast<std::size_t>(idx)];
    return closed * cap + cap * closed.transpose() + hht;
  };

  Vec lam = Vec::Zero(d);
  Mat cap = Mat::Zero(d, d);
  std::vector<Mat> smoothed_covs(static_cast<std::size_t>(n + 1));
  auto store = [&](long k) {
    const Mat& s = fw.sigma[static_cast<std::size_t>(4 * k)];
    out.smoothed.col(k) = fw.mean[static_cast<std::size_t>(4 * k)] + s * lam;
    smoothed_covs[static_cast<std::size_t>(k)] = symmetrize(s - s * cap * s);
  };
  store(n);
  for (long j = 2 * n - 1; j >= 0; --j) {
    const Vec zd = fw.zdot.col(j / 2);
    const long i0 = 2 * j + 2, i1 = 2 * j + 1, i2 = 2 * j;
    const Vec k1 = lambda_rhs(i0, lam, zd);
    const Vec k2 = lambda_rhs(i1, lam + 0.5 * h * k1, zd);
    const Vec k3 = lambda_rhs(i1, lam + 0.5 * h * k2, zd);
    const Vec k4 = lambda_rhs(i2, lam + h * k3, zd);
    lam += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    const Mat c1 = cap_rhs(i0, cap);
    const Mat c2 = cap_rhs(i1, cap + 0.5 * h * c1);
    const Mat c3 = cap_rhs(i1, cap + 0.5 * h * c2);
    const Mat c4 = cap_rhs(i2, cap + h * c3);
    cap = symmetrize(cap + (h / 6.0) * (c1 + 2.0 * c2 + 2.0 * c3 + c4));
    if (j % 2 == 0) store(j / 2);
  }
  out.smoothed_covs = std::move(smoothed_covs);
  out.innovation_energy = innovation_energy(fw, hm);
  return out;
}

GaussianSmoothingPath fraser_potter_smoother(const LinearGaussianModel& model, const ObservationPath& obs) {
  const DenseForward fw = dense_forward(model, obs);
  GaussianSmoothingPath out = filtered_part(fw, obs);
  const long n = obs.steps();
  const auto d = model.dim();
  const Mat& a = model.a_mat;
  const Mat q = model.process_cov();
  const double h = 2.0 * fw.quarter;

  // Cholesky factors of Sigma on the quarter grid.
  std::vector<Eigen::LLT<Mat>> chol;
  chol.reserve(fw.sigma.size());
  for (std::size_t i = 0; i < fw.sigma.size(); ++i) {
    if (min_eigenvalue(fw.sigma[i]) < kMinEigenvalue) {
      throw NumericalFailure("fraser_potter_smoother: singular filter covariance", static_cast<long>(i / 4));
    }
    chol.emplace_back(fw.sigma[i]);
    if (chol.back().info() != Eigen::Success) {
      throw NumericalFailure("fraser_potter_smoother: Cholesky failed", static_cast<long>(i / 4));
    }
  }
  auto gap = [&](long idx, const Vec& x) -> Vec {
    return chol[static_cast<std::size_t>(idx)].solve(x - fw.mean[static_cast<std::size_t>(idx)]);
  };
  auto rhs = [&](long idx, const Vec& x) -> Vec { return a.transpose() * x + q * gap(idx, x); };

  out.trajectory_half.resize(d, 2 * n + 1);
  out.control_half.resize(model.sigma.cols(), 2 * n + 1);
  Vec x = fw.mean.back();
  out.trajectory_half.col(2 * n) = x;
  for (long j = 2 * n - 1; j >= 0; --j) {
    const long i0 = 2 * j + 2, i1 = 2 * j + 1, i2 = 2 * j;
    // Integrate backward: dx/d(-t) = -rhs.
    const Vec k1 = rhs(i0, x);
    const Vec k2 = rhs(i1, x - 0.5 * h * k1);
    const Vec k3 = rhs(i1, x - 0.5 * h * k2);
    const Vec k4 = rhs(i2, x - h * k3);
    x -= (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    out.trajectory_half.col(j) = x;
  }
  for (long j = 0; j <= 2 * n; ++j) {
    out.control_half.col(j) = model.sigma.transpose() * gap(2 * j, out.trajectory_half.col(j));
  }
  for (long k = 0; k <= n; ++k) out.smoothed.col(k) = out.trajectory_half.col(2 * k);
  out.innovation_energy = innovation_energy(fw, model.h_mat);
  return out;
}

double min_energy_cost(const LinearGaussianModel& model, const Vec& x0, const Mat& control_half,
                       const ObservationPath& obs, const std::optional<Mat>& trajectory) {
  require_valid(model);
  const long n = obs.steps();
  const auto d = model.dim();
  if (control_half.rows() != model.sigma.cols() || control_half.cols() != 2 * n + 1) {
    throw std::invalid_argument("min_energy_cost: control must be p x (2N + 1)");
  }
  if (x0.size() != d) throw std::invalid_argument("min_energy_cost: x0 has wrong length");
  if (trajectory && (trajectory->rows() != d || trajectory->cols() != n + 1)) {
    throw std::invalid_argument("min_energy_cost: trajectory must be d x (N + 1)");
  }
  Eigen::LLT<Mat> chol0(model.cov0);
  if (chol0.info() != Eigen::Success) throw std::invalid_argument("min_energy_cost: cov0 must be positive definite");

  const Mat& a = model.a_mat;
  const Mat& hm = model.h_mat;
  const Mat& sig = model.sigma;
  const double dt = obs.grid.dt;
  const Vec dev0 = x0 - model.mean0;
  double cost = dev0.dot(chol0.solve(dev0));

  Vec x = x0;
  double residual = trajectory ? (x - trajectory->col(0)).cwiseAbs().maxCoeff() : 0.0;
  for (long k = 0; k < n; ++k) {
    const Vec zd = obs.increments.col(k) / dt;
    auto field = [&](long idx, const Vec& state, Vec& dx) {
      const Vec u = control_half.col(idx);
      dx = a.transpose() * state + sig * u;
      return u.squaredNorm() + (zd - hm.transpose() * state).squaredNorm();
    };
    Vec k1, k2, k3, k4;
    const double j1 = field(2 * k, x, k1);
    const double j2 = field(2 * k + 1, x + 0.5 * dt * k1, k2);
    const double j3 = field(2 * k + 1, x + 0.5 * dt * k2, k3);
    const double j4 = field(2 * k + 2, x + dt * k3, k4);
    x += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    cost += (dt / 6.0) * (j1 + 2.0 * j2 + 2.0 * j3 + j4);
    if (trajectory) residual = std::max(residual, (x - trajectory->col(k + 1)).cwiseAbs().maxCoeff());
  }
  if (residual > 1e-8) {
    throw std::invalid_argument("min_energy_cost: trajectory inconsistent with dynamics (residual " +
                                std::to_string(residual) + ")");
  }
  return cost;
}

void write_smoothing_csv(std::ostream& os, const SmoothingPath& path) {
  os << "t";
  for (Eigen::Index i = 0; i < path.smoothed.rows(); ++i) os << ",smoothed_" << (i + 1);
  os << '\n' << std::setprecision(17);
  for (Eigen::Index k = 0; k < path.smoothed.cols(); ++k) {
    os << path.grid.t(k);
    for (Eigen::Index i = 0; i < path.smoothed.rows(); ++i) os << ',' << path.smoothed(i, k);
    os << '\n';
  }
}

void write_gaussian_smoothing_csv(std::ostream& os, const GaussianSmoothingPath& path) {
  os << "t";
  for (Eigen::Index i = 0; i < path.smoothed.rows(); ++i) os << ",x_" << (i + 1);
  os << '\n' << std::setprecision(17);
  for (Eigen::Index k = 0; k < path.smoothed.cols(); ++k) {
    os << path.grid.t(k);
    for (Eigen::Index i = 0; i < path.smoothed.rows(); ++i) os << ',' << path.smoothed(i, k);
    os << '\n';
  }
}

}  // namespace dualfilter

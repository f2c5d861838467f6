#include "dualfilter/filters.hpp"

#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <stdexcept>

namespace dualfilter {

namespace {

constexpr double kUnderflow = 1e-300;
constexpr double kRescaleHigh = 1e100;
constexpr double kRescaleLow = 1e-100;

void check_obs(const HmmModel& model, const ObservationPath& obs) {
  require_valid(model);
  if (obs.obs_dim() != model.obs_dim()) throw std::invalid_argument("observation dimension differs from model");
}

}  // namespace

SplittingKernel::SplittingKernel(const Mat& rate, const Mat& obs, double dt)
    : trans_t_(expm(rate.transpose() * dt)),
      trans_(trans_t_.transpose()),
      obs_(obs),
      half_h2_dt_(0.5 * dt * obs.rowwise().squaredNorm()),
      dt_(dt) {}

bool SplittingKernel::wonham_step(Vec& pi, const Eigen::Ref<const Vec>& dz) const {
  Vec pred = trans_t_ * pi;
  Vec loglik = log_likelihood(dz);
  const double top = loglik.maxCoeff();
  pi = pred.cwiseProduct((loglik.array() - top).exp().matrix());
  const double mass = pi.sum();
  if (!(mass >= kUnderflow)) return false;
  pi /= mass;
  return true;
}

BeliefPath wonham_filter(const HmmModel& model, const Vec& prior, const ObservationPath& obs) {
  check_obs(model, obs);
  auto simplex = validate_simplex(prior, "prior");
  if (!simplex.empty()) throw std::invalid_argument("wonham_filter: " + format_report(simplex));
  SplittingKernel kernel(model.rate, model.obs, obs.grid.dt);
  BeliefPath out{obs.grid, Mat(model.dim(), obs.steps() + 1)};
  Vec pi = prior;
  out.beliefs.col(0) = pi;
  for (long k = 0; k < obs.steps(); ++k) {
    if (!kernel.wonham_step(pi, obs.increments.col(k))) {
      throw NumericalFailure("wonham_filter: total mass underflow", k);
    }
    out.beliefs.col(k + 1) = pi;
  }
  return out;
}

Vec UnnormalizedPath::log_normalizer() const {
  Vec out(scaled.cols());
  for (Eigen::Index k = 0; k < scaled.cols(); ++k) out(k) = log_scale(k) + std::log(scaled.col(k).sum());
  return out;
}

BeliefPath UnnormalizedPath::normalized() const {
  BeliefPath out{grid, scaled};
  for (Eigen::Index k = 0; k < scaled.cols(); ++k) out.beliefs.col(k) /= scaled.col(k).sum();
  return out;
}

UnnormalizedPath zakai_filter(const HmmModel& model, const Vec& prior, const ObservationPath& obs) {
  check_obs(model, obs);
  SplittingKernel kernel(model.rate, model.obs, obs.grid.dt);
  const long n = obs.steps();
  UnnormalizedPath out{obs.grid, Mat(model.dim(), n + 1), Vec(n + 1)};
  Vec sigma = prior;
  double log_scale = 0.0;
  out.scaled.col(0) = sigma;
  out.log_scale(0) = 0.0;
  for (long k = 0; k < n; ++k) {
    Vec loglik = kernel.log_likelihood(obs.increments.col(k));
    const double top = loglik.maxCoeff();
    sigma = (kernel.transition_t() * sigma).cwiseProduct((loglik.array() - top).exp().matrix());
    log_scale += top;
    const double mass = sigma.sum();
    if (mass > kRescaleHigh || mass < kRescaleLow) {
      sigma /= mass;
      log_scale += std::log(mass);
    }
    out.scaled.col(k + 1) = sigma;
    out.log_scale(k + 1) = log_scale;
  }
  return out;
}

Mat ZakaiOperatorPath::matrix(long k) const {
  const auto& s = scaled[static_cast<std::size_t>(k)];
  return s * log_col_scale[static_cast<std::size_t>(k)].array().exp().matrix().asDiagonal();
}

std::pair<double, Vec> ZakaiOperatorPath::apply(long k, const Vec& measure) const {
  const auto& s = scaled[static_cast<std::size_t>(k)];
  const Vec& lc = log_col_scale[static_cast<std::size_t>(k)];
  double top = -std::numeric_limits<double>::infinity();
  for (Eigen::Index j = 0; j < lc.size(); ++j) {
    if (measure(j) != 0.0) top = std::max(top, lc(j));
  }
  Vec weights(lc.size());
  for (Eigen::Index j = 0; j < lc.size(); ++j) weights(j) = measure(j) * std::exp(lc(j) - top);
  Vec v = s * weights;
  const double mass = v.sum();
  return {top + std::log(mass), v / mass};
}

ZakaiOperatorPath zakai_operator(const HmmModel& model, const ObservationPath& obs) {
  check_obs(model, obs);
  SplittingKernel kernel(model.rate, model.obs, obs.grid.dt);
  const auto d = model.dim();
  const long n = obs.steps();
  ZakaiOperatorPath out;
  out.grid = obs.grid;
  out.scaled.reserve(static_cast<std::size_t>(n + 1));
  out.log_col_scale.reserve(static_cast<std::size_t>(n + 1));
  Mat psi = Mat::Identity(d, d);
  Vec log_scale = Vec::Zero(d);
  out.scaled.push_back(psi);
  out.log_col_scale.push_back(log_scale);
  for (long k = 0; k < n; ++k) {
    Vec lik = kernel.log_likelihood(obs.increments.col(k)).array().exp().matrix();
    psi = lik.asDiagonal() * (kernel.transition_t() * psi);
    for (Eigen::Index j = 0; j < d; ++j) {
      const double big = psi.col(j).cwiseAbs().maxCoeff();
      if (big > kRescaleHigh || (big < kRescaleLow && big > 0.0)) {
        psi.col(j) /= big;
        log_scale(j) += std::log(big);
      }
    }
    out.scaled.push_back(psi);
    out.log_col_scale.push_back(log_scale);
  }
  return out;
}

Mat riccati_rhs(const Mat& a_mat, const Mat& hht, const Mat& q, const Mat& s) {
  return a_mat.transpose() * s + s * a_mat + q - s * hht * s;
}

Mat riccati_rk4(const Mat& a_mat, const Mat& hht, const Mat& q, const Mat& s, double h) {
  const Mat k1 = riccati_rhs(a_mat, hht, q, s);
  const Mat k2 = riccati_rhs(a_mat, hht, q, s + 0.5 * h * k1);
  const Mat k3 = riccati_rhs(a_mat, hht, q, s + 0.5 * h * k2);
  const Mat k4 = riccati_rhs(a_mat, hht, q, s + h * k3);
  return symmetrize(s + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
}

GaussianBeliefPath kalman_bucy(const LinearGaussianModel& model, const ObservationPath& obs) {
  require_valid(model);
  if (obs.obs_dim() != model.obs_dim()) throw std::invalid_argument("observation dimension differs from model");
  const long n = obs.steps();
  const double h = obs.grid.dt;
  const Mat hht = model.h_mat * model.h_mat.transpose();
  const Mat q = model.process_cov();

  GaussianBeliefPath out{obs.grid, Mat(model.dim(), n + 1), {}};
  out.covs.reserve(static_cast<std::size_t>(n + 1));
  Vec m = model.mean0;
  Mat s = model.cov0;
  out.means.col(0) = m;
  out.covs.push_back(s);
  for (long k = 0; k < n; ++k) {
    const Vec innov = obs.increments.col(k) - model.h_mat.transpose() * m * h;
    m = m + model.a_mat.transpose() * m * h + s * model.h_mat * innov;
    s = riccati_rk4(model.a_mat, hht, q, s, h);
    if (min_eigenvalue(s) < -1e-6) throw NumericalFailure("kalman_bucy: covariance lost definiteness", k + 1);
    out.means.col(k + 1) = m;
    out.covs.push_back(s);
  }
  return out;
}

AreSolution solve_are(const LinearGaussianModel& model, const AreOptions& options) {
  require_valid(model);
  const auto d = model.dim();
  const Mat hht = model.h_mat * model.h_mat.transpose();
  const Mat q = model.process_cov();
  const double a_norm = model.a_mat.norm();
  const double hht_norm = hht.norm();

  AreSolution out;
  Mat s = Mat::Identity(d, d);
  double t = 0.0;
  while (t < options.max_horizon) {
    const Mat deriv = riccati_rhs(model.a_mat, hht, q, s);
    if (deriv.cwiseAbs().maxCoeff() < options.derivative_tol) {
      out.converged = true;
      break;
    }
    if (s.cwiseAbs().maxCoeff() > options.divergence_bound) break;
    // Keep the step inside RK4's stability region for the linearised flow.
    const double step = std::min(0.05, 0.5 / (2.0 * a_norm + hht_norm * s.norm() + 1e-12));
    s = riccati_rk4(model.a_mat, hht, q, s, step);
    t += step;
  }
  out.sigma = s;
  out.residual = riccati_rhs(model.a_mat, hht, q, s).cwiseAbs().maxCoeff();
  Eigen::EigenSolver<Mat> es(model.a_mat.transpose() - s * hht, false);
  out.closed_loop_abscissa = es.eigenvalues().real().maxCoeff();
  out.hurwitz = out.closed_loop_abscissa < 0.0;
  if (!out.converged) {
    out.diagnostic = "Riccati flow did not reach stationarity; (A, H) is not detectable or (A, sigma) not stabilizable";
  }
  return out;
}

MarkovKalmanPath kf_markov_chain(const HmmModel& model, const ObservationPath& obs) {
  check_obs(model, obs);
  const auto d = model.dim();
  const long n = obs.steps();
  const double h = obs.grid.dt;
  const Mat& a = model.rate;
  const Mat hht = model.obs * model.obs.transpose();
  const Mat half_step = expm(a.transpose() * (0.5 * h));

  MarkovKalmanPath out{obs.grid, Mat(d, n + 1), {}};
  out.covs.reserve(static_cast<std::size_t>(n + 1));
  Vec mu = model.prior;
  Vec x = model.prior;
  Mat s = Mat(model.prior.asDiagonal()) - model.prior * model.prior.transpose();
  out.estimates.col(0) = x;
  out.covs.push_back(s);

  auto rhs = [&](const Mat& sig, const Mat& eq) { return riccati_rhs(a, hht, eq, sig); };
  for (long k = 0; k < n; ++k) {
    const Vec innov = obs.increments.col(k) - model.obs.transpose() * x * h;
    x = x + a.transpose() * x * h + s * model.obs * innov;

    const Vec mu_mid = half_step * mu;
    const Vec mu_end = half_step * mu_mid;
    const Mat q0 = expected_q(a, mu), q1 = expected_q(a, mu_mid), q2 = expected_q(a, mu_end);
    const Mat k1 = rhs(s, q0);
    const Mat k2 = rhs(s + 0.5 * h * k1, q1);
    const Mat k3 = rhs(s + 0.5 * h * k2, q1);
    const Mat k4 = rhs(s + h * k3, q2);
    s = symmetrize(s + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
    if (min_eigenvalue(s) < -1e-6) throw NumericalFailure("kf_markov_chain: covariance lost definiteness", k + 1);
    mu = mu_end;
    out.estimates.col(k + 1) = x;
    out.covs.push_back(s);
  }
  return out;
}

Mat innovation_path(const HmmModel& model, const BeliefPath& beliefs, const ObservationPath& obs) {
  if (beliefs.beliefs.cols() != obs.steps() + 1) throw std::invalid_argument("innovation_path: grids differ");
  Mat out(obs.obs_dim(), obs.steps());
  for (long k = 0; k < obs.steps(); ++k) {
    out.col(k) = obs.increments.col(k) - model.obs.transpose() * beliefs.beliefs.col(k) * obs.grid.dt;
  }
  return out;
}

void write_belief_csv(std::ostream& os, const BeliefPath& path) {
  os << "t";
  for (Eigen::Index i = 0; i < path.beliefs.rows(); ++i) os << ",pi_" << i + 1;
  os << "\n" << std::setprecision(17);
  for (Eigen::Index k = 0; k < path.beliefs.cols(); ++k) {
    os << path.grid.t(k);
    for (Eigen::Index i = 0; i < path.beliefs.rows(); ++i) os << "," << path.beliefs(i, k);
    os << "\n";
  }
}

void write_gaussian_csv(std::ostream& os, const GaussianBeliefPath& path) {
  const auto d = path.means.rows();
  os << "t";
  for (Eigen::Index i = 0; i < d; ++i) os << ",m_" << i + 1;
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = 0; j < d; ++j) os << ",Sigma_" << i + 1 << "_" << j + 1;
  os << "\n" << std::setprecision(17);
  for (Eigen::Index k = 0; k < path.means.cols(); ++k) {
    os << path.grid.t(k);
    for (Eigen::Index i = 0; i < d; ++i) os << "," << path.means(i, k);
    const Mat& s = path.covs[static_cast<std::size_t>(k)];
    for (Eigen::Index i = 0; i < d; ++i)
      for (Eigen::Index j = 0; j < d; ++j) os << "," << s(i, j);
    os << "\n";
  }
}

}  // namespace dualfilter

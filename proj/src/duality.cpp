#include "dualfilter/duality.hpp"

#include <cmath>
#include <stdexcept>

namespace dualfilter {

Mat Subspace::complement() const {
  const auto d = ambient_dim();
  if (dim() == 0) return Mat::Identity(d, d);
  Eigen::JacobiSVD<Mat> svd(basis, Eigen::ComputeFullU);
  return svd.matrixU().rightCols(d - dim());
}

Subspace controllable_subspace(const HmmModel& model, double tol) {
  require_valid(model);
  const auto d = model.dim();
  const auto m = model.obs_dim();
  const Mat& a = model.rate;
  const double a_scale = a.norm();
  Vec h_scale(m);
  for (Eigen::Index j = 0; j < m; ++j) h_scale(j) = model.obs.col(j).cwiseAbs().maxCoeff();

  Mat basis = Vec::Ones(d) / std::sqrt(static_cast<double>(d));
  for (Eigen::Index pass = 0; pass <= d; ++pass) {
    // Breadth-first: every current basis vector, A first, then each column of H.
    std::vector<Vec> cands;
    for (Eigen::Index c = 0; c < basis.cols(); ++c) cands.push_back(basis.col(c));
    for (Eigen::Index c = 0; c < basis.cols(); ++c) {
      const Vec f = basis.col(c);
      if (a_scale > 0.0) cands.push_back(a * f / a_scale);
      for (Eigen::Index j = 0; j < m; ++j) {
        if (h_scale(j) > 0.0) cands.push_back(model.obs.col(j).cwiseProduct(f) / h_scale(j));
      }
    }
    Mat stacked(d, static_cast<Eigen::Index>(cands.size()));
    for (std::size_t i = 0; i < cands.size(); ++i) stacked.col(static_cast<Eigen::Index>(i)) = cands[i];
    Mat next = orthonormal_range(stacked, tol);
    const bool stable = next.cols() == basis.cols();
    basis = next;
    if (stable) break;
  }
  return Subspace{basis, tol};
}

ObservabilityReport is_observable(const HmmModel& model, double tol) {
  ObservabilityReport out;
  out.controllable = controllable_subspace(model, tol);
  out.observable = out.controllable.dim() == model.dim();
  out.unobservable = out.controllable.complement();
  return out;
}

StabilizabilityReport is_stabilizable(const HmmModel& model, double tol) {
  StabilizabilityReport out;
  out.controllable = controllable_subspace(model, tol);
  out.null_basis = null_space(model.rate, tol);
  out.residuals.resize(out.null_basis.cols());
  for (Eigen::Index c = 0; c < out.null_basis.cols(); ++c) {
    out.residuals(c) = out.controllable.residual(out.null_basis.col(c));
  }
  out.stabilizable = out.residuals.size() == 0 || out.residuals.maxCoeff() <= kContainmentTol;
  return out;
}

Subspace lti_controllability(const Mat& a_mat, const Mat& h_mat, double tol) {
  const auto d = a_mat.rows();
  const auto m = h_mat.cols();
  const double a_scale = a_mat.norm();
  Mat krylov(d, d * m);
  Mat block = h_mat;
  for (Eigen::Index k = 0; k < d; ++k) {
    krylov.middleCols(k * m, m) = block;
    block = (a_scale > 0.0) ? Mat(a_mat * block / a_scale) : Mat(Mat::Zero(d, m));
  }
  if (krylov.cwiseAbs().maxCoeff() == 0.0) return Subspace{Mat(d, 0), tol};
  return Subspace{orthonormal_range(krylov, tol), tol};
}

Eigen::Index GramianEstimate::numerical_rank(double rel_tol) const {
  Eigen::JacobiSVD<Mat> svd(symmetrize(mean));
  const Vec& s = svd.singularValues();
  const double threshold = rel_tol * (s.size() > 0 ? s(0) : 0.0);
  Eigen::Index rank = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (s(i) > threshold) ++rank;
  }
  return rank;
}

GramianEstimate gramian_mc(const HmmModel& model, double horizon, double dt, long n_paths,
                           std::uint64_t seed, Execution exec) {
  require_valid(model);
  if (n_paths < 2) throw std::invalid_argument("gramian_mc needs at least 2 paths");
  const TimeGrid grid = TimeGrid::covering(horizon, dt);
  const auto d = model.dim();
  const auto m = model.obs_dim();
  const SplittingKernel kernel(model.rate, model.obs, grid.dt);
  const Mat ones = Mat::Ones(d, d);
  const double sdt = std::sqrt(grid.dt);

  auto acc = reduce_paths(n_paths, exec, MomentAccumulator(d, d), [&](long p, MomentAccumulator& out) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(p)));
    Mat psi = Mat::Identity(d, d);
    Vec log_scale = Vec::Zero(d);
    Mat integral = Mat::Zero(d, d);
    Vec dz(m);
    for (long k = 0; k < grid.steps; ++k) {
      const Mat b = model.obs.transpose() * psi;  // m x d
      Mat term = b.transpose() * b;
      if (log_scale.cwiseAbs().maxCoeff() > 0.0) {
        const Vec s = log_scale.array().exp().matrix();
        term = s.asDiagonal() * term * s.asDiagonal();
      }
      integral += term * grid.dt;

      for (Eigen::Index j = 0; j < m; ++j) dz(j) = sdt * rng.normal();
      const Vec lik = kernel.log_likelihood(dz).array().exp().matrix();
      psi = lik.asDiagonal() * (kernel.transition_t() * psi);
      for (Eigen::Index j = 0; j < d; ++j) {
        const double big = psi.col(j).cwiseAbs().maxCoeff();
        if (big > 1e100 || (big < 1e-100 && big > 0.0)) {
          psi.col(j) /= big;
          log_scale(j) += std::log(big);
        }
      }
    }
    out.add(ones + integral);
  });
  return GramianEstimate{acc.mean(), acc.stderr_of_mean(), n_paths};
}

namespace {

/// Shared deterministic LQ solver. `weight` holds the running state weight on
/// the quarter-step grid (4N + 1 entries).
LqSolution solve_dual_lq(const Mat& a, const Mat& hmat, const Mat& sigma0, const std::vector<Mat>& weight,
                         const Vec& f, const TimeGrid& grid) {
  const auto d = a.rows();
  const auto m = hmat.cols();
  const long n = grid.steps;
  const double dt = grid.dt;
  const double half = 0.5 * dt;
  const Mat hht = hmat * hmat.transpose();

  // Forward Riccati flow on the half-step grid.
  std::vector<Mat> sig(static_cast<std::size_t>(2 * n + 1));
  sig[0] = sigma0;
  for (long j = 0; j < 2 * n; ++j) {
    const Mat& s = sig[static_cast<std::size_t>(j)];
    const Mat& w0 = weight[static_cast<std::size_t>(2 * j)];
    const Mat& w1 = weight[static_cast<std::size_t>(2 * j + 1)];
    const Mat& w2 = weight[static_cast<std::size_t>(2 * j + 2)];
    const Mat k1 = riccati_rhs(a, hht, w0, s);
    const Mat k2 = riccati_rhs(a, hht, w1, s + 0.5 * half * k1);
    const Mat k3 = riccati_rhs(a, hht, w1, s + 0.5 * half * k2);
    const Mat k4 = riccati_rhs(a, hht, w2, s + half * k3);
    sig[static_cast<std::size_t>(j + 1)] = symmetrize(s + (half / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
  }

  // Backward closed loop in reversed time, carrying the running cost.
  auto field = [&](long half_idx, const Vec& y, Vec& dy, double& dc) {
    const Mat& s = sig[static_cast<std::size_t>(half_idx)];
    const Mat& w = weight[static_cast<std::size_t>(2 * half_idx)];
    const Vec u = -hmat.transpose() * s * y;
    dy = a * y + hmat * u;
    dc = u.squaredNorm() + y.dot(w * y);
  };

  LqSolution out;
  out.grid = grid;
  out.y.resize(d, n + 1);
  out.u.resize(m, n + 1);
  out.sigma.resize(static_cast<std::size_t>(n + 1));
  Vec y = f;
  double c = 0.0;
  out.y.col(n) = y;
  for (long k = n - 1; k >= 0; --k) {
    Vec k1y, k2y, k3y, k4y;
    double k1c, k2c, k3c, k4c;
    field(2 * k + 2, y, k1y, k1c);
    field(2 * k + 1, y + half * k1y, k2y, k2c);
    field(2 * k + 1, y + half * k2y, k3y, k3c);
    field(2 * k, y + dt * k3y, k4y, k4c);
    y += (dt / 6.0) * (k1y + 2.0 * k2y + 2.0 * k3y + k4y);
    c += (dt / 6.0) * (k1c + 2.0 * k2c + 2.0 * k3c + k4c);
    out.y.col(k) = y;
  }
  for (long k = 0; k <= n; ++k) {
    const Mat& s = sig[static_cast<std::size_t>(2 * k)];
    out.sigma[static_cast<std::size_t>(k)] = s;
    out.u.col(k) = -hmat.transpose() * s * out.y.col(k);
  }
  const Vec y0 = out.y.col(0);
  out.cost = y0.dot(sigma0 * y0) + c;
  out.value = f.dot(sig.back() * f);
  return out;
}

}  // namespace

Mat LqSolution::piecewise_control() const {
  Mat out(u.rows(), u.cols() - 1);
  for (Eigen::Index k = 0; k + 1 < u.cols(); ++k) out.col(k) = 0.5 * (u.col(k) + u.col(k + 1));
  return out;
}

LqSolution dual_lq_linear_gaussian(const LinearGaussianModel& model, const Vec& f, double horizon, double dt) {
  require_valid(model);
  if (f.size() != model.dim()) throw std::invalid_argument("dual_lq_linear_gaussian: f has wrong length");
  const TimeGrid grid = TimeGrid::covering(horizon, dt);
  std::vector<Mat> weight(static_cast<std::size_t>(4 * grid.steps + 1), model.process_cov());
  return solve_dual_lq(model.a_mat, model.h_mat, model.cov0, weight, f, grid);
}

LqSolution dual_deterministic_markov(const HmmModel& model, const Vec& f, double horizon, double dt) {
  require_valid(model);
  if (f.size() != model.dim()) throw std::invalid_argument("dual_deterministic_markov: f has wrong length");
  const TimeGrid grid = TimeGrid::covering(horizon, dt);
  const Mat quarter = expm(model.rate.transpose() * (0.25 * grid.dt));
  std::vector<Mat> weight;
  weight.reserve(static_cast<std::size_t>(4 * grid.steps + 1));
  Vec mu = model.prior;
  for (long j = 0; j <= 4 * grid.steps; ++j) {
    weight.push_back(expected_q(model.rate, mu));
    mu = quarter * mu;
  }
  const Mat sigma0 = Mat(model.prior.asDiagonal()) - model.prior * model.prior.transpose();
  return solve_dual_lq(model.rate, model.obs, sigma0, weight, f, grid);
}

Mat dual_backward(const Mat& rate, const Mat& obs, const Mat& control, const Vec& f, const TimeGrid& grid) {
  if (control.cols() != grid.steps || control.rows() != obs.cols()) {
    throw std::invalid_argument("dual_backward: control must be m x N");
  }
  const Mat phi = expm(rate * grid.dt);
  const Mat gain = expm_integral(rate, grid.dt) * obs;
  Mat y(rate.rows(), grid.steps + 1);
  y.col(grid.steps) = f;
  for (long k = grid.steps - 1; k >= 0; --k) y.col(k) = phi * y.col(k + 1) + gain * control.col(k);
  return y;
}

double dual_cost(const HmmModel& model, const Mat& control, const Vec& f, const TimeGrid& grid) {
  const Mat y = dual_backward(model.rate, model.obs, control, f, grid);
  const Mat phi_half = expm(model.rate * (0.5 * grid.dt));
  const Mat gain_half = expm_integral(model.rate, 0.5 * grid.dt) * model.obs;
  const Mat flow_half = expm(model.rate.transpose() * (0.5 * grid.dt));

  auto energy = [&](const Vec& mu, const Vec& g) { return mu.dot(carre_du_champ(model.rate, g)); };

  const Vec y0 = y.col(0);
  const double mean0 = model.prior.dot(y0);
  double j = model.prior.dot(y0.cwiseProduct(y0)) - mean0 * mean0;
  Vec mu = model.prior;
  for (long k = 0; k < grid.steps; ++k) {
    const Vec mu_mid = flow_half * mu;
    const Vec mu_end = flow_half * mu_mid;
    const Vec y_mid = phi_half * y.col(k + 1) + gain_half * control.col(k);
    const double simpson =
        (energy(mu, y.col(k)) + 4.0 * energy(mu_mid, y_mid) + energy(mu_end, y.col(k + 1))) / 6.0;
    j += grid.dt * (simpson + control.col(k).squaredNorm());
    mu = mu_end;
  }
  return j;
}

DualityCheck duality_check_mc(const HmmModel& model, const Mat& control, const Vec& f, double horizon,
                              long n_paths, std::uint64_t seed, Execution exec,
                              std::optional<double> estimator_constant) {
  require_valid(model);
  if (n_paths < 2) throw std::invalid_argument("duality_check_mc needs at least 2 paths");
  const TimeGrid grid{horizon / static_cast<double>(control.cols()), control.cols()};
  DualityCheck out;
  const Mat y = dual_backward(model.rate, model.obs, control, f, grid);
  out.y0 = y.col(0);
  out.j_value = dual_cost(model, control, f, grid);
  const double natural = model.prior.dot(out.y0);
  out.estimator_constant = estimator_constant.value_or(natural);
  out.predicted_mse = out.j_value + (natural - out.estimator_constant) * (natural - out.estimator_constant);

  auto acc = reduce_paths(n_paths, exec, MomentAccumulator(1, 1), [&](long p, MomentAccumulator& sink) {
    const StatePath path = simulate_ctmc(model, horizon, derive_seed(seed, static_cast<std::uint64_t>(p), 0));
    const ObservationPath obs = simulate_observation(path, model.obs, grid.dt,
                                                     derive_seed(seed, static_cast<std::uint64_t>(p), 1),
                                                     Measure::physical);
    double s = out.estimator_constant;
    for (long k = 0; k < grid.steps; ++k) s -= control.col(k).dot(obs.increments.col(k));
    const double err = f(path.terminal()) - s;
    sink.add(Mat::Constant(1, 1, err * err));
  });
  out.mse = acc.mean()(0, 0);
  out.stderr_of_mse = acc.stderr_of_mean()(0, 0);
  return out;
}

TreeOracleResult bsde_tree_oracle(const HmmModel& model, const Vec& f, double horizon, int n_steps) {
  require_valid(model);
  if (model.obs_dim() != 1) throw std::invalid_argument("bsde_tree_oracle: needs a scalar observation");
  if (n_steps < 1 || n_steps > 12) throw std::invalid_argument("bsde_tree_oracle: n_steps must be in [1, 12]");
  const auto d = model.dim();
  const double enumeration = std::ldexp(1.0, n_steps) * std::pow(static_cast<double>(d), n_steps + 1);
  if (enumeration > 5e8) throw std::invalid_argument("bsde_tree_oracle: tree too large to enumerate");
  const double dt = horizon / n_steps;
  const double s = std::sqrt(dt);
  const Vec h = model.obs.col(0);
  if (h.cwiseAbs().maxCoeff() * s >= 1.0) {
    throw std::invalid_argument("bsde_tree_oracle: |h| sqrt(dt) must be below 1");
  }
  const Mat trans = expm(model.rate * dt);  // rows: from-state
  const long leaves = 1L << n_steps;

  // Forward filter at every node; node (k, b) has children (k+1, 2b) [minus] and (k+1, 2b+1) [plus].
  std::vector<std::vector<Vec>> pi(static_cast<std::size_t>(n_steps + 1));
  pi[0] = {model.prior};
  for (int k = 0; k < n_steps; ++k) {
    auto& next = pi[static_cast<std::size_t>(k + 1)];
    next.resize(static_cast<std::size_t>(1L << (k + 1)));
    for (long b = 0; b < (1L << k); ++b) {
      const Vec pred = trans.transpose() * pi[static_cast<std::size_t>(k)][static_cast<std::size_t>(b)];
      for (int sign = 0; sign < 2; ++sign) {
        const double eps = sign ? 1.0 : -1.0;
        Vec post = pred.cwiseProduct((Vec::Ones(d) + eps * s * h));
        next[static_cast<std::size_t>(2 * b + sign)] = post / post.sum();
      }
    }
  }

  // Backward dual recursion with the discretised optimal feedback law.
  std::vector<std::vector<double>> control(static_cast<std::size_t>(n_steps));
  std::vector<Vec> y(static_cast<std::size_t>(leaves), f);
  TreeOracleResult out;
  for (int k = n_steps - 1; k >= 0; --k) {
    const long width = 1L << k;
    std::vector<Vec> parent(static_cast<std::size_t>(width));
    control[static_cast<std::size_t>(k)].resize(static_cast<std::size_t>(width));
    for (long b = 0; b < width; ++b) {
      const Vec& y_minus = y[static_cast<std::size_t>(2 * b)];
      const Vec& y_plus = y[static_cast<std::size_t>(2 * b + 1)];
      const Vec y_bar = 0.5 * (y_plus + y_minus);
      const Vec v = (y_plus - y_minus) / (2.0 * s);
      const Vec rho = trans.transpose() * pi[static_cast<std::size_t>(k)][static_cast<std::size_t>(b)];
      const double rho_h = rho.dot(h);
      const double rhs = -(rho.dot(h.cwiseProduct(y_bar)) - rho_h * rho.dot(y_bar)) - rho.dot(v) +
                         dt * rho_h * rho.dot(h.cwiseProduct(v));
      const double u = rhs / (1.0 - dt * rho_h * rho_h);
      control[static_cast<std::size_t>(k)][static_cast<std::size_t>(b)] = u;
      out.max_abs_control = std::max(out.max_abs_control, std::abs(u));
      parent[static_cast<std::size_t>(b)] = trans * (y_bar + dt * h.cwiseProduct(v + Vec::Constant(d, u)));
    }
    y = std::move(parent);
  }
  const double start = model.prior.dot(y[0]);

  // Brute-force enumeration of (state path, sign path).
  const long n_state_paths = static_cast<long>(std::llround(std::pow(static_cast<double>(d), n_steps + 1)));
  std::vector<int> states(static_cast<std::size_t>(n_steps + 1));
  out.leaves = leaves;
  for (long leaf = 0; leaf < leaves; ++leaf) {
    Vec joint = Vec::Zero(d);
    for (long code = 0; code < n_state_paths; ++code) {
      long c = code;
      for (int k = 0; k <= n_steps; ++k) {
        states[static_cast<std::size_t>(k)] = static_cast<int>(c % d);
        c /= d;
      }
      double w = model.prior(states[0]);
      for (int k = 0; k < n_steps && w != 0.0; ++k) {
        const double eps = ((leaf >> (n_steps - 1 - k)) & 1L) ? 1.0 : -1.0;
        const int from = states[static_cast<std::size_t>(k)];
        const int to = states[static_cast<std::size_t>(k + 1)];
        w *= trans(from, to) * 0.5 * (1.0 + eps * s * h(to));
      }
      joint(states[static_cast<std::size_t>(n_steps)]) += w;
    }
    const double prob = joint.sum();
    const Vec post = joint / prob;
    if (leaf == leaves - 1) out.leaf_posterior_all_plus = post;

    // Estimator along this leaf; node index at level k is the leading k bits.
    double estimate = start;
    for (int k = 0; k < n_steps; ++k) {
      const long node = leaf >> (n_steps - k);
      const double eps = ((leaf >> (n_steps - 1 - k)) & 1L) ? 1.0 : -1.0;
      estimate -= control[static_cast<std::size_t>(k)][static_cast<std::size_t>(node)] * eps * s;
    }
    const double mean = post.dot(f);
    const double var = post.dot(f.cwiseProduct(f)) - mean * mean;
    out.max_residual = std::max(out.max_residual, std::abs(estimate - mean));
    out.optimal_cost += prob * var;
    out.estimator_cost += prob * (var + (estimate - mean) * (estimate - mean));
  }
  return out;
}

}  // namespace dualfilter

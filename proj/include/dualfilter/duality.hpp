#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "dualfilter/filters.hpp"
#include "dualfilter/models.hpp"
#include "dualfilter/parallel.hpp"
#include "dualfilter/sim.hpp"

namespace dualfilter {

/// Singular values below kRankTol * sigma_max count as zero.
inline constexpr double kRankTol = 1e-9;
inline constexpr double kContainmentTol = 1e-8;

/// Linear subspace of R^d held as an orthonormal basis (d x r).
struct Subspace {
  Mat basis;
  double tol = kRankTol;

  Eigen::Index dim() const { return basis.cols(); }
  Eigen::Index ambient_dim() const { return basis.rows(); }
  double residual(const Vec& v) const { return projection_residual(basis, v); }
  /// Orthonormal basis of the orthogonal complement.
  Mat complement() const;
};

/// Smallest subspace containing 1 that is closed under f -> A f and
/// f -> H^j . f (elementwise) for every observation column j.
Subspace controllable_subspace(const HmmModel& model, double tol = kRankTol);

struct ObservabilityReport {
  bool observable = false;
  Subspace controllable;
  Mat unobservable;  // basis of the orthogonal complement; each column has zero total mass
};

ObservabilityReport is_observable(const HmmModel& model, double tol = kRankTol);

struct StabilizabilityReport {
  bool stabilizable = false;
  Subspace controllable;
  Mat null_basis;  // basis of {f : A f = 0}
  Vec residuals;   // projection residual of each null-space vector onto the controllable subspace
};

StabilizabilityReport is_stabilizable(const HmmModel& model, double tol = kRankTol);

/// Krylov span {H, A H, ..., A^{d-1} H}.
Subspace lti_controllability(const Mat& a_mat, const Mat& h_mat, double tol = kRankTol);

struct GramianEstimate {
  Mat mean;
  Mat stderr_of_mean;
  long n_paths = 0;

  /// Number of singular values of `mean` above rel_tol times the largest.
  Eigen::Index numerical_rank(double rel_tol = kRankTol) const;
};

/// Monte-Carlo estimate of W = 1 1^T + E~( sum_k Psi_k^T H H^T Psi_k dt ), Z simulated
/// as a Brownian motion.
GramianEstimate gramian_mc(const HmmModel& model, double horizon, double dt, long n_paths,
                           std::uint64_t seed, Execution exec = Execution::parallel);

/// Deterministic LQ dual problem on a uniform grid: the control is the state
/// feedback u = -H^T Sigma_t y_t, y solves -dy/dt = A y + H u backward from f.
struct LqSolution {
  TimeGrid grid;
  double cost = 0.0;   // J evaluated along the closed-loop trajectory
  double value = 0.0;  // f^T Sigma_T f from the Riccati flow
  Mat y;               // d x (N + 1)
  Mat u;               // m x (N + 1)
  std::vector<Mat> sigma;  // N + 1 entries

  /// Control held constant on each step (average of the two node values), m x N.
  Mat piecewise_control() const;
};

LqSolution dual_lq_linear_gaussian(const LinearGaussianModel& model, const Vec& f, double horizon,
                                   double dt = 1e-3);

/// Same problem for a Markov chain with running weight E[Q(X_t)] and
/// Sigma_0 = diag(mu) - mu mu^T.
LqSolution dual_deterministic_markov(const HmmModel& model, const Vec& f, double horizon,
                                     double dt = 1e-3);

/// Backward solution of -dy/dt = A y + H u for a control held constant on each
/// step (m x N); returns y on the grid nodes, d x (N + 1).
Mat dual_backward(const Mat& rate, const Mat& obs, const Mat& control, const Vec& f, const TimeGrid& grid);

/// J_T(u) = Var_mu(y_0) + int mu_t(Gamma y_t) + |u_t|^2 dt with exact marginals.
double dual_cost(const HmmModel& model, const Mat& control, const Vec& f, const TimeGrid& grid);

struct DualityCheck {
  double j_value = 0.0;
  double mse = 0.0;
  double stderr_of_mse = 0.0;
  double estimator_constant = 0.0;  // constant term actually used in S_T
  double predicted_mse = 0.0;       // j_value + (mu(y_0) - constant)^2
  Vec y0;
};

/// Compares the dual cost of a deterministic control with the Monte-Carlo
/// mean-squared error of S_T = b - sum_k u_k^T dZ_k, where b defaults to mu(y_0).
DualityCheck duality_check_mc(const HmmModel& model, const Mat& control, const Vec& f, double horizon,
                              long n_paths, std::uint64_t seed, Execution exec = Execution::parallel,
                              std::optional<double> estimator_constant = std::nullopt);

struct TreeOracleResult {
  double optimal_cost = 0.0;      // E|f(X_N) - pi_N(f)|^2 by enumeration
  double estimator_cost = 0.0;    // E|f(X_N) - S_N|^2 by enumeration
  double max_residual = 0.0;      // max over leaves of |S_N - pi_N(f)|
  double max_abs_control = 0.0;
  Vec leaf_posterior_all_plus;       // enumerated pi_N on the all-plus leaf (for hand checks)
  long leaves = 0;
};

/// Binary-increment tree (dZ = +-sqrt(dt)) version of the dual problem with the
/// optimal feedback law, checked leaf by leaf against brute-force enumeration.
TreeOracleResult bsde_tree_oracle(const HmmModel& model, const Vec& f, double horizon, int n_steps);

}  // namespace dualfilter

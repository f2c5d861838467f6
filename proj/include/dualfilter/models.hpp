#pragma once

#include <string>
#include <vector>

#include "dualfilter/linalg.hpp"

namespace dualfilter {

/// Finite-state hidden Markov model with white-noise observations
/// dZ = h(X) dt + dW.
///
/// `rate` is the d x d generator (off-diagonal >= 0, zero row sums) acting on
/// functions by f -> A f and on measures by mu -> A^T mu. Row i of `obs` is
/// h(i) in R^m; column j is the observation function H^j.
struct HmmModel {
  Mat rate;
  Mat obs;
  Vec prior;

  Eigen::Index dim() const { return rate.rows(); }
  Eigen::Index obs_dim() const { return obs.cols(); }
};

/// dX = A^T X dt + sigma dB,  dZ = H^T X dt + dW,  X_0 ~ N(mean0, cov0).
struct LinearGaussianModel {
  Mat a_mat;
  Mat h_mat;
  Mat sigma;
  Vec mean0;
  Mat cov0;

  Eigen::Index dim() const { return a_mat.rows(); }
  Eigen::Index obs_dim() const { return h_mat.cols(); }
  Mat process_cov() const { return sigma * sigma.transpose(); }
};

inline constexpr double kRowSumTol = 1e-12;
inline constexpr double kSimplexTol = 1e-12;
inline constexpr double kEdgeThreshold = 1e-12;

/// One violated invariant. `index` is the offending row/entry (-1 if global).
struct Violation {
  std::string field;
  long index = -1;
  std::string message;
};

using ValidationReport = std::vector<Violation>;

ValidationReport validate(const HmmModel& model);
ValidationReport validate(const LinearGaussianModel& model);
ValidationReport validate_rate(const Mat& rate);
ValidationReport validate_simplex(const Vec& p, const std::string& field);

std::string format_report(const ValidationReport& report);

/// Throws std::invalid_argument listing every violation.
void require_valid(const HmmModel& model);
void require_valid(const LinearGaussianModel& model);

/// (Gamma f)(i) = sum_j A(i,j) (f(i) - f(j))^2.
Vec carre_du_champ(const Mat& rate, const Vec& f);

/// Q(i) = sum_j A(i,j) (e_i - e_j)(e_i - e_j)^T, so that (Gamma f)(i) = f^T Q(i) f.
Mat q_matrix(const Mat& rate, Eigen::Index i);

/// sum_i rho(i) Q(i); for rho the law of X_t this is E[Q(X_t)].
Mat expected_q(const Mat& rate, const Vec& rho);

struct ClassDecomposition {
  std::vector<std::vector<int>> classes;  // closed communicating classes, sorted
  std::vector<int> transient;
};

/// Closed strongly connected components of the digraph {(i,j): A(i,j) > 1e-12}.
ClassDecomposition ergodic_classes(const Mat& rate);

/// Invariant probability supported on a closed class (zero elsewhere).
Vec invariant_measure(const Mat& rate, const std::vector<int>& cls);

/// Indicator vector of a state set.
Vec indicator(Eigen::Index dim, const std::vector<int>& states);

}  // namespace dualfilter

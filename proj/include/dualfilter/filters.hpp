#pragma once

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "dualfilter/errors.hpp"
#include "dualfilter/models.hpp"
#include "dualfilter/sim.hpp"

namespace dualfilter {

/// One step of the prediction-correction scheme shared by every finite-state
/// filter: predict with exp(A^T dt), then multiply by the Gaussian increment
/// likelihood exp(h(i)^T dZ - |h(i)|^2 dt / 2).
class SplittingKernel {
 public:
  SplittingKernel(const Mat& rate, const Mat& obs, double dt);

  const Mat& transition_t() const { return trans_t_; }  // exp(A^T dt)
  const Mat& transition() const { return trans_; }      // exp(A dt)
  double dt() const { return dt_; }
  Eigen::Index dim() const { return obs_.rows(); }

  /// log-likelihood vector l(i) = h(i)^T dZ - |h(i)|^2 dt / 2.
  Vec log_likelihood(const Eigen::Ref<const Vec>& dz) const {
    return obs_ * dz - half_h2_dt_;
  }

  /// In-place Wonham step; returns false if the total mass underflows.
  bool wonham_step(Vec& pi, const Eigen::Ref<const Vec>& dz) const;

 private:
  Mat trans_t_;
  Mat trans_;
  Mat obs_;
  Vec half_h2_dt_;
  double dt_;
};

struct BeliefPath {
  TimeGrid grid;
  Mat beliefs;  // d x (N + 1)
};

/// Unnormalised conditional measure sigma_t = exp(log_scale(k)) * scaled.col(k).
struct UnnormalizedPath {
  TimeGrid grid;
  Mat scaled;
  Vec log_scale;

  /// log sigma_t(1) per grid point.
  Vec log_normalizer() const;
  BeliefPath normalized() const;
};

/// Psi_k with column-wise log scale factors: Psi_k = scaled[k] * diag(exp(log_col_scale[k])).
struct ZakaiOperatorPath {
  TimeGrid grid;
  std::vector<Mat> scaled;
  std::vector<Vec> log_col_scale;

  /// Psi_k as a plain matrix (may overflow for extreme paths).
  Mat matrix(long k) const;
  /// Psi_k applied to a measure, returned as (log total mass, normalised measure).
  std::pair<double, Vec> apply(long k, const Vec& measure) const;
};

struct GaussianBeliefPath {
  TimeGrid grid;
  Mat means;               // d x (N + 1)
  std::vector<Mat> covs;   // N + 1 entries
};

struct MarkovKalmanPath {
  TimeGrid grid;
  Mat estimates;           // d x (N + 1), estimate of the indicator vector of X_t
  std::vector<Mat> covs;
};

BeliefPath wonham_filter(const HmmModel& model, const Vec& prior, const ObservationPath& obs);
UnnormalizedPath zakai_filter(const HmmModel& model, const Vec& prior, const ObservationPath& obs);
ZakaiOperatorPath zakai_operator(const HmmModel& model, const ObservationPath& obs);

/// Right-hand side of the dynamic Riccati equation A^T S + S A + Q - S H H^T S.
Mat riccati_rhs(const Mat& a_mat, const Mat& hht, const Mat& q, const Mat& s);

/// One RK4 step of the DRE with a constant running weight.
Mat riccati_rk4(const Mat& a_mat, const Mat& hht, const Mat& q, const Mat& s, double h);

GaussianBeliefPath kalman_bucy(const LinearGaussianModel& model, const ObservationPath& obs);

struct AreOptions {
  double max_horizon = 1e4;
  double derivative_tol = 1e-10;
  double divergence_bound = 1e12;
};

struct AreSolution {
  Mat sigma;
  bool converged = false;
  bool hurwitz = false;           // A^T - Sigma H H^T is Hurwitz
  double residual = 0.0;          // max-abs ARE residual
  double closed_loop_abscissa = 0.0;  // max real part of eig(A^T - Sigma H H^T)
  std::string diagnostic;
};

/// Integrates the DRE from Sigma_0 = I until the derivative vanishes.
AreSolution solve_are(const LinearGaussianModel& model, const AreOptions& options = {});

/// Kalman filter for a Markov chain embedded as canonical basis vectors.
MarkovKalmanPath kf_markov_chain(const HmmModel& model, const ObservationPath& obs);

/// dI_k = dZ_k - pi_k(h) dt; returns m x N.
Mat innovation_path(const HmmModel& model, const BeliefPath& beliefs, const ObservationPath& obs);

void write_belief_csv(std::ostream& os, const BeliefPath& path);
void write_gaussian_csv(std::ostream& os, const GaussianBeliefPath& path);

}  // namespace dualfilter

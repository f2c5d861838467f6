#pragma once

#include <iosfwd>
#include <optional>
#include <vector>

#include "dualfilter/filters.hpp"
#include "dualfilter/models.hpp"
#include "dualfilter/sim.hpp"

namespace dualfilter {

/// Finite-state smoothing distributions on the observation grid.
/// smoothed.col(k) = exp(log_forward.col(k) + log_backward.col(k) - log_normalizer(k)).
struct SmoothingPath {
  TimeGrid grid;
  Mat smoothed;       // d x (N + 1)
  Mat log_forward;    // log p_k, unnormalised forward (Zakai) measure
  Mat log_backward;   // log q_k, backward likelihood with q_N = 1
  Vec log_normalizer;
};

SmoothingPath forward_backward_smoother(const HmmModel& model, const ObservationPath& obs);

struct GaussianSmoothingPath {
  TimeGrid grid;
  Mat smoothed;                     // d x (N + 1)
  Mat filtered;                     // d x (N + 1)
  std::vector<Mat> filter_covs;     // N + 1 entries
  std::vector<Mat> smoothed_covs;   // N + 1 entries (RTS only)
  Mat control_half;                 // p x (2N + 1) optimal control on the half-step grid (two-filter only)
  Mat trajectory_half;              // d x (2N + 1) optimal trajectory on the half-step grid (two-filter only)
  double innovation_energy = 0.0;   // int |zdot - H^T xhat|^2 dt
};

/// Rauch-Tung-Striebel smoother in adjoint form: x = xhat + Sigma lambda,
/// P = Sigma - Sigma Lambda Sigma.
GaussianSmoothingPath rts_smoother(const LinearGaussianModel& model, const ObservationPath& obs);

/// Two-filter smoother: Kalman-Bucy forward pass, then
/// dx/dt = A^T x + Q Sigma^{-1} (x - xhat) backward from x_T = xhat_T.
GaussianSmoothingPath fraser_potter_smoother(const LinearGaussianModel& model, const ObservationPath& obs);

/// J(u, x0; zdot) = (x0 - m0)^T Sigma0^{-1} (x0 - m0) + int |u|^2 + |zdot - H^T x|^2 dt for
/// dx/dt = A^T x + sigma u, with zdot = dZ/dt on each step and u given on the
/// half-step grid (p x (2N + 1)). If `trajectory` (d x (N + 1)) is supplied it
/// must match the integrated dynamics to 1e-8.
double min_energy_cost(const LinearGaussianModel& model, const Vec& x0, const Mat& control_half,
                       const ObservationPath& obs, const std::optional<Mat>& trajectory = std::nullopt);

void write_smoothing_csv(std::ostream& os, const SmoothingPath& path);
void write_gaussian_smoothing_csv(std::ostream& os, const GaussianSmoothingPath& path);

}  // namespace dualfilter

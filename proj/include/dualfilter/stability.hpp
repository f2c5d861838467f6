#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "dualfilter/filters.hpp"
#include "dualfilter/models.hpp"
#include "dualfilter/parallel.hpp"

namespace dualfilter {

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

struct Divergences {
  double chi2 = 0.0;
  double kl = 0.0;
  double tv = 0.0;
  bool absolutely_continuous = true;  // false => chi2 and kl are +inf
};

/// chi^2(p|q), KL(p|q) and TV(p, q) with the convention 0 log 0 = 0.
Divergences divergences(const Vec& p, const Vec& q);

/// Per-time traces of the three divergences.
struct DivergenceTrace {
  Vec times;
  Vec chi2;
  Vec kl;
  Vec tv;
};

/// Two initial laws with mu << nu and the density bounds a_lower, a_upper of
/// d mu / d nu over the support of mu.
struct PriorPair {
  Vec mu;
  Vec nu;
  double a_lower = 1.0;
  double a_upper = 1.0;

  static PriorPair make(const Vec& mu, const Vec& nu);
};

/// Rows of the per-path metric matrix recorded by the twin-filter experiment.
enum TwinMetric : Eigen::Index {
  kChi2 = 0,
  kKl,
  kTv,
  kL2Gap,        // |pi^mu(f) - pi^nu(f)|^2
  kObsGap,       // 1/2 int_0^t |pi^mu(h) - pi^nu(h)|^2 ds
  kKlIncrement,  // KL at this record minus KL at the previous one
  kTwinMetricCount
};

struct TwinExperimentResult {
  Vec times;             // record times
  std::vector<long> record_steps;
  Mat mean;              // kTwinMetricCount x records
  Mat stderr_of_mean;
  std::vector<Mat> batch_means;  // same shape, one per path batch
  double max_density_ratio = 0.0;  // max over paths of max_i pi^mu_T(i) / pi^nu_T(i)
  long n_paths = 0;

  DivergenceTrace mean_trace() const;
};

struct TwinOptions {
  double horizon = 1.0;
  double dt = 1e-3;
  long n_paths = 1000;
  std::uint64_t seed = 1;
  long records = 200;        // record points besides t = 0
  long batches = 10;
  std::optional<Vec> f;      // test function for the L2 gap (default: first basis vector)
  Execution exec = Execution::parallel;
};

/// Simulates (X, Z) with X_0 ~ mu, runs the Wonham filter from mu and from nu
/// on the same observations, and averages the divergences between them.
TwinExperimentResult twin_filter_experiment(const HmmModel& model, const PriorPair& priors,
                                            const TwinOptions& options);

struct CheckPoint {
  double t = 0.0;
  double lhs = 0.0;
  double rhs = 0.0;
  double slack = 0.0;  // 3 sigma
  bool pass = false;
};

struct KlReport {
  double kl0 = 0.0;
  std::vector<CheckPoint> bound;         // E[KL_t] <= KL(mu|nu)
  std::vector<CheckPoint> monotone;      // E[KL_{t_j} - KL_{t_{j-1}}] <= 0
  CheckPoint observation_gap;            // 1/2 E int |pi^mu(h) - pi^nu(h)|^2 <= KL(mu|nu)
  bool pass = false;
};

/// Checks E[KL(pi^mu_t | pi^nu_t)] against KL(mu|nu) at `checkpoints` equally
/// spaced times.
KlReport kl_supermartingale_check(const HmmModel& model, const PriorPair& priors, TwinOptions options,
                                  long checkpoints = 10);

struct Chi2Report {
  double chi2_0 = 0.0;
  double c = 0.0;
  std::vector<CheckPoint> checks;  // a_lower E[chi2_t] <= exp(-c t) chi2(mu|nu)
  bool pass = false;
};

Chi2Report chi2_bound_check(const HmmModel& model, const PriorPair& priors, TwinOptions options, double c,
                            long checkpoints = 10);

enum class PiMethod { closed_form_2state, doeblin, sqrt_bound, brute_force };

std::string to_string(PiMethod method);
PiMethod parse_pi_method(const std::string& name);

struct PiConstant {
  double value = 0.0;
  PiMethod method = PiMethod::doeblin;
  std::optional<Vec> rho;  // minimizing measure (brute force only)
  std::optional<Vec> f;    // minimizing function, unit norm, orthogonal to constants
};

struct BruteForceOptions {
  long resolution = 1000;       // grid points for d = 2
  long samples = 100000;        // Dirichlet samples for d >= 3
  std::uint64_t seed = 7;
};

/// Poincare constant for the energy rho(Gamma f) against var^rho(f).
PiConstant pi_constant(const HmmModel& model, PiMethod method, const BruteForceOptions& options = {});

/// min over f orthogonal to 1 of rho(Gamma f) / var^rho(f) for an interior rho.
double poincare_ratio(const Mat& rate, const Vec& rho, Vec* minimizer = nullptr);

struct BetaTrace {
  Vec times;
  Vec beta;
  double time_average = 0.0;  // trapezoidal average over [0, T]
};

/// beta_t = sum_i pi_t(i) min_{j != i} A(i,j).
BetaTrace beta_process(const HmmModel& model, const BeliefPath& beliefs);

/// sum_i mu(i) min_{j != i} A(i,j).
double min_row_rate(const Mat& rate, const Vec& mu);

struct StabilityIndex {
  double slope = 0.0;
  double slope_stderr = 0.0;  // spread of per-batch slopes
  double sqrt_bound = 0.0;    // -2 min sqrt(A(i,j) A(j,i))
  double row_bound = 0.0;     // -sum_i mubar(i) min_{j != i} A(i,j); NaN without a unique class
  bool degenerate = false;    // TV trace vanishes or never drops below 1
  double fit_start = 0.0;
  double fit_end = 0.0;
  DivergenceTrace trace;
};

/// Least-squares slope of log E[TV_t] over the second half of the horizon.
StabilityIndex stability_index(const HmmModel& model, const PriorPair& priors, const TwinOptions& options);

struct ClassDetectionReport {
  std::vector<std::vector<int>> classes;
  Vec detection_error;        // E|pi^nu_T(1_{S_k}) - 1_{S_k}(X_0)| per class
  Vec detection_stderr;
  Vec class_mass_drift;       // E[pi^nu_T(1_{S_k})] - nu(S_k)
  Vec class_mass_drift_stderr;
  Vec prior_class_mass;       // nu(S_k)
  double max_decomposition_residual = 0.0;
  long n_paths = 0;
};

/// Class posterior of the filter started at nu, with X_0 ~ mu. Also checks the
/// decomposition pi^nu(f) = sum_k pi^nu(1_{S_k}) pi^{nu_k}(f) on every path.
ClassDetectionReport ergodic_class_detection(const HmmModel& model, const PriorPair& priors,
                                             const TwinOptions& options);

}  // namespace dualfilter

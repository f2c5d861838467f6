#include "dualfilter/stability.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <Eigen/Eigenvalues>

#include "dualfilter/sim.hpp"

namespace dualfilter {

Divergences divergences(const Vec& p, const Vec& q) {
  if (p.size() != q.size()) throw std::invalid_argument("divergences: size mismatch");
  Divergences out;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    out.tv += 0.5 * std::abs(p(i) - q(i));
    if (p(i) <= 0.0) {
      out.chi2 += q(i);
      continue;
    }
    if (q(i) <= 0.0) {
      out.absolutely_continuous = false;
      continue;
    }
    const double r = p(i) / q(i);
    out.chi2 += q(i) * (r - 1.0) * (r - 1.0);
    out.kl += p(i) * std::log(r);
  }
  if (!out.absolutely_continuous) {
    out.chi2 = kInfinity;
    out.kl = kInfinity;
  }
  return out;
}

PriorPair PriorPair::make(const Vec& mu, const Vec& nu) {
  for (const auto& [v, name] : {std::pair{&mu, "mu"}, std::pair{&nu, "nu"}}) {
    auto report = validate_simplex(*v, name);
    if (!report.empty()) throw std::invalid_argument("PriorPair: " + format_report(report));
  }
  if (mu.size() != nu.size()) throw std::invalid_argument("PriorPair: size mismatch");
  PriorPair out{mu, nu, kInfinity, 0.0};
  for (Eigen::Index i = 0; i < mu.size(); ++i) {
    if (mu(i) <= 0.0) continue;
    if (nu(i) <= 0.0) throw std::invalid_argument("PriorPair: mu is not absolutely continuous w.r.t. nu");
    const double r = mu(i) / nu(i);
    out.a_lower = std::min(out.a_lower, r);
    out.a_upper = std::max(out.a_upper, r);
  }
  return out;
}

DivergenceTrace TwinExperimentResult::mean_trace() const {
  return DivergenceTrace{times, mean.row(kChi2).transpose(), mean.row(kKl).transpose(),
                         mean.row(kTv).transpose()};
}

namespace {

struct TwinAccumulator {
  MomentAccumulator all;
  std::vector<MomentAccumulator> batches;
  double max_ratio = 0.0;

  void merge(const TwinAccumulator& other) {
    all.merge(other.all);
    for (std::size_t b = 0; b < batches.size(); ++b) batches[b].merge(other.batches[b]);
    max_ratio = std::max(max_ratio, other.max_ratio);
  }
};

std::vector<long> record_grid(long steps, long records) {
  records = std::clamp(records, 1L, steps);
  std::vector<long> out;
  for (long r = 0; r <= records; ++r) out.push_back(static_cast<long>(std::llround(static_cast<double>(r) * steps / records)));
  return out;
}

HmmModel with_prior(const HmmModel& model, const Vec& prior) {
  HmmModel out = model;
  out.prior = prior;
  return out;
}

}  // namespace

TwinExperimentResult twin_filter_experiment(const HmmModel& model, const PriorPair& priors,
                                            const TwinOptions& options) {
  require_valid(model);
  const PriorPair checked = PriorPair::make(priors.mu, priors.nu);
  if (checked.mu.size() != model.dim()) throw std::invalid_argument("twin_filter_experiment: prior size");
  if (options.n_paths < 2) throw std::invalid_argument("twin_filter_experiment: needs at least 2 paths");
  const TimeGrid grid = TimeGrid::covering(options.horizon, options.dt);
  const auto d = model.dim();
  const Vec f = options.f.value_or(Vec::Unit(d, 0));
  if (f.size() != d) throw std::invalid_argument("twin_filter_experiment: f has wrong length");
  const auto record_steps = record_grid(grid.steps, options.records);
  const auto n_records = static_cast<Eigen::Index>(record_steps.size());
  const long n_batches = std::max(1L, options.batches);
  const HmmModel physical = with_prior(model, checked.mu);
  const SplittingKernel kernel(model.rate, model.obs, grid.dt);

  TwinAccumulator zero{MomentAccumulator(kTwinMetricCount, n_records),
                       std::vector<MomentAccumulator>(static_cast<std::size_t>(n_batches),
                                                      MomentAccumulator(kTwinMetricCount, n_records)),
                       0.0};

  auto acc = reduce_paths(options.n_paths, options.exec, zero, [&](long p, TwinAccumulator& out) {
    const auto up = static_cast<std::uint64_t>(p);
    const StatePath path = simulate_ctmc(physical, grid.horizon(), derive_seed(options.seed, up, 0));
    const ObservationPath obs =
        simulate_observation(path, model.obs, grid.dt, derive_seed(options.seed, up, 1), Measure::physical);
    Vec pi_mu = checked.mu;
    Vec pi_nu = checked.nu;
    Mat sample(kTwinMetricCount, n_records);
    double gap = 0.0;
    double last_kl = 0.0;
    Eigen::Index r = 0;
    for (long k = 0;; ++k) {
      if (r < n_records && record_steps[static_cast<std::size_t>(r)] == k) {
        const Divergences div = divergences(pi_mu, pi_nu);
        const double l2 = pi_mu.dot(f) - pi_nu.dot(f);
        sample(kChi2, r) = div.chi2;
        sample(kKl, r) = div.kl;
        sample(kTv, r) = div.tv;
        sample(kL2Gap, r) = l2 * l2;
        sample(kObsGap, r) = gap;
        sample(kKlIncrement, r) = (r == 0) ? 0.0 : div.kl - last_kl;
        last_kl = div.kl;
        ++r;
      }
      if (k == grid.steps) break;
      gap += 0.5 * (model.obs.transpose() * (pi_mu - pi_nu)).squaredNorm() * grid.dt;
      if (!kernel.wonham_step(pi_mu, obs.increments.col(k)) || !kernel.wonham_step(pi_nu, obs.increments.col(k))) {
        throw NumericalFailure("twin_filter_experiment: filter mass underflow on path", p);
      }
    }
    double ratio = 0.0;
    for (Eigen::Index i = 0; i < d; ++i) {
      if (pi_nu(i) > 0.0) ratio = std::max(ratio, pi_mu(i) / pi_nu(i));
    }
    out.max_ratio = std::max(out.max_ratio, ratio);
    out.all.add(sample);
    out.batches[static_cast<std::size_t>(p % n_batches)].add(sample);
  });

  TwinExperimentResult out;
  out.record_steps = record_steps;
  out.times.resize(n_records);
  for (Eigen::Index r = 0; r < n_records; ++r) out.times(r) = grid.t(record_steps[static_cast<std::size_t>(r)]);
  out.mean = acc.all.mean();
  out.stderr_of_mean = acc.all.stderr_of_mean();
  for (const auto& b : acc.batches) {
    if (b.count() > 0) out.batch_means.push_back(b.mean());
  }
  out.max_density_ratio = acc.max_ratio;
  out.n_paths = options.n_paths;
  return out;
}

KlReport kl_supermartingale_check(const HmmModel& model, const PriorPair& priors, TwinOptions options,
                                  long checkpoints) {
  KlReport out;
  out.kl0 = divergences(priors.mu, priors.nu).kl;
  if (!std::isfinite(out.kl0)) throw std::invalid_argument("kl_supermartingale_check: KL(mu|nu) is infinite");
  options.records = checkpoints;
  const auto res = twin_filter_experiment(model, priors, options);
  out.pass = true;
  for (Eigen::Index r = 1; r < res.times.size(); ++r) {
    CheckPoint bound{res.times(r), res.mean(kKl, r), out.kl0, 3.0 * res.stderr_of_mean(kKl, r)};
    bound.pass = bound.lhs <= bound.rhs + bound.slack;
    CheckPoint mono{res.times(r), res.mean(kKlIncrement, r), 0.0, 3.0 * res.stderr_of_mean(kKlIncrement, r)};
    mono.pass = mono.lhs <= mono.rhs + mono.slack;
    out.pass = out.pass && bound.pass && mono.pass;
    out.bound.push_back(bound);
    out.monotone.push_back(mono);
  }
  const Eigen::Index last = res.times.size() - 1;
  out.observation_gap = CheckPoint{res.times(last), res.mean(kObsGap, last), out.kl0,
                                   3.0 * res.stderr_of_mean(kObsGap, last)};
  out.observation_gap.pass = out.observation_gap.lhs <= out.observation_gap.rhs + out.observation_gap.slack;
  out.pass = out.pass && out.observation_gap.pass;
  return out;
}

Chi2Report chi2_bound_check(const HmmModel& model, const PriorPair& priors, TwinOptions options, double c,
                            long checkpoints) {
  const PriorPair checked = PriorPair::make(priors.mu, priors.nu);
  Chi2Report out;
  out.c = c;
  out.chi2_0 = divergences(checked.mu, checked.nu).chi2;
  options.records = checkpoints;
  const auto res = twin_filter_experiment(model, checked, options);
  out.pass = true;
  for (Eigen::Index r = 1; r < res.times.size(); ++r) {
    CheckPoint cp{res.times(r), checked.a_lower * res.mean(kChi2, r), std::exp(-c * res.times(r)) * out.chi2_0,
                  3.0 * checked.a_lower * res.stderr_of_mean(kChi2, r)};
    cp.pass = cp.lhs <= cp.rhs + cp.slack;
    out.pass = out.pass && cp.pass;
    out.checks.push_back(cp);
  }
  return out;
}

std::string to_string(PiMethod method) {
  switch (method) {
    case PiMethod::closed_form_2state: return "closed-form-2state";
    case PiMethod::doeblin: return "doeblin";
    case PiMethod::sqrt_bound: return "sqrt";
    case PiMethod::brute_force: return "brute-force";
  }
  return "unknown";
}

PiMethod parse_pi_method(const std::string& name) {
  for (auto m : {PiMethod::closed_form_2state, PiMethod::doeblin, PiMethod::sqrt_bound, PiMethod::brute_force}) {
    if (to_string(m) == name) return m;
  }
  throw std::invalid_argument("unknown Poincare method: " + name);
}

double poincare_ratio(const Mat& rate, const Vec& rho, Vec* minimizer) {
  const auto d = rate.rows();
  if (rho.minCoeff() <= 0.0) throw std::invalid_argument("poincare_ratio: rho must be interior");
  Eigen::HouseholderQR<Mat> qr(Vec::Ones(d));
  const Mat basis = Mat(qr.householderQ()).rightCols(d - 1);
  const Mat energy = basis.transpose() * expected_q(rate, rho) * basis;
  const Mat var = basis.transpose() * (Mat(rho.asDiagonal()) - rho * rho.transpose()) * basis;
  Eigen::GeneralizedSelfAdjointEigenSolver<Mat> ges(symmetrize(energy), symmetrize(var));
  if (minimizer) {
    *minimizer = basis * ges.eigenvectors().col(0);
    minimizer->normalize();
  }
  return ges.eigenvalues()(0);
}

namespace {

double min_off_diagonal_row(const Mat& rate, Eigen::Index i) {
  double best = kInfinity;
  for (Eigen::Index j = 0; j < rate.cols(); ++j) {
    if (j != i) best = std::min(best, rate(i, j));
  }
  return best;
}

PiConstant brute_force_2state(const Mat& rate, long resolution) {
  auto ratio = [&](double x) { return poincare_ratio(rate, Vec{{x, 1.0 - x}}); };
  double best_x = 0.5;
  double best = kInfinity;
  for (long i = 1; i < resolution; ++i) {
    const double x = static_cast<double>(i) / static_cast<double>(resolution);
    const double v = ratio(x);
    if (v < best) {
      best = v;
      best_x = x;
    }
  }
  // Golden-section refinement on the bracketing cell.
  const double step = 1.0 / static_cast<double>(resolution);
  double lo = std::max(best_x - step, 1e-12);
  double hi = std::min(best_x + step, 1.0 - 1e-12);
  const double g = 0.5 * (std::sqrt(5.0) - 1.0);
  double x1 = hi - g * (hi - lo);
  double x2 = lo + g * (hi - lo);
  double f1 = ratio(x1);
  double f2 = ratio(x2);
  for (int it = 0; it < 200 && hi - lo > 1e-14; ++it) {
    if (f1 < f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - g * (hi - lo);
      f1 = ratio(x1);
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + g * (hi - lo);
      f2 = ratio(x2);
    }
  }
  if (std::min(f1, f2) < best) {
    best_x = f1 < f2 ? x1 : x2;
    best = std::min(f1, f2);
  }
  PiConstant out{best, PiMethod::brute_force, Vec{{best_x, 1.0 - best_x}}, std::nullopt};
  Vec fmin;
  poincare_ratio(rate, *out.rho, &fmin);
  out.f = fmin;
  return out;
}

PiConstant brute_force_simplex(const Mat& rate, const BruteForceOptions& options) {
  const auto d = rate.rows();
  Rng rng(options.seed);
  Vec best_rho = Vec::Constant(d, 1.0 / static_cast<double>(d));
  double best = poincare_ratio(rate, best_rho);
  Vec rho(d);
  for (long s = 0; s < options.samples; ++s) {
    for (Eigen::Index i = 0; i < d; ++i) rho(i) = rng.exponential(1.0);
    rho /= rho.sum();
    if (rho.minCoeff() <= 1e-12) continue;
    const double v = poincare_ratio(rate, rho);
    if (v < best) {
      best = v;
      best_rho = rho;
    }
  }
  // Local random search with a shrinking radius around the incumbent.
  double radius = 0.05;
  for (int it = 0; it < 5000 && radius > 1e-9; ++it) {
    Vec step(d);
    for (Eigen::Index i = 0; i < d; ++i) step(i) = rng.normal();
    step.array() -= step.mean();
    rho = best_rho + radius * step / std::max(step.norm(), 1e-300);
    if (rho.minCoeff() <= 1e-12) {
      radius *= 0.9;
      continue;
    }
    rho /= rho.sum();
    const double v = poincare_ratio(rate, rho);
    if (v < best) {
      best = v;
      best_rho = rho;
    } else {
      radius *= 0.97;
    }
  }
  PiConstant out{best, PiMethod::brute_force, best_rho, std::nullopt};
  Vec fmin;
  poincare_ratio(rate, best_rho, &fmin);
  out.f = fmin;
  return out;
}

}  // namespace

PiConstant pi_constant(const HmmModel& model, PiMethod method, const BruteForceOptions& options) {
  const auto report = validate_rate(model.rate);
  if (!report.empty()) throw std::invalid_argument("pi_constant: " + format_report(report));
  const Mat& a = model.rate;
  const auto d = a.rows();
  if (d < 2) throw std::invalid_argument("pi_constant: needs at least 2 states");
  PiConstant out;
  out.method = method;
  switch (method) {
    case PiMethod::closed_form_2state: {
      if (d != 2 || a(0, 1) <= 0.0 || a(1, 0) <= 0.0) {
        throw std::invalid_argument("pi_constant: closed form needs an irreducible 2-state chain");
      }
      out.value = a(0, 1) + a(1, 0) + 2.0 * std::sqrt(a(0, 1) * a(1, 0));
      return out;
    }
    case PiMethod::doeblin: {
      for (Eigen::Index j = 0; j < d; ++j) {
        double col_min = kInfinity;
        for (Eigen::Index i = 0; i < d; ++i) {
          if (i != j) col_min = std::min(col_min, a(i, j));
        }
        out.value += col_min;
      }
      return out;
    }
    case PiMethod::sqrt_bound: {
      out.value = kInfinity;
      for (Eigen::Index i = 0; i < d; ++i) {
        for (Eigen::Index j = i + 1; j < d; ++j) out.value = std::min(out.value, 2.0 * std::sqrt(a(i, j) * a(j, i)));
      }
      return out;
    }
    case PiMethod::brute_force:
      return d == 2 ? brute_force_2state(a, std::max(options.resolution, 2L)) : brute_force_simplex(a, options);
  }
  throw std::invalid_argument("pi_constant: unknown method");
}

double min_row_rate(const Mat& rate, const Vec& mu) {
  double out = 0.0;
  for (Eigen::Index i = 0; i < rate.rows(); ++i) out += mu(i) * min_off_diagonal_row(rate, i);
  return out;
}

BetaTrace beta_process(const HmmModel& model, const BeliefPath& beliefs) {
  const auto d = model.dim();
  if (beliefs.beliefs.rows() != d) throw std::invalid_argument("beta_process: belief dimension");
  Vec row_min(d);
  for (Eigen::Index i = 0; i < d; ++i) row_min(i) = min_off_diagonal_row(model.rate, i);
  BetaTrace out;
  const auto n = beliefs.beliefs.cols();
  out.times.resize(n);
  for (Eigen::Index k = 0; k < n; ++k) out.times(k) = beliefs.grid.t(k);
  out.beta = beliefs.beliefs.transpose() * row_min;
  if (n == 1) {
    out.time_average = out.beta(0);
  } else {
    const double integral = out.beta.sum() - 0.5 * (out.beta(0) + out.beta(n - 1));
    out.time_average = integral / static_cast<double>(n - 1);
  }
  return out;
}

namespace {

/// Least-squares slope of log(values) against times over [from, end); NaN if
/// any value is non-positive.
double log_slope(const Vec& times, const Vec& values, Eigen::Index from) {
  const Eigen::Index n = times.size() - from;
  if (n < 2) return std::nan("");
  const Vec t = times.tail(n);
  const Vec v = values.tail(n);
  if (v.minCoeff() <= 1e-300) return std::nan("");
  const Vec y = v.array().log().matrix();
  const double tm = t.mean();
  const double ym = y.mean();
  const Vec tc = t.array() - tm;
  return tc.dot((y.array() - ym).matrix()) / tc.squaredNorm();
}

}  // namespace

StabilityIndex stability_index(const HmmModel& model, const PriorPair& priors, const TwinOptions& options) {
  const auto res = twin_filter_experiment(model, priors, options);
  StabilityIndex out;
  out.trace = res.mean_trace();
  const Vec& t = out.trace.times;
  Eigen::Index from = 0;
  while (from < t.size() && t(from) < 0.5 * t(t.size() - 1)) ++from;
  out.fit_start = t(std::min(from, t.size() - 1));
  out.fit_end = t(t.size() - 1);
  const Vec window = out.trace.tv.tail(t.size() - from);
  out.degenerate = window.size() < 2 || window.minCoeff() <= 1e-12 || window(window.size() - 1) >= 1.0 - 1e-9;
  out.slope = log_slope(t, out.trace.tv, from);

  std::vector<double> batch_slopes;
  for (const auto& b : res.batch_means) {
    const double s = log_slope(t, b.row(kTv).transpose(), from);
    if (std::isfinite(s)) batch_slopes.push_back(s);
  }
  if (batch_slopes.size() >= 2) {
    double mean = 0.0;
    for (double s : batch_slopes) mean += s;
    mean /= static_cast<double>(batch_slopes.size());
    double var = 0.0;
    for (double s : batch_slopes) var += (s - mean) * (s - mean);
    var /= static_cast<double>(batch_slopes.size() - 1);
    out.slope_stderr = std::sqrt(var / static_cast<double>(batch_slopes.size()));
  } else {
    out.slope_stderr = std::nan("");
  }
  if (!std::isfinite(out.slope)) out.degenerate = true;

  const Mat& a = model.rate;
  out.sqrt_bound = -pi_constant(model, PiMethod::sqrt_bound).value;
  const auto decomposition = ergodic_classes(a);
  if (decomposition.classes.size() == 1) {
    out.row_bound = -min_row_rate(a, invariant_measure(a, decomposition.classes.front()));
  } else {
    out.row_bound = std::nan("");
  }
  return out;
}

namespace {

struct DetectionAccumulator {
  MomentAccumulator moments;
  double max_residual = 0.0;

  void merge(const DetectionAccumulator& other) {
    moments.merge(other.moments);
    max_residual = std::max(max_residual, other.max_residual);
  }
};

}  // namespace

ClassDetectionReport ergodic_class_detection(const HmmModel& model, const PriorPair& priors,
                                             const TwinOptions& options) {
  require_valid(model);
  const PriorPair checked = PriorPair::make(priors.mu, priors.nu);
  if (options.n_paths < 2) throw std::invalid_argument("ergodic_class_detection: needs at least 2 paths");
  const auto decomposition = ergodic_classes(model.rate);
  if (!decomposition.transient.empty()) {
    throw std::invalid_argument("ergodic_class_detection: model has transient states");
  }
  const auto d = model.dim();
  const auto n_classes = static_cast<Eigen::Index>(decomposition.classes.size());
  const TimeGrid grid = TimeGrid::covering(options.horizon, options.dt);
  const SplittingKernel kernel(model.rate, model.obs, grid.dt);
  const HmmModel physical = with_prior(model, checked.mu);

  Mat indicators(d, n_classes);
  Vec class_mass(n_classes);
  std::vector<Vec> class_priors;
  for (Eigen::Index c = 0; c < n_classes; ++c) {
    indicators.col(c) = indicator(d, decomposition.classes[static_cast<std::size_t>(c)]);
    class_mass(c) = checked.nu.dot(indicators.col(c));
    const Vec restricted = checked.nu.cwiseProduct(indicators.col(c));
    class_priors.push_back(class_mass(c) > 0.0 ? Vec(restricted / class_mass(c)) : Vec(Vec::Zero(d)));
  }

  DetectionAccumulator zero{MomentAccumulator(2, n_classes), 0.0};
  auto acc = reduce_paths(options.n_paths, options.exec, zero, [&](long p, DetectionAccumulator& out) {
    const auto up = static_cast<std::uint64_t>(p);
    const StatePath path = simulate_ctmc(physical, grid.horizon(), derive_seed(options.seed, up, 0));
    const ObservationPath obs =
        simulate_observation(path, model.obs, grid.dt, derive_seed(options.seed, up, 1), Measure::physical);
    Vec pi = checked.nu;
    std::vector<Vec> parts = class_priors;
    for (long k = 0; k < grid.steps; ++k) {
      const auto dz = obs.increments.col(k);
      if (!kernel.wonham_step(pi, dz)) throw NumericalFailure("ergodic_class_detection: mass underflow on path", p);
      Vec mix = Vec::Zero(d);
      const Vec mass = indicators.transpose() * pi;
      for (Eigen::Index c = 0; c < n_classes; ++c) {
        if (class_mass(c) <= 0.0) continue;
        auto& part = parts[static_cast<std::size_t>(c)];
        if (!kernel.wonham_step(part, dz)) throw NumericalFailure("ergodic_class_detection: mass underflow on path", p);
        mix += mass(c) * part;
      }
      out.max_residual = std::max(out.max_residual, (mix - pi).cwiseAbs().maxCoeff());
    }
    const Vec final_mass = indicators.transpose() * pi;
    Mat sample(2, n_classes);
    for (Eigen::Index c = 0; c < n_classes; ++c) {
      sample(0, c) = std::abs(final_mass(c) - indicators(path.initial(), c));
      sample(1, c) = final_mass(c) - class_mass(c);
    }
    out.moments.add(sample);
  });

  ClassDetectionReport out;
  out.classes = decomposition.classes;
  const Mat mean = acc.moments.mean();
  const Mat se = acc.moments.stderr_of_mean();
  out.detection_error = mean.row(0).transpose();
  out.detection_stderr = se.row(0).transpose();
  out.class_mass_drift = mean.row(1).transpose();
  out.class_mass_drift_stderr = se.row(1).transpose();
  out.prior_class_mass = class_mass;
  out.max_decomposition_residual = acc.max_residual;
  out.n_paths = options.n_paths;
  return out;
}

}  // namespace dualfilter

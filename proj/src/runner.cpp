#include "dualfilter/runner.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <sstream>
#include <stdexcept>

#include "dualfilter/duality.hpp"
#include "dualfilter/filters.hpp"
#include "dualfilter/sim.hpp"
#include "dualfilter/smoothing.hpp"
#include "dualfilter/stability.hpp"

namespace dualfilter {

const std::vector<std::string>& experiment_names() {
  static const std::vector<std::string> names{"simulate", "filter",    "smooth",        "analyze", "gramian",
                                              "duality-check", "stability", "detect-classes", "kalman", "catalog"};
  return names;
}

namespace {

bool known_experiment(const std::string& name) {
  for (const auto& n : experiment_names()) {
    if (n == name) return true;
  }
  return false;
}

void require_positive(double v, const char* name) {
  if (!(v > 0.0)) throw std::invalid_argument(std::string("config: ") + name + " must be positive");
}

}  // namespace

ExperimentConfig config_from_json(const Json& j) {
  if (!j.is_object() || j.empty()) throw std::invalid_argument("config: empty or not an object");
  ExperimentConfig c;
  c.schema_version = j.value("schema_version", kConfigSchemaVersion);
  if (c.schema_version != kConfigSchemaVersion) throw std::invalid_argument("config: unsupported schema_version");
  if (!j.contains("experiment")) throw std::invalid_argument("config: missing 'experiment'");
  c.experiment = j.at("experiment").get<std::string>();
  if (!known_experiment(c.experiment)) throw std::invalid_argument("config: unknown experiment '" + c.experiment + "'");
  if (j.contains("model")) {
    const Json& m = j.at("model");
    if (m.is_string()) {
      c.model_name = m.get<std::string>();
      if (!catalog_contains(c.model_name)) throw std::invalid_argument("config: unknown catalog model '" + c.model_name + "'");
    } else {
      model_from_json(m);
      c.model_inline = m;
    }
  } else if (c.experiment != "catalog") {
    throw std::invalid_argument("config: missing 'model'");
  }
  c.params.a1 = j.value("a1", c.params.a1);
  c.params.a2 = j.value("a2", c.params.a2);
  c.horizon = j.value("horizon", c.horizon);
  c.dt = j.value("dt", c.dt);
  c.n_paths = j.value("paths", c.n_paths);
  c.tol = j.value("tol", c.tol);
  if (j.contains("c")) c.c = j.at("c").get<double>();
  if (j.contains("f")) c.f = vector_from_json(j.at("f"), "f");
  if (j.contains("mu")) c.mu = vector_from_json(j.at("mu"), "mu");
  if (j.contains("nu")) c.nu = vector_from_json(j.at("nu"), "nu");
  c.seed = j.value("seed", c.seed);
  c.out_dir = j.value("out", c.out_dir.string());
  require_positive(c.horizon, "horizon");
  require_positive(c.dt, "dt");
  require_positive(c.tol, "tol");
  if (c.n_paths < 2) throw std::invalid_argument("config: paths must be at least 2");
  if (c.dt > c.horizon) throw std::invalid_argument("config: dt exceeds horizon");
  return c;
}

Json config_to_json(const ExperimentConfig& c) {
  Json j{{"schema_version", c.schema_version},
         {"experiment", c.experiment},
         {"a1", c.params.a1},
         {"a2", c.params.a2},
         {"horizon", c.horizon},
         {"dt", c.dt},
         {"paths", c.n_paths},
         {"tol", c.tol},
         {"seed", c.seed},
         {"out", c.out_dir.string()}};
  if (c.model_inline) {
    j["model"] = *c.model_inline;
  } else if (!c.model_name.empty()) {
    j["model"] = c.model_name;
  }
  if (c.c) j["c"] = *c.c;
  if (c.f) j["f"] = to_json(*c.f);
  if (c.mu) j["mu"] = to_json(*c.mu);
  if (c.nu) j["nu"] = to_json(*c.nu);
  return j;
}

std::string config_schema() {
  std::ostringstream os;
  os << "config (JSON object):\n"
     << "  schema_version  int, must be " << kConfigSchemaVersion << "\n"
     << "  experiment      one of:";
  for (const auto& n : experiment_names()) os << ' ' << n;
  os << "\n"
     << "  model           catalog name or inline model object\n"
     << "                  hmm: {\"type\":\"hmm\",\"rate\":[[..]],\"obs\":[[..]],\"prior\":[..]}\n"
     << "                  linear_gaussian: {\"type\":\"linear_gaussian\",\"a_mat\",\"h_mat\",\"sigma\",\"mean0\",\"cov0\"}\n"
     << "  a1, a2          rates for the two_state catalog entry (default 1)\n"
     << "  horizon         final time T > 0 (default 1)\n"
     << "  dt              grid step > 0 dividing T (default 1e-3)\n"
     << "  paths           Monte-Carlo paths >= 2 (default 1000)\n"
     << "  tol             rank cutoff (default 1e-9)\n"
     << "  c               Poincare constant for the chi-square bound (optional)\n"
     << "  f               test function, d-vector (optional)\n"
     << "  mu, nu          initial laws for twin-filter experiments (optional)\n"
     << "  seed            master seed (default 1)\n"
     << "  out             output directory (default out)\n";
  return os.str();
}

namespace {

class Session {
 public:
  explicit Session(const ExperimentConfig& config) : config_(config) {}

  void check(const std::string& name, bool pass, double value, double threshold) {
    checks_.push_back(Check{name, pass, value, threshold});
  }
  Json& values() { return values_; }
  const std::vector<Check>& checks() const { return checks_; }

  void write_text(const std::string& file, const std::function<void(std::ostream&)>& writer) const {
    std::ofstream os(config_.out_dir / file);
    if (!os) throw std::runtime_error("cannot write " + (config_.out_dir / file).string());
    writer(os);
  }

 private:
  const ExperimentConfig& config_;
  std::vector<Check> checks_;
  Json values_ = Json::object();
};

void write_metric_csv(std::ostream& os, const Vec& t, const Vec& mean, const Vec& se) {
  os << "t,mean,stderr\n" << std::setprecision(17);
  for (Eigen::Index k = 0; k < t.size(); ++k) os << t(k) << ',' << mean(k) << ',' << se(k) << '\n';
}

Vec default_f(Eigen::Index d, const ExperimentConfig& c) {
  if (c.f) {
    if (c.f->size() != d) throw std::invalid_argument("config: f has wrong length");
    return *c.f;
  }
  return Vec::Unit(d, 0);
}

PriorPair default_priors(const HmmModel& m, const ExperimentConfig& c) {
  const auto d = m.dim();
  Vec mu(d);
  for (Eigen::Index i = 0; i < d; ++i) mu(i) = static_cast<double>(i + 1);
  mu /= mu.sum();
  const Vec nu = Vec::Constant(d, 1.0 / static_cast<double>(d));
  return PriorPair::make(c.mu.value_or(mu), c.nu.value_or(nu));
}

HmmModel need_hmm(const AnyModel& m, const std::string& experiment) {
  if (const auto* h = std::get_if<HmmModel>(&m)) return *h;
  throw std::invalid_argument(experiment + " needs a finite-state model");
}

TwinOptions twin_options(const ExperimentConfig& c) {
  TwinOptions o;
  o.horizon = c.horizon;
  o.dt = c.dt;
  o.n_paths = c.n_paths;
  o.seed = c.seed;
  return o;
}

void run_simulate(const AnyModel& model, const ExperimentConfig& c, Session& s) {
  if (const auto* h = std::get_if<HmmModel>(&model)) {
    const StatePath path = simulate_ctmc(*h, c.horizon, derive_seed(c.seed, 0, 0));
    const ObservationPath obs = simulate_observation(path, h->obs, c.dt, derive_seed(c.seed, 0, 1), Measure::physical);
    s.write_text("states.csv", [&](std::ostream& os) { write_state_csv(os, path); });
    s.write_text("observations.csv", [&](std::ostream& os) { write_observation_csv(os, obs); });
    s.values()["jumps"] = path.jump_count();
    s.values()["terminal_state"] = path.terminal();
  } else {
    const auto sample = simulate_linear_gaussian(std::get<LinearGaussianModel>(model), c.horizon, c.dt, c.seed);
    s.write_text("states.csv", [&](std::ostream& os) {
      os << "t";
      for (Eigen::Index i = 0; i < sample.states.rows(); ++i) os << ",x_" << (i + 1);
      os << '\n' << std::setprecision(17);
      for (Eigen::Index k = 0; k < sample.states.cols(); ++k) {
        os << sample.grid.t(k);
        for (Eigen::Index i = 0; i < sample.states.rows(); ++i) os << ',' << sample.states(i, k);
        os << '\n';
      }
    });
    s.write_text("observations.csv", [&](std::ostream& os) { write_observation_csv(os, sample.obs); });
  }
}

void run_filter(const AnyModel& model, const ExperimentConfig& c, Session& s) {
  if (const auto* h = std::get_if<HmmModel>(&model)) {
    const StatePath path = simulate_ctmc(*h, c.horizon, derive_seed(c.seed, 0, 0));
    const ObservationPath obs = simulate_observation(path, h->obs, c.dt, derive_seed(c.seed, 0, 1), Measure::physical);
    const BeliefPath wonham = wonham_filter(*h, h->prior, obs);
    const BeliefPath zakai = zakai_filter(*h, h->prior, obs).normalized();
    const double gap = (wonham.beliefs - zakai.beliefs).cwiseAbs().maxCoeff();
    const Mat innov = innovation_path(*h, wonham, obs);
    s.write_text("beliefs.csv", [&](std::ostream& os) { write_belief_csv(os, wonham); });
    s.write_text("innovations.csv", [&](std::ostream& os) { write_observation_csv(os, ObservationPath{obs.grid, innov}); });
    s.values()["terminal_state"] = path.terminal();
    s.values()["terminal_belief"] = to_json(Vec(wonham.beliefs.col(obs.steps())));
    s.check("zakai_matches_wonham", gap <= 1e-8, gap, 1e-8);
  } else {
    const auto& lg = std::get<LinearGaussianModel>(model);
    const auto sample = simulate_linear_gaussian(lg, c.horizon, c.dt, c.seed);
    const auto kb = kalman_bucy(lg, sample.obs);
    s.write_text("kalman.csv", [&](std::ostream& os) { write_gaussian_csv(os, kb); });
    double worst = 0.0;
    for (const auto& cov : kb.covs) worst = std::min(worst, min_eigenvalue(cov));
    s.check("covariance_psd", worst >= -1e-8, worst, -1e-8);
  }
}

void run_smooth(const AnyModel& model, const ExperimentConfig& c, Session& s) {
  if (const auto* h = std::get_if<HmmModel>(&model)) {
    const StatePath path = simulate_ctmc(*h, c.horizon, derive_seed(c.seed, 0, 0));
    const ObservationPath obs = simulate_observation(path, h->obs, c.dt, derive_seed(c.seed, 0, 1), Measure::physical);
    const auto sm = forward_backward_smoother(*h, obs);
    const auto wonham = wonham_filter(*h, h->prior, obs);
    const double tv = divergences(sm.smoothed.col(obs.steps()), wonham.beliefs.col(obs.steps())).tv;
    s.write_text("smoothed.csv", [&](std::ostream& os) { write_smoothing_csv(os, sm); });
    s.check("terminal_smoother_equals_filter", tv <= 1e-8, tv, 1e-8);
  } else {
    const auto& lg = std::get<LinearGaussianModel>(model);
    const auto sample = simulate_linear_gaussian(lg, c.horizon, c.dt, c.seed);
    const auto fp = fraser_potter_smoother(lg, sample.obs);
    const auto rts = rts_smoother(lg, sample.obs);
    const double gap = (fp.smoothed - rts.smoothed).cwiseAbs().maxCoeff();
    const double cost = min_energy_cost(lg, fp.trajectory_half.col(0), fp.control_half, sample.obs);
    s.write_text("smoothed.csv", [&](std::ostream& os) { write_gaussian_smoothing_csv(os, fp); });
    s.values()["min_energy_cost"] = cost;
    s.values()["innovation_energy"] = fp.innovation_energy;
    s.check("two_filter_matches_rts", gap <= 1e-6, gap, 1e-6);
    s.check("min_energy_equals_innovation_energy", std::abs(cost - fp.innovation_energy) <= 1e-6,
            std::abs(cost - fp.innovation_energy), 1e-6);
  }
}

void run_analyze(const AnyModel& model, const ExperimentConfig& c, Session& s) {
  if (const auto* h = std::get_if<HmmModel>(&model)) {
    const auto obs = is_observable(*h, c.tol);
    const auto stab = is_stabilizable(*h, c.tol);
    const auto& basis = obs.controllable.basis;
    const double ortho = (basis.transpose() * basis - Mat::Identity(basis.cols(), basis.cols())).cwiseAbs().maxCoeff();
    double invariance = 0.0;
    for (Eigen::Index k = 0; k < basis.cols(); ++k) {
      invariance = std::max(invariance, obs.controllable.residual(h->rate * basis.col(k)));
      for (Eigen::Index j = 0; j < h->obs_dim(); ++j) {
        invariance = std::max(invariance, obs.controllable.residual(h->obs.col(j).cwiseProduct(basis.col(k))));
      }
    }
    s.values()["controllable_dim"] = obs.controllable.dim();
    s.values()["observable"] = obs.observable;
    s.values()["stabilizable"] = stab.stabilizable;
    s.values()["controllable_basis"] = to_json(basis);
    s.values()["unobservable_basis"] = to_json(obs.unobservable);
    s.values()["null_space_residuals"] = to_json(stab.residuals);
    s.check("basis_orthonormal", ortho <= 1e-10, ortho, 1e-10);
    s.check("subspace_invariant", invariance <= 1e-8, invariance, 1e-8);
  } else {
    const auto& lg = std::get<LinearGaussianModel>(model);
    const auto ctrl = lti_controllability(lg.a_mat, lg.h_mat, c.tol);
    const auto are = solve_are(lg);
    s.values()["krylov_dim"] = ctrl.dim();
    s.values()["are_converged"] = are.converged;
    s.values()["are_hurwitz"] = are.hurwitz;
    s.values()["are_sigma"] = to_json(are.sigma);
    s.values()["closed_loop_abscissa"] = are.closed_loop_abscissa;
    s.values()["diagnostic"] = are.diagnostic;
    s.check("are_converged", are.converged, are.residual, 1e-8);
  }
}

void run_gramian(const AnyModel& model, const ExperimentConfig& c, Session& s) {
  const HmmModel h = need_hmm(model, "gramian");
  const auto w = gramian_mc(h, c.horizon, c.dt, c.n_paths, c.seed);
  const auto dim = controllable_subspace(h, c.tol).dim();
  const auto rank = w.numerical_rank();
  s.values()["gramian_mean"] = to_json(w.mean);
  s.values()["gramian_stderr"] = to_json(w.stderr_of_mean);
  s.values()["numerical_rank"] = rank;
  s.values()["controllable_dim"] = dim;
  s.check("rank_matches_controllable_dim", rank == dim, static_cast<double>(rank), static_cast<double>(dim));
}

void run_duality(const AnyModel& model, const ExperimentConfig& c, Session& s) {
  const HmmModel h = need_hmm(model, "duality-check");
  const Vec f = default_f(h.dim(), c);
  const auto lq = dual_deterministic_markov(h, f, c.horizon, c.dt);
  const Mat u = lq.piecewise_control();
  const auto res = duality_check_mc(h, u, f, c.horizon, c.n_paths, c.seed);
  s.values()["lq_cost"] = lq.cost;
  s.values()["lq_value"] = lq.value;
  s.values()["j_value"] = res.j_value;
  s.values()["mse"] = res.mse;
  s.values()["mse_stderr"] = res.stderr_of_mse;
  s.check("duality_gap_within_3_sigma", std::abs(res.j_value - res.mse) <= 3.0 * res.stderr_of_mse,
          std::abs(res.j_value - res.mse), 3.0 * res.stderr_of_mse);
}

void run_stability(const AnyModel& model, const ExperimentConfig& c, Session& s) {
  const HmmModel h = need_hmm(model, "stability");
  const auto d = h.dim();
  Json constants = Json::object();
  double best_closed = 0.0;
  auto record = [&](PiMethod m) {
    const auto pc = pi_constant(h, m);
    constants[to_string(m)] = pc.value;
    if (m != PiMethod::brute_force) best_closed = std::max(best_closed, pc.value);
    return pc;
  };
  if (d == 2 && h.rate(0, 1) > 0.0 && h.rate(1, 0) > 0.0) record(PiMethod::closed_form_2state);
  record(PiMethod::doeblin);
  record(PiMethod::sqrt_bound);
  const auto brute = record(PiMethod::brute_force);
  s.values()["poincare_constants"] = constants;
  const double c_used = c.c.value_or(best_closed);
  s.values()["c"] = c_used;

  const PriorPair priors = default_priors(h, c);
  const auto chi = chi2_bound_check(h, priors, twin_options(c), c_used);
  Json rows = Json::array();
  for (const auto& cp : chi.checks) rows.push_back({{"t", cp.t}, {"lhs", cp.lhs}, {"rhs", cp.rhs}, {"slack", cp.slack}});
  s.values()["chi2_checks"] = rows;
  s.check("chi2_bound", chi.pass, chi.checks.empty() ? 0.0 : chi.checks.back().lhs,
          chi.checks.empty() ? 0.0 : chi.checks.back().rhs);

  const auto kl = kl_supermartingale_check(h, priors, twin_options(c));
  s.check("kl_supermartingale", kl.pass, kl.bound.empty() ? 0.0 : kl.bound.back().lhs, kl.kl0);

  const auto twin = twin_filter_experiment(h, priors, twin_options(c));
  for (const auto& [name, row] : std::map<std::string, Eigen::Index>{{"chi2", kChi2}, {"kl", kKl}, {"tv", kTv}}) {
    s.write_text("stability_" + name + ".csv", [&](std::ostream& os) {
      write_metric_csv(os, twin.times, twin.mean.row(row).transpose(), twin.stderr_of_mean.row(row).transpose());
    });
  }
  if (d == 2 && constants.contains(to_string(PiMethod::closed_form_2state))) {
    const double closed = constants[to_string(PiMethod::closed_form_2state)].get<double>();
    s.check("brute_force_matches_closed_form", std::abs(brute.value - closed) <= 1e-2, std::abs(brute.value - closed),
            1e-2);
  }
}

void run_detect(const AnyModel& model, const ExperimentConfig& c, Session& s) {
  const HmmModel h = need_hmm(model, "detect-classes");
  const PriorPair priors = PriorPair::make(c.mu.value_or(h.prior), c.nu.value_or(h.prior));
  const auto rep = ergodic_class_detection(h, priors, twin_options(c));
  Json classes = Json::array();
  for (const auto& cls : rep.classes) classes.push_back(cls);
  s.values()["classes"] = classes;
  s.values()["detection_error"] = to_json(rep.detection_error);
  s.values()["detection_stderr"] = to_json(rep.detection_stderr);
  s.values()["prior_class_mass"] = to_json(rep.prior_class_mass);
  s.values()["class_mass_drift"] = to_json(rep.class_mass_drift);
  s.check("decomposition_identity", rep.max_decomposition_residual <= 1e-8, rep.max_decomposition_residual, 1e-8);
  if (priors.mu.isApprox(priors.nu)) {
    double worst = 0.0;
    bool pass = true;
    for (Eigen::Index k = 0; k < rep.class_mass_drift.size(); ++k) {
      worst = std::max(worst, std::abs(rep.class_mass_drift(k)));
      pass = pass && std::abs(rep.class_mass_drift(k)) <= 3.0 * rep.class_mass_drift_stderr(k) + 1e-12;
    }
    s.check("class_mass_martingale", pass, worst, 0.0);
  }
}

void run_kalman(const AnyModel& model, const ExperimentConfig& c, Session& s) {
  if (const auto* h = std::get_if<HmmModel>(&model)) {
    const StatePath path = simulate_ctmc(*h, c.horizon, derive_seed(c.seed, 0, 0));
    const ObservationPath obs = simulate_observation(path, h->obs, c.dt, derive_seed(c.seed, 0, 1), Measure::physical);
    const auto kf = kf_markov_chain(*h, obs);
    s.write_text("kalman.csv", [&](std::ostream& os) {
      write_gaussian_csv(os, GaussianBeliefPath{kf.grid, kf.estimates, kf.covs});
    });
    const Vec f = default_f(h->dim(), c);
    const auto lq = dual_deterministic_markov(*h, f, c.horizon, c.dt);
    s.values()["lq_cost"] = lq.cost;
    s.values()["riccati_value"] = lq.value;
    s.check("lq_cost_equals_riccati_value", std::abs(lq.cost - lq.value) <= 1e-6, std::abs(lq.cost - lq.value), 1e-6);
    return;
  }
  const auto& lg = std::get<LinearGaussianModel>(model);
  const auto sample = simulate_linear_gaussian(lg, c.horizon, c.dt, c.seed);
  const auto kb = kalman_bucy(lg, sample.obs);
  s.write_text("kalman.csv", [&](std::ostream& os) { write_gaussian_csv(os, kb); });
  const auto are = solve_are(lg);
  s.values()["sigma_T"] = to_json(kb.covs.back());
  s.values()["are_sigma"] = to_json(are.sigma);
  s.values()["closed_loop_abscissa"] = are.closed_loop_abscissa;
  s.check("are_converged", are.converged && are.residual <= 1e-8, are.residual, 1e-8);
  s.check("closed_loop_hurwitz", are.hurwitz, are.closed_loop_abscissa, 0.0);
  const Vec f = default_f(lg.dim(), c);
  const auto lq = dual_lq_linear_gaussian(lg, f, c.horizon, c.dt);
  const double riccati = f.dot(kb.covs.back() * f);
  s.values()["lq_cost"] = lq.cost;
  s.check("lq_cost_equals_riccati_value", std::abs(lq.cost - riccati) <= 1e-6, std::abs(lq.cost - riccati), 1e-6);
}

AnyModel resolve_model(const ExperimentConfig& c) {
  if (c.model_inline) return model_from_json(*c.model_inline);
  return catalog_model(c.model_name, c.params);
}

}  // namespace

RunResult run(const ExperimentConfig& config) {
  RunResult result;
  try {
    if (config.experiment == "catalog") {
      result.message = list_catalog();
      Json names = Json::array();
      for (const auto& e : catalog_entries()) names.push_back(e.name);
      result.summary = Json{{"experiment", "catalog"}, {"entries", names}};
      return result;
    }
    if (!known_experiment(config.experiment)) {
      throw std::invalid_argument("unknown experiment '" + config.experiment + "'");
    }
    const AnyModel model = resolve_model(config);
    std::filesystem::create_directories(config.out_dir);
    write_json_file(config.out_dir / "manifest.json",
                    Json{{"library_version", kLibraryVersion},
                         {"seed", config.seed},
                         {"config", config_to_json(config)},
                         {"resolved_model", model_to_json(model)}});

    Session session(config);
    static const std::map<std::string, void (*)(const AnyModel&, const ExperimentConfig&, Session&)> table{
        {"simulate", run_simulate},   {"filter", run_filter},       {"smooth", run_smooth},
        {"analyze", run_analyze},     {"gramian", run_gramian},     {"duality-check", run_duality},
        {"stability", run_stability}, {"detect-classes", run_detect}, {"kalman", run_kalman}};
    table.at(config.experiment)(model, config, session);

    result.checks = session.checks();
    Json checks = Json::array();
    bool all = true;
    for (const auto& ch : result.checks) {
      checks.push_back({{"name", ch.name}, {"pass", ch.pass}, {"value", ch.value}, {"threshold", ch.threshold}});
      all = all && ch.pass;
    }
    result.summary = Json{{"experiment", config.experiment},
                          {"model", config.model_inline ? Json("inline") : Json(config.model_name)},
                          {"seed", config.seed},
                          {"values", session.values()},
                          {"checks", checks},
                          {"pass", all}};
    write_json_file(config.out_dir / "summary.json", result.summary);
    result.exit_code = all ? kExitPass : kExitFailure;
    result.message = all ? "all checks passed" : "one or more checks failed";
  } catch (const NumericalFailure& e) {
    result.exit_code = kExitFailure;
    result.message = std::string("numerical failure: ") + e.what();
  } catch (const std::invalid_argument& e) {
    result.exit_code = kExitUsage;
    result.message = std::string("invalid input: ") + e.what();
  }
  return result;
}

}  // namespace dualfilter

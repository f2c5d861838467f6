#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "dualfilter/runner.hpp"

namespace df = dualfilter;

namespace {

struct Flags {
  std::string model;
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<long> paths;
  std::optional<double> dt;
  std::optional<double> horizon;
  std::optional<double> tol;
  std::optional<double> c;
  std::optional<double> a1;
  std::optional<double> a2;
};

void add_flags(CLI::App* sub, Flags& f, bool wants_model) {
  if (wants_model) sub->add_option("model", f.model, "catalog name or path to a model JSON file");
  sub->add_option("--config", f.config, "JSON experiment config");
  sub->add_option("--seed", f.seed, "master seed");
  sub->add_option("--out", f.out, "output directory");
  sub->add_option("--paths", f.paths, "Monte-Carlo paths");
  sub->add_option("--dt", f.dt, "time step");
  sub->add_option("--horizon", f.horizon, "final time");
  sub->add_option("--tol", f.tol, "rank cutoff");
  sub->add_option("--c", f.c, "Poincare constant for the chi-square bound");
  sub->add_option("--a1", f.a1, "two_state rate a1");
  sub->add_option("--a2", f.a2, "two_state rate a2");
}

df::Json build_config(const std::string& experiment, const Flags& f) {
  df::Json j = f.config.empty() ? df::Json::object() : df::read_json_file(f.config);
  if (f.config.empty() || !j.contains("experiment")) j["experiment"] = experiment;
  if (!f.model.empty()) {
    if (df::catalog_contains(f.model) || !std::filesystem::exists(f.model)) {
      j["model"] = f.model;
    } else {
      j["model"] = df::read_json_file(f.model);
    }
  }
  if (f.seed) j["seed"] = *f.seed;
  if (f.out) j["out"] = *f.out;
  if (f.paths) j["paths"] = *f.paths;
  if (f.dt) j["dt"] = *f.dt;
  if (f.horizon) j["horizon"] = *f.horizon;
  if (f.tol) j["tol"] = *f.tol;
  if (f.c) j["c"] = *f.c;
  if (f.a1) j["a1"] = *f.a1;
  if (f.a2) j["a2"] = *f.a2;
  return j;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Finite-state and linear-Gaussian filtering, smoothing and duality experiments"};
  app.require_subcommand(0, 1);
  Flags flags;
  for (const auto& name : df::experiment_names()) {
    auto* sub = app.add_subcommand(name, "run the '" + name + "' experiment");
    add_flags(sub, flags, name != "catalog");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : df::kExitUsage;
  }
  if (app.get_subcommands().empty()) {
    std::cerr << app.help() << '\n' << df::config_schema();
    return df::kExitUsage;
  }
  const std::string experiment = app.get_subcommands().front()->get_name();

  df::ExperimentConfig config;
  try {
    config = df::config_from_json(build_config(experiment, flags));
  } catch (const std::exception& e) {
    std::cerr << "usage error: " << e.what() << "\n\n" << df::config_schema();
    return df::kExitUsage;
  }
  const auto result = df::run(config);
  if (experiment == "catalog") {
    std::cout << result.message;
    return result.exit_code;
  }
  for (const auto& ch : result.checks) {
    std::cout << (ch.pass ? "PASS " : "FAIL ") << ch.name << " value=" << ch.value << " threshold=" << ch.threshold
              << '\n';
  }
  if (result.summary.contains("values")) std::cout << result.summary["values"].dump(2) << '\n';
  (result.exit_code == df::kExitPass ? std::cout : std::cerr) << result.message << '\n';
  if (result.exit_code == df::kExitUsage) std::cerr << df::config_schema();
  return result.exit_code;
}

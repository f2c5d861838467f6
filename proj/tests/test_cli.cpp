#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "dualfilter/catalog.hpp"
#include "dualfilter/runner.hpp"

using namespace dualfilter;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("dualfilter_test_cli_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

ExperimentConfig make(const std::string& experiment, const std::string& model, const fs::path& out) {
  return config_from_json(Json{{"experiment", experiment}, {"model", model}, {"out", out.string()}});
}

}  // namespace

TEST_CASE("config parsing rejects malformed input") {
  CHECK_THROWS_AS(config_from_json(Json::object()), std::invalid_argument);
  CHECK_THROWS_AS(config_from_json(Json::array()), std::invalid_argument);
  CHECK_THROWS_AS(config_from_json(Json{{"model", "doeblin_demo"}}), std::invalid_argument);
  CHECK_THROWS_AS(config_from_json(Json{{"experiment", "bogus"}, {"model", "doeblin_demo"}}), std::invalid_argument);
  CHECK_THROWS_AS(config_from_json(Json{{"experiment", "filter"}}), std::invalid_argument);
  CHECK_THROWS_AS(config_from_json(Json{{"experiment", "filter"}, {"model", "nowhere"}}), std::invalid_argument);
  CHECK_THROWS_AS(config_from_json(Json{{"experiment", "filter"}, {"model", "doeblin_demo"}, {"dt", -1.0}}),
                  std::invalid_argument);
  CHECK_THROWS_AS(config_from_json(Json{{"experiment", "filter"}, {"model", "doeblin_demo"}, {"paths", 1}}),
                  std::invalid_argument);
  CHECK_THROWS_AS(config_from_json(Json{{"experiment", "filter"}, {"model", "doeblin_demo"}, {"schema_version", 99}}),
                  std::invalid_argument);
  CHECK_THROWS_AS(
      config_from_json(Json{{"experiment", "filter"}, {"model", Json{{"rate", Json::array({Json::array({1, 0})})}}}}),
      std::invalid_argument);
  CHECK_NOTHROW(config_from_json(Json{{"experiment", "catalog"}}));
  CHECK_FALSE(config_schema().empty());
}

TEST_CASE("config round trip") {
  auto c = config_from_json(Json{{"experiment", "stability"},
                                 {"model", "two_state"},
                                 {"a1", 4.0},
                                 {"a2", 1.0},
                                 {"c", 9.0},
                                 {"mu", {0.3, 0.7}},
                                 {"seed", 42},
                                 {"paths", 50}});
  const auto back = config_from_json(config_to_json(c));
  CHECK(config_to_json(back) == config_to_json(c));
  CHECK(back.params.a1 == 4.0);
  CHECK(*back.c == 9.0);
  CHECK(back.seed == 42u);
}

TEST_CASE("unknown experiment in a hand-built config is a usage error") {
  ExperimentConfig c;
  c.experiment = "bogus";
  c.model_name = "doeblin_demo";
  c.out_dir = scratch("bogus");
  CHECK(run(c).exit_code == kExitUsage);
}

TEST_CASE("analyze counter_example reports the subspace facts") {
  const auto out = scratch("analyze");
  const auto res = run(make("analyze", "counter_example", out));
  CHECK(res.exit_code == kExitPass);
  CHECK(res.summary["values"]["controllable_dim"] == 2);
  CHECK(res.summary["values"]["observable"] == false);
  CHECK(res.summary["values"]["stabilizable"] == true);
  CHECK(fs::exists(out / "manifest.json"));
  CHECK(fs::exists(out / "summary.json"));
}

TEST_CASE("stability two_state(1,1) reports c = 4 and passes") {
  const auto out = scratch("stability");
  auto c = config_from_json(Json{{"experiment", "stability"},
                                 {"model", "two_state"},
                                 {"a1", 1.0},
                                 {"a2", 1.0},
                                 {"horizon", 1.0},
                                 {"dt", 1e-2},
                                 {"paths", 200},
                                 {"out", out.string()}});
  const auto res = run(c);
  CHECK(res.exit_code == kExitPass);
  CHECK(res.summary["values"]["c"].get<double>() == 4.0);
  for (const char* f : {"stability_chi2.csv", "stability_kl.csv", "stability_tv.csv"}) CHECK(fs::exists(out / f));
}

TEST_CASE("numerical failure maps to exit code 1") {
  const auto out = scratch("numfail");
  auto c = config_from_json(Json{{"experiment", "smooth"},
                                 {"model",
                                  {{"type", "linear_gaussian"},
                                   {"a_mat", {{0.0}}},
                                   {"h_mat", {{1.0}}},
                                   {"sigma", {{1.0}}},
                                   {"mean0", {0.0}},
                                   {"cov0", {{0.0}}}}},
                                 {"horizon", 0.1},
                                 {"dt", 1e-2},
                                 {"out", out.string()}});
  const auto res = run(c);
  CHECK(res.exit_code == kExitFailure);
  CHECK(res.message.find("numerical failure") != std::string::npos);
}

TEST_CASE("same config and seed give byte-identical CSV output") {
  const auto a = scratch("det_a"), b = scratch("det_b"), other = scratch("det_c");
  auto ca = make("filter", "doeblin_demo", a);
  auto cb = make("filter", "doeblin_demo", b);
  auto cc = make("filter", "doeblin_demo", other);
  cc.seed = 2;
  REQUIRE(run(ca).exit_code == kExitPass);
  REQUIRE(run(cb).exit_code == kExitPass);
  REQUIRE(run(cc).exit_code == kExitPass);
  for (const char* f : {"beliefs.csv", "innovations.csv", "states.csv", "observations.csv"}) {
    if (!fs::exists(a / f)) continue;
    CHECK(slurp(a / f) == slurp(b / f));
  }
  CHECK(slurp(a / "beliefs.csv") != slurp(other / "beliefs.csv"));
}

TEST_CASE("a run is reproducible from its manifest alone") {
  const auto out = scratch("manifest");
  auto c = config_from_json(Json{{"experiment", "duality-check"},
                                 {"model", "doeblin_demo"},
                                 {"horizon", 0.5},
                                 {"dt", 1e-2},
                                 {"paths", 300},
                                 {"seed", 17},
                                 {"out", out.string()}});
  const auto first = run(c);
  const Json manifest = read_json_file(out / "manifest.json");
  CHECK(manifest["seed"] == 17);
  CHECK(manifest["library_version"] == kLibraryVersion);
  CHECK(manifest.contains("resolved_model"));
  auto again = config_from_json(manifest["config"]);
  again.out_dir = scratch("manifest_again");
  const auto second = run(again);
  CHECK(first.exit_code == second.exit_code);
  CHECK(first.summary["values"] == second.summary["values"]);
}

TEST_CASE("catalog") {
  const std::string a = list_catalog();
  CHECK(a.find("counter_example") != std::string::npos);
  CHECK(a.find("scalar_lg") != std::string::npos);
  CHECK(a == list_catalog());
  for (const auto& e : catalog_entries()) {
    const auto m = catalog_model(e.name);
    std::visit([](const auto& model) { CHECK(validate(model).empty()); }, m);
  }
  ExperimentConfig c;
  c.experiment = "catalog";
  const auto res = run(c);
  CHECK(res.exit_code == kExitPass);
  CHECK(res.summary["entries"].size() == catalog_entries().size());
}

#include <doctest.h>

#include <cmath>

#include "dualfilter/catalog.hpp"
#include "dualfilter/io.hpp"
#include "dualfilter/linalg.hpp"
#include "dualfilter/models.hpp"
#include "test_support.hpp"

using namespace dualfilter;

TEST_CASE("valid catalog models pass validation") {
  CHECK(validate(counter_example()).empty());
  CHECK(validate(two_state(4, 1)).empty());
  CHECK(validate(doeblin_demo()).empty());
  CHECK(validate(two_class_demo()).empty());
  CHECK(validate(scalar_lg()).empty());
}

TEST_CASE("rate validation reports every violation with its row") {
  Mat a{{-1.0, 1.0, 0.0}, {-0.5, 0.0, 0.5}, {0.0, 0.2, -0.1}};
  const auto report = validate_rate(a);
  REQUIRE(report.size() >= 2);
  bool row1 = false, row2 = false;
  for (const auto& v : report) {
    row1 = row1 || v.index == 1;
    row2 = row2 || v.index == 2;
  }
  CHECK(row1);
  CHECK(row2);
  CHECK_FALSE(format_report(report).empty());
}

TEST_CASE("non-square rate and mismatched shapes are rejected") {
  CHECK_FALSE(validate_rate(Mat::Zero(2, 3)).empty());
  HmmModel m = two_state(1, 1);
  m.obs = Mat::Zero(3, 1);
  CHECK_FALSE(validate(m).empty());
  CHECK_THROWS_AS(require_valid(m), std::invalid_argument);
}

TEST_CASE("simplex validation") {
  CHECK(validate_simplex(Vec{{0.25, 0.75}}, "p").empty());
  CHECK_FALSE(validate_simplex(Vec{{0.5, 0.6}}, "p").empty());
  CHECK_FALSE(validate_simplex(Vec{{-0.1, 1.1}}, "p").empty());
  CHECK_FALSE(validate_simplex(Vec{{NAN, 1.0}}, "p").empty());
}

TEST_CASE("linear-Gaussian validation rejects an indefinite prior covariance") {
  auto m = scalar_lg();
  m.cov0(0, 0) = -1.0;
  CHECK_FALSE(validate(m).empty());
  CHECK_THROWS_AS(require_valid(m), std::invalid_argument);
}

TEST_CASE("carre du champ matches its quadratic-form representation") {
  testsupport::Gen gen(11);
  for (int trial = 0; trial < 20; ++trial) {
    const auto d = gen.integer(2, 6);
    const Mat a = gen.rate(d);
    const Vec f = gen.gaussian(d, 1).col(0);
    const Vec gamma = carre_du_champ(a, f);
    for (Eigen::Index i = 0; i < d; ++i) {
      double direct = 0.0;
      for (Eigen::Index j = 0; j < d; ++j) direct += a(i, j) * (f(i) - f(j)) * (f(i) - f(j));
      CHECK(gamma(i) == doctest::Approx(direct).epsilon(1e-12));
      CHECK(f.dot(q_matrix(a, i) * f) == doctest::Approx(direct).epsilon(1e-12));
    }
    CHECK((gamma.array() >= 0.0).all());
    // Gamma of a constant vanishes.
    CHECK(carre_du_champ(a, Vec::Constant(d, 3.0)).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("expected Q is PSD with the constants in its kernel") {
  testsupport::Gen gen(12);
  const Mat a = gen.rate(4);
  const Vec rho = gen.simplex(4);
  const Mat q = expected_q(a, rho);
  CHECK(min_eigenvalue(symmetrize(q)) > -1e-12);
  CHECK((q * Vec::Ones(4)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("ergodic class decomposition") {
  const auto dec = ergodic_classes(two_class_demo().rate);
  REQUIRE(dec.classes.size() == 2);
  CHECK(dec.classes[0] == std::vector<int>{0, 1});
  CHECK(dec.classes[1] == std::vector<int>{2, 3});
  CHECK(dec.transient.empty());

  Mat a{{-1.0, 1.0, 0.0}, {0.0, -1.0, 1.0}, {0.0, 1.0, -1.0}};
  const auto dec2 = ergodic_classes(a);
  REQUIRE(dec2.classes.size() == 1);
  CHECK(dec2.classes[0] == std::vector<int>{1, 2});
  CHECK(dec2.transient == std::vector<int>{0});
}

TEST_CASE("invariant measure is stationary and supported on its class") {
  const Mat a = two_class_demo().rate;
  for (const auto& cls : ergodic_classes(a).classes) {
    const Vec pi = invariant_measure(a, cls);
    CHECK(pi.sum() == doctest::Approx(1.0));
    CHECK((a.transpose() * pi).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(pi.dot(indicator(4, cls)) == doctest::Approx(1.0));
  }
  const Vec pi2 = invariant_measure(two_state(4, 1).rate, {0, 1});
  CHECK(pi2(0) == doctest::Approx(0.2));
  CHECK(pi2(1) == doctest::Approx(0.8));
}

TEST_CASE("matrix exponential agrees with uniformization") {
  testsupport::Gen gen(13);
  for (int trial = 0; trial < 10; ++trial) {
    const Mat a = gen.rate(gen.integer(2, 5), 0.1, 3.0);
    const double t = gen.uniform(0.01, 2.0);
    const Mat p = expm(a * t);
    CHECK((p - testsupport::uniformized_transition(a, t)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((p.rowwise().sum() - Vec::Ones(a.rows())).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("expm_integral matches a fine quadrature") {
  testsupport::Gen gen(14);
  const Mat m = gen.gaussian(3, 3);
  const double t = 0.7;
  const int n = 2000;
  Mat quad = Mat::Zero(3, 3);
  for (int k = 0; k <= n; ++k) {
    const double w = (k == 0 || k == n) ? 1.0 : (k % 2 ? 4.0 : 2.0);
    quad += w * expm(m * (t * k / n));
  }
  quad *= t / (3.0 * n);
  CHECK((expm_integral(m, t) - quad).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("orthonormal range and null space") {
  Mat cols{{1.0, 2.0, 0.0}, {1.0, 2.0, 0.0}, {0.0, 0.0, 1.0}};
  const Mat q = orthonormal_range(cols, 1e-10);
  CHECK(q.cols() == 2);
  CHECK((q.transpose() * q - Mat::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(orthonormal_range(Mat::Zero(3, 2), 1e-10).cols() == 0);
  const Mat n = null_space(cols.transpose(), 1e-10);
  CHECK(n.cols() == 1);
  CHECK((cols.transpose() * n).norm() < 1e-12);
  CHECK(projection_residual(q, Vec{{1.0, -1.0, 0.0}}) == doctest::Approx(std::sqrt(2.0)));
}

TEST_CASE("JSON round trip of models") {
  testsupport::Gen gen(15);
  const HmmModel h = gen.hmm(3, 2);
  const auto back = std::get<HmmModel>(model_from_json(model_to_json(AnyModel{h})));
  CHECK((back.rate - h.rate).norm() == 0.0);
  CHECK((back.obs - h.obs).norm() == 0.0);
  CHECK((back.prior - h.prior).norm() == 0.0);

  const auto lg = gen.linear_gaussian(2, 1, 2, true);
  const auto lg_back = std::get<LinearGaussianModel>(model_from_json(model_to_json(AnyModel{lg})));
  CHECK((lg_back.a_mat - lg.a_mat).norm() == 0.0);
  CHECK((lg_back.cov0 - lg.cov0).norm() == 0.0);
}

TEST_CASE("JSON parsing errors") {
  CHECK_THROWS_AS(matrix_from_json(Json::parse("[[1, 2], [3]]"), "m"), std::invalid_argument);
  CHECK_THROWS(model_from_json(Json::parse(R"({"type": "hmm", "rate": [[-1, 1], [1, -1]]})")));
  CHECK_THROWS(model_from_json(Json::parse(R"({"type": "nonsense"})")));
  CHECK_THROWS(model_from_json(
      Json::parse(R"({"rate": [[-1, 2], [1, -1]], "obs": [[0], [1]], "prior": [0.5, 0.5]})")));
}

TEST_CASE("catalog lookup") {
  CHECK(catalog_contains("counter_example"));
  CHECK_FALSE(catalog_contains("missing"));
  CHECK_THROWS_AS(catalog_model("missing"), std::invalid_argument);
  const auto m = std::get<HmmModel>(catalog_model("two_state", {9.0, 4.0}));
  CHECK(m.rate(0, 1) == 9.0);
  CHECK(m.rate(1, 0) == 4.0);
  CHECK(catalog_entries().front().name == "counter_example");
}

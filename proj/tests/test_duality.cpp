#include <doctest.h>

#include <cmath>

#include "dualfilter/catalog.hpp"
#include "dualfilter/duality.hpp"
#include "dualfilter/filters.hpp"
#include "test_support.hpp"

using namespace dualfilter;

namespace {

double max_closure_residual(const HmmModel& model, const Subspace& c) {
  double worst = c.residual(Vec::Ones(model.dim()));
  for (Eigen::Index k = 0; k < c.dim(); ++k) {
    const Vec f = c.basis.col(k);
    worst = std::max(worst, c.residual(model.rate * f));
    for (Eigen::Index j = 0; j < model.obs_dim(); ++j) {
      worst = std::max(worst, c.residual(model.obs.col(j).cwiseProduct(f)));
    }
  }
  return worst;
}

Eigen::Index krylov_rank(const Mat& a, const Mat& h) {
  const auto d = a.rows();
  Mat k(d, d * h.cols());
  Mat block = h;
  for (Eigen::Index i = 0; i < d; ++i) {
    k.middleCols(i * h.cols(), h.cols()) = block;
    block = a * block;
  }
  Eigen::FullPivLU<Mat> lu(k);
  lu.setThreshold(1e-10);
  return lu.rank();
}

}  // namespace

TEST_CASE("counter-example controllable subspace is span{1, h}") {
  const auto model = counter_example();
  const auto c = controllable_subspace(model);
  CHECK(c.dim() == 2);
  CHECK(c.residual(Vec::Ones(4)) < 1e-12);
  CHECK(c.residual(model.obs.col(0)) < 1e-12);
  CHECK(c.residual(Vec{{1.0, 0.0, -1.0, 0.0}}) == doctest::Approx(std::sqrt(2.0)));
  const Mat comp = c.complement();
  CHECK(comp.cols() == 2);
  CHECK((c.basis.transpose() * comp).norm() < 1e-12);
}

TEST_CASE("observability and stabilizability of the catalog models") {
  const auto ce = is_observable(counter_example());
  CHECK_FALSE(ce.observable);
  CHECK(ce.unobservable.cols() == 2);
  CHECK((ce.unobservable.colwise().sum()).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(is_stabilizable(counter_example()).stabilizable);

  CHECK(is_observable(doeblin_demo()).observable);

  const auto two = two_class_demo();
  CHECK_FALSE(is_observable(two).observable);
  const auto st = is_stabilizable(two);
  CHECK(st.stabilizable);
  CHECK(st.null_basis.cols() == 2);

  auto blind = two;
  blind.obs.setZero();
  const auto st_blind = is_stabilizable(blind);
  CHECK(st_blind.controllable.dim() == 1);
  CHECK_FALSE(st_blind.stabilizable);
  CHECK(st_blind.residuals.maxCoeff() > 0.1);
}

TEST_CASE("controllable subspace is closed and contains the constants (property)") {
  testsupport::Gen gen(31);
  for (int trial = 0; trial < 30; ++trial) {
    const auto d = gen.integer(2, 6);
    HmmModel model = gen.hmm(d, gen.integer(1, 2));
    // Quantised observations make non-trivial subspaces likely.
    model.obs = model.obs.array().round();
    if (trial % 3 == 0) model.rate = Mat::Zero(d, d);
    const auto c = controllable_subspace(model);
    CHECK(c.dim() >= 1);
    CHECK(c.dim() <= d);
    CHECK((c.basis.transpose() * c.basis - Mat::Identity(c.dim(), c.dim())).cwiseAbs().maxCoeff() < 1e-10);
    CHECK(max_closure_residual(model, c) < 1e-8);
  }
}

TEST_CASE("generic observation makes the model observable") {
  testsupport::Gen gen(32);
  for (int trial = 0; trial < 10; ++trial) {
    const auto model = gen.hmm(gen.integer(2, 6));
    CHECK(is_observable(model).observable);
  }
}

TEST_CASE("linear controllability matches the Krylov rank") {
  const Mat a{{0.0, 1.0}, {0.0, 0.0}};
  CHECK(lti_controllability(a, Mat{{0.0}, {1.0}}).dim() == krylov_rank(a, Mat{{0.0}, {1.0}}));
  CHECK(lti_controllability(a, Mat{{1.0}, {0.0}}).dim() == krylov_rank(a, Mat{{1.0}, {0.0}}));
  testsupport::Gen gen(33);
  for (int trial = 0; trial < 10; ++trial) {
    const auto d = gen.integer(2, 5);
    Mat a2 = gen.gaussian(d, d);
    if (trial % 2 == 0) a2.block(0, d / 2, d, d - d / 2).setZero();
    Mat h = Mat::Zero(d, 1);
    h(d - 1, 0) = 1.0;
    CHECK(lti_controllability(a2, h).dim() == krylov_rank(a2, h));
  }
}

TEST_CASE("gramian rank equals the controllable dimension") {
  const auto ce = gramian_mc(counter_example(), 2.0, 1e-2, 200, 5);
  CHECK(ce.numerical_rank() == 2);
  CHECK((ce.mean - ce.mean.transpose()).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(min_eigenvalue(symmetrize(ce.mean)) > -1e-10);
  CHECK(gramian_mc(doeblin_demo(), 2.0, 1e-2, 200, 5).numerical_rank() == 3);
  CHECK_THROWS_AS(gramian_mc(doeblin_demo(), 1.0, 1e-2, 1, 5), std::invalid_argument);
}

TEST_CASE("zero control: the dual cost is the variance of f(X_T)") {
  testsupport::Gen gen(34);
  for (int trial = 0; trial < 5; ++trial) {
    const auto model = gen.hmm(gen.integer(2, 4), 1);
    const Vec f = gen.gaussian(model.dim(), 1).col(0);
    const auto grid = TimeGrid::covering(1.5, 1e-2);
    const Mat u = Mat::Zero(1, grid.steps);
    const Mat y = dual_backward(model.rate, model.obs, u, f, grid);
    const Mat p = testsupport::uniformized_transition(model.rate, 1.5);
    CHECK((y.col(0) - p * f).cwiseAbs().maxCoeff() < 1e-12);

    const Vec mu_t = p.transpose() * model.prior;
    const double var = mu_t.dot(f.cwiseProduct(f)) - std::pow(mu_t.dot(f), 2);
    CHECK(dual_cost(model, u, f, grid) == doctest::Approx(var).epsilon(1e-8));
  }
}

TEST_CASE("LQ dual: closed-loop cost equals the Riccati value and beats perturbations") {
  testsupport::Gen gen(35);
  for (int trial = 0; trial < 5; ++trial) {
    const auto model = gen.hmm(3, 1);
    const Vec f = gen.gaussian(3, 1).col(0);
    const auto lq = dual_deterministic_markov(model, f, 1.0, 1e-3);
    CHECK(lq.cost == doctest::Approx(lq.value).epsilon(1e-8));
    const Mat u = lq.piecewise_control();
    const double j_opt = dual_cost(model, u, f, lq.grid);
    CHECK(j_opt == doctest::Approx(lq.value).epsilon(1e-5));
    for (int k = 0; k < 5; ++k) {
      Mat du(1, u.cols());
      const double freq = gen.uniform(0.5, 5.0), amp = gen.uniform(0.05, 0.5);
      for (Eigen::Index j = 0; j < u.cols(); ++j) du(0, j) = amp * std::cos(freq * lq.grid.t(j));
      CHECK(dual_cost(model, u + du, f, lq.grid) > j_opt);
    }
  }
  CHECK_THROWS_AS(dual_deterministic_markov(doeblin_demo(), Vec::Ones(2), 1.0), std::invalid_argument);
}

TEST_CASE("LQ dual for the linear-Gaussian model matches the filter covariance") {
  const auto model = scalar_lg();
  const auto lq = dual_lq_linear_gaussian(model, Vec{{2.0}}, 1.0, 1e-3);
  // Sigma_1 = tanh(1 + artanh(1)) = 1 from Sigma_0 = 1.
  CHECK(lq.value == doctest::Approx(4.0).epsilon(1e-10));
  CHECK(lq.cost == doctest::Approx(4.0).epsilon(1e-8));
  CHECK(lq.y.cols() == lq.grid.steps + 1);
}

TEST_CASE("duality identity with a shifted estimator constant") {
  testsupport::Gen gen(36);
  const auto model = gen.hmm(3, 1);
  const Vec f = gen.gaussian(3, 1).col(0);
  const auto grid = TimeGrid::covering(1.0, 1e-2);
  const Mat u = Mat::Constant(1, grid.steps, 0.3);
  const auto res = duality_check_mc(model, u, f, 1.0, 20000, 9, Execution::parallel, 0.5);
  CHECK(res.estimator_constant == 0.5);
  CHECK(std::abs(res.mse - res.predicted_mse) <= 4.0 * res.stderr_of_mse);
  CHECK(res.predicted_mse >= res.j_value);
  CHECK_THROWS_AS(dual_backward(model.rate, model.obs, Mat::Zero(2, grid.steps), f, grid), std::invalid_argument);
}

TEST_CASE("binary-tree oracle") {
  testsupport::Gen gen(37);
  for (int trial = 0; trial < 5; ++trial) {
    const auto model = gen.hmm(gen.integer(2, 3), 1);
    const Vec f = gen.gaussian(model.dim(), 1).col(0);
    const auto res = bsde_tree_oracle(model, f, 1.0, 5);
    CHECK(res.max_residual < 1e-10);
    CHECK(res.estimator_cost == doctest::Approx(res.optimal_cost).epsilon(1e-10));
    CHECK(res.leaves == 32);
  }
  auto blind = doeblin_demo();
  blind.obs.setZero();
  const auto res = bsde_tree_oracle(blind, Vec{{1.0, 2.0, 3.0}}, 1.0, 4);
  const Vec expected = testsupport::uniformized_transition(blind.rate, 1.0).transpose() * blind.prior;
  CHECK((res.leaf_posterior_all_plus - expected).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(res.max_abs_control < 1e-12);

  CHECK_THROWS_AS(bsde_tree_oracle(doeblin_demo(), Vec::Ones(3), 1.0, 13), std::invalid_argument);
  auto loud = doeblin_demo();
  loud.obs *= 10.0;
  CHECK_THROWS_AS(bsde_tree_oracle(loud, Vec::Ones(3), 1.0, 4), std::invalid_argument);
  HmmModel two_obs{doeblin_demo().rate, Mat::Zero(3, 2), doeblin_demo().prior};
  CHECK_THROWS_AS(bsde_tree_oracle(two_obs, Vec::Ones(3), 1.0, 4), std::invalid_argument);
}

#include <doctest.h>

#include <omp.h>

#include <stdexcept>

#include "dualfilter/catalog.hpp"
#include "dualfilter/duality.hpp"
#include "dualfilter/parallel.hpp"
#include "dualfilter/stability.hpp"
#include "test_support.hpp"

using namespace dualfilter;

namespace {

struct Threads {
  explicit Threads(int n) : saved(omp_get_max_threads()) { omp_set_num_threads(n); }
  ~Threads() { omp_set_num_threads(saved); }
  int saved;
};

}  // namespace

TEST_CASE("moment accumulator") {
  testsupport::Gen gen(61);
  MomentAccumulator all(2, 3), left(2, 3), right(2, 3);
  std::vector<Mat> samples;
  for (int i = 0; i < 50; ++i) samples.push_back(gen.gaussian(2, 3));
  for (int i = 0; i < 50; ++i) {
    all.add(samples[static_cast<std::size_t>(i)]);
    (i < 20 ? left : right).add(samples[static_cast<std::size_t>(i)]);
  }
  left.merge(right);
  CHECK(left.count() == 50);
  CHECK((left.mean() - all.mean()).cwiseAbs().maxCoeff() < 1e-14);

  Mat mean = Mat::Zero(2, 3);
  for (const auto& s : samples) mean += s;
  mean /= 50.0;
  Mat var = Mat::Zero(2, 3);
  for (const auto& s : samples) var += (s - mean).cwiseProduct(s - mean);
  var /= 49.0;
  CHECK((all.stderr_of_mean() - (var / 50.0).cwiseSqrt()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("reduce_paths visits every path once and rethrows errors") {
  Threads t(4);
  auto acc = reduce_paths(1000, Execution::parallel, MomentAccumulator(1, 1), [](long p, MomentAccumulator& a) {
    a.add(Mat::Constant(1, 1, static_cast<double>(p)));
  });
  CHECK(acc.count() == 1000);
  CHECK(acc.mean()(0, 0) == doctest::Approx(499.5));
  CHECK_THROWS_AS(reduce_paths(300, Execution::parallel, MomentAccumulator(1, 1),
                               [](long p, MomentAccumulator&) {
                                 if (p == 257) throw NumericalFailure("boom", p);
                               }),
                  NumericalFailure);
}

TEST_CASE("serial and parallel Monte-Carlo results are bitwise identical") {
  Threads t(4);
  const auto model = doeblin_demo();

  const auto gs = gramian_mc(model, 1.0, 1e-2, 150, 3, Execution::serial);
  const auto gp = gramian_mc(model, 1.0, 1e-2, 150, 3, Execution::parallel);
  CHECK(gs.mean == gp.mean);
  CHECK(gs.stderr_of_mean == gp.stderr_of_mean);

  const auto priors = PriorPair::make(Vec{{0.6, 0.3, 0.1}}, Vec::Constant(3, 1.0 / 3.0));
  TwinOptions o;
  o.horizon = 1.0;
  o.dt = 1e-2;
  o.n_paths = 150;
  o.seed = 4;
  o.records = 10;
  o.exec = Execution::serial;
  const auto ts = twin_filter_experiment(model, priors, o);
  o.exec = Execution::parallel;
  const auto tp = twin_filter_experiment(model, priors, o);
  CHECK(ts.mean == tp.mean);
  CHECK(ts.stderr_of_mean == tp.stderr_of_mean);
  CHECK(ts.max_density_ratio == tp.max_density_ratio);

  const auto grid = TimeGrid::covering(1.0, 1e-2);
  const Mat u = Mat::Constant(1, grid.steps, 0.2);
  const Vec f{{1.0, -1.0, 0.5}};
  const auto ds = duality_check_mc(model, u, f, 1.0, 150, 5, Execution::serial);
  const auto dp = duality_check_mc(model, u, f, 1.0, 150, 5, Execution::parallel);
  CHECK(ds.mse == dp.mse);
  CHECK(ds.stderr_of_mse == dp.stderr_of_mse);

  const auto two = two_class_demo();
  TwinOptions oc = o;
  oc.exec = Execution::serial;
  const auto cs = ergodic_class_detection(two, PriorPair::make(two.prior, two.prior), oc);
  oc.exec = Execution::parallel;
  const auto cp = ergodic_class_detection(two, PriorPair::make(two.prior, two.prior), oc);
  CHECK(cs.detection_error == cp.detection_error);
}

#include <chrono>
#include <cstdio>
#include <functional>

#include <omp.h>

#include "dualfilter/catalog.hpp"
#include "dualfilter/duality.hpp"
#include "dualfilter/stability.hpp"

namespace df = dualfilter;

namespace {

double seconds(const std::function<void()>& fn) {
  const auto t0 = std::chrono::steady_clock::now();
  fn();
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void compare(const char* name, const std::function<double(df::Execution)>& kernel) {
  double serial_value = 0.0, parallel_value = 0.0;
  const double ts = seconds([&] { serial_value = kernel(df::Execution::serial); });
  const double tp = seconds([&] { parallel_value = kernel(df::Execution::parallel); });
  std::printf("%-22s serial %8.3f s  parallel %8.3f s  speedup %5.2fx  identical %s\n", name, ts, tp, ts / tp,
              serial_value == parallel_value ? "yes" : "no");
}

}  // namespace

int main() {
  std::printf("threads: %d\n", omp_get_max_threads());
  const auto counter = df::counter_example();
  compare("gramian_mc", [&](df::Execution exec) {
    return df::gramian_mc(counter, 5.0, 1e-3, 400, 11, exec).mean.sum();
  });

  const auto doeblin = df::doeblin_demo();
  const auto priors = df::PriorPair::make(df::Vec{{0.6, 0.3, 0.1}}, df::Vec::Constant(3, 1.0 / 3.0));
  compare("twin_filter_experiment", [&](df::Execution exec) {
    df::TwinOptions o;
    o.horizon = 5.0;
    o.dt = 1e-3;
    o.n_paths = 1000;
    o.seed = 5;
    o.exec = exec;
    return df::twin_filter_experiment(doeblin, priors, o).mean.sum();
  });

  compare("duality_check_mc", [&](df::Execution exec) {
    const df::Vec f = df::Vec::Unit(3, 0);
    const auto lq = df::dual_deterministic_markov(doeblin, f, 2.0, 1e-3);
    return df::duality_check_mc(doeblin, lq.piecewise_control(), f, 2.0, 2000, 3, exec).mse;
  });
  return 0;
}

#pragma once

#include <algorithm>
#include <cmath>
#include <exception>
#include <vector>

#include <omp.h>

#include "dualfilter/linalg.hpp"

namespace dualfilter {

enum class Execution { serial, parallel };

/// Running sums for Monte-Carlo means over a fixed-shape array of metrics.
/// Merging is associative, so block partial sums can be combined in any
/// grouping; we always combine them in block order.
class MomentAccumulator {
 public:
  MomentAccumulator() = default;
  MomentAccumulator(Eigen::Index rows, Eigen::Index cols)
      : sum_(Mat::Zero(rows, cols)), sumsq_(Mat::Zero(rows, cols)) {}

  void add(const Mat& sample) {
    sum_ += sample;
    sumsq_ += sample.cwiseProduct(sample);
    ++count_;
  }

  void merge(const MomentAccumulator& other) {
    sum_ += other.sum_;
    sumsq_ += other.sumsq_;
    count_ += other.count_;
  }

  long count() const { return count_; }
  Mat mean() const { return sum_ / static_cast<double>(count_); }

  /// Standard error of the mean (sample variance with n-1).
  Mat stderr_of_mean() const {
    const double n = static_cast<double>(count_);
    Mat var = (sumsq_ - sum_.cwiseProduct(sum_) / n) / std::max(n - 1.0, 1.0);
    return (var.cwiseMax(0.0) / n).cwiseSqrt();
  }

 private:
  Mat sum_;
  Mat sumsq_;
  long count_ = 0;
};

inline constexpr long kPathBlock = 64;

/// Runs `body(path_index, acc)` for every path and reduces the per-block
/// accumulators in block order. Block boundaries do not depend on the thread
/// count, so serial and parallel runs are bitwise identical.
template <class Acc, class Body>
Acc reduce_paths(long n_paths, Execution exec, const Acc& zero, Body&& body) {
  const long n_blocks = (n_paths + kPathBlock - 1) / kPathBlock;
  std::vector<Acc> partial(static_cast<std::size_t>(n_blocks), zero);
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n_blocks));

  auto run_block = [&](long b) {
    try {
      Acc& acc = partial[static_cast<std::size_t>(b)];
      const long end = std::min(n_paths, (b + 1) * kPathBlock);
      for (long p = b * kPathBlock; p < end; ++p) body(p, acc);
    } catch (...) {
      errors[static_cast<std::size_t>(b)] = std::current_exception();
    }
  };

  if (exec == Execution::parallel) {
#pragma omp parallel for schedule(dynamic, 1)
    for (long b = 0; b < n_blocks; ++b) run_block(b);
  } else {
    for (long b = 0; b < n_blocks; ++b) run_block(b);
  }

  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  Acc total = zero;
  for (const Acc& acc : partial) total.merge(acc);
  return total;
}

}  // namespace dualfilter

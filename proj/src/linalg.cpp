#include "dualfilter/linalg.hpp"

#include <unsupported/Eigen/MatrixFunctions>

namespace dualfilter {

Mat expm(const Mat& m) { return m.exp(); }

Mat expm_integral(const Mat& m, double t) {
  const auto d = m.rows();
  Mat aug = Mat::Zero(2 * d, 2 * d);
  aug.topLeftCorner(d, d) = m * t;
  aug.topRightCorner(d, d) = Mat::Identity(d, d) * t;
  return Mat(aug.exp()).topRightCorner(d, d);
}

Mat orthonormal_range(const Mat& cols, double rel_tol) {
  if (cols.cols() == 0) return Mat(cols.rows(), 0);
  Eigen::JacobiSVD<Mat> svd(cols, Eigen::ComputeThinU);
  const Vec& s = svd.singularValues();
  if (s.size() == 0 || s(0) <= 0.0) return Mat(cols.rows(), 0);
  Eigen::Index rank = 0;
  while (rank < s.size() && s(rank) > rel_tol * s(0)) ++rank;
  return svd.matrixU().leftCols(rank);
}

Mat null_space(const Mat& a, double rel_tol) {
  const auto n = a.cols();
  Eigen::JacobiSVD<Mat> svd(a, Eigen::ComputeFullV);
  const Vec& s = svd.singularValues();
  Eigen::Index rank = 0;
  if (s.size() > 0 && s(0) > 0.0) {
    while (rank < s.size() && s(rank) > rel_tol * s(0)) ++rank;
  }
  return svd.matrixV().rightCols(n - rank);
}

double min_eigenvalue(const Mat& symmetric) {
  Eigen::SelfAdjointEigenSolver<Mat> es(symmetric, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

double projection_residual(const Mat& basis, const Vec& v) {
  if (basis.cols() == 0) return v.norm();
  return (v - basis * (basis.transpose() * v)).norm();
}

}  // namespace dualfilter

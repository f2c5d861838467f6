#pragma once

#include <Eigen/Dense>

namespace dualfilter {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

Mat expm(const Mat& m);

/// Top-right block of exp([[M, I], [0, 0]] t), i.e. the integral of exp(M s) over [0, t].
Mat expm_integral(const Mat& m, double t);

/// Orthonormal basis of the column span; singular values below
/// rel_tol * (largest singular value) are dropped. Returns d x 0 for a zero span.
Mat orthonormal_range(const Mat& cols, double rel_tol);

/// Orthonormal basis of the right null space, same cutoff convention.
Mat null_space(const Mat& a, double rel_tol);

inline Mat symmetrize(const Mat& m) { return 0.5 * (m + m.transpose()); }

double min_eigenvalue(const Mat& symmetric);

/// Euclidean norm of the component of v orthogonal to the (orthonormal) basis.
double projection_residual(const Mat& orthonormal_basis, const Vec& v);

}  // namespace dualfilter

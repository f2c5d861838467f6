#include "dualfilter/models.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>
#include <stdexcept>

namespace dualfilter {

namespace {

void check_finite(const Mat& m, const std::string& field, ValidationReport& out) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    if (!m.row(i).allFinite()) out.push_back({field, static_cast<long>(i), "non-finite entry in row"});
  }
}

}  // namespace

ValidationReport validate_rate(const Mat& rate) {
  ValidationReport out;
  if (rate.rows() != rate.cols()) {
    out.push_back({"rate", -1, "rate matrix is not square"});
    return out;
  }
  if (rate.rows() < 2) out.push_back({"rate", -1, "state space needs at least 2 states"});
  check_finite(rate, "rate", out);
  for (Eigen::Index i = 0; i < rate.rows(); ++i) {
    for (Eigen::Index j = 0; j < rate.cols(); ++j) {
      if (i != j && rate(i, j) < 0.0) {
        std::ostringstream msg;
        msg << "negative off-diagonal rate at column " << j;
        out.push_back({"rate", static_cast<long>(i), msg.str()});
      }
    }
    const double row_sum = rate.row(i).sum();
    if (std::abs(row_sum) > kRowSumTol) {
      std::ostringstream msg;
      msg << "row sum " << row_sum << " is not zero";
      out.push_back({"rate", static_cast<long>(i), msg.str()});
    }
  }
  return out;
}

ValidationReport validate_simplex(const Vec& p, const std::string& field) {
  ValidationReport out;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (!std::isfinite(p(i))) out.push_back({field, static_cast<long>(i), "non-finite entry"});
    else if (p(i) < 0.0) out.push_back({field, static_cast<long>(i), "negative entry"});
  }
  if (std::abs(p.sum() - 1.0) > kSimplexTol) {
    std::ostringstream msg;
    msg << "entries sum to " << p.sum() << ", not 1";
    out.push_back({field, -1, msg.str()});
  }
  return out;
}

ValidationReport validate(const HmmModel& model) {
  ValidationReport out = validate_rate(model.rate);
  const auto d = model.rate.rows();
  if (model.obs.rows() != d) out.push_back({"obs", -1, "obs must have one row per state"});
  if (model.obs.cols() < 1) out.push_back({"obs", -1, "obs needs at least one column"});
  check_finite(model.obs, "obs", out);
  if (model.prior.size() != d) out.push_back({"prior", -1, "prior length differs from state count"});
  auto simplex = validate_simplex(model.prior, "prior");
  out.insert(out.end(), simplex.begin(), simplex.end());
  return out;
}

ValidationReport validate(const LinearGaussianModel& model) {
  ValidationReport out;
  const auto d = model.a_mat.rows();
  if (model.a_mat.cols() != d) out.push_back({"a_mat", -1, "a_mat is not square"});
  if (model.h_mat.rows() != d) out.push_back({"h_mat", -1, "h_mat must have d rows"});
  if (model.sigma.rows() != d) out.push_back({"sigma", -1, "sigma must have d rows"});
  if (model.mean0.size() != d) out.push_back({"mean0", -1, "mean0 must have length d"});
  if (model.cov0.rows() != d || model.cov0.cols() != d) {
    out.push_back({"cov0", -1, "cov0 must be d x d"});
    return out;
  }
  check_finite(model.a_mat, "a_mat", out);
  check_finite(model.h_mat, "h_mat", out);
  check_finite(model.sigma, "sigma", out);
  check_finite(model.cov0, "cov0", out);
  if (!model.mean0.allFinite()) out.push_back({"mean0", -1, "non-finite entry"});
  const double asym = (model.cov0 - model.cov0.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-12) out.push_back({"cov0", -1, "cov0 is not symmetric"});
  else if (model.cov0.allFinite() && min_eigenvalue(model.cov0) < -1e-10) {
    out.push_back({"cov0", -1, "cov0 is not positive semidefinite"});
  }
  return out;
}

std::string format_report(const ValidationReport& report) {
  std::ostringstream os;
  for (const auto& v : report) {
    os << v.field;
    if (v.index >= 0) os << "[" << v.index << "]";
    os << ": " << v.message << "\n";
  }
  return os.str();
}

void require_valid(const HmmModel& model) {
  auto r = validate(model);
  if (!r.empty()) throw std::invalid_argument("invalid HMM model:\n" + format_report(r));
}

void require_valid(const LinearGaussianModel& model) {
  auto r = validate(model);
  if (!r.empty()) throw std::invalid_argument("invalid linear-Gaussian model:\n" + format_report(r));
}

Vec carre_du_champ(const Mat& rate, const Vec& f) {
  if (rate.rows() != rate.cols() || f.size() != rate.rows()) {
    throw std::invalid_argument("carre_du_champ: dimension mismatch");
  }
  const auto d = rate.rows();
  Vec out = Vec::Zero(d);
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) {
      const double diff = f(i) - f(j);
      out(i) += rate(i, j) * diff * diff;
    }
  }
  return out;
}

Mat q_matrix(const Mat& rate, Eigen::Index i) {
  const auto d = rate.rows();
  Mat q = Mat::Zero(d, d);
  for (Eigen::Index j = 0; j < d; ++j) {
    if (j == i) continue;
    const double a = rate(i, j);
    q(i, i) += a;
    q(j, j) += a;
    q(i, j) -= a;
    q(j, i) -= a;
  }
  return q;
}

Mat expected_q(const Mat& rate, const Vec& rho) {
  const auto d = rate.rows();
  Mat q = Mat::Zero(d, d);
  for (Eigen::Index i = 0; i < d; ++i) {
    if (rho(i) != 0.0) q += rho(i) * q_matrix(rate, i);
  }
  return q;
}

ClassDecomposition ergodic_classes(const Mat& rate) {
  const int d = static_cast<int>(rate.rows());
  auto edge = [&](int i, int j) { return i != j && rate(i, j) > kEdgeThreshold; };

  // Tarjan's strongly connected components.
  std::vector<int> index(d, -1), low(d, 0), comp(d, -1), stack;
  std::vector<bool> on_stack(d, false);
  int counter = 0, n_comp = 0;
  std::function<void(int)> visit = [&](int v) {
    index[v] = low[v] = counter++;
    stack.push_back(v);
    on_stack[v] = true;
    for (int w = 0; w < d; ++w) {
      if (!edge(v, w)) continue;
      if (index[w] < 0) {
        visit(w);
        low[v] = std::min(low[v], low[w]);
      } else if (on_stack[w]) {
        low[v] = std::min(low[v], index[w]);
      }
    }
    if (low[v] == index[v]) {
      int w;
      do {
        w = stack.back();
        stack.pop_back();
        on_stack[w] = false;
        comp[w] = n_comp;
      } while (w != v);
      ++n_comp;
    }
  };
  for (int v = 0; v < d; ++v) {
    if (index[v] < 0) visit(v);
  }

  std::vector<std::vector<int>> members(n_comp);
  for (int v = 0; v < d; ++v) members[comp[v]].push_back(v);
  std::vector<bool> closed(n_comp, true);
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < d; ++j) {
      if (edge(i, j) && comp[i] != comp[j]) closed[comp[i]] = false;
    }
  }

  ClassDecomposition out;
  for (int c = 0; c < n_comp; ++c) {
    if (closed[c]) out.classes.push_back(members[c]);
    else out.transient.insert(out.transient.end(), members[c].begin(), members[c].end());
  }
  std::sort(out.classes.begin(), out.classes.end());
  std::sort(out.transient.begin(), out.transient.end());
  return out;
}

Vec invariant_measure(const Mat& rate, const std::vector<int>& cls) {
  const auto d = rate.rows();
  if (cls.empty()) throw std::invalid_argument("invariant_measure: empty class");
  std::vector<bool> in(static_cast<std::size_t>(d), false);
  for (int i : cls) {
    if (i < 0 || i >= d) throw std::invalid_argument("invariant_measure: state index out of range");
    in[static_cast<std::size_t>(i)] = true;
  }
  for (int i : cls) {
    for (Eigen::Index j = 0; j < d; ++j) {
      if (!in[static_cast<std::size_t>(j)] && j != i && rate(i, j) > kEdgeThreshold) {
        throw std::invalid_argument("invariant_measure: class is not closed (state " +
                                    std::to_string(i) + " leaks to " + std::to_string(j) + ")");
      }
    }
  }

  const auto k = static_cast<Eigen::Index>(cls.size());
  Mat sub(k, k);
  for (Eigen::Index a = 0; a < k; ++a)
    for (Eigen::Index b = 0; b < k; ++b) sub(a, b) = rate(cls[a], cls[b]);

  // [A_C^T; 1^T] x = [0; 1] in the least-squares sense.
  Mat lhs(k + 1, k);
  lhs.topRows(k) = sub.transpose();
  lhs.row(k).setOnes();
  Vec rhs = Vec::Zero(k + 1);
  rhs(k) = 1.0;
  Vec x = lhs.colPivHouseholderQr().solve(rhs);
  x = x.cwiseMax(0.0);
  x /= x.sum();

  Vec out = Vec::Zero(d);
  for (Eigen::Index a = 0; a < k; ++a) out(cls[a]) = x(a);
  return out;
}

Vec indicator(Eigen::Index dim, const std::vector<int>& states) {
  Vec out = Vec::Zero(dim);
  for (int s : states) out(s) = 1.0;
  return out;
}

}  // namespace dualfilter

// Copyright (c) mpcc_opt contributors
#include "mpcc/ldlt.hpp"

#include <algorithm>
#include <cmath>

namespace mpcc::linalg {

ProfileMatrix::ProfileMatrix(std::vector<int> first_col) : first_(std::move(first_col)) {
  n_ = static_cast<int>(first_.size());
  row_start_.resize(n_ + 1, 0);
  for (int r = 0; r < n_; ++r) {
    row_start_[r + 1] = row_start_[r] + static_cast<std::size_t>(r - first_[r] + 1);
  }
  a_.assign(row_start_[n_], 0.0);
}

void ProfileMatrix::zero() { std::fill(a_.begin(), a_.end(), 0.0); }

void ProfileMatrix::multiply(const double* x, double* y) const {
  for (int r = 0; r < n_; ++r) y[r] = 0.0;
  for (int r = 0; r < n_; ++r) {
    const double* row = a_.data() + row_start_[r];
    const int fc = first_[r];
    double acc = 0.0;
    for (int c = fc; c < r; ++c) {
      acc += row[c - fc] * x[c];
      y[c] += row[c - fc] * x[r];
    }
    y[r] += acc + row[r - fc] * x[r];
  }
}

Inertia ldlt_factor(ProfileMatrix& m, double pivot_tol) {
  Inertia res;
  const int n = m.dim();

  std::vector<std::size_t>& row_start = m.row_start_;
  std::vector<double>& a = m.a_;
  const std::vector<int>& first = m.first_;

  // Per-row pivot floor from the original entries. Interior-point systems
  // legitimately carry pivots many orders apart (barrier terms vs slack
  // blocks), so a global scale would reject healthy rows; a row-local scale
  // still catches cancellations and structurally empty rows.
  std::vector<double> row_scale(n, 0.0);
  for (int r = 0; r < n; ++r) {
    const int fr = first[r];
    for (int c = fr; c <= r; ++c) {
      const double v = std::abs(a[row_start[r] + static_cast<std::size_t>(c - fr)]);
      row_scale[r] = std::max(row_scale[r], v);
      if (c < r) row_scale[c] = std::max(row_scale[c], v);
    }
  }

  for (int i = 0; i < n; ++i) {
    const int fi = first[i];
    double* rowi = a.data() + row_start[i];
    // L(i, j) for j in [fi, i)
    for (int j = fi; j < i; ++j) {
      const int fj = first[j];
      const double* rowj = a.data() + row_start[j];
      const int lo = std::max(fi, fj);
      double s = rowi[j - fi];
      for (int k = lo; k < j; ++k) {
        s -= rowi[k - fi] * a[row_start[k] + static_cast<std::size_t>(k - first[k])] *
             rowj[k - fj];
      }
      rowi[j - fi] = s / a[row_start[j] + static_cast<std::size_t>(j - first[j])];
    }
    // D(i)
    double d = rowi[i - fi];
    for (int k = fi; k < i; ++k) {
      const double lik = rowi[k - fi];
      d -= lik * lik * a[row_start[k] + static_cast<std::size_t>(k - first[k])];
    }
    rowi[i - fi] = d;
    if (!(std::abs(d) > pivot_tol * row_scale[i]) || !std::isfinite(d)) {
      res.zero += 1;
      res.ok = false;
      return res;
    }
    if (d > 0.0) {
      ++res.positive;
    } else {
      ++res.negative;
    }
  }
  res.ok = true;
  return res;
}

void ldlt_solve(const ProfileMatrix& factored, double* b) {
  const int n = factored.dim();
  // forward: L y = b
  for (int i = 0; i < n; ++i) {
    const int fi = factored.first_col(i);
    double acc = b[i];
    for (int k = fi; k < i; ++k) acc -= factored.at(i, k) * b[k];
    b[i] = acc;
  }
  // diagonal
  for (int i = 0; i < n; ++i) b[i] /= factored.at(i, i);
  // backward: L^T x = y
  for (int i = n - 1; i >= 0; --i) {
    const int fi = factored.first_col(i);
    const double bi = b[i];
    for (int k = fi; k < i; ++k) b[k] -= factored.at(i, k) * bi;
  }
}

}  // namespace mpcc::linalg

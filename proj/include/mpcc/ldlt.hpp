// Copyright (c) mpcc_opt contributors
#pragma once

#include <cstddef>
#include <vector>

namespace mpcc::linalg {

class ProfileMatrix;

struct Inertia {
  int positive = 0;
  int negative = 0;
  int zero = 0;
  bool ok = false;  // factorization completed without a degenerate pivot
};

Inertia ldlt_factor(ProfileMatrix& m, double pivot_tol);

/// Symmetric matrix in skyline (profile) storage: row r holds columns
/// [first_col(r), r]. With the transcription's element-interleaved ordering
/// the KKT profile stays narrow; a dense lower triangle is the special case
/// first_col == 0.
class ProfileMatrix {
 public:
  ProfileMatrix() = default;
  explicit ProfileMatrix(std::vector<int> first_col);

  int dim() const { return n_; }
  int first_col(int r) const { return first_[r]; }

  void zero();
  std::size_t offset(int r, int c) const {  // r >= c >= first_col(r)
    return row_start_[r] + static_cast<std::size_t>(c - first_[r]);
  }
  double& at(int r, int c) { return a_[offset(r, c)]; }
  double at(int r, int c) const { return a_[offset(r, c)]; }
  double& flat(std::size_t off) { return a_[off]; }

  /// y = A x for the full symmetric matrix.
  void multiply(const double* x, double* y) const;

  std::size_t stored() const { return a_.size(); }

 private:
  friend Inertia ldlt_factor(ProfileMatrix&, double);
  int n_ = 0;
  std::vector<int> first_;
  std::vector<std::size_t> row_start_;
  std::vector<double> a_;
};

/// In-place LDLᵀ without pivoting (the ordering is the pivot strategy; the
/// caller regularizes and retries when the inertia is wrong or a pivot
/// degenerates). D lands on the diagonal, unit L below it.
inline Inertia ldlt_factor(ProfileMatrix& m) { return ldlt_factor(m, 1e-12); }

/// Solves A x = b in place given the factored matrix.
void ldlt_solve(const ProfileMatrix& factored, double* b);

}  // namespace mpcc::linalg

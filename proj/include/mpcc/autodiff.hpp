// Copyright (c) mpcc_opt contributors
#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "mpcc/errors.hpp"

namespace mpcc::ad {

enum class Op : std::uint8_t {
  kInput,
  kConst,
  kAdd,
  kSub,
  kMul,
  kDiv,
  kNeg,
  kSin,
  kCos,
  kTan,
  kExp,
  kLog,
  kSqrt,
  kPow,  // operand ^ aux
};

struct Node {
  Op op;
  std::int32_t a = -1;
  std::int32_t b = -1;
  double aux = 0.0;  // constant value (kConst), exponent (kPow)
};

/// Scalar that records itself onto the active tape. Outside of a record()
/// call a Var behaves like a plain double, so the same expression code can
/// be evaluated directly or taped.
struct Var {
  double value = 0.0;
  std::int32_t node = -1;  // -1: constant, not (yet) on the tape

  Var() = default;
  Var(double v) : value(v) {}  // NOLINT: implicit by design, mixes with double

  Var& operator+=(const Var& r);
  Var& operator-=(const Var& r);
  Var& operator*=(const Var& r);
  Var& operator/=(const Var& r);
};

Var operator+(const Var& x, const Var& y);
Var operator-(const Var& x, const Var& y);
Var operator*(const Var& x, const Var& y);
Var operator/(const Var& x, const Var& y);
Var operator-(const Var& x);
Var operator+(const Var& x);
Var sin(const Var& x);
Var cos(const Var& x);
Var tan(const Var& x);
Var exp(const Var& x);
Var log(const Var& x);
Var sqrt(const Var& x);
Var pow(const Var& x, double e);
Var pow(const Var& x, int e);

// Smooth replacements for min/max/abs; branch-free so they can be taped.
Var smooth_max(const Var& a, const Var& b, double eps = 1e-8);
Var smooth_min(const Var& a, const Var& b, double eps = 1e-8);
Var smooth_abs(const Var& a, double eps = 1e-8);

// Branching on a traced value cannot be recorded; comparisons throw
// RecordingError while a tape is active. Compare .value explicitly when a
// value-level comparison is intended.
bool operator<(const Var& x, const Var& y);
bool operator<=(const Var& x, const Var& y);
bool operator>(const Var& x, const Var& y);
bool operator>=(const Var& x, const Var& y);
bool operator==(const Var& x, const Var& y);
bool operator!=(const Var& x, const Var& y);

/// Row-major sorted list of structurally nonzero (row, col) entries.
struct SparsityPattern {
  int rows = 0;
  int cols = 0;
  std::vector<std::pair<int, int>> entries;

  std::size_t size() const { return entries.size(); }
};

/// Values aligned with a pattern's entry order.
struct SparseMatrix {
  SparsityPattern pattern;
  std::vector<double> values;

  double at(int r, int c) const;                  // 0.0 outside the pattern
  std::vector<double> dense_row_major() const;    // rows*cols buffer
};

/// Recorded computation graph. Immutable once built; concurrent replays are
/// allowed as long as each caller brings its own Workspace.
class Tape {
 public:
  /// Scratch buffers for one evaluation thread.
  struct Scratch {
    std::vector<double> sparse_a;       // stamped sparse accumulator
    std::vector<std::uint64_t> stamp_a;
    std::vector<double> sparse_b;
    std::vector<std::uint64_t> stamp_b;
    std::uint64_t epoch_a = 0;
    std::uint64_t epoch_b = 0;
  };
  struct Workspace {
    std::vector<double> val;  // forward values per node
    std::vector<double> adj;  // dense adjoints
    std::vector<Scratch> per_thread;
  };

  Tape() = default;

  int num_inputs() const { return n_in_; }
  int num_outputs() const { return static_cast<int>(outputs_.size()); }
  std::size_t num_nodes() const { return nodes_.size(); }

  Workspace make_workspace() const;

  /// Replays the tape; identical operation order to the recording pass, so
  /// arithmetic-only functions reproduce direct evaluation bit for bit.
  void forward(std::span<const double> x, std::span<double> out, Workspace& ws) const;
  std::vector<double> forward(std::span<const double> x) const;

  /// Reverse sweep for a single output (requires num_outputs() == 1).
  void gradient(std::span<const double> x, std::span<double> grad, Workspace& ws) const;
  std::vector<double> gradient(std::span<const double> x) const;

  /// Reverse sweep of the weighted output sum Σ w_k out_k.
  void gradient_weighted(std::span<const double> x, std::span<const double> w,
                         std::span<double> grad, Workspace& ws) const;

  const SparsityPattern& jacobian_sparsity() const { return jac_pattern_; }

  /// Jacobian values aligned with jacobian_sparsity(). Rows are independent;
  /// with threads > 1 they are computed in an OpenMP loop. Results do not
  /// depend on the thread count (each row writes only its own slots).
  void jacobian_values(std::span<const double> x, std::span<double> values,
                       Workspace& ws, int threads = 1) const;

  /// Lower triangle of ∇² Σ w_k out_k.
  const SparsityPattern& hessian_sparsity() const { return hess_pattern_; }
  void hessian_values(std::span<const double> x, std::span<const double> out_weights,
                      std::span<double> values, Workspace& ws, int threads = 1) const;

  /// Outputs observed while recording; replaying at the recording point
  /// reproduces them exactly.
  const std::vector<double>& recorded_outputs() const { return recorded_outputs_; }
  const std::vector<double>& recording_point() const { return recording_point_; }

  const std::vector<Node>& nodes() const { return nodes_; }

 private:
  friend Tape record(int, const std::function<std::vector<Var>(std::span<const Var>)>&,
                     std::span<const double>);

  void build_structure();
  void forward_values(std::span<const double> x, std::vector<double>& val) const;
  void jacobian_row(int row, const std::vector<double>& val, Scratch& scr,
                    std::span<double> values) const;
  void hessian_column(int col, const std::vector<double>& val, const std::vector<double>& adj,
                      Scratch& scr, std::span<double> values) const;

  int n_in_ = 0;
  std::vector<Node> nodes_;
  std::vector<std::int32_t> outputs_;
  std::vector<double> recorded_outputs_;
  std::vector<double> recording_point_;

  SparsityPattern jac_pattern_;
  SparsityPattern hess_pattern_;

  // Per-output backward cones (descending node ids) and row value ranges.
  std::vector<std::int32_t> row_cone_data_;
  std::vector<std::int32_t> row_cone_offset_;
  std::vector<std::int32_t> jac_row_offset_;  // into jac_pattern_ entries

  // Per-input forward cones (ascending) and reverse-tangent node sets
  // (descending), used by the Hessian columns.
  std::vector<std::int32_t> fwd_cone_data_;
  std::vector<std::int32_t> fwd_cone_offset_;
  std::vector<std::int32_t> rev_set_data_;
  std::vector<std::int32_t> rev_set_offset_;
  std::vector<std::int32_t> hess_col_entry_;   // value index per column entry
  std::vector<std::int32_t> hess_col_row_;     // row per column entry
  std::vector<std::int32_t> hess_col_offset_;  // per column, into the two above
};

/// Records fn (built from the supported primitives) into a tape with n_in
/// inputs. The recording point defaults to the origin; structure does not
/// depend on it.
Tape record(int n_in, const std::function<std::vector<Var>(std::span<const Var>)>& fn,
            std::span<const double> point = {});

// Free-function forms of the tape queries.
std::vector<double> gradient(const Tape& tape, std::span<const double> point);
SparseMatrix jacobian(const Tape& tape, std::span<const double> point);
SparsityPattern sparsity(const Tape& tape);

/// Lower triangle of ∇²(obj_weight·f + λᵀc) for an objective tape f and a
/// constraint tape c over the same inputs.
SparseMatrix hessian_lagrangian(const Tape& obj_tape, const Tape& con_tape,
                                std::span<const double> point, double obj_weight,
                                std::span<const double> multipliers);

/// Central finite differences; the step is applied per coordinate. Debugging
/// fallback and test oracle for the taped derivatives.
std::vector<double> fd_gradient(const Tape& tape, std::span<const double> x, double step);
std::vector<double> fd_jacobian(const Tape& tape, std::span<const double> x,
                                double step);  // row-major n_out × n_in

namespace reference {

// Plain full-sweep implementations kept as the serial reference for the
// cone-restricted kernels above. Row-major dense buffers.
std::vector<double> jacobian_dense(const Tape& tape, std::span<const double> x);
std::vector<double> hessian_dense(const Tape& tape, std::span<const double> x,
                                  std::span<const double> out_weights);

}  // namespace reference

}  // namespace mpcc::ad

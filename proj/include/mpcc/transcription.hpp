// Copyright (c) mpcc_opt contributors
#pragma once

#include <Eigen/Core>
#include <utility>
#include <vector>

#include "mpcc/autodiff.hpp"
#include "mpcc/ocp.hpp"

namespace mpcc {

/// How the transcribed complementarity products are handed to the solver:
/// per-pair or per-element-aggregated inequalities `term <= delta` with a
/// fixed or barrier-linked delta, or a penalty added to the objective.
struct RelaxationMode {
  enum class Kind {
    kPerPairFixed,
    kAggregatedFixed,
    kPerPairBarrier,
    kAggregatedBarrier,
    kPenaltyObjective,
  };

  Kind kind = Kind::kPerPairBarrier;
  double delta = 1e-6;  // fixed modes
  double rho = 1.0;     // penalty mode

  bool barrier_linked() const {
    return kind == Kind::kPerPairBarrier || kind == Kind::kAggregatedBarrier;
  }
  bool aggregated() const {
    return kind == Kind::kAggregatedFixed || kind == Kind::kAggregatedBarrier;
  }
  bool penalty() const { return kind == Kind::kPenaltyObjective; }
};

/// +1 when both selected bounds are lower or both upper, -1 otherwise; the
/// sign that makes the bound-gap product nonnegative inside the bounds.
int alpha_sign(BoundSide side_a, BoundSide side_b);

/// Signed bound-gap product of one pair; the same expression the tapes
/// record, so direct evaluation matches tape replay bit for bit.
template <class T>
T complementarity_product(const T& gap_a, const T& gap_b, double alpha) {
  return alpha * (gap_a * gap_b);
}

/// Per-pair products alpha_l (y[idx_a] - nu_a)(y[idx_b] - nu_b) at one grid
/// point. Throws when a selected bound is not finite.
Eigen::VectorXd complementarity_terms(const std::vector<ComplementarityPair>& pairs,
                                      const Eigen::VectorXd& y, const BoundsSpec& bounds);

/// Flat index map for the decision vector. Element blocks come first
/// (x_i, xdot_i, y_i, u_{i-1} per element, phases concatenated), then the
/// parameter blocks, then one duration variable per free-duration phase.
/// x_0 is not a decision variable.
class VariableLayout {
 public:
  struct Phase {
    int n_x = 0, n_y = 0, n_u = 0, n_p = 0;
    int elements = 0;
    int var_offset = 0;    // first element block
    int param_offset = -1;
    int duration = -1;     // flat index of T, or -1 for fixed grids
    int first_group = 0;   // global element id of element 1
  };

  int n() const { return n_; }
  int num_phases() const { return static_cast<int>(phases_.size()); }
  const Phase& phase(int k) const { return phases_[k]; }

  int stride(int k) const;  // per-element block width of phase k

  // element in 1..Ne
  int x_index(int k, int element, int comp) const;
  int xdot_index(int k, int element, int comp) const;
  int y_index(int k, int element, int comp) const;
  int u_index(int k, int element, int comp) const;  // u_{element-1}
  int param_index(int k, int comp) const;
  int duration_index(int k) const { return phases_[k].duration; }

  // single-phase conveniences
  int x_index(int element, int comp) const { return x_index(0, element, comp); }
  int xdot_index(int element, int comp) const { return xdot_index(0, element, comp); }
  int y_index(int element, int comp) const { return y_index(0, element, comp); }
  int u_index(int element, int comp) const { return u_index(0, element, comp); }
  int param_index(int comp) const { return param_index(0, comp); }

  /// Global element id per variable, -1 for parameters and durations; used
  /// to order the KKT system into a banded form.
  const std::vector<int>& var_group() const { return var_group_; }

 private:
  friend VariableLayout make_layout(const std::vector<const OCPDefinition*>&);
  std::vector<Phase> phases_;
  std::vector<int> var_group_;
  int n_ = 0;
};

/// The transcribed finite-dimensional program. `delta` is the relaxation
/// slot: the raw inequality terms are constrained as value <= delta, and in
/// barrier modes the solver rewrites delta after every barrier update
/// (single-writer: the owning solve).
struct NLPProblem {
  int n = 0;
  ad::Tape objective;    // n -> 1
  ad::Tape equalities;   // n -> m_eq
  ad::Tape ineq_terms;   // n -> m_ineq, relaxable terms (empty in penalty mode)
  ad::Tape compl_terms;  // n -> one product per (element, pair); reporting
  Eigen::VectorXd lb, ub;
  RelaxationMode mode;
  double delta = 0.0;

  std::vector<int> var_group, eq_group, ineq_group;

  int num_eq() const { return equalities.num_outputs(); }
  int num_ineq() const { return ineq_terms.num_outputs(); }
};

/// Ordered phases with free durations; adjacent phases are stitched by the
/// carried state map (source component in phase k -> target component in
/// phase k+1). Non-carried targets restart from the next phase's initial
/// state.
struct PhaseSequence {
  std::vector<OCPDefinition> phases;
  std::vector<std::vector<std::pair<int, int>>> carried;  // one list per boundary
};

std::pair<NLPProblem, VariableLayout> build_nlp(const OCPDefinition& def,
                                                const RelaxationMode& mode);

/// Free-duration transcription with the duration added to the objective
/// (Mayer term T). Requires a FreeDuration horizon.
std::pair<NLPProblem, VariableLayout> build_minimum_time(const OCPDefinition& def,
                                                         const RelaxationMode& mode);

std::pair<NLPProblem, VariableLayout> build_multiphase(const PhaseSequence& seq,
                                                       const RelaxationMode& mode);

/// Variable bounds per flat index, assembled from the per-time bound queries
/// (x_i at t_i, u_{i-1} at t_{i-1}, final-state bounds intersected into the
/// last element).
void assemble_bounds(const std::vector<const OCPDefinition*>& phases,
                     const VariableLayout& layout, Eigen::VectorXd& lb,
                     Eigen::VectorXd& ub);

/// Packs the user initial guess into a flat vector, clipped into the bounds
/// and pushed strictly interior by a margin of 1e-2 * max(1, |bound|).
Eigen::VectorXd initial_guess_vector(const OCPDefinition& def, const VariableLayout& layout);
Eigen::VectorXd initial_guess_vector(const PhaseSequence& seq, const VariableLayout& layout);

/// Inverse of the packing for a single-phase layout; row 0 of x is the fixed
/// initial state.
Trajectory extract_trajectory(const VariableLayout& layout, const Eigen::VectorXd& z,
                              const OCPDefinition& def);
Eigen::VectorXd pack(const VariableLayout& layout, const Trajectory& traj);

/// Per-phase trajectories of a multiphase solution.
std::vector<Trajectory> extract_phases(const VariableLayout& layout,
                                       const Eigen::VectorXd& z, const PhaseSequence& seq);

/// max over elements and pairs of the (clamped) complementarity product; 0
/// exactly when the discretized complementarity conditions hold.
double complementarity_residual(const Trajectory& traj, const OCPDefinition& def);

}  // namespace mpcc

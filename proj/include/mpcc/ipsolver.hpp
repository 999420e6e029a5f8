// Copyright (c) mpcc_opt contributors
#pragma once

#include <Eigen/Core>
#include <vector>

#include "mpcc/ldlt.hpp"
#include "mpcc/transcription.hpp"

namespace mpcc {

struct SolverOptions {
  double tol = 1e-8;
  int max_iter = 500;
  double mu0 = 0.1;        // initial barrier parameter
  double kappa_mu = 0.2;   // linear barrier decrease factor
  double theta_mu = 1.5;   // superlinear barrier decrease exponent
  double tau_min = 0.99;   // fraction-to-the-boundary floor
  double delta_w0 = 1e-4;  // Hessian regularization seed
  double delta_c = 1e-8;   // constraint-block regularization
  double merit_growth = 10.0;
  int threads = 1;               // derivative-kernel threads
  bool check_derivatives = false;  // FD cross-check at the start point
  bool verbose = false;
};

enum class SolveStatus { kOptimal, kMaxIter, kInfeasible, kLineSearchFailure };
const char* to_string(SolveStatus status);

struct IterationRow {
  int iter = 0;
  double mu = 0.0;
  double delta = 0.0;
  double objective = 0.0;
  double alpha_primal = 0.0;
  double alpha_dual = 0.0;
  double eq_violation = 0.0;
  double compl_residual = 0.0;
  double kkt_error = 0.0;
};

/// Primal-dual state. Interiority invariant: free bounded components stay
/// strictly inside their bounds, slacks and inequality duals stay positive.
struct Iterate {
  Eigen::VectorXd z;
  Eigen::VectorXd lambda_eq;
  Eigen::VectorXd lambda_in;  // duals of the relaxable inequalities
  Eigen::VectorXd slack;      // slacks converting term <= delta to equalities
  Eigen::VectorXd z_lower;    // bound duals, 0 where no finite bound
  Eigen::VectorXd z_upper;
  double mu = 0.1;
  double delta = 0.0;
};

struct Solution {
  SolveStatus status = SolveStatus::kMaxIter;
  Eigen::VectorXd z;
  Eigen::VectorXd lambda_eq, lambda_in, slack, z_lower, z_upper;
  double objective = 0.0;
  double eq_violation = 0.0;
  double compl_residual = 0.0;
  double kkt_error = 0.0;
  double delta_final = 0.0;
  int iterations = 0;
  std::vector<IterationRow> log;
};

/// Largest step in (0, 1] keeping value + alpha*step at fraction (1 - tau)
/// of the gap to every finite bound it moves toward.
double fraction_to_boundary(const Eigen::VectorXd& value, const Eigen::VectorXd& step,
                            const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                            double tau);

/// mu+ = max(tol/10, min(kappa_mu * mu, mu^theta_mu)).
double update_barrier(double mu, const SolverOptions& opts);

/// Unscaled optimality error E(mu): max infinity norm over stationarity,
/// constraint residuals, and centrality. Fixed variables are excluded from
/// the stationarity rows.
double kkt_residual(const NLPProblem& nlp, const Iterate& it, double mu);

/// Interior-point solve from the strictly interior start z0. Owns the
/// relaxation slot of nlp for the duration of the call (delta tracks the
/// barrier parameter in barrier-linked modes).
Solution solve(NLPProblem& nlp, const Eigen::VectorXd& z0, const SolverOptions& opts);

namespace detail {

struct Evals {
  double f = 0.0;
  Eigen::VectorXd grad;
  Eigen::VectorXd c_eq, c_in;
  std::vector<double> jac_eq, jac_in;  // aligned with the tape patterns
};

/// KKT system with the element-interleaved ordering and profile LDLT.
/// Regularizes with delta_w (x10 per retry) until the inertia is
/// (n_free, m_eq + m_in) and the solve residual passes.
class KktSystem {
 public:
  KktSystem(const NLPProblem& nlp, const SolverOptions& opts);

  struct Direction {
    Eigen::VectorXd dz, dlambda_eq, dlambda_in, dslack, dz_lower, dz_upper;
    double delta_w = 0.0;
    int corrections = 0;
    double solve_residual = 0.0;
  };

  void evaluate(const NLPProblem& nlp, const Eigen::VectorXd& z, Evals& ev);
  Direction newton_direction(const NLPProblem& nlp, const Iterate& it, double mu,
                             const Evals& ev);

  const std::vector<bool>& fixed() const { return fixed_; }
  int num_free() const { return n_free_; }

 private:
  void assemble(const NLPProblem& nlp, const Iterate& it, const Evals& ev,
                double delta_w, double delta_c);

  SolverOptions opts_;
  int n_ = 0, m_eq_ = 0, m_in_ = 0, n_free_ = 0;
  std::vector<bool> fixed_;
  std::vector<int> kkt_of_var_, kkt_of_eq_, kkt_of_in_;

  linalg::ProfileMatrix kkt_, factor_;
  std::vector<std::ptrdiff_t> hess_off_, jac_eq_off_, jac_in_off_;
  std::vector<std::size_t> var_diag_off_, eq_diag_off_, in_diag_off_;

  // merged Hessian pattern (objective + equalities + inequalities)
  std::vector<std::pair<int, int>> hess_entries_;
  std::vector<int> hess_map_obj_, hess_map_eq_, hess_map_in_;
  std::vector<double> hess_vals_;

  ad::Tape::Workspace ws_obj_, ws_eq_, ws_in_;
};

}  // namespace detail

}  // namespace mpcc

// Copyright (c) mpcc_opt contributors
#pragma once

#include <Eigen/Core>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "mpcc/autodiff.hpp"

namespace mpcc {

/// Time grid with fixed element widths h_i starting at t0. The final time is
/// t0 + Σ h_i by construction.
struct FixedGrid {
  double t0 = 0.0;
  std::vector<double> h;

  static FixedGrid uniform(double t0, double tf, int elements);
  double tf() const;
};

/// Unknown total duration T ∈ [lower, upper]; elements are uniform, T/N_e.
struct FreeDuration {
  double lower = 0.0;
  double upper = 0.0;
};

using Horizon = std::variant<FixedGrid, FreeDuration>;

enum class BoundSide { kLower, kUpper };

/// One complementarity condition between two algebraic channels: the product
/// of their selected bound gaps must vanish.
struct ComplementarityPair {
  int idx_a = 0;
  int idx_b = 0;
  BoundSide side_a = BoundSide::kLower;
  BoundSide side_b = BoundSide::kLower;
};

/// Variable bounds at one time instant. Size-0 members for final-state and
/// parameter bounds mean "not provided".
struct BoundsSpec {
  Eigen::VectorXd x_lb, x_ub;
  Eigen::VectorXd xdot_lb, xdot_ub;
  Eigen::VectorXd y_lb, y_ub;
  Eigen::VectorXd u_lb, u_ub;
  Eigen::VectorXd x_final_lb, x_final_ub;
  Eigen::VectorXd p_lb, p_ub;

  /// All bounds at ±infinity.
  static BoundsSpec unbounded(int n_x, int n_y, int n_u);
};

struct OCPInfo {
  int n_x = 0;  // differential variables
  int n_y = 0;  // algebraic variables
  int n_u = 0;  // controls
  int n_p = 0;  // time-invariant parameters
  int n_c = 0;  // complementarity pairs
  int elements = 1;
  Horizon horizon = FixedGrid{0.0, {1.0}};

  int residual_dim() const { return n_x + n_y - n_c; }
};

/// Polytope-object descriptors. Accepted for API compatibility; any
/// n_objects > 0 is rejected when the problem is transcribed.
struct ObjectHooks {
  int n_objects = 0;
  std::vector<bool> is_dynamic;
  std::vector<int> vertex_counts;
};

using DynamicsFn =
    std::function<void(double t, std::span<const ad::Var> xdot, std::span<const ad::Var> x,
                       std::span<const ad::Var> y, std::span<const ad::Var> u,
                       std::span<const ad::Var> p, std::span<ad::Var> out)>;
using RunningCostFn =
    std::function<ad::Var(double t, std::span<const ad::Var> x, std::span<const ad::Var> y,
                          std::span<const ad::Var> u, std::span<const ad::Var> p)>;
using MayerFn =
    std::function<ad::Var(std::span<const ad::Var> x_final, std::span<const ad::Var> p)>;
using GuessFn = std::function<void(double t, std::span<double> x, std::span<double> xdot,
                                   std::span<double> y, std::span<double> u)>;

/// The user-provided continuous-time problem: dynamics residual
/// f(ẋ, x, y, u, p) of length n_x + n_y − n_c, running and terminal costs,
/// bounds queried per time instant, and the complementarity index pairs.
/// Evaluators must be pure; a definition may be shared across threads.
struct OCPDefinition {
  OCPInfo info;
  std::function<BoundsSpec(double t)> bounds;
  Eigen::VectorXd initial_state;
  std::vector<ComplementarityPair> complementarity;
  DynamicsFn dynamics;
  RunningCostFn running_cost;
  MayerFn mayer;                // optional
  bool minimum_time = false;    // adds the duration to the objective
  GuessFn initial_guess;
  Eigen::VectorXd p_guess;      // required when n_p > 0
  ObjectHooks objects;

  /// Grid times t_0..t_Ne. Free-duration problems use the midpoint of the
  /// duration bounds as the nominal span.
  std::vector<double> grid_times() const;
};

struct ValidationReport {
  std::vector<std::string> problems;

  bool ok() const { return problems.empty(); }
  std::string joined() const;
};

/// Checks every structural rule of the definition and reports all
/// violations. Deterministic and side-effect free.
ValidationReport validate_definition(const OCPDefinition& def);

/// Solver output mapped back to the time grid. Row i of x is the state at
/// times[i]; xdot/y hold element values at t_1..t_Ne; u holds the inputs
/// u_{i-1} applied over element i.
struct Trajectory {
  Eigen::VectorXd times;  // N_e + 1
  Eigen::MatrixXd x;      // (N_e+1) × n_x
  Eigen::MatrixXd xdot;   // N_e × n_x
  Eigen::MatrixXd y;      // N_e × n_y
  Eigen::MatrixXd u;      // N_e × n_u
  Eigen::VectorXd params;
};

/// Mean over the selected state channels of RMSE / observed range.
/// Throws EvaluationError when an observed channel has zero range.
double nrmse(const Trajectory& observed, const Trajectory& predicted,
             std::span<const int> channels);

}  // namespace mpcc

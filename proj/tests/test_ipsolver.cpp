#include <cmath>
#include <limits>
#include <random>

#include "doctest.h"
#include "mpcc/ipsolver.hpp"

using namespace mpcc;
using mpcc::ad::Var;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

NLPProblem empty_constraints(int n) {
  NLPProblem nlp;
  nlp.n = n;
  nlp.equalities = ad::record(n, [](std::span<const Var>) { return std::vector<Var>{}; });
  nlp.ineq_terms = ad::record(n, [](std::span<const Var>) { return std::vector<Var>{}; });
  nlp.compl_terms = ad::record(n, [](std::span<const Var>) { return std::vector<Var>{}; });
  nlp.lb = Eigen::VectorXd::Constant(n, -kInf);
  nlp.ub = Eigen::VectorXd::Constant(n, kInf);
  nlp.mode = RelaxationMode{RelaxationMode::Kind::kPenaltyObjective, 1e-6, 1.0};
  return nlp;
}

// min (x-1)^2 + (y-1)^2 subject to 0 <= x  ⟂  y >= 0 under a given mode.
NLPProblem mpcc_toy(RelaxationMode mode) {
  NLPProblem nlp;
  nlp.n = 2;
  nlp.mode = mode;
  nlp.delta = mode.penalty() ? 0.0 : mode.delta;
  nlp.objective = ad::record(2, [mode](std::span<const Var> x) -> std::vector<Var> {
    Var f = (x[0] - 1.0) * (x[0] - 1.0) + (x[1] - 1.0) * (x[1] - 1.0);
    if (mode.penalty()) f = f + mode.rho * (x[0] * x[1]);
    return {f};
  });
  nlp.equalities = ad::record(2, [](std::span<const Var>) { return std::vector<Var>{}; });
  nlp.ineq_terms = ad::record(2, [mode](std::span<const Var> x) -> std::vector<Var> {
    if (mode.penalty()) return {};
    return {x[0] * x[1]};
  });
  nlp.compl_terms = ad::record(2, [](std::span<const Var> x) -> std::vector<Var> {
    return {x[0] * x[1]};
  });
  nlp.lb = Eigen::Vector2d(0.0, 0.0);
  nlp.ub = Eigen::Vector2d(kInf, kInf);
  return nlp;
}

Iterate blank_iterate(const NLPProblem& nlp, const Eigen::VectorXd& z, double mu) {
  Iterate it;
  it.z = z;
  it.lambda_eq = Eigen::VectorXd::Zero(nlp.num_eq());
  it.lambda_in = Eigen::VectorXd::Zero(nlp.num_ineq());
  it.slack = Eigen::VectorXd::Zero(nlp.num_ineq());
  it.z_lower = Eigen::VectorXd::Zero(nlp.n);
  it.z_upper = Eigen::VectorXd::Zero(nlp.n);
  it.mu = mu;
  it.delta = nlp.delta;
  return it;
}

}  // namespace

TEST_CASE("fraction to the boundary") {
  Eigen::VectorXd v(1), s(1), lo(1), hi(1);
  v << 1.0;
  s << -2.0;
  lo << 0.0;
  hi << kInf;
  CHECK(fraction_to_boundary(v, s, lo, hi, 0.995) == doctest::Approx(0.4975).epsilon(1e-15));

  s << 2.0;  // away from every bound
  CHECK(fraction_to_boundary(v, s, lo, hi, 0.995) == 1.0);

  // multi-component: equals the min of the per-component ratios
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.1, 1.0);
  Eigen::VectorXd v4(4), s4(4), lo4 = Eigen::VectorXd::Zero(4),
                              hi4 = Eigen::VectorXd::Constant(4, 2.0);
  for (int trial = 0; trial < 50; ++trial) {
    for (int i = 0; i < 4; ++i) {
      v4[i] = u(rng);
      s4[i] = u(rng) * 4.0 - 2.0;
    }
    double expect = 1.0;
    for (int i = 0; i < 4; ++i) {
      if (s4[i] < 0.0) expect = std::min(expect, 0.99 * (v4[i] - 0.0) / (-s4[i]));
      if (s4[i] > 0.0) expect = std::min(expect, 0.99 * (2.0 - v4[i]) / s4[i]);
    }
    CHECK(fraction_to_boundary(v4, s4, lo4, hi4, 0.99) == doctest::Approx(expect));
  }
}

TEST_CASE("barrier update rule") {
  SolverOptions opts;
  opts.tol = 1e-8;
  CHECK(update_barrier(0.1, opts) == doctest::Approx(0.02).epsilon(1e-14));
  CHECK(update_barrier(1e-4, opts) == doctest::Approx(1e-6).epsilon(1e-12));
  CHECK(update_barrier(opts.tol / 10.0, opts) == doctest::Approx(opts.tol / 10.0));
}

TEST_CASE("kkt residual plug-in values") {
  // analytic optimum of min (x-1)^2, no bounds
  NLPProblem nlp = empty_constraints(1);
  nlp.objective = ad::record(1, [](std::span<const Var> x) -> std::vector<Var> {
    return {(x[0] - 1.0) * (x[0] - 1.0)};
  });
  Iterate it = blank_iterate(nlp, Eigen::VectorXd::Constant(1, 1.0), 0.0);
  CHECK(kkt_residual(nlp, it, 0.0) == 0.0);

  // f = x with x >= 0 at x = 1, z_L = mu: stationarity |1 - mu|, centrality 0
  NLPProblem lin = empty_constraints(1);
  lin.objective = ad::record(1, [](std::span<const Var> x) -> std::vector<Var> {
    return {x[0] + 0.0};
  });
  lin.lb[0] = 0.0;
  const double mu = 0.05;
  Iterate it2 = blank_iterate(lin, Eigen::VectorXd::Constant(1, 1.0), mu);
  it2.z_lower[0] = mu / 1.0;
  CHECK(kkt_residual(lin, it2, mu) == doctest::Approx(std::abs(1.0 - mu)).epsilon(1e-14));
}

TEST_CASE("newton direction: exact step on a convex quadratic") {
  NLPProblem nlp = empty_constraints(2);
  nlp.objective = ad::record(2, [](std::span<const Var> x) -> std::vector<Var> {
    return {2.0 * (x[0] - 3.0) * (x[0] - 3.0) + (x[1] + 1.0) * (x[1] + 1.0)};
  });
  detail::KktSystem sys(nlp, SolverOptions{});
  Iterate it = blank_iterate(nlp, Eigen::Vector2d(0.0, 0.0), 0.0);
  detail::Evals ev;
  sys.evaluate(nlp, it.z, ev);
  const auto dir = sys.newton_direction(nlp, it, 0.0, ev);
  CHECK(dir.delta_w == 0.0);  // accepted unregularized
  CHECK(it.z[0] + dir.dz[0] == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(it.z[1] + dir.dz[1] == doctest::Approx(-1.0).epsilon(1e-12));
}

TEST_CASE("newton direction: indefinite hessian forces delta_w > 1") {
  NLPProblem nlp = empty_constraints(2);
  nlp.objective = ad::record(2, [](std::span<const Var> x) -> std::vector<Var> {
    return {0.5 * x[0] * x[0] - 0.5 * x[1] * x[1]};
  });
  detail::KktSystem sys(nlp, SolverOptions{});
  Iterate it = blank_iterate(nlp, Eigen::Vector2d(0.3, 0.4), 0.0);
  detail::Evals ev;
  sys.evaluate(nlp, it.z, ev);
  const auto dir = sys.newton_direction(nlp, it, 0.0, ev);
  CHECK(dir.delta_w > 1.0);
  CHECK(dir.corrections > 0);
}

TEST_CASE("newton direction: random constrained system solves to 1e-10") {
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const int n = 20, m = 6;
  Eigen::MatrixXd A(m, n);
  for (int r = 0; r < m; ++r) {
    for (int c = 0; c < n; ++c) A(r, c) = u(rng);
  }
  NLPProblem nlp;
  nlp.n = n;
  nlp.mode = RelaxationMode{RelaxationMode::Kind::kPenaltyObjective, 1e-6, 1.0};
  nlp.objective = ad::record(n, [](std::span<const Var> x) -> std::vector<Var> {
    Var f = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      f = f + 0.5 * x[i] * x[i] + 0.1 * mpcc::ad::sin(x[i]);
    }
    return {f};
  });
  nlp.equalities = ad::record(n, [&](std::span<const Var> x) -> std::vector<Var> {
    std::vector<Var> out;
    for (int r = 0; r < m; ++r) {
      Var e = -0.3 * r;
      for (int c = 0; c < n; ++c) e = e + A(r, c) * x[c];
      e = e + 0.05 * x[r] * x[r + 1];
      out.push_back(e);
    }
    return out;
  });
  nlp.ineq_terms = ad::record(n, [](std::span<const Var>) { return std::vector<Var>{}; });
  nlp.compl_terms = nlp.ineq_terms;
  nlp.lb = Eigen::VectorXd::Constant(n, -10.0);
  nlp.ub = Eigen::VectorXd::Constant(n, 10.0);

  detail::KktSystem sys(nlp, SolverOptions{});
  Eigen::VectorXd z(n);
  for (int i = 0; i < n; ++i) z[i] = 0.5 * u(rng);
  Iterate it = blank_iterate(nlp, z, 0.1);
  for (int r = 0; r < m; ++r) it.lambda_eq[r] = u(rng);
  for (int v = 0; v < n; ++v) {
    it.z_lower[v] = 0.1 / (z[v] + 10.0);
    it.z_upper[v] = 0.1 / (10.0 - z[v]);
  }
  detail::Evals ev;
  sys.evaluate(nlp, it.z, ev);
  const auto dir = sys.newton_direction(nlp, it, 0.1, ev);
  CHECK(dir.solve_residual <= 1e-10);

  if (dir.corrections == 0) {  // unregularized: the linearized constraints hold
    Eigen::VectorXd jdz = Eigen::VectorXd::Zero(m);
    const auto& entries = nlp.equalities.jacobian_sparsity().entries;
    for (std::size_t k = 0; k < entries.size(); ++k) {
      jdz[entries[k].first] += ev.jac_eq[k] * dir.dz[entries[k].second];
    }
    CHECK((jdz + ev.c_eq).cwiseAbs().maxCoeff() <= 1e-8);
  }
}

TEST_CASE("solve: unconstrained interior optimum") {
  NLPProblem nlp = empty_constraints(1);
  nlp.objective = ad::record(1, [](std::span<const Var> x) -> std::vector<Var> {
    return {(x[0] - 1.0) * (x[0] - 1.0)};
  });
  nlp.lb[0] = 0.0;
  const Solution sol = solve(nlp, Eigen::VectorXd::Constant(1, 0.5), SolverOptions{});
  CHECK(sol.status == SolveStatus::kOptimal);
  CHECK(sol.z[0] == doctest::Approx(1.0).epsilon(1e-7));
}

TEST_CASE("solve: active bound with unit dual") {
  NLPProblem nlp = empty_constraints(1);
  nlp.objective = ad::record(1, [](std::span<const Var> x) -> std::vector<Var> {
    return {x[0] + 0.0};
  });
  nlp.lb[0] = 0.0;
  SolverOptions opts;
  const Solution sol = solve(nlp, Eigen::VectorXd::Constant(1, 1.0), opts);
  CHECK(sol.status == SolveStatus::kOptimal);
  CHECK(sol.z[0] <= opts.tol);
  CHECK(sol.z_lower[0] == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("solve: mpcc toy converges under all five relaxation modes") {
  const RelaxationMode modes[5] = {
      {RelaxationMode::Kind::kPerPairFixed, 1e-9, 1.0},
      {RelaxationMode::Kind::kAggregatedFixed, 1e-9, 1.0},
      {RelaxationMode::Kind::kPerPairBarrier, 1e-6, 1.0},
      {RelaxationMode::Kind::kAggregatedBarrier, 1e-6, 1.0},
      {RelaxationMode::Kind::kPenaltyObjective, 1e-6, 4.0},
  };
  for (const auto& mode : modes) {
    CAPTURE(static_cast<int>(mode.kind));
    NLPProblem nlp = mpcc_toy(mode);
    const Solution sol = solve(nlp, Eigen::Vector2d(0.7, 0.3), SolverOptions{});
    CHECK(sol.status == SolveStatus::kOptimal);
    const double f_true = (sol.z[0] - 1.0) * (sol.z[0] - 1.0) +
                          (sol.z[1] - 1.0) * (sol.z[1] - 1.0);
    CHECK(f_true == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(sol.compl_residual <= 1e-8);
    // one branch active: (1, 0) or (0, 1)
    CHECK(std::min(sol.z[0], sol.z[1]) <= 1e-6);
    CHECK(std::max(sol.z[0], sol.z[1]) == doctest::Approx(1.0).epsilon(1e-5));
  }
}

TEST_CASE("solve: barrier-linked delta tracks mu in the log") {
  RelaxationMode mode{RelaxationMode::Kind::kPerPairBarrier, 1e-6, 1.0};
  NLPProblem nlp = mpcc_toy(mode);
  const Solution sol = solve(nlp, Eigen::Vector2d(0.7, 0.3), SolverOptions{});
  REQUIRE(sol.status == SolveStatus::kOptimal);
  double prev_mu = kInf;
  for (const auto& row : sol.log) {
    CHECK(row.delta == row.mu);
    CHECK(row.mu <= prev_mu);
    prev_mu = row.mu;
    CHECK(row.alpha_primal > 0.0);
  }
  CHECK(sol.delta_final <= 1e-8);
}

TEST_CASE("solve: fixed delta stays fixed") {
  RelaxationMode mode{RelaxationMode::Kind::kPerPairFixed, 1e-4, 1.0};
  NLPProblem nlp = mpcc_toy(mode);
  const Solution sol = solve(nlp, Eigen::Vector2d(0.7, 0.3), SolverOptions{});
  REQUIRE(sol.status == SolveStatus::kOptimal);
  for (const auto& row : sol.log) CHECK(row.delta == 1e-4);
  CHECK(sol.compl_residual <= 1e-4 + 1e-8);
}

TEST_CASE("solve: deterministic logs") {
  RelaxationMode mode{RelaxationMode::Kind::kPerPairBarrier, 1e-6, 1.0};
  NLPProblem a = mpcc_toy(mode);
  NLPProblem b = mpcc_toy(mode);
  const Solution sa = solve(a, Eigen::Vector2d(0.7, 0.3), SolverOptions{});
  const Solution sb = solve(b, Eigen::Vector2d(0.7, 0.3), SolverOptions{});
  REQUIRE(sa.log.size() == sb.log.size());
  for (std::size_t i = 0; i < sa.log.size(); ++i) {
    CHECK(sa.log[i].objective == sb.log[i].objective);
    CHECK(sa.log[i].kkt_error == sb.log[i].kkt_error);
    CHECK(sa.log[i].alpha_primal == sb.log[i].alpha_primal);
  }
  CHECK(sa.z == sb.z);
}

TEST_CASE("solve: fixed variables are pinned") {
  NLPProblem nlp = empty_constraints(2);
  nlp.objective = ad::record(2, [](std::span<const Var> x) -> std::vector<Var> {
    return {(x[0] - 2.0) * (x[0] - 2.0) + (x[1] - 2.0) * (x[1] - 2.0)};
  });
  nlp.lb[1] = 0.5;
  nlp.ub[1] = 0.5;  // pinned
  const Solution sol = solve(nlp, Eigen::Vector2d(0.0, 0.5), SolverOptions{});
  CHECK(sol.status == SolveStatus::kOptimal);
  CHECK(sol.z[0] == doctest::Approx(2.0).epsilon(1e-7));
  CHECK(sol.z[1] == 0.5);
}

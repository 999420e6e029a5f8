// Copyright (c) mpcc_opt contributors
#include "mpcc/ipsolver.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

namespace mpcc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double weighted_inf_norm(const Eigen::VectorXd& v) {
  return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff();
}

// Merges sorted lower-triangle entry lists; maps give each source entry's
// slot in the union.
std::vector<std::pair<int, int>> merge_patterns(
    const std::vector<const std::vector<std::pair<int, int>>*>& sources,
    std::vector<std::vector<int>>& maps) {
  std::vector<std::pair<int, int>> merged;
  for (const auto* src : sources) merged.insert(merged.end(), src->begin(), src->end());
  std::sort(merged.begin(), merged.end());
  merged.erase(std::unique(merged.begin(), merged.end()), merged.end());
  maps.clear();
  for (const auto* src : sources) {
    std::vector<int> map(src->size());
    for (std::size_t i = 0; i < src->size(); ++i) {
      map[i] = static_cast<int>(std::lower_bound(merged.begin(), merged.end(), (*src)[i]) -
                                merged.begin());
    }
    maps.push_back(std::move(map));
  }
  return merged;
}

struct ErrorParts {
  double stationarity = 0.0;
  double feasibility = 0.0;
  double centrality = 0.0;

  double max() const { return std::max({stationarity, feasibility, centrality}); }
};

ErrorParts error_parts(const NLPProblem& nlp, const detail::Evals& ev, const Iterate& it,
                       const std::vector<bool>& fixed, double mu) {
  ErrorParts e;
  const int n = nlp.n;

  Eigen::VectorXd stat = ev.grad;
  const auto& jac_eq_entries = nlp.equalities.jacobian_sparsity().entries;
  for (std::size_t k = 0; k < jac_eq_entries.size(); ++k) {
    const auto& [r, c] = jac_eq_entries[k];
    stat[c] += ev.jac_eq[k] * it.lambda_eq[r];
  }
  const auto& jac_in_entries = nlp.ineq_terms.jacobian_sparsity().entries;
  for (std::size_t k = 0; k < jac_in_entries.size(); ++k) {
    const auto& [r, c] = jac_in_entries[k];
    stat[c] += ev.jac_in[k] * it.lambda_in[r];
  }
  for (int v = 0; v < n; ++v) {
    if (fixed[v]) continue;
    double s = stat[v] - it.z_lower[v] + it.z_upper[v];
    e.stationarity = std::max(e.stationarity, std::abs(s));
    if (std::isfinite(nlp.lb[v])) {
      e.centrality =
          std::max(e.centrality, std::abs((it.z[v] - nlp.lb[v]) * it.z_lower[v] - mu));
    }
    if (std::isfinite(nlp.ub[v])) {
      e.centrality =
          std::max(e.centrality, std::abs((nlp.ub[v] - it.z[v]) * it.z_upper[v] - mu));
    }
  }
  e.feasibility = weighted_inf_norm(ev.c_eq);
  for (int r = 0; r < nlp.num_ineq(); ++r) {
    e.feasibility =
        std::max(e.feasibility, std::abs(ev.c_in[r] - it.delta + it.slack[r]));
    e.centrality = std::max(e.centrality, std::abs(it.slack[r] * it.lambda_in[r] - mu));
  }
  return e;
}

}  // namespace

const char* to_string(SolveStatus status) {
  switch (status) {
    case SolveStatus::kOptimal: return "Optimal";
    case SolveStatus::kMaxIter: return "MaxIter";
    case SolveStatus::kInfeasible: return "Infeasible";
    case SolveStatus::kLineSearchFailure: return "LineSearchFailure";
  }
  return "?";
}

double fraction_to_boundary(const Eigen::VectorXd& value, const Eigen::VectorXd& step,
                            const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                            double tau) {
  double alpha = 1.0;
  for (Eigen::Index i = 0; i < value.size(); ++i) {
    if (step[i] < 0.0 && std::isfinite(lower[i])) {
      alpha = std::min(alpha, tau * (value[i] - lower[i]) / (-step[i]));
    } else if (step[i] > 0.0 && std::isfinite(upper[i])) {
      alpha = std::min(alpha, tau * (upper[i] - value[i]) / step[i]);
    }
  }
  return alpha;
}

double update_barrier(double mu, const SolverOptions& opts) {
  const double next = std::min(opts.kappa_mu * mu, std::pow(mu, opts.theta_mu));
  return std::max(opts.tol / 10.0, next);
}

namespace detail {

KktSystem::KktSystem(const NLPProblem& nlp, const SolverOptions& opts) : opts_(opts) {
  n_ = nlp.n;
  m_eq_ = nlp.num_eq();
  m_in_ = nlp.num_ineq();

  fixed_.assign(n_, false);
  for (int v = 0; v < n_; ++v) fixed_[v] = nlp.lb[v] >= nlp.ub[v];
  n_free_ = 0;
  for (int v = 0; v < n_; ++v) n_free_ += fixed_[v] ? 0 : 1;

  // Ordering: element groups interleaved (vars, then the group's equality
  // and inequality rows), parameters and ungrouped rows at the tail.
  auto group_of = [](const std::vector<int>& g, int i) {
    return (i < static_cast<int>(g.size())) ? g[i] : -1;
  };
  struct Item {
    int group, cls, idx;
  };
  std::vector<Item> items;
  items.reserve(n_ + m_eq_ + m_in_);
  for (int v = 0; v < n_; ++v) {
    if (!fixed_[v]) items.push_back({group_of(nlp.var_group, v), 0, v});
  }
  for (int r = 0; r < m_eq_; ++r) items.push_back({group_of(nlp.eq_group, r), 1, r});
  for (int r = 0; r < m_in_; ++r) items.push_back({group_of(nlp.ineq_group, r), 2, r});
  std::stable_sort(items.begin(), items.end(), [](const Item& a, const Item& b) {
    const long ga = a.group < 0 ? std::numeric_limits<long>::max() : a.group;
    const long gb = b.group < 0 ? std::numeric_limits<long>::max() : b.group;
    if (ga != gb) return ga < gb;
    if (a.cls != b.cls) return a.cls < b.cls;
    return a.idx < b.idx;
  });

  kkt_of_var_.assign(n_, -1);
  kkt_of_eq_.assign(m_eq_, -1);
  kkt_of_in_.assign(m_in_, -1);
  for (std::size_t pos = 0; pos < items.size(); ++pos) {
    const Item& item = items[pos];
    if (item.cls == 0) kkt_of_var_[item.idx] = static_cast<int>(pos);
    if (item.cls == 1) kkt_of_eq_[item.idx] = static_cast<int>(pos);
    if (item.cls == 2) kkt_of_in_[item.idx] = static_cast<int>(pos);
  }
  const int dim = static_cast<int>(items.size());

  // Merged Hessian pattern across the three tapes.
  std::vector<std::vector<int>> maps;
  hess_entries_ = merge_patterns({&nlp.objective.hessian_sparsity().entries,
                                  &nlp.equalities.hessian_sparsity().entries,
                                  &nlp.ineq_terms.hessian_sparsity().entries},
                                 maps);
  hess_map_obj_ = std::move(maps[0]);
  hess_map_eq_ = std::move(maps[1]);
  hess_map_in_ = std::move(maps[2]);
  hess_vals_.assign(hess_entries_.size(), 0.0);

  // Profile from the structural entries.
  std::vector<int> first_col(dim);
  for (int i = 0; i < dim; ++i) first_col[i] = i;
  auto widen = [&](int a, int b) {
    if (a < 0 || b < 0) return;
    const int r = std::max(a, b), c = std::min(a, b);
    first_col[r] = std::min(first_col[r], c);
  };
  for (const auto& [r, c] : hess_entries_) widen(kkt_of_var_[r], kkt_of_var_[c]);
  for (const auto& [r, c] : nlp.equalities.jacobian_sparsity().entries) {
    widen(kkt_of_eq_[r], kkt_of_var_[c]);
  }
  for (const auto& [r, c] : nlp.ineq_terms.jacobian_sparsity().entries) {
    widen(kkt_of_in_[r], kkt_of_var_[c]);
  }
  kkt_ = linalg::ProfileMatrix(first_col);

  // Scatter offsets (-1: touches a fixed variable, dropped).
  auto offset_of = [&](int a, int b) -> std::ptrdiff_t {
    if (a < 0 || b < 0) return -1;
    const int r = std::max(a, b), c = std::min(a, b);
    return static_cast<std::ptrdiff_t>(kkt_.offset(r, c));
  };
  hess_off_.resize(hess_entries_.size());
  for (std::size_t k = 0; k < hess_entries_.size(); ++k) {
    hess_off_[k] = offset_of(kkt_of_var_[hess_entries_[k].first],
                             kkt_of_var_[hess_entries_[k].second]);
  }
  const auto& eq_entries = nlp.equalities.jacobian_sparsity().entries;
  jac_eq_off_.resize(eq_entries.size());
  for (std::size_t k = 0; k < eq_entries.size(); ++k) {
    jac_eq_off_[k] = offset_of(kkt_of_eq_[eq_entries[k].first],
                               kkt_of_var_[eq_entries[k].second]);
  }
  const auto& in_entries = nlp.ineq_terms.jacobian_sparsity().entries;
  jac_in_off_.resize(in_entries.size());
  for (std::size_t k = 0; k < in_entries.size(); ++k) {
    jac_in_off_[k] = offset_of(kkt_of_in_[in_entries[k].first],
                               kkt_of_var_[in_entries[k].second]);
  }
  var_diag_off_.resize(n_);
  for (int v = 0; v < n_; ++v) {
    var_diag_off_[v] =
        kkt_of_var_[v] >= 0 ? kkt_.offset(kkt_of_var_[v], kkt_of_var_[v]) : 0;
  }
  eq_diag_off_.resize(m_eq_);
  for (int r = 0; r < m_eq_; ++r) eq_diag_off_[r] = kkt_.offset(kkt_of_eq_[r], kkt_of_eq_[r]);
  in_diag_off_.resize(m_in_);
  for (int r = 0; r < m_in_; ++r) in_diag_off_[r] = kkt_.offset(kkt_of_in_[r], kkt_of_in_[r]);

  ws_obj_ = nlp.objective.make_workspace();
  ws_eq_ = nlp.equalities.make_workspace();
  ws_in_ = nlp.ineq_terms.make_workspace();
}

void KktSystem::evaluate(const NLPProblem& nlp, const Eigen::VectorXd& z, Evals& ev) {
  const std::span<const double> zs(z.data(), static_cast<std::size_t>(z.size()));
  double f;
  nlp.objective.forward(zs, std::span<double>(&f, 1), ws_obj_);
  ev.f = f;
  ev.grad.resize(n_);
  nlp.objective.gradient(zs, std::span<double>(ev.grad.data(), n_), ws_obj_);
  ev.c_eq.resize(m_eq_);
  nlp.equalities.forward(zs, std::span<double>(ev.c_eq.data(), m_eq_), ws_eq_);
  ev.jac_eq.resize(nlp.equalities.jacobian_sparsity().entries.size());
  nlp.equalities.jacobian_values(zs, ev.jac_eq, ws_eq_, opts_.threads);
  ev.c_in.resize(m_in_);
  nlp.ineq_terms.forward(zs, std::span<double>(ev.c_in.data(), m_in_), ws_in_);
  ev.jac_in.resize(nlp.ineq_terms.jacobian_sparsity().entries.size());
  nlp.ineq_terms.jacobian_values(zs, ev.jac_in, ws_in_, opts_.threads);
}

void KktSystem::assemble(const NLPProblem& nlp, const Iterate& it, const Evals& ev,
                         double delta_w, double delta_c) {
  const std::span<const double> zs(it.z.data(), static_cast<std::size_t>(it.z.size()));

  // Hessian of the Lagrangian on the merged pattern.
  std::fill(hess_vals_.begin(), hess_vals_.end(), 0.0);
  {
    std::vector<double> buf(nlp.objective.hessian_sparsity().entries.size());
    const double w = 1.0;
    nlp.objective.hessian_values(zs, std::span<const double>(&w, 1), buf, ws_obj_,
                                 opts_.threads);
    for (std::size_t k = 0; k < buf.size(); ++k) hess_vals_[hess_map_obj_[k]] += buf[k];
  }
  if (m_eq_ > 0) {
    std::vector<double> buf(nlp.equalities.hessian_sparsity().entries.size());
    nlp.equalities.hessian_values(
        zs, std::span<const double>(it.lambda_eq.data(), m_eq_), buf, ws_eq_,
        opts_.threads);
    for (std::size_t k = 0; k < buf.size(); ++k) hess_vals_[hess_map_eq_[k]] += buf[k];
  }
  if (m_in_ > 0) {
    std::vector<double> buf(nlp.ineq_terms.hessian_sparsity().entries.size());
    nlp.ineq_terms.hessian_values(
        zs, std::span<const double>(it.lambda_in.data(), m_in_), buf, ws_in_,
        opts_.threads);
    for (std::size_t k = 0; k < buf.size(); ++k) hess_vals_[hess_map_in_[k]] += buf[k];
  }

  kkt_.zero();
  for (std::size_t k = 0; k < hess_vals_.size(); ++k) {
    if (hess_off_[k] >= 0) kkt_.flat(hess_off_[k]) += hess_vals_[k];
  }
  for (int v = 0; v < n_; ++v) {
    if (fixed_[v]) continue;
    double sigma = delta_w;
    if (std::isfinite(nlp.lb[v])) sigma += it.z_lower[v] / (it.z[v] - nlp.lb[v]);
    if (std::isfinite(nlp.ub[v])) sigma += it.z_upper[v] / (nlp.ub[v] - it.z[v]);
    kkt_.flat(var_diag_off_[v]) += sigma;
  }
  for (std::size_t k = 0; k < jac_eq_off_.size(); ++k) {
    if (jac_eq_off_[k] >= 0) kkt_.flat(jac_eq_off_[k]) += ev.jac_eq[k];
  }
  for (int r = 0; r < m_eq_; ++r) kkt_.flat(eq_diag_off_[r]) -= delta_c;
  for (std::size_t k = 0; k < jac_in_off_.size(); ++k) {
    if (jac_in_off_[k] >= 0) kkt_.flat(jac_in_off_[k]) += ev.jac_in[k];
  }
  for (int r = 0; r < m_in_; ++r) {
    kkt_.flat(in_diag_off_[r]) -= it.slack[r] / it.lambda_in[r] + delta_c;
  }
}

KktSystem::Direction KktSystem::newton_direction(const NLPProblem& nlp, const Iterate& it,
                                                 double mu, const Evals& ev) {
  const int dim = kkt_.dim();

  // Right-hand side.
  Eigen::VectorXd jtl = Eigen::VectorXd::Zero(n_);
  const auto& eq_entries = nlp.equalities.jacobian_sparsity().entries;
  for (std::size_t k = 0; k < eq_entries.size(); ++k) {
    jtl[eq_entries[k].second] += ev.jac_eq[k] * it.lambda_eq[eq_entries[k].first];
  }
  const auto& in_entries = nlp.ineq_terms.jacobian_sparsity().entries;
  for (std::size_t k = 0; k < in_entries.size(); ++k) {
    jtl[in_entries[k].second] += ev.jac_in[k] * it.lambda_in[in_entries[k].first];
  }

  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(dim);
  for (int v = 0; v < n_; ++v) {
    if (fixed_[v]) continue;
    double r = -(ev.grad[v] + jtl[v]);
    if (std::isfinite(nlp.lb[v])) r += mu / (it.z[v] - nlp.lb[v]);
    if (std::isfinite(nlp.ub[v])) r -= mu / (nlp.ub[v] - it.z[v]);
    rhs[kkt_of_var_[v]] = r;
  }
  for (int r = 0; r < m_eq_; ++r) rhs[kkt_of_eq_[r]] = -ev.c_eq[r];
  for (int r = 0; r < m_in_; ++r) {
    rhs[kkt_of_in_[r]] = -(ev.c_in[r] - it.delta) - mu / it.lambda_in[r];
  }

  Eigen::VectorXd x(dim), resid(dim), corr(dim);
  Direction dir;
  const double rhs_norm = std::max(1.0, weighted_inf_norm(rhs));

  double delta_w = 0.0;
  double delta_c = 0.0;
  for (int attempt = 0; attempt < 42; ++attempt) {
    if (attempt > 0) {
      delta_w = opts_.delta_w0 * std::pow(10.0, attempt - 1);
      delta_c = opts_.delta_c;
      if (delta_w > 1e40) break;
    }
    assemble(nlp, it, ev, delta_w, delta_c);
    factor_ = kkt_;
    const linalg::Inertia inertia = linalg::ldlt_factor(factor_);
    if (!inertia.ok || inertia.positive != n_free_ ||
        inertia.negative != m_eq_ + m_in_) {
      continue;
    }

    x = rhs;
    linalg::ldlt_solve(factor_, x.data());
    double rel = kInf;
    for (int refine = 0; refine < 5; ++refine) {
      kkt_.multiply(x.data(), resid.data());
      resid = rhs - resid;
      rel = weighted_inf_norm(resid) / rhs_norm;
      if (rel <= 1e-10) break;
      corr = resid;
      linalg::ldlt_solve(factor_, corr.data());
      x += corr;
    }
    if (rel > 1e-10) continue;

    dir.delta_w = delta_w;
    dir.corrections = attempt;
    dir.solve_residual = rel;
    dir.dz = Eigen::VectorXd::Zero(n_);
    for (int v = 0; v < n_; ++v) {
      if (!fixed_[v]) dir.dz[v] = x[kkt_of_var_[v]];
    }
    dir.dlambda_eq.resize(m_eq_);
    for (int r = 0; r < m_eq_; ++r) dir.dlambda_eq[r] = x[kkt_of_eq_[r]];
    dir.dlambda_in.resize(m_in_);
    for (int r = 0; r < m_in_; ++r) dir.dlambda_in[r] = x[kkt_of_in_[r]];

    dir.dslack.resize(m_in_);
    for (int r = 0; r < m_in_; ++r) {
      dir.dslack[r] = -(ev.c_in[r] - it.delta + it.slack[r]);
    }
    for (std::size_t k = 0; k < in_entries.size(); ++k) {
      dir.dslack[in_entries[k].first] -= ev.jac_in[k] * dir.dz[in_entries[k].second];
    }
    dir.dz_lower = Eigen::VectorXd::Zero(n_);
    dir.dz_upper = Eigen::VectorXd::Zero(n_);
    for (int v = 0; v < n_; ++v) {
      if (fixed_[v]) continue;
      if (std::isfinite(nlp.lb[v])) {
        const double gap = it.z[v] - nlp.lb[v];
        dir.dz_lower[v] = mu / gap - it.z_lower[v] - it.z_lower[v] / gap * dir.dz[v];
      }
      if (std::isfinite(nlp.ub[v])) {
        const double gap = nlp.ub[v] - it.z[v];
        dir.dz_upper[v] = mu / gap - it.z_upper[v] + it.z_upper[v] / gap * dir.dz[v];
      }
    }
    return dir;
  }
  throw Error("KKT solve failed: inertia correction exhausted");
}

}  // namespace detail

double kkt_residual(const NLPProblem& nlp, const Iterate& it, double mu) {
  detail::KktSystem sys(nlp, SolverOptions{});
  detail::Evals ev;
  sys.evaluate(nlp, it.z, ev);
  return error_parts(nlp, ev, it, sys.fixed(), mu).max();
}

Solution solve(NLPProblem& nlp, const Eigen::VectorXd& z0, const SolverOptions& opts) {
  if (z0.size() != nlp.n) throw Error("solve: start point has wrong dimension");

  detail::KktSystem sys(nlp, opts);
  const std::vector<bool>& fixed = sys.fixed();
  const int n = nlp.n;
  const int m_eq = nlp.num_eq();
  const int m_in = nlp.num_ineq();

  Iterate it;
  it.z = z0;
  // Safety nudge: keep free bounded components strictly interior.
  for (int v = 0; v < n; ++v) {
    if (fixed[v]) {
      it.z[v] = nlp.lb[v];
      continue;
    }
    const double gap = nlp.ub[v] - nlp.lb[v];
    const double margin = std::isfinite(gap) ? std::min(1e-8, 0.25 * gap) : 1e-8;
    if (std::isfinite(nlp.lb[v])) it.z[v] = std::max(it.z[v], nlp.lb[v] + margin);
    if (std::isfinite(nlp.ub[v])) it.z[v] = std::min(it.z[v], nlp.ub[v] - margin);
  }

  it.mu = opts.mu0;
  if (nlp.mode.barrier_linked()) nlp.delta = it.mu;
  it.delta = nlp.delta;

  detail::Evals ev;
  sys.evaluate(nlp, it.z, ev);

  if (opts.check_derivatives) {
    const auto fd = ad::fd_gradient(nlp.objective, std::span<const double>(it.z.data(), n),
                                    1e-6);
    double worst = 0.0;
    for (int v = 0; v < n; ++v) worst = std::max(worst, std::abs(fd[v] - ev.grad[v]));
    if (worst > 1e-4) {
      std::fprintf(stderr, "[mpcc] objective gradient vs FD mismatch: %.3e\n", worst);
    }
  }

  it.slack.resize(m_in);
  it.lambda_in.resize(m_in);
  for (int r = 0; r < m_in; ++r) {
    it.slack[r] = std::max(1e-2, it.delta - ev.c_in[r]);
    it.lambda_in[r] = it.mu / it.slack[r];
  }
  it.lambda_eq = Eigen::VectorXd::Zero(m_eq);
  it.z_lower = Eigen::VectorXd::Zero(n);
  it.z_upper = Eigen::VectorXd::Zero(n);
  for (int v = 0; v < n; ++v) {
    if (fixed[v]) continue;
    if (std::isfinite(nlp.lb[v])) it.z_lower[v] = it.mu / (it.z[v] - nlp.lb[v]);
    if (std::isfinite(nlp.ub[v])) it.z_upper[v] = it.mu / (nlp.ub[v] - it.z[v]);
  }

  ad::Tape::Workspace ws_compl = nlp.compl_terms.make_workspace();
  std::vector<double> compl_buf(nlp.compl_terms.num_outputs());
  auto compl_residual_at = [&](const Eigen::VectorXd& z) {
    if (compl_buf.empty()) return 0.0;
    nlp.compl_terms.forward(std::span<const double>(z.data(), n), compl_buf, ws_compl);
    double worst = 0.0;
    for (double t : compl_buf) worst = std::max(worst, t);
    return worst;
  };

  // Merit state.
  double nu = 1.0;
  ad::Tape::Workspace ws_obj_trial = nlp.objective.make_workspace();
  ad::Tape::Workspace ws_eq_trial = nlp.equalities.make_workspace();
  ad::Tape::Workspace ws_in_trial = nlp.ineq_terms.make_workspace();
  Eigen::VectorXd c_eq_trial(m_eq), c_in_trial(m_in);

  auto merit_at = [&](const Eigen::VectorXd& z, const Eigen::VectorXd& s,
                      double mu) -> double {
    double f;
    try {
      nlp.objective.forward(std::span<const double>(z.data(), n),
                            std::span<double>(&f, 1), ws_obj_trial);
      nlp.equalities.forward(std::span<const double>(z.data(), n),
                             std::span<double>(c_eq_trial.data(), m_eq), ws_eq_trial);
      nlp.ineq_terms.forward(std::span<const double>(z.data(), n),
                             std::span<double>(c_in_trial.data(), m_in), ws_in_trial);
    } catch (const EvaluationError&) {
      return kInf;
    }
    double bar = 0.0;
    for (int v = 0; v < n; ++v) {
      if (fixed[v]) continue;
      if (std::isfinite(nlp.lb[v])) bar -= mu * std::log(z[v] - nlp.lb[v]);
      if (std::isfinite(nlp.ub[v])) bar -= mu * std::log(nlp.ub[v] - z[v]);
    }
    double theta = 0.0;
    for (int r = 0; r < m_eq; ++r) theta += std::abs(c_eq_trial[r]);
    for (int r = 0; r < m_in; ++r) {
      bar -= mu * std::log(s[r]);
      theta += std::abs(c_in_trial[r] - nlp.delta + s[r]);
    }
    return f + bar + nu * theta;
  };

  Solution sol;
  const double mu_floor = opts.tol / 10.0;
  int iter = 0;
  auto finish = [&](SolveStatus status) {
    sol.status = status;
    sol.z = it.z;
    sol.lambda_eq = it.lambda_eq;
    sol.lambda_in = it.lambda_in;
    sol.slack = it.slack;
    sol.z_lower = it.z_lower;
    sol.z_upper = it.z_upper;
    sol.objective = ev.f;
    sol.eq_violation = weighted_inf_norm(ev.c_eq);
    sol.compl_residual = std::max(0.0, compl_residual_at(it.z));
    sol.kkt_error = error_parts(nlp, ev, it, fixed, 0.0).max();
    sol.delta_final = nlp.delta;
    sol.iterations = iter;
    return sol;
  };

  for (iter = 0; iter < opts.max_iter; ++iter) {
    const ErrorParts e0 = error_parts(nlp, ev, it, fixed, 0.0);
    const bool delta_done =
        !nlp.mode.barrier_linked() || nlp.delta <= mu_floor * (1.0 + 1e-12);
    if (e0.max() <= opts.tol && weighted_inf_norm(ev.c_eq) <= opts.tol && delta_done) {
      return finish(SolveStatus::kOptimal);
    }

    // Barrier schedule: reduce while the mu-problem is solved to 10*mu.
    while (it.mu > mu_floor &&
           error_parts(nlp, ev, it, fixed, it.mu).max() <= 10.0 * it.mu) {
      it.mu = update_barrier(it.mu, opts);
      if (nlp.mode.barrier_linked()) {
        nlp.delta = it.mu;
        it.delta = it.mu;
      }
    }
    const double tau = std::max(opts.tau_min, 1.0 - it.mu);

    detail::KktSystem::Direction dir;
    try {
      dir = sys.newton_direction(nlp, it, it.mu, ev);
    } catch (const Error&) {
      return finish(SolveStatus::kLineSearchFailure);
    }

    // Fraction to the boundary for the primal pair (z, s) and the duals.
    double alpha_max = fraction_to_boundary(it.z, dir.dz, nlp.lb, nlp.ub, tau);
    if (m_in > 0) {
      alpha_max = std::min(
          alpha_max, fraction_to_boundary(it.slack, dir.dslack,
                                          Eigen::VectorXd::Zero(m_in),
                                          Eigen::VectorXd::Constant(m_in, kInf), tau));
    }
    double alpha_dual = 1.0;
    {
      Eigen::VectorXd zeros = Eigen::VectorXd::Zero(n);
      Eigen::VectorXd infs = Eigen::VectorXd::Constant(n, kInf);
      alpha_dual = std::min(
          alpha_dual, fraction_to_boundary(it.z_lower, dir.dz_lower, zeros, infs, tau));
      alpha_dual = std::min(
          alpha_dual, fraction_to_boundary(it.z_upper, dir.dz_upper, zeros, infs, tau));
      if (m_in > 0) {
        alpha_dual = std::min(alpha_dual,
                              fraction_to_boundary(it.lambda_in, dir.dlambda_in,
                                                   Eigen::VectorXd::Zero(m_in),
                                                   Eigen::VectorXd::Constant(m_in, kInf),
                                                   tau));
      }
    }

    // Armijo backtracking on the l1 merit function.
    double dphi = ev.grad.dot(dir.dz);
    double theta0 = 0.0;
    for (int r = 0; r < m_eq; ++r) theta0 += std::abs(ev.c_eq[r]);
    for (int r = 0; r < m_in; ++r) theta0 += std::abs(ev.c_in[r] - it.delta + it.slack[r]);
    for (int v = 0; v < n; ++v) {
      if (fixed[v]) continue;
      if (std::isfinite(nlp.lb[v])) dphi -= it.mu / (it.z[v] - nlp.lb[v]) * dir.dz[v];
      if (std::isfinite(nlp.ub[v])) dphi += it.mu / (nlp.ub[v] - it.z[v]) * dir.dz[v];
    }
    for (int r = 0; r < m_in; ++r) dphi -= it.mu / it.slack[r] * dir.dslack[r];

    double dm = dphi - nu * theta0;
    if (dm >= 0.0) {
      const double lam_norm =
          std::max(weighted_inf_norm(it.lambda_eq + dir.dlambda_eq),
                   weighted_inf_norm(it.lambda_in + dir.dlambda_in));
      nu = std::max(nu, opts.merit_growth * lam_norm + 1.0);
      dm = dphi - nu * theta0;
      if (dm >= 0.0 && theta0 > 1e-14) {
        nu = std::max(nu, 1.1 * dphi / theta0 + 1.0);
        dm = dphi - nu * theta0;
      }
    }
    const double dm_eff = std::min(dm, -1e-16);

    const double m0 = merit_at(it.z, it.slack, it.mu);
    double alpha = alpha_max;
    bool accepted = false;
    Eigen::VectorXd z_trial, s_trial;
    for (int ls = 0; ls < 64 && alpha >= 1e-16; ++ls) {
      z_trial = it.z + alpha * dir.dz;
      s_trial = it.slack + alpha * dir.dslack;
      const double m_trial = merit_at(z_trial, s_trial, it.mu);
      if (m_trial <= m0 + 1e-4 * alpha * dm_eff) {
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted) {
      if (opts.verbose) {
        std::fprintf(stderr,
                     "[mpcc] LS FAIL: dphi=%.3e theta0=%.3e nu=%.3e dm=%.3e m0=%.9e "
                     "amax=%.3e m(amax)=%.9e m(1e-8)=%.9e\n",
                     dphi, theta0, nu, dm, m0, alpha_max,
                     merit_at(it.z + alpha_max * dir.dz, it.slack + alpha_max * dir.dslack,
                              it.mu),
                     merit_at(it.z + 1e-8 * dir.dz, it.slack + 1e-8 * dir.dslack, it.mu));
      }
      const double theta_now = weighted_inf_norm(ev.c_eq);
      bool stalled = theta_now > std::max(1e-6, 1e3 * opts.tol);
      if (stalled && sol.log.size() >= 5) {
        const double theta_past = sol.log[sol.log.size() - 5].eq_violation;
        stalled = theta_past - theta_now <= 1e-12 * std::max(1.0, theta_past);
      } else {
        stalled = false;
      }
      return finish(stalled ? SolveStatus::kInfeasible : SolveStatus::kLineSearchFailure);
    }

    it.z = z_trial;
    it.slack = s_trial;
    it.lambda_eq += alpha * dir.dlambda_eq;
    it.lambda_in += alpha_dual * dir.dlambda_in;
    it.z_lower += alpha_dual * dir.dz_lower;
    it.z_upper += alpha_dual * dir.dz_upper;

    try {
      sys.evaluate(nlp, it.z, ev);
    } catch (const EvaluationError& e) {
      throw EvaluationError(std::string(e.what()) + " (at iteration " +
                            std::to_string(iter) + ")");
    }

    IterationRow row;
    row.iter = iter;
    row.mu = it.mu;
    row.delta = nlp.delta;
    row.objective = ev.f;
    row.alpha_primal = alpha;
    row.alpha_dual = alpha_dual;
    row.eq_violation = weighted_inf_norm(ev.c_eq);
    row.compl_residual = std::max(0.0, compl_residual_at(it.z));
    row.kkt_error = error_parts(nlp, ev, it, fixed, 0.0).max();
    sol.log.push_back(row);
    if (opts.verbose) {
      std::fprintf(stderr,
                   "[mpcc] it=%3d mu=%9.2e delta=%9.2e f=%14.8e a=%8.2e theta=%9.2e "
                   "E0=%9.2e dw=%8.1e\n",
                   iter, row.mu, row.delta, row.objective, row.alpha_primal,
                   row.eq_violation, row.kkt_error, dir.delta_w);
    }
  }
  return finish(SolveStatus::kMaxIter);
}

}  // namespace mpcc

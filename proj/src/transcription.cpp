// Copyright (c) mpcc_opt contributors
#include "mpcc/transcription.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mpcc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct PhaseData {
  const OCPDefinition* def = nullptr;
  std::vector<double> times;         // nominal grid t_0..t_Ne
  std::vector<BoundsSpec> bounds;    // queried at each grid point
  std::vector<int> carried_src;      // per state component, source in previous phase or -1
};

std::vector<PhaseData> collect_phase_data(
    const std::vector<const OCPDefinition*>& phases,
    const std::vector<std::vector<std::pair<int, int>>>& carried) {
  std::vector<PhaseData> data(phases.size());
  for (std::size_t k = 0; k < phases.size(); ++k) {
    const OCPDefinition& def = *phases[k];
    data[k].def = &def;
    data[k].times = def.grid_times();
    data[k].bounds.reserve(data[k].times.size());
    for (double t : data[k].times) data[k].bounds.push_back(def.bounds(t));
    data[k].carried_src.assign(def.info.n_x, -1);
    if (k > 0) {
      for (const auto& [src, dst] : carried[k - 1]) data[k].carried_src[dst] = src;
    }
  }
  return data;
}

double selected_bound(const BoundsSpec& b, int idx, BoundSide side) {
  return side == BoundSide::kLower ? b.y_lb[idx] : b.y_ub[idx];
}

double interior_value(double v, double lo, double hi) {
  if (hi - lo <= 0.0) return lo;  // pinned variable
  v = std::clamp(v, lo, hi);
  const double width_cap = std::isfinite(hi - lo) ? 0.45 * (hi - lo) : kInf;
  if (std::isfinite(lo)) {
    const double m = std::min(1e-2 * std::max(1.0, std::abs(lo)), width_cap);
    v = std::max(v, lo + m);
  }
  if (std::isfinite(hi)) {
    const double m = std::min(1e-2 * std::max(1.0, std::abs(hi)), width_cap);
    v = std::min(v, hi - m);
  }
  return v;
}

}  // namespace

int alpha_sign(BoundSide side_a, BoundSide side_b) { return side_a == side_b ? 1 : -1; }

Eigen::VectorXd complementarity_terms(const std::vector<ComplementarityPair>& pairs,
                                      const Eigen::VectorXd& y, const BoundsSpec& bounds) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(pairs.size()));
  for (std::size_t l = 0; l < pairs.size(); ++l) {
    const ComplementarityPair& pr = pairs[l];
    const double nu_a = selected_bound(bounds, pr.idx_a, pr.side_a);
    const double nu_b = selected_bound(bounds, pr.idx_b, pr.side_b);
    if (!std::isfinite(nu_a) || !std::isfinite(nu_b)) {
      throw Error("complementarity_terms: selected bound is not finite");
    }
    const double alpha = alpha_sign(pr.side_a, pr.side_b);
    out[static_cast<Eigen::Index>(l)] =
        complementarity_product(y[pr.idx_a] - nu_a, y[pr.idx_b] - nu_b, alpha);
  }
  return out;
}

int VariableLayout::stride(int k) const {
  const Phase& p = phases_[k];
  return 2 * p.n_x + p.n_y + p.n_u;
}

int VariableLayout::x_index(int k, int element, int comp) const {
  return phases_[k].var_offset + (element - 1) * stride(k) + comp;
}
int VariableLayout::xdot_index(int k, int element, int comp) const {
  return x_index(k, element, comp) + phases_[k].n_x;
}
int VariableLayout::y_index(int k, int element, int comp) const {
  return phases_[k].var_offset + (element - 1) * stride(k) + 2 * phases_[k].n_x + comp;
}
int VariableLayout::u_index(int k, int element, int comp) const {
  return phases_[k].var_offset + (element - 1) * stride(k) + 2 * phases_[k].n_x +
         phases_[k].n_y + comp;
}
int VariableLayout::param_index(int k, int comp) const {
  return phases_[k].param_offset + comp;
}

VariableLayout make_layout(const std::vector<const OCPDefinition*>& phases) {
  VariableLayout layout;
  int offset = 0;
  int group = 0;
  for (const OCPDefinition* def : phases) {
    VariableLayout::Phase ph;
    ph.n_x = def->info.n_x;
    ph.n_y = def->info.n_y;
    ph.n_u = def->info.n_u;
    ph.n_p = def->info.n_p;
    ph.elements = def->info.elements;
    ph.var_offset = offset;
    ph.first_group = group;
    offset += ph.elements * (2 * ph.n_x + ph.n_y + ph.n_u);
    group += ph.elements;
    layout.phases_.push_back(ph);
  }
  for (auto& ph : layout.phases_) {
    if (ph.n_p > 0) {
      ph.param_offset = offset;
      offset += ph.n_p;
    }
  }
  for (std::size_t k = 0; k < phases.size(); ++k) {
    if (std::holds_alternative<FreeDuration>(phases[k]->info.horizon)) {
      layout.phases_[k].duration = offset++;
    }
  }
  layout.n_ = offset;

  layout.var_group_.assign(offset, -1);
  for (std::size_t k = 0; k < layout.phases_.size(); ++k) {
    const auto& ph = layout.phases_[k];
    const int stride = 2 * ph.n_x + ph.n_y + ph.n_u;
    for (int i = 0; i < ph.elements; ++i) {
      for (int j = 0; j < stride; ++j) {
        layout.var_group_[ph.var_offset + i * stride + j] = ph.first_group + i;
      }
    }
  }
  return layout;
}

void assemble_bounds(const std::vector<const OCPDefinition*>& phases,
                     const VariableLayout& layout, Eigen::VectorXd& lb,
                     Eigen::VectorXd& ub) {
  lb = Eigen::VectorXd::Constant(layout.n(), -kInf);
  ub = Eigen::VectorXd::Constant(layout.n(), kInf);
  for (int k = 0; k < layout.num_phases(); ++k) {
    const OCPDefinition& def = *phases[k];
    const auto times = def.grid_times();
    const int ne = def.info.elements;
    for (int i = 1; i <= ne; ++i) {
      const BoundsSpec bi = def.bounds(times[i]);
      const BoundsSpec bprev = def.bounds(times[i - 1]);
      for (int j = 0; j < def.info.n_x; ++j) {
        double lo = bi.x_lb[j], hi = bi.x_ub[j];
        if (i == ne && bi.x_final_lb.size() == def.info.n_x) {
          lo = std::max(lo, bi.x_final_lb[j]);
          hi = std::min(hi, bi.x_final_ub[j]);
        }
        lb[layout.x_index(k, i, j)] = lo;
        ub[layout.x_index(k, i, j)] = hi;
        lb[layout.xdot_index(k, i, j)] = bi.xdot_lb[j];
        ub[layout.xdot_index(k, i, j)] = bi.xdot_ub[j];
      }
      for (int j = 0; j < def.info.n_y; ++j) {
        lb[layout.y_index(k, i, j)] = bi.y_lb[j];
        ub[layout.y_index(k, i, j)] = bi.y_ub[j];
      }
      for (int j = 0; j < def.info.n_u; ++j) {
        lb[layout.u_index(k, i, j)] = bprev.u_lb[j];
        ub[layout.u_index(k, i, j)] = bprev.u_ub[j];
      }
    }
    if (def.info.n_p > 0) {
      const BoundsSpec b0 = def.bounds(times[0]);
      for (int j = 0; j < def.info.n_p; ++j) {
        lb[layout.param_index(k, j)] = b0.p_lb[j];
        ub[layout.param_index(k, j)] = b0.p_ub[j];
      }
    }
    if (layout.duration_index(k) >= 0) {
      const auto& free = std::get<FreeDuration>(def.info.horizon);
      lb[layout.duration_index(k)] = free.lower;
      ub[layout.duration_index(k)] = free.upper;
    }
  }
}

namespace {

Eigen::VectorXd guess_core(const std::vector<const OCPDefinition*>& phases,
                           const VariableLayout& layout) {
  Eigen::VectorXd lb, ub;
  assemble_bounds(phases, layout, lb, ub);
  Eigen::VectorXd z = Eigen::VectorXd::Zero(layout.n());

  for (int k = 0; k < layout.num_phases(); ++k) {
    const OCPDefinition& def = *phases[k];
    const auto times = def.grid_times();
    const int ne = def.info.elements;
    const int n_x = def.info.n_x, n_y = def.info.n_y, n_u = def.info.n_u;

    std::vector<Eigen::VectorXd> gx(ne + 1), gxd(ne + 1), gy(ne + 1), gu(ne + 1);
    for (int i = 0; i <= ne; ++i) {
      gx[i] = Eigen::VectorXd::Zero(n_x);
      gxd[i] = Eigen::VectorXd::Zero(n_x);
      gy[i] = Eigen::VectorXd::Zero(n_y);
      gu[i] = Eigen::VectorXd::Zero(n_u);
      def.initial_guess(times[i], std::span<double>(gx[i].data(), n_x),
                        std::span<double>(gxd[i].data(), n_x),
                        std::span<double>(gy[i].data(), n_y),
                        std::span<double>(gu[i].data(), n_u));
    }
    for (int i = 1; i <= ne; ++i) {
      for (int j = 0; j < n_x; ++j) {
        z[layout.x_index(k, i, j)] = gx[i][j];
        z[layout.xdot_index(k, i, j)] = gxd[i][j];
      }
      for (int j = 0; j < n_y; ++j) z[layout.y_index(k, i, j)] = gy[i][j];
      for (int j = 0; j < n_u; ++j) z[layout.u_index(k, i, j)] = gu[i - 1][j];
    }
    for (int j = 0; j < def.info.n_p; ++j) z[layout.param_index(k, j)] = def.p_guess[j];
    if (layout.duration_index(k) >= 0) {
      const auto& free = std::get<FreeDuration>(def.info.horizon);
      z[layout.duration_index(k)] = 0.5 * (free.lower + free.upper);
    }
  }

  for (int i = 0; i < layout.n(); ++i) z[i] = interior_value(z[i], lb[i], ub[i]);
  return z;
}

std::pair<NLPProblem, VariableLayout> build_core(
    const std::vector<const OCPDefinition*>& phases,
    const std::vector<std::vector<std::pair<int, int>>>& carried,
    const RelaxationMode& mode) {
  if (!mode.penalty() && !mode.barrier_linked() && !(mode.delta > 0.0)) {
    throw StructuralError("fixed relaxation requires delta > 0");
  }
  if (mode.penalty() && !(mode.rho > 0.0)) {
    throw StructuralError("penalty relaxation requires rho > 0");
  }

  for (const OCPDefinition* def : phases) {
    if (def->objects.n_objects > 0) {
      throw UnsupportedFeatureError(
          "polytope object hooks are accepted by the contract but rejected here: "
          "collision avoidance is out of scope");
    }
    const ValidationReport rep = validate_definition(*def);
    if (!rep.ok()) throw StructuralError("invalid problem definition: " + rep.joined());
  }
  if (carried.size() + 1 != phases.size()) {
    throw StructuralError("carried-state maps must cover every phase boundary");
  }
  for (std::size_t b = 0; b < carried.size(); ++b) {
    for (const auto& [src, dst] : carried[b]) {
      if (src < 0 || src >= phases[b]->info.n_x || dst < 0 ||
          dst >= phases[b + 1]->info.n_x) {
        throw StructuralError("carried-state map index out of range");
      }
    }
  }
  if (phases.size() > 1) {
    for (const OCPDefinition* def : phases) {
      if (!std::holds_alternative<FreeDuration>(def->info.horizon)) {
        throw StructuralError("multiphase problems require free-duration phases");
      }
    }
  }

  VariableLayout layout = make_layout(phases);
  const int n = layout.n();
  std::vector<PhaseData> data = collect_phase_data(phases, carried);

  NLPProblem nlp;
  nlp.n = n;
  nlp.mode = mode;
  nlp.delta = mode.penalty() ? 0.0 : mode.delta;
  assemble_bounds(phases, layout, nlp.lb, nlp.ub);
  nlp.var_group = layout.var_group();

  const Eigen::VectorXd z0 = guess_core(phases, layout);
  const std::span<const double> z0s(z0.data(), static_cast<std::size_t>(z0.size()));

  // Element width as a tape expression: constant for fixed grids, T/Ne for
  // free durations.
  auto width_of = [&](std::span<const ad::Var> z, int k, int i) -> ad::Var {
    if (layout.duration_index(k) >= 0) {
      return z[layout.duration_index(k)] *
             (1.0 / static_cast<double>(data[k].def->info.elements));
    }
    return ad::Var(std::get<FixedGrid>(data[k].def->info.horizon).h[i - 1]);
  };

  auto slice = [&](std::span<const ad::Var> z, int start, int len) {
    return z.subspan(static_cast<std::size_t>(start), static_cast<std::size_t>(len));
  };

  // Signed product of one complementarity pair at element i of phase k.
  auto pair_term = [&](std::span<const ad::Var> z, int k, int i, int l) -> ad::Var {
    const OCPDefinition& def = *data[k].def;
    const ComplementarityPair& pr = def.complementarity[l];
    const BoundsSpec& b = data[k].bounds[i];
    const double nu_a = selected_bound(b, pr.idx_a, pr.side_a);
    const double nu_b = selected_bound(b, pr.idx_b, pr.side_b);
    const double alpha = alpha_sign(pr.side_a, pr.side_b);
    const ad::Var ga = z[layout.y_index(k, i, pr.idx_a)] - nu_a;
    const ad::Var gb = z[layout.y_index(k, i, pr.idx_b)] - nu_b;
    return complementarity_product(ga, gb, alpha);
  };

  // --- equality tape: DAE residuals and implicit-Euler continuity ---
  std::vector<int> eq_group;
  auto eq_fn = [&](std::span<const ad::Var> z) {
    std::vector<ad::Var> out;
    eq_group.clear();
    for (int k = 0; k < layout.num_phases(); ++k) {
      const OCPDefinition& def = *data[k].def;
      const int ne = def.info.elements;
      const int n_x = def.info.n_x;
      const std::span<const ad::Var> p =
          def.info.n_p > 0 ? slice(z, layout.param_index(k, 0), def.info.n_p)
                           : std::span<const ad::Var>{};
      for (int i = 1; i <= ne; ++i) {
        const int g = layout.phase(k).first_group + (i - 1);
        const ad::Var h = width_of(z, k, i);
        const auto x = slice(z, layout.x_index(k, i, 0), n_x);
        const auto xd = slice(z, layout.xdot_index(k, i, 0), n_x);
        const auto y = slice(z, layout.y_index(k, i, 0), def.info.n_y);
        const auto u = slice(z, layout.u_index(k, i, 0), def.info.n_u);

        std::vector<ad::Var> res(static_cast<std::size_t>(def.info.residual_dim()));
        def.dynamics(data[k].times[i], xd, x, y, u, p, res);
        for (auto& r : res) {
          out.push_back(r);
          eq_group.push_back(g);
        }
        for (int j = 0; j < n_x; ++j) {
          ad::Var prev;
          if (i > 1) {
            prev = z[layout.x_index(k, i - 1, j)];
          } else if (k > 0 && data[k].carried_src[j] >= 0) {
            prev = z[layout.x_index(k - 1, data[k - 1].def->info.elements,
                                    data[k].carried_src[j])];
          } else {
            prev = ad::Var(def.initial_state[j]);
          }
          out.push_back(x[j] - prev - h * xd[j]);
          eq_group.push_back(g);
        }
      }
    }
    return out;
  };
  nlp.equalities = ad::record(n, eq_fn, z0s);
  nlp.eq_group = eq_group;

  // --- relaxable inequalities and the reporting terms ---
  std::vector<int> ineq_group;
  auto ineq_fn = [&](std::span<const ad::Var> z) {
    std::vector<ad::Var> out;
    ineq_group.clear();
    if (mode.penalty()) return out;
    for (int k = 0; k < layout.num_phases(); ++k) {
      const OCPDefinition& def = *data[k].def;
      for (int i = 1; i <= def.info.elements; ++i) {
        const int g = layout.phase(k).first_group + (i - 1);
        if (def.info.n_c == 0) continue;
        if (mode.aggregated()) {
          ad::Var sum = pair_term(z, k, i, 0);
          for (int l = 1; l < def.info.n_c; ++l) sum = sum + pair_term(z, k, i, l);
          out.push_back(sum);
          ineq_group.push_back(g);
        } else {
          for (int l = 0; l < def.info.n_c; ++l) {
            out.push_back(pair_term(z, k, i, l));
            ineq_group.push_back(g);
          }
        }
      }
    }
    return out;
  };
  nlp.ineq_terms = ad::record(n, ineq_fn, z0s);
  nlp.ineq_group = ineq_group;

  auto compl_fn = [&](std::span<const ad::Var> z) {
    std::vector<ad::Var> out;
    for (int k = 0; k < layout.num_phases(); ++k) {
      const OCPDefinition& def = *data[k].def;
      for (int i = 1; i <= def.info.elements; ++i) {
        for (int l = 0; l < def.info.n_c; ++l) out.push_back(pair_term(z, k, i, l));
      }
    }
    return out;
  };
  nlp.compl_terms = ad::record(n, compl_fn, z0s);

  // --- objective tape ---
  auto obj_fn = [&](std::span<const ad::Var> z) {
    ad::Var obj = 0.0;
    for (int k = 0; k < layout.num_phases(); ++k) {
      const OCPDefinition& def = *data[k].def;
      const int ne = def.info.elements;
      const std::span<const ad::Var> p =
          def.info.n_p > 0 ? slice(z, layout.param_index(k, 0), def.info.n_p)
                           : std::span<const ad::Var>{};
      for (int i = 1; i <= ne; ++i) {
        const ad::Var h = width_of(z, k, i);
        const auto x = slice(z, layout.x_index(k, i, 0), def.info.n_x);
        const auto y = slice(z, layout.y_index(k, i, 0), def.info.n_y);
        const auto u = slice(z, layout.u_index(k, i, 0), def.info.n_u);
        obj = obj + h * def.running_cost(data[k].times[i], x, y, u, p);
      }
      if (def.mayer) {
        const auto xf = slice(z, layout.x_index(k, ne, 0), def.info.n_x);
        obj = obj + def.mayer(xf, p);
      }
      if (def.minimum_time) obj = obj + z[layout.duration_index(k)];
    }
    if (mode.penalty()) {
      ad::Var total = 0.0;
      for (int k = 0; k < layout.num_phases(); ++k) {
        const OCPDefinition& def = *data[k].def;
        for (int i = 1; i <= def.info.elements; ++i) {
          for (int l = 0; l < def.info.n_c; ++l) total = total + pair_term(z, k, i, l);
        }
      }
      obj = obj + mode.rho * total;
    }
    return std::vector<ad::Var>{obj};
  };
  nlp.objective = ad::record(n, obj_fn, z0s);

  return {std::move(nlp), std::move(layout)};
}

}  // namespace

std::pair<NLPProblem, VariableLayout> build_nlp(const OCPDefinition& def,
                                                const RelaxationMode& mode) {
  return build_core({&def}, {}, mode);
}

std::pair<NLPProblem, VariableLayout> build_minimum_time(const OCPDefinition& def,
                                                         const RelaxationMode& mode) {
  if (!std::holds_alternative<FreeDuration>(def.info.horizon)) {
    throw StructuralError("build_minimum_time requires a free-duration horizon");
  }
  OCPDefinition min_time = def;
  min_time.minimum_time = true;
  return build_core({&min_time}, {}, mode);
}

std::pair<NLPProblem, VariableLayout> build_multiphase(const PhaseSequence& seq,
                                                       const RelaxationMode& mode) {
  if (seq.phases.empty()) throw StructuralError("phase sequence is empty");
  std::vector<const OCPDefinition*> phases;
  for (const auto& def : seq.phases) phases.push_back(&def);
  return build_core(phases, seq.carried, mode);
}

Eigen::VectorXd initial_guess_vector(const OCPDefinition& def,
                                     const VariableLayout& layout) {
  return guess_core({&def}, layout);
}

Eigen::VectorXd initial_guess_vector(const PhaseSequence& seq,
                                     const VariableLayout& layout) {
  std::vector<const OCPDefinition*> phases;
  for (const auto& def : seq.phases) phases.push_back(&def);
  return guess_core(phases, layout);
}

namespace {

Trajectory extract_phase(const VariableLayout& layout, int k, const Eigen::VectorXd& z,
                         const OCPDefinition& def, const Eigen::VectorXd& x0) {
  if (z.size() != layout.n()) throw Error("extract_trajectory: wrong vector length");
  const int ne = def.info.elements;
  Trajectory traj;
  traj.times.resize(ne + 1);
  if (layout.duration_index(k) >= 0) {
    const double T = z[layout.duration_index(k)];
    for (int i = 0; i <= ne; ++i) traj.times[i] = T * i / ne;
  } else {
    const auto& grid = std::get<FixedGrid>(def.info.horizon);
    traj.times[0] = grid.t0;
    for (int i = 0; i < ne; ++i) traj.times[i + 1] = traj.times[i] + grid.h[i];
  }
  traj.x.resize(ne + 1, def.info.n_x);
  traj.xdot.resize(ne, def.info.n_x);
  traj.y.resize(ne, def.info.n_y);
  traj.u.resize(ne, def.info.n_u);
  traj.params.resize(def.info.n_p);
  traj.x.row(0) = x0.transpose();
  for (int i = 1; i <= ne; ++i) {
    for (int j = 0; j < def.info.n_x; ++j) {
      traj.x(i, j) = z[layout.x_index(k, i, j)];
      traj.xdot(i - 1, j) = z[layout.xdot_index(k, i, j)];
    }
    for (int j = 0; j < def.info.n_y; ++j) traj.y(i - 1, j) = z[layout.y_index(k, i, j)];
    for (int j = 0; j < def.info.n_u; ++j) traj.u(i - 1, j) = z[layout.u_index(k, i, j)];
  }
  for (int j = 0; j < def.info.n_p; ++j) traj.params[j] = z[layout.param_index(k, j)];
  return traj;
}

}  // namespace

Trajectory extract_trajectory(const VariableLayout& layout, const Eigen::VectorXd& z,
                              const OCPDefinition& def) {
  return extract_phase(layout, 0, z, def, def.initial_state);
}

Eigen::VectorXd pack(const VariableLayout& layout, const Trajectory& traj) {
  Eigen::VectorXd z = Eigen::VectorXd::Zero(layout.n());
  const auto& ph = layout.phase(0);
  for (int i = 1; i <= ph.elements; ++i) {
    for (int j = 0; j < ph.n_x; ++j) {
      z[layout.x_index(0, i, j)] = traj.x(i, j);
      z[layout.xdot_index(0, i, j)] = traj.xdot(i - 1, j);
    }
    for (int j = 0; j < ph.n_y; ++j) z[layout.y_index(0, i, j)] = traj.y(i - 1, j);
    for (int j = 0; j < ph.n_u; ++j) z[layout.u_index(0, i, j)] = traj.u(i - 1, j);
  }
  for (int j = 0; j < ph.n_p; ++j) z[layout.param_index(0, j)] = traj.params[j];
  if (ph.duration >= 0) z[ph.duration] = traj.times[ph.elements] - traj.times[0];
  return z;
}

std::vector<Trajectory> extract_phases(const VariableLayout& layout,
                                       const Eigen::VectorXd& z, const PhaseSequence& seq) {
  std::vector<Trajectory> out;
  for (int k = 0; k < layout.num_phases(); ++k) {
    const OCPDefinition& def = seq.phases[k];
    Eigen::VectorXd x0 = def.initial_state;
    if (k > 0) {
      for (const auto& [src, dst] : seq.carried[k - 1]) {
        x0[dst] = z[layout.x_index(k - 1, seq.phases[k - 1].info.elements, src)];
      }
    }
    Trajectory traj = extract_phase(layout, k, z, def, x0);
    if (k > 0) {
      const double shift = out.back().times[out.back().times.size() - 1] - traj.times[0];
      traj.times.array() += shift;
    }
    out.push_back(std::move(traj));
  }
  return out;
}

double complementarity_residual(const Trajectory& traj, const OCPDefinition& def) {
  if (def.complementarity.empty()) return 0.0;
  const auto times = def.grid_times();
  double worst = 0.0;
  for (int i = 1; i <= def.info.elements; ++i) {
    const BoundsSpec b = def.bounds(times[i]);
    const Eigen::VectorXd y = traj.y.row(i - 1).transpose();
    const Eigen::VectorXd terms = complementarity_terms(def.complementarity, y, b);
    for (Eigen::Index l = 0; l < terms.size(); ++l) {
      worst = std::max(worst, terms[l]);
    }
  }
  return worst;
}

}  // namespace mpcc

// Copyright (c) mpcc_opt contributors
#include "mpcc/ocp.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace mpcc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_pair(ValidationReport& rep, const Eigen::VectorXd& lb, const Eigen::VectorXd& ub,
                int expect, const char* what) {
  if (lb.size() != expect || ub.size() != expect) {
    std::ostringstream os;
    os << what << " bounds have wrong length (" << lb.size() << "/" << ub.size()
       << ", expected " << expect << ")";
    rep.problems.push_back(os.str());
    return;
  }
  for (int i = 0; i < expect; ++i) {
    if (lb[i] > ub[i]) {
      std::ostringstream os;
      os << what << " bounds inverted at component " << i;
      rep.problems.push_back(os.str());
      return;
    }
  }
}

}  // namespace

FixedGrid FixedGrid::uniform(double t0, double tf, int elements) {
  FixedGrid g;
  g.t0 = t0;
  g.h.assign(static_cast<std::size_t>(elements), (tf - t0) / elements);
  return g;
}

double FixedGrid::tf() const {
  double t = t0;
  for (double hi : h) t += hi;
  return t;
}

BoundsSpec BoundsSpec::unbounded(int n_x, int n_y, int n_u) {
  BoundsSpec b;
  b.x_lb = Eigen::VectorXd::Constant(n_x, -kInf);
  b.x_ub = Eigen::VectorXd::Constant(n_x, kInf);
  b.xdot_lb = Eigen::VectorXd::Constant(n_x, -kInf);
  b.xdot_ub = Eigen::VectorXd::Constant(n_x, kInf);
  b.y_lb = Eigen::VectorXd::Constant(n_y, -kInf);
  b.y_ub = Eigen::VectorXd::Constant(n_y, kInf);
  b.u_lb = Eigen::VectorXd::Constant(n_u, -kInf);
  b.u_ub = Eigen::VectorXd::Constant(n_u, kInf);
  return b;
}

std::vector<double> OCPDefinition::grid_times() const {
  std::vector<double> t(static_cast<std::size_t>(info.elements) + 1);
  if (const auto* fixed = std::get_if<FixedGrid>(&info.horizon)) {
    t[0] = fixed->t0;
    for (int i = 0; i < info.elements; ++i) t[i + 1] = t[i] + fixed->h[i];
  } else {
    const auto& free = std::get<FreeDuration>(info.horizon);
    const double span = 0.5 * (free.lower + free.upper);
    for (int i = 0; i <= info.elements; ++i) t[i] = span * i / info.elements;
  }
  return t;
}

std::string ValidationReport::joined() const {
  std::string all;
  for (const auto& p : problems) {
    if (!all.empty()) all += "; ";
    all += p;
  }
  return all;
}

ValidationReport validate_definition(const OCPDefinition& def) {
  ValidationReport rep;
  const OCPInfo& info = def.info;

  if (info.n_x < 0 || info.n_y < 0 || info.n_u < 0 || info.n_p < 0 || info.n_c < 0) {
    rep.problems.push_back("negative dimension count");
  }
  if (info.elements < 1) rep.problems.push_back("element count must be at least 1");
  if (info.n_c > info.n_y) {
    rep.problems.push_back("more complementarity pairs than algebraic variables");
  }
  if (static_cast<int>(def.complementarity.size()) != info.n_c) {
    rep.problems.push_back("complementarity pair list does not match n_c");
  }

  if (const auto* fixed = std::get_if<FixedGrid>(&info.horizon)) {
    if (static_cast<int>(fixed->h.size()) != info.elements) {
      rep.problems.push_back("element width list does not match the element count");
    }
    for (double hi : fixed->h) {
      if (!(hi > 0.0)) {
        rep.problems.push_back("non-positive element width");
        break;
      }
    }
    if (def.minimum_time) {
      rep.problems.push_back("minimum-time objective requires a free-duration horizon");
    }
  } else {
    const auto& free = std::get<FreeDuration>(info.horizon);
    if (!(free.lower > 0.0) || free.lower > free.upper) {
      rep.problems.push_back("free-duration bounds must satisfy 0 < lower <= upper");
    }
  }

  if (def.initial_state.size() != info.n_x) {
    rep.problems.push_back("initial state has wrong length");
  }
  if (!def.bounds) rep.problems.push_back("bounds evaluator missing");
  if (!def.dynamics) rep.problems.push_back("dynamics evaluator missing");
  if (!def.running_cost) rep.problems.push_back("running cost evaluator missing");
  if (!def.initial_guess) rep.problems.push_back("initial guess evaluator missing");
  if (info.n_p > 0 && def.p_guess.size() != info.n_p) {
    rep.problems.push_back("missing parameter initial guess");
  }

  const std::vector<double> times = def.grid_times();

  if (def.bounds) {
    bool missing_p = false;
    bool nonfinite_pair = false;
    bool bad_index = false;
    bool first = true;
    for (double t : times) {
      BoundsSpec b = def.bounds(t);
      if (first) {  // shapes are time-invariant; check them once
        check_pair(rep, b.x_lb, b.x_ub, info.n_x, "state");
        check_pair(rep, b.xdot_lb, b.xdot_ub, info.n_x, "state-derivative");
        check_pair(rep, b.y_lb, b.y_ub, info.n_y, "algebraic");
        check_pair(rep, b.u_lb, b.u_ub, info.n_u, "control");
        if (b.x_final_lb.size() > 0 || b.x_final_ub.size() > 0) {
          check_pair(rep, b.x_final_lb, b.x_final_ub, info.n_x, "final-state");
        }
        if (info.n_p > 0) {
          if (b.p_lb.size() == 0 && b.p_ub.size() == 0) {
            missing_p = true;
          } else {
            check_pair(rep, b.p_lb, b.p_ub, info.n_p, "parameter");
          }
        }
        first = false;
      }
      if (b.y_lb.size() != info.n_y || b.y_ub.size() != info.n_y) continue;
      for (const ComplementarityPair& pair : def.complementarity) {
        if (pair.idx_a < 0 || pair.idx_a >= info.n_y || pair.idx_b < 0 ||
            pair.idx_b >= info.n_y) {
          bad_index = true;
          continue;
        }
        const double nu_a =
            pair.side_a == BoundSide::kLower ? b.y_lb[pair.idx_a] : b.y_ub[pair.idx_a];
        const double nu_b =
            pair.side_b == BoundSide::kLower ? b.y_lb[pair.idx_b] : b.y_ub[pair.idx_b];
        if (!std::isfinite(nu_a) || !std::isfinite(nu_b)) nonfinite_pair = true;
      }
    }
    if (missing_p) rep.problems.push_back("missing parameter bounds");
    if (bad_index) rep.problems.push_back("complementarity index out of range");
    if (nonfinite_pair) rep.problems.push_back("non-finite complementarity bound");
  }

  // Residual length: record the dynamics on a probe to count outputs.
  if (def.dynamics) {
    const int expect = info.residual_dim();
    try {
      const int n_in = 2 * info.n_x + info.n_y + info.n_u + info.n_p;
      ad::Tape probe = ad::record(n_in, [&](std::span<const ad::Var> z) {
        std::vector<ad::Var> out(static_cast<std::size_t>(std::max(expect, 0)));
        auto xdot = z.subspan(0, info.n_x);
        auto x = z.subspan(info.n_x, info.n_x);
        auto y = z.subspan(2 * info.n_x, info.n_y);
        auto u = z.subspan(2 * info.n_x + info.n_y, info.n_u);
        auto p = z.subspan(2 * info.n_x + info.n_y + info.n_u, info.n_p);
        def.dynamics(times.front(), xdot, x, y, u, p, out);
        return out;
      });
      (void)probe;
    } catch (const std::exception& e) {
      rep.problems.push_back(std::string("dynamics evaluator failed on a probe: ") +
                             e.what());
    }
  }

  return rep;
}

double nrmse(const Trajectory& observed, const Trajectory& predicted,
             std::span<const int> channels) {
  if (observed.x.rows() != predicted.x.rows() || observed.x.cols() != predicted.x.cols()) {
    throw Error("nrmse: trajectories disagree on shape");
  }
  if (observed.times.size() != predicted.times.size() ||
      (observed.times.size() > 0 &&
       (observed.times - predicted.times).cwiseAbs().maxCoeff() > 0.0)) {
    throw Error("nrmse: trajectories disagree on the time grid");
  }
  if (channels.empty()) throw Error("nrmse: no channels selected");

  const Eigen::Index rows = observed.x.rows();
  double acc = 0.0;
  for (int c : channels) {
    if (c < 0 || c >= observed.x.cols()) throw Error("nrmse: channel out of range");
    const double range = observed.x.col(c).maxCoeff() - observed.x.col(c).minCoeff();
    if (!(range > 0.0)) {
      throw EvaluationError("nrmse: zero-range channel makes the normalization degenerate");
    }
    const double mse = (observed.x.col(c) - predicted.x.col(c)).squaredNorm() /
                       static_cast<double>(rows);
    acc += std::sqrt(mse) / range;
  }
  return acc / static_cast<double>(channels.size());
}

}  // namespace mpcc

// Copyright (c) mpcc_opt contributors
#include "mpcc/problems.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <random>

#include "json.hpp"
#include "mpcc/csv.hpp"

namespace mpcc::problems {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kPi = 3.14159265358979323846;

using ad::Var;

// Body-frame wrench of a point push on face k (0 left, 1 top, 2 right,
// 3 bottom) at offset p along the face; the torque -a/2*f_t - p*f_n is
// rotation invariant.
void face_wrench(const PusherSliderParams& P, int face, const Var& f_n, const Var& f_t,
                 const Var& p_along, Var w[3]) {
  const double psi = face * (kPi / 2.0);
  const double cs = std::cos(psi), sn = std::sin(psi);
  w[0] = cs * f_n - sn * f_t;
  w[1] = sn * f_n + cs * f_t;
  w[2] = (-0.5 * P.side) * f_t - p_along * f_n;
}

// World-frame twist rows: out[i] -= R(theta) * (2 L w).
void twist_rows(const PusherSliderParams& P, const Var w[3], const Var& theta,
                Var rows[3]) {
  const double inv_f2 = 2.0 / (P.f_max * P.f_max);
  const double inv_t2 = 2.0 / (P.tau_max * P.tau_max);
  const Var vx = w[0] * inv_f2;
  const Var vy = w[1] * inv_f2;
  const Var ct = ad::cos(theta), st = ad::sin(theta);
  rows[0] = ct * vx - st * vy;
  rows[1] = st * vx + ct * vy;
  rows[2] = w[2] * inv_t2;
}

}  // namespace

Eigen::Vector3d limit_surface_twist(const Eigen::Vector3d& wrench,
                                    const PusherSliderParams& params) {
  const double f2 = params.f_max * params.f_max;
  const double t2 = params.tau_max * params.tau_max;
  return {2.0 * wrench[0] / f2, 2.0 * wrench[1] / f2, 2.0 * wrench[2] / t2};
}

void pusher_slider_residual(std::span<const Var> xdot, std::span<const Var> x,
                            std::span<const Var> y, std::span<const Var> u,
                            const PusherSliderParams& params, std::span<Var> out) {
  const Var& f_n = u[0];
  const Var& f_t = u[1];
  Var w[3], rows[3];
  face_wrench(params, 0, f_n, f_t, x[3], w);
  twist_rows(params, w, x[2], rows);
  out[0] = xdot[0] - rows[0];
  out[1] = xdot[1] - rows[1];
  out[2] = xdot[2] - rows[2];
  out[3] = xdot[3] - (y[0] - y[1]);                  // p_y rate from the slip split
  out[4] = y[2] - (params.mu_p * f_n - f_t);         // s_a
  out[5] = y[3] - (params.mu_p * f_n + f_t);         // s_b
}

OCPDefinition pusher_goal_ocp(const Eigen::Vector4d& x_init, const Eigen::Vector3d& goal,
                              int elements, double horizon,
                              const PusherSliderParams& params) {
  OCPDefinition def;
  def.info.n_x = 4;
  def.info.n_y = 4;
  def.info.n_u = 2;
  def.info.n_c = 2;
  def.info.elements = elements;
  def.info.horizon = FixedGrid::uniform(0.0, horizon, elements);
  def.initial_state = x_init;
  def.complementarity = {
      ComplementarityPair{0, 2, BoundSide::kLower, BoundSide::kLower},  // pdot+ ⟂ s_a
      ComplementarityPair{1, 3, BoundSide::kLower, BoundSide::kLower},  // pdot- ⟂ s_b
  };

  BoundsSpec b = BoundsSpec::unbounded(4, 4, 2);
  b.x_lb[3] = -0.5 * params.side;
  b.x_ub[3] = 0.5 * params.side;
  b.y_lb << 0.0, 0.0, 0.0, 0.0;
  b.y_ub[0] = params.p_dot_max;
  b.y_ub[1] = params.p_dot_max;
  b.u_lb << 0.0, -params.mu_p * params.f_n_max;
  b.u_ub << params.f_n_max, params.mu_p * params.f_n_max;
  b.x_final_lb.resize(4);
  b.x_final_ub.resize(4);
  b.x_final_lb << goal[0] - 5e-4, goal[1] - 5e-4, goal[2] - 5e-4, -0.5 * params.side;
  b.x_final_ub << goal[0] + 5e-4, goal[1] + 5e-4, goal[2] + 5e-4, 0.5 * params.side;
  def.bounds = [b](double) { return b; };

  def.dynamics = [params](double, std::span<const Var> xdot, std::span<const Var> x,
                          std::span<const Var> y, std::span<const Var> u,
                          std::span<const Var>, std::span<Var> out) {
    pusher_slider_residual(xdot, x, y, u, params, out);
  };
  def.running_cost = [goal](double, std::span<const Var> x, std::span<const Var> y,
                            std::span<const Var> u, std::span<const Var>) {
    const Var ex = x[0] - goal[0];
    const Var ey = x[1] - goal[1];
    const Var et = x[2] - goal[2];
    return ex * ex + ey * ey + 0.2 * (et * et) + 0.1 * (u[0] * u[0] + u[1] * u[1]) +
           0.1 * (y[0] * y[0] + y[1] * y[1]);
  };
  const Eigen::Vector4d xi = x_init;
  const Eigen::Vector3d g = goal;
  const double T = horizon;
  const double mu_p = params.mu_p;
  def.initial_guess = [xi, g, T, mu_p](double t, std::span<double> x, std::span<double> xd,
                                       std::span<double> y, std::span<double> u) {
    const double s = std::clamp(t / T, 0.0, 1.0);
    x[0] = (1.0 - s) * xi[0] + s * g[0];
    x[1] = (1.0 - s) * xi[1] + s * g[1];
    x[2] = (1.0 - s) * xi[2] + s * g[2];
    x[3] = xi[3];
    xd[0] = (g[0] - xi[0]) / T;
    xd[1] = (g[1] - xi[1]) / T;
    xd[2] = (g[2] - xi[2]) / T;
    xd[3] = 0.0;
    y[0] = 0.02;
    y[1] = 0.02;
    u[0] = 0.25;
    u[1] = 0.0;
    y[2] = mu_p * u[0] - u[1];
    y[3] = mu_p * u[0] + u[1];
  };
  return def;
}

OCPDefinition pusher_sticking_phase(int face, const Eigen::Vector3d& x_init,
                                    int elements, double t_lower, double t_upper,
                                    const PusherSliderParams& params) {
  OCPDefinition def;
  def.info.n_x = 3;
  def.info.n_y = 2;  // friction-cone slacks
  def.info.n_u = 2;
  def.info.elements = elements;
  def.info.horizon = FreeDuration{t_lower, t_upper};
  def.minimum_time = true;
  def.initial_state = x_init;

  BoundsSpec b = BoundsSpec::unbounded(3, 2, 2);
  b.y_lb << 0.0, 0.0;
  b.u_lb << 0.0, -params.mu_p * params.f_n_max;
  b.u_ub << params.f_n_max, params.mu_p * params.f_n_max;
  def.bounds = [b](double) { return b; };

  def.dynamics = [params, face](double, std::span<const Var> xdot, std::span<const Var> x,
                                std::span<const Var> y, std::span<const Var> u,
                                std::span<const Var>, std::span<Var> out) {
    Var w[3], rows[3];
    face_wrench(params, face, u[0], u[1], Var(0.0), w);
    twist_rows(params, w, x[2], rows);
    out[0] = xdot[0] - rows[0];
    out[1] = xdot[1] - rows[1];
    out[2] = xdot[2] - rows[2];
    out[3] = y[0] - (params.mu_p * u[0] - u[1]);
    out[4] = y[1] - (params.mu_p * u[0] + u[1]);
  };
  def.running_cost = [](double, std::span<const Var>, std::span<const Var>,
                        std::span<const Var> u, std::span<const Var>) {
    return 1e-3 * (u[0] * u[0] + u[1] * u[1]);
  };
  const Eigen::Vector3d xi = x_init;
  const double mu_p = params.mu_p;
  def.initial_guess = [xi, mu_p](double, std::span<double> x, std::span<double> xd,
                                 std::span<double> y, std::span<double> u) {
    x[0] = xi[0];
    x[1] = xi[1];
    x[2] = xi[2];
    xd[0] = xd[1] = xd[2] = 0.0;
    u[0] = 0.2;
    u[1] = 0.0;
    y[0] = mu_p * u[0];
    y[1] = mu_p * u[0];
  };
  return def;
}

PhaseSequence pusher_mode_sequence(const std::vector<int>& faces,
                                   const Eigen::Vector3d& x_init,
                                   const Eigen::Vector3d& goal, int elements_per_phase,
                                   double t_lower, double t_upper,
                                   const PusherSliderParams& params) {
  PhaseSequence seq;
  for (std::size_t k = 0; k < faces.size(); ++k) {
    OCPDefinition phase = pusher_sticking_phase(
        faces[k], k == 0 ? x_init : Eigen::Vector3d::Zero(), elements_per_phase, t_lower,
        t_upper, params);
    if (k + 1 == faces.size()) {
      OCPDefinition pinned = phase;
      const std::function<BoundsSpec(double)> base = phase.bounds;
      const Eigen::Vector3d g = goal;
      pinned.bounds = [base, g](double t) {
        BoundsSpec b = base(t);
        b.x_final_lb = g.array() - 5e-4;
        b.x_final_ub = g.array() + 5e-4;
        return b;
      };
      phase = pinned;
    }
    seq.phases.push_back(std::move(phase));
    if (k > 0) seq.carried.push_back({{0, 0}, {1, 1}, {2, 2}});
  }
  return seq;
}

// ---------------------------------------------------------------------------
// Cart-pole with soft walls
// ---------------------------------------------------------------------------

LCSModel make_cartpole_lcs(const Eigen::Vector3d& params,
                           const CartpoleConstants& k) {
  const double m_p = params[0], k1 = params[1], k2 = params[2];
  LCSModel m;
  m.params = params;
  // Linearized about the hanging pole (stable), so open-loop excitation
  // stays bounded while the tip still reaches both walls.
  m.A.setZero();
  m.A(0, 2) = 1.0;
  m.A(1, 3) = 1.0;
  m.A(2, 1) = -k.gravity * m_p / k.m_c;
  m.A(3, 1) = -k.gravity * (k.m_c + m_p) / (k.m_c * k.length);
  m.B << 0.0, 0.0, 1.0 / k.m_c, 1.0 / (k.m_c * k.length);
  m.D.setZero();
  m.D(3, 0) = 1.0 / (m_p * k.length);
  m.D(3, 1) = -1.0 / (m_p * k.length);
  m.E << -1.0, k.length, 0.0, 0.0,
         1.0, -k.length, 0.0, 0.0;
  m.F = Eigen::Vector2d(1.0 / k1, 1.0 / k2).asDiagonal();
  m.c << k.wall_offset, k.wall_offset;
  return m;
}

void cartpole_softwall_residual(std::span<const Var> xdot, std::span<const Var> x,
                                std::span<const Var> y, std::span<const Var> u,
                                std::span<const Var> p,
                                const CartpoleConstants& k, std::span<Var> out) {
  const Var& m_p = p[0];
  const Var tip = x[0] - k.length * x[1];
  out[0] = xdot[0] - x[2];
  out[1] = xdot[1] - x[3];
  out[2] = xdot[2] - ((-k.gravity / k.m_c) * (m_p * x[1]) + u[0] * (1.0 / k.m_c));
  out[3] = xdot[3] - ((-k.gravity / (k.m_c * k.length)) * ((k.m_c + m_p) * x[1]) +
                      u[0] * (1.0 / (k.m_c * k.length)) +
                      (y[0] - y[1]) / (m_p * k.length));
  out[4] = y[2] - (y[0] / p[1] + k.wall_offset - tip);
  out[5] = y[3] - (y[1] / p[2] + k.wall_offset + tip);
}

Trajectory simulate_lcs(const LCSModel& model, const Eigen::Vector4d& x0,
                        const Eigen::MatrixXd& u_seq, double h, int steps) {
  if (u_seq.rows() < steps || u_seq.cols() != 1) {
    throw Error("simulate_lcs: input sequence must be steps x 1");
  }
  Trajectory traj;
  traj.times = Eigen::VectorXd::LinSpaced(steps + 1, 0.0, h * steps);
  for (int i = 0; i <= steps; ++i) traj.times[i] = h * i;
  traj.x.resize(steps + 1, 4);
  traj.xdot.resize(steps, 4);
  traj.y.resize(steps, 4);
  traj.u = u_seq.topRows(steps);
  traj.params = model.params;
  traj.x.row(0) = x0.transpose();

  const Eigen::Matrix4d M = Eigen::Matrix4d::Identity() - h * model.A;
  const Eigen::Matrix4d Minv = M.inverse();
  const Eigen::Matrix<double, 2, 4> EM = model.E * Minv;
  const Eigen::Matrix2d W = EM * (h * model.D) + model.F;

  Eigen::Vector4d x = x0;
  constexpr double kTol = 1e-10;
  for (int i = 0; i < steps; ++i) {
    const double u = u_seq(i, 0);
    const Eigen::Vector4d base = x + h * model.B * u;
    const Eigen::Vector2d q = EM * base + model.c;

    // Active-set enumeration over the two contacts.
    bool found = false;
    int chosen = 0;
    Eigen::Vector2d lambda = Eigen::Vector2d::Zero();
    for (int set = 0; set < 4 && !found; ++set) {
      Eigen::Vector2d lam = Eigen::Vector2d::Zero();
      bool valid = true;
      if (set == 1) {
        if (std::abs(W(0, 0)) < 1e-14) continue;
        lam[0] = -q[0] / W(0, 0);
        valid = lam[0] >= -kTol;
      } else if (set == 2) {
        if (std::abs(W(1, 1)) < 1e-14) continue;
        lam[1] = -q[1] / W(1, 1);
        valid = lam[1] >= -kTol;
      } else if (set == 3) {
        const double det = W.determinant();
        if (std::abs(det) < 1e-14) continue;
        lam = W.fullPivLu().solve(-q);
        valid = lam[0] >= -kTol && lam[1] >= -kTol;
      }
      if (!valid) continue;
      const Eigen::Vector2d gap = q + W * lam;
      if (gap[0] >= -kTol && gap[1] >= -kTol) {
        lambda = lam.cwiseMax(0.0);
        chosen = set;
        found = true;
      }
    }
    if (!found) throw Error("simulate_lcs: no consistent contact set");

    const Eigen::Vector4d x_next = Minv * (base + h * model.D * lambda);
    const Eigen::Vector2d gap = model.E * x_next + model.F * lambda + model.c;
    traj.x.row(i + 1) = x_next.transpose();
    traj.xdot.row(i) = ((x_next - x) / h).transpose();
    traj.y(i, 0) = lambda[0];
    traj.y(i, 1) = lambda[1];
    // active gaps are zero by definition of the active set
    traj.y(i, 2) = (chosen & 1) ? 0.0 : std::max(gap[0], 0.0);
    traj.y(i, 3) = (chosen & 2) ? 0.0 : std::max(gap[1], 0.0);
    x = x_next;
  }
  return traj;
}

SysIdDataset generate_sysid_data(const Eigen::Vector3d& true_params, double sigma,
                                 std::uint64_t seed, int steps, double h,
                                 const Eigen::Vector4d& x0,
                                 const CartpoleConstants& constants) {
  SysIdDataset data;
  data.sigma = sigma;
  data.seed = seed;
  data.true_params = true_params;
  data.h = h;
  data.constants = constants;
  data.x0 = x0;

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> amp(0.5, 2.0);
  std::uniform_real_distribution<double> freq(0.5, 3.0);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * kPi);
  double a[3], w[3], ph[3];
  for (int j = 0; j < 3; ++j) {
    a[j] = amp(rng);
    w[j] = freq(rng);
    ph[j] = phase(rng);
  }
  Eigen::MatrixXd u_seq(steps, 1);
  for (int i = 0; i < steps; ++i) {
    const double t = h * i;
    u_seq(i, 0) = a[0] * std::sin(w[0] * t + ph[0]) + a[1] * std::sin(w[1] * t + ph[1]) +
                  a[2] * std::sin(w[2] * t + ph[2]);
  }

  const LCSModel model = make_cartpole_lcs(true_params, constants);
  data.observed = simulate_lcs(model, x0, u_seq, h, steps);
  if (sigma > 0.0) {
    std::normal_distribution<double> noise(0.0, sigma);
    for (int i = 0; i <= steps; ++i) {
      for (int c = 0; c < 4; ++c) data.observed.x(i, c) += noise(rng);
    }
  }
  return data;
}

OCPDefinition build_sysid_ocp(const SysIdDataset& dataset, const Eigen::Vector3d& p_lb,
                              const Eigen::Vector3d& p_ub,
                              const Eigen::Vector3d& p_guess) {
  const int steps = static_cast<int>(dataset.observed.u.rows());
  const double h = dataset.h;

  OCPDefinition def;
  def.info.n_x = 4;
  def.info.n_y = 4;
  def.info.n_u = 1;
  def.info.n_p = 3;
  def.info.n_c = 2;
  def.info.elements = steps;
  def.info.horizon = FixedGrid::uniform(0.0, h * steps, steps);
  def.initial_state = dataset.observed.x.row(0).transpose();
  def.complementarity = {
      ComplementarityPair{0, 2, BoundSide::kLower, BoundSide::kLower},
      ComplementarityPair{1, 3, BoundSide::kLower, BoundSide::kLower},
  };
  def.p_guess = p_guess;

  const Trajectory observed = dataset.observed;  // captured by value
  auto input_at = [observed, h, steps](double t) {
    const int i = std::clamp(static_cast<int>(std::lround(t / h)), 0, steps - 1);
    return observed.u(i, 0);
  };
  const Eigen::Vector3d lo = p_lb, hi = p_ub;
  def.bounds = [observed, input_at, lo, hi](double t) {
    BoundsSpec b = BoundsSpec::unbounded(4, 4, 1);
    b.y_lb.setZero();  // contact forces and gaps are nonnegative
    const double u = input_at(t);
    b.u_lb[0] = u;
    b.u_ub[0] = u;  // controls pinned to the recorded inputs
    b.p_lb = lo;
    b.p_ub = hi;
    return b;
  };

  const CartpoleConstants constants = dataset.constants;
  def.dynamics = [constants](double, std::span<const Var> xdot, std::span<const Var> x,
                             std::span<const Var> y, std::span<const Var> u,
                             std::span<const Var> p, std::span<Var> out) {
    cartpole_softwall_residual(xdot, x, y, u, p, constants, out);
  };
  def.running_cost = [observed, h, steps](double t, std::span<const Var> x,
                                          std::span<const Var>, std::span<const Var>,
                                          std::span<const Var>) {
    const int i = std::clamp(static_cast<int>(std::lround(t / h)), 0, steps);
    Var acc = 0.0;
    for (int c = 0; c < 4; ++c) {
      const Var e = x[c] - observed.x(i, c);
      acc = acc + e * e;
    }
    return acc;
  };
  const Eigen::Vector3d pg = p_guess;
  def.initial_guess = [observed, h, steps, constants, pg](double t, std::span<double> x,
                                                          std::span<double> xd,
                                                          std::span<double> y,
                                                          std::span<double> u) {
    const int i = std::clamp(static_cast<int>(std::lround(t / h)), 0, steps);
    for (int c = 0; c < 4; ++c) x[c] = observed.x(i, c);
    for (int c = 0; c < 4; ++c) {
      xd[c] = i > 0 ? (observed.x(i, c) - observed.x(i - 1, c)) / h : 0.0;
    }
    const double tip = x[0] - constants.length * x[1];
    const double pen1 = tip - constants.wall_offset;
    const double pen2 = -tip - constants.wall_offset;
    y[0] = pen1 > 0.0 ? pg[1] * pen1 : 0.0;
    y[1] = pen2 > 0.0 ? pg[2] * pen2 : 0.0;
    y[2] = std::max(constants.wall_offset - tip + y[0] / pg[1], 0.0);
    y[3] = std::max(constants.wall_offset + tip + y[1] / pg[2], 0.0);
    u[0] = observed.u(std::min(i, steps - 1), 0);
  };
  return def;
}

void write_dataset(const std::string& csv_path, const std::string& json_path,
                   const SysIdDataset& dataset, bool reveal_truth) {
  std::ofstream csv(csv_path);
  if (!csv) throw Error("cannot open " + csv_path);
  const int n_x = static_cast<int>(dataset.observed.x.cols());
  const int n_u = static_cast<int>(dataset.observed.u.cols());
  csv << "t";
  for (int c = 0; c < n_x; ++c) csv << ",x" << c;
  for (int c = 0; c < n_u; ++c) csv << ",u" << c;
  csv << "\n";
  const int rows = static_cast<int>(dataset.observed.x.rows());
  for (int i = 0; i < rows; ++i) {
    csv << format_double(dataset.observed.times[i]);
    for (int c = 0; c < n_x; ++c) csv << "," << format_double(dataset.observed.x(i, c));
    for (int c = 0; c < n_u; ++c) {
      csv << ",";
      if (i < dataset.observed.u.rows()) csv << format_double(dataset.observed.u(i, c));
    }
    csv << "\n";
  }

  nlohmann::json meta;
  meta["sigma"] = dataset.sigma;
  meta["seed"] = dataset.seed;
  meta["h"] = dataset.h;
  meta["steps"] = rows - 1;
  if (reveal_truth) {
    meta["true_params"] = {dataset.true_params[0], dataset.true_params[1],
                           dataset.true_params[2]};
  }
  std::ofstream js(json_path);
  if (!js) throw Error("cannot open " + json_path);
  js << meta.dump(2) << "\n";
}

// ---------------------------------------------------------------------------
// Analytic problems
// ---------------------------------------------------------------------------

OCPDefinition double_integrator_energy(int elements) {
  OCPDefinition def;
  def.info.n_x = 2;
  def.info.n_u = 1;
  def.info.elements = elements;
  def.info.horizon = FixedGrid::uniform(0.0, 1.0, elements);
  def.initial_state = Eigen::Vector2d(0.0, 0.0);
  BoundsSpec b = BoundsSpec::unbounded(2, 0, 1);
  b.x_final_lb = Eigen::Vector2d(1.0, 0.0);
  b.x_final_ub = Eigen::Vector2d(1.0, 0.0);
  def.bounds = [b](double) { return b; };
  def.dynamics = [](double, std::span<const Var> xd, std::span<const Var> x,
                    std::span<const Var>, std::span<const Var> u, std::span<const Var>,
                    std::span<Var> out) {
    out[0] = xd[0] - x[1];
    out[1] = xd[1] - u[0];
  };
  def.running_cost = [](double, std::span<const Var>, std::span<const Var>,
                        std::span<const Var> u, std::span<const Var>) {
    return u[0] * u[0];
  };
  def.initial_guess = [](double t, std::span<double> x, std::span<double> xd,
                         std::span<double>, std::span<double> u) {
    x[0] = t;
    x[1] = 1.0;
    xd[0] = 1.0;
    xd[1] = 0.0;
    u[0] = 0.0;
  };
  return def;
}

OCPDefinition double_integrator_min_time(int elements, double u_max) {
  OCPDefinition def;
  def.info.n_x = 2;
  def.info.n_u = 1;
  def.info.elements = elements;
  def.info.horizon = FreeDuration{0.2, 2.0};
  def.minimum_time = true;
  def.initial_state = Eigen::Vector2d(0.0, 0.0);
  BoundsSpec b = BoundsSpec::unbounded(2, 0, 1);
  b.u_lb[0] = -u_max;
  b.u_ub[0] = u_max;
  b.x_final_lb = Eigen::Vector2d(1.0, 0.0);
  b.x_final_ub = Eigen::Vector2d(1.0, 0.0);
  def.bounds = [b](double) { return b; };
  def.dynamics = [](double, std::span<const Var> xd, std::span<const Var> x,
                    std::span<const Var>, std::span<const Var> u, std::span<const Var>,
                    std::span<Var> out) {
    out[0] = xd[0] - x[1];
    out[1] = xd[1] - u[0];
  };
  def.running_cost = [](double, std::span<const Var>, std::span<const Var>,
                        std::span<const Var>, std::span<const Var>) { return Var(0.0); };
  def.initial_guess = [](double t, std::span<double> x, std::span<double> xd,
                         std::span<double>, std::span<double> u) {
    const double s = std::clamp(t / 1.1, 0.0, 1.0);
    x[0] = s;
    x[1] = 1.0 - std::abs(2.0 * s - 1.0);
    xd[0] = x[1];
    xd[1] = 0.0;
    u[0] = 0.0;
  };
  return def;
}

ToyMpcc make_mpcc_toy(const RelaxationMode& mode) {
  ToyMpcc toy;
  NLPProblem& nlp = toy.nlp;
  nlp.n = 2;
  nlp.mode = mode;
  nlp.delta = mode.penalty() ? 0.0 : mode.delta;
  const double rho = mode.rho;
  const bool penalty = mode.penalty();
  nlp.objective = ad::record(2, [penalty, rho](std::span<const Var> x) -> std::vector<Var> {
    Var f = (x[0] - 1.0) * (x[0] - 1.0) + (x[1] - 1.0) * (x[1] - 1.0);
    if (penalty) f = f + rho * complementarity_product(x[0] - 0.0, x[1] - 0.0, 1.0);
    return {f};
  });
  nlp.equalities =
      ad::record(2, [](std::span<const Var>) { return std::vector<Var>{}; });
  nlp.ineq_terms = ad::record(2, [penalty](std::span<const Var> x) -> std::vector<Var> {
    if (penalty) return {};
    return {complementarity_product(x[0] - 0.0, x[1] - 0.0, 1.0)};
  });
  nlp.compl_terms = ad::record(2, [](std::span<const Var> x) -> std::vector<Var> {
    return {complementarity_product(x[0] - 0.0, x[1] - 0.0, 1.0)};
  });
  nlp.lb = Eigen::Vector2d(0.0, 0.0);
  nlp.ub = Eigen::Vector2d(kInf, kInf);
  return toy;
}

// ---------------------------------------------------------------------------
// Registry
// ---------------------------------------------------------------------------

std::vector<std::string> registered_names() {
  return {"pusher", "pusher-modes", "cartpole-softwall", "double-integrator", "mpcc-toy"};
}

std::vector<NamedNlp> default_nlp_suite() {
  std::vector<NamedNlp> out;
  const RelaxationMode barrier{RelaxationMode::Kind::kPerPairBarrier, 1e-6, 1.0};

  {
    OCPDefinition def = double_integrator_energy(20);
    auto [nlp, layout] = build_nlp(def, barrier);
    Eigen::VectorXd z0 = initial_guess_vector(def, layout);
    out.push_back({"double-integrator", std::move(nlp), std::move(z0)});
  }
  {
    OCPDefinition def = double_integrator_min_time(20);
    auto [nlp, layout] = build_nlp(def, barrier);
    Eigen::VectorXd z0 = initial_guess_vector(def, layout);
    out.push_back({"double-integrator-min-time", std::move(nlp), std::move(z0)});
  }
  {
    ToyMpcc toy = make_mpcc_toy(barrier);
    Eigen::VectorXd z0 = toy.start;
    out.push_back({"mpcc-toy", std::move(toy.nlp), std::move(z0)});
  }
  {
    OCPDefinition def = pusher_goal_ocp(Eigen::Vector4d(0, 0, 0, 0),
                                        Eigen::Vector3d(0.0, 0.5, kPi), 50, 1.0);
    auto [nlp, layout] = build_nlp(def, barrier);
    Eigen::VectorXd z0 = initial_guess_vector(def, layout);
    out.push_back({"pusher", std::move(nlp), std::move(z0)});
  }
  {
    PhaseSequence seq = pusher_mode_sequence({0, 1}, Eigen::Vector3d(0, 0, 0),
                                             Eigen::Vector3d(0, 0, kPi), 20, 0.05, 20.0);
    auto [nlp, layout] = build_multiphase(seq, barrier);
    Eigen::VectorXd z0 = initial_guess_vector(seq, layout);
    out.push_back({"pusher-modes", std::move(nlp), std::move(z0)});
  }
  {
    const Eigen::Vector3d truth(0.3, 120.0, 80.0);
    SysIdDataset data = generate_sysid_data(truth, 0.0, 7, 100, 0.01,
                                            Eigen::Vector4d(0.0, 0.15, 0.4, -0.6));
    OCPDefinition def = build_sysid_ocp(data, Eigen::Vector3d(0.1, 20.0, 20.0),
                                        Eigen::Vector3d(0.6, 400.0, 400.0),
                                        Eigen::Vector3d(0.35, 210.0, 210.0));
    auto [nlp, layout] = build_nlp(def, barrier);
    Eigen::VectorXd z0 = initial_guess_vector(def, layout);
    out.push_back({"cartpole-softwall", std::move(nlp), std::move(z0)});
  }
  return out;
}

}  // namespace mpcc::problems

#include <cmath>
#include <random>

#include "doctest.h"
#include "mpcc/problems.hpp"

using namespace mpcc;
using namespace mpcc::problems;
using ad::Var;

namespace {
constexpr double kPi = 3.14159265358979323846;
}

TEST_CASE("limit surface twist") {
  PusherSliderParams p;
  p.f_max = 1.0;
  p.tau_max = 1.0;
  const Eigen::Vector3d pure_n = limit_surface_twist({1.0, 0.0, 0.0}, p);
  CHECK(pure_n[0] == 2.0);
  CHECK(pure_n[1] == 0.0);
  CHECK(pure_n[2] == 0.0);

  const Eigen::Vector3d pure_rot = limit_surface_twist({0.0, 0.0, 1.0}, p);
  CHECK(pure_rot[0] == 0.0);
  CHECK(pure_rot[1] == 0.0);
  CHECK(pure_rot[2] == 2.0);

  PusherSliderParams q;
  q.f_max = 0.5;
  q.tau_max = 0.05;
  const Eigen::Vector3d mixed = limit_surface_twist({0.3, 0.1, 0.05}, q);
  CHECK(mixed[0] == doctest::Approx(2.4).epsilon(1e-14));
  CHECK(mixed[1] == doctest::Approx(0.8).epsilon(1e-14));
  CHECK(mixed[2] == doctest::Approx(40.0).epsilon(1e-14));

  // positively homogeneous of degree 1
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int it = 0; it < 50; ++it) {
    const Eigen::Vector3d w(u(rng), u(rng), u(rng));
    const double a = std::abs(u(rng)) + 0.1;
    const Eigen::Vector3d lhs = limit_surface_twist(a * w, q);
    const Eigen::Vector3d rhs = a * limit_surface_twist(w, q);
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() <= 1e-12 * rhs.cwiseAbs().maxCoeff());
  }
}

TEST_CASE("pusher residual: self-consistent points vanish") {
  PusherSliderParams P;
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  for (int it = 0; it < 20; ++it) {
    const double f_n = 0.4 * u01(rng) + 0.05;
    const double f_t = (2.0 * u01(rng) - 1.0) * P.mu_p * f_n * 0.9;
    const double p_y = (2.0 * u01(rng) - 1.0) * 0.04;
    const double theta = 2.0 * kPi * u01(rng);

    const Eigen::Vector3d w(f_n, f_t, -0.5 * P.side * f_t - p_y * f_n);
    const Eigen::Vector3d t_body = limit_surface_twist(w, P);
    const double ct = std::cos(theta), st = std::sin(theta);

    std::vector<Var> xdot{ct * t_body[0] - st * t_body[1], st * t_body[0] + ct * t_body[1],
                          t_body[2], 0.0};
    std::vector<Var> x{0.1, -0.2, theta, p_y};
    std::vector<Var> y{0.0, 0.0, P.mu_p * f_n - f_t, P.mu_p * f_n + f_t};
    std::vector<Var> uu{f_n, f_t};
    std::vector<Var> out(6);
    pusher_slider_residual(xdot, x, y, uu, P, out);
    // twist rows are O(100) rad/s at these limit-surface scales
    for (const Var& r : out) CHECK(std::abs(r.value) <= 1e-11);
  }
}

TEST_CASE("pusher residual: sticking keeps the contact point still") {
  PusherSliderParams P;
  // pdot+ = pdot- = 0 and |f_t| < mu f_n: slack rows positive, p_y frozen
  std::vector<Var> xdot{0.0, 0.0, 0.0, 0.0};
  std::vector<Var> x{0.0, 0.0, 0.0, 0.01};
  std::vector<Var> y{0.0, 0.0, 0.0, 0.0};
  std::vector<Var> u{0.3, 0.05};
  std::vector<Var> out(6);
  pusher_slider_residual(xdot, x, y, u, P, out);
  // slack definitions: s_a = mu f_n - f_t > 0, s_b = mu f_n + f_t > 0
  CHECK(-out[4].value == doctest::Approx(P.mu_p * 0.3 - 0.05));
  CHECK(-out[5].value == doctest::Approx(P.mu_p * 0.3 + 0.05));
  // the p_y row demands xdot[3] = pdot+ - pdot- = 0
  CHECK(out[3].value == 0.0);
}

TEST_CASE("pusher residual: pure normal push translates and twists by -p_y") {
  PusherSliderParams P;
  const double f_n = 0.4, p_y = 0.02;
  const Eigen::Vector3d w(f_n, 0.0, -p_y * f_n);
  const Eigen::Vector3d t = limit_surface_twist(w, P);
  CHECK(t[0] > 0.0);           // translates along +x at theta = 0
  CHECK(t[1] == 0.0);
  CHECK(t[2] * p_y < 0.0);     // rotation sign opposite the contact offset
}

TEST_CASE("cartpole residual: free dynamics between the walls") {
  CartpoleConstants consts;
  const Eigen::Vector3d p_true(0.3, 120.0, 80.0);
  const LCSModel model = make_cartpole_lcs(p_true, consts);
  CHECK(((model.F + model.F.transpose()).eigenvalues().real().minCoeff()) > 0.0);

  const Eigen::Vector4d x(0.05, 0.1, -0.2, 0.3);
  const double u = 0.7;
  const Eigen::Vector4d xdot = model.A * x + model.B * u;  // lambda = 0
  const double tip = x[0] - consts.length * x[1];
  const double g1 = consts.wall_offset - tip;
  const double g2 = consts.wall_offset + tip;
  REQUIRE(g1 > 0.0);
  REQUIRE(g2 > 0.0);

  std::vector<Var> xd{xdot[0], xdot[1], xdot[2], xdot[3]};
  std::vector<Var> xs{x[0], x[1], x[2], x[3]};
  std::vector<Var> y{0.0, 0.0, g1, g2};
  std::vector<Var> us{u};
  std::vector<Var> ps{p_true[0], p_true[1], p_true[2]};
  std::vector<Var> out(6);
  cartpole_softwall_residual(xd, xs, y, us, ps, consts, out);
  for (const Var& r : out) CHECK(std::abs(r.value) <= 1e-12);
}

TEST_CASE("cartpole gap stiffness limit") {
  // k -> inf: the deformation term lambda/k vanishes and the gap is the
  // rigid-wall distance.
  CartpoleConstants consts;
  const double tip = 0.2;
  const double lambda = 1.0;
  const double gap_soft = lambda / 1e12 + consts.wall_offset - tip;
  CHECK(gap_soft == doctest::Approx(consts.wall_offset - tip).epsilon(1e-9));
}

TEST_CASE("simulate_lcs: equilibrium and contact-free steps") {
  const Eigen::Vector3d p_true(0.3, 120.0, 80.0);
  const LCSModel model = make_cartpole_lcs(p_true);
  const int n = 10;
  const Eigen::MatrixXd u0 = Eigen::MatrixXd::Zero(n, 1);

  const Trajectory still = simulate_lcs(model, Eigen::Vector4d::Zero(), u0, 0.01, n);
  CHECK(still.x.cwiseAbs().maxCoeff() == 0.0);

  // single inactive-contact step equals the contact-free implicit Euler step
  const Eigen::Vector4d x0(0.01, 0.02, 0.0, 0.0);
  Eigen::MatrixXd u1(1, 1);
  u1 << 0.3;
  const Trajectory one = simulate_lcs(model, x0, u1, 0.01, 1);
  const Eigen::Matrix4d M = Eigen::Matrix4d::Identity() - 0.01 * model.A;
  const Eigen::Vector4d expect = M.inverse() * (x0 + 0.01 * model.B * 0.3);
  CHECK((one.x.row(1).transpose() - expect).cwiseAbs().maxCoeff() <= 1e-14);
  CHECK(one.y.row(0).head(2).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("simulate_lcs: complementarity holds at active contacts") {
  const Eigen::Vector3d p_true(0.3, 120.0, 80.0);
  SysIdDataset data =
      generate_sysid_data(p_true, 0.0, 7, 200, 0.01, Eigen::Vector4d(0.0, 0.15, 0.4, -0.6));
  const Trajectory& traj = data.observed;

  double max_lambda = 0.0;
  for (int i = 0; i < traj.y.rows(); ++i) {
    max_lambda = std::max({max_lambda, traj.y(i, 0), traj.y(i, 1)});
    CHECK(traj.y(i, 0) * traj.y(i, 2) <= 1e-12);
    CHECK(traj.y(i, 1) * traj.y(i, 3) <= 1e-12);
    CHECK(traj.y(i, 0) >= 0.0);
    CHECK(traj.y(i, 2) >= 0.0);
  }
  CHECK(max_lambda > 0.0);  // the default excitation reaches the walls
}

TEST_CASE("cartpole residual vanishes along the oracle trajectory") {
  const Eigen::Vector3d p_true(0.35, 90.0, 150.0);
  SysIdDataset data =
      generate_sysid_data(p_true, 0.0, 21, 150, 0.01, Eigen::Vector4d(0.0, 0.15, 0.4, -0.6));
  const Trajectory& traj = data.observed;
  CartpoleConstants consts;
  std::vector<Var> out(6);
  for (int i = 1; i <= 150; ++i) {
    std::vector<Var> xd(4), xs(4), y(4), us(1), ps{p_true[0], p_true[1], p_true[2]};
    for (int c = 0; c < 4; ++c) {
      xd[c] = traj.xdot(i - 1, c);
      xs[c] = traj.x(i, c);
      y[c] = traj.y(i - 1, c);
    }
    us[0] = traj.u(i - 1, 0);
    cartpole_softwall_residual(xd, xs, y, us, ps, consts, out);
    for (const Var& r : out) CHECK(std::abs(r.value) <= 1e-8);
    // implicit Euler continuity is exact by construction
    for (int c = 0; c < 4; ++c) {
      CHECK(traj.x(i, c) - traj.x(i - 1, c) - 0.01 * traj.xdot(i - 1, c) ==
            doctest::Approx(0.0).epsilon(1e-14));
    }
  }
}

TEST_CASE("sysid data generation: determinism and noise statistics") {
  const Eigen::Vector3d p_true(0.3, 120.0, 80.0);
  const Eigen::Vector4d x0(0.0, 0.15, 0.4, -0.6);

  SysIdDataset a = generate_sysid_data(p_true, 0.0, 5, 50, 0.01, x0);
  SysIdDataset b = generate_sysid_data(p_true, 0.0, 5, 50, 0.01, x0);
  CHECK(a.observed.x == b.observed.x);
  CHECK(a.observed.u == b.observed.u);

  // sigma = 0: observed equals the oracle exactly
  const LCSModel model = make_cartpole_lcs(p_true);
  const Trajectory clean = simulate_lcs(model, x0, a.observed.u, 0.01, 50);
  CHECK(a.observed.x == clean.x);

  // noise statistics at N = 250
  const double sigma = 0.05;
  SysIdDataset noisy = generate_sysid_data(p_true, sigma, 9, 250, 0.01, x0);
  const Trajectory clean2 = simulate_lcs(model, x0, noisy.observed.u, 0.01, 250);
  const Eigen::MatrixXd diff = noisy.observed.x - clean2.x;
  const double sample_std = std::sqrt(diff.squaredNorm() / (diff.rows() * diff.cols()));
  CHECK(sample_std == doctest::Approx(sigma).epsilon(0.15));
}

TEST_CASE("problem definitions validate") {
  CHECK(validate_definition(double_integrator_energy(10)).ok());
  CHECK(validate_definition(double_integrator_min_time(10)).ok());
  CHECK(validate_definition(pusher_goal_ocp(Eigen::Vector4d::Zero(),
                                            Eigen::Vector3d(0, 0.5, kPi), 20, 1.0))
            .ok());
  const Eigen::Vector3d truth(0.3, 120.0, 80.0);
  SysIdDataset data =
      generate_sysid_data(truth, 0.0, 3, 40, 0.01, Eigen::Vector4d(0.0, 0.15, 0.4, -0.6));
  CHECK(validate_definition(build_sysid_ocp(data, Eigen::Vector3d(0.1, 20, 20),
                                            Eigen::Vector3d(0.6, 400, 400),
                                            Eigen::Vector3d(0.35, 210, 210)))
            .ok());
  for (const OCPDefinition& phase :
       pusher_mode_sequence({0, 1}, Eigen::Vector3d::Zero(), Eigen::Vector3d(0, 0, kPi),
                            10, 0.05, 20.0)
           .phases) {
    CHECK(validate_definition(phase).ok());
  }
}

TEST_CASE("pusher goal ocp: staying put is free when the goal is the start") {
  OCPDefinition def =
      pusher_goal_ocp(Eigen::Vector4d::Zero(), Eigen::Vector3d::Zero(), 8, 1.0);
  auto [nlp, layout] = build_nlp(def, RelaxationMode{});
  Eigen::VectorXd z = Eigen::VectorXd::Zero(layout.n());  // all rest, zero forces
  const std::span<const double> zs(z.data(), static_cast<std::size_t>(z.size()));
  const auto eq = nlp.equalities.forward(zs);
  for (double r : eq) CHECK(std::abs(r) <= 1e-15);
  CHECK(nlp.objective.forward(zs)[0] == 0.0);
  const auto compl_terms = nlp.compl_terms.forward(zs);
  for (double t : compl_terms) CHECK(t == 0.0);
}

TEST_CASE("registry exposes every problem with an interior start") {
  auto suite = default_nlp_suite();
  REQUIRE(suite.size() == 6);
  for (const auto& item : suite) {
    CAPTURE(item.name);
    CHECK(item.nlp.n == item.start.size());
    for (int v = 0; v < item.nlp.n; ++v) {
      if (item.nlp.lb[v] < item.nlp.ub[v]) {
        CHECK(item.start[v] > item.nlp.lb[v]);
        CHECK(item.start[v] < item.nlp.ub[v]);
      }
    }
  }
  const auto names = registered_names();
  CHECK(std::find(names.begin(), names.end(), "pusher") != names.end());
  CHECK(std::find(names.begin(), names.end(), "cartpole-softwall") != names.end());
}

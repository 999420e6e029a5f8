// Copyright (c) mpcc_opt contributors
#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "mpcc/ocp.hpp"
#include "mpcc/transcription.hpp"

namespace mpcc::problems {

// ---------------------------------------------------------------------------
// Quasi-static planar pushing
// ---------------------------------------------------------------------------

struct PusherSliderParams {
  double side = 0.09;        // slider side length a [m]
  double mu_p = 0.3;         // pusher-slider friction coefficient
  double f_max = 0.5;        // limit-surface force capacity [N]
  double tau_max = 0.009;    // limit-surface torque capacity, 0.4*(a/2)*f_max [N m]
  double f_n_max = 0.5;      // normal-force upper bound [N]
  double p_dot_max = 0.3;    // slipping-speed bound [m/s]

  double c() const { return tau_max / f_max; }
};

/// Twist t = 2 L w of the ellipsoidal limit surface H(w) = w' L w with
/// L = diag(1/f_max^2, 1/f_max^2, 1/tau_max^2); wrench (f_n, f_t, tau).
Eigen::Vector3d limit_surface_twist(const Eigen::Vector3d& wrench,
                                    const PusherSliderParams& params);

/// DAE residual of the slipping pusher-slider. State (x, y, theta, p_y),
/// controls (f_n, f_t), algebraics (pdot_plus, pdot_minus, s_a, s_b) with
/// pdot_plus ⟂ s_a and pdot_minus ⟂ s_b (friction cone slack rows).
void pusher_slider_residual(std::span<const ad::Var> xdot, std::span<const ad::Var> x,
                            std::span<const ad::Var> y, std::span<const ad::Var> u,
                            const PusherSliderParams& params, std::span<ad::Var> out);

/// Goal-reaching OCP from x_init = (x, y, theta, p_y) to goal (x, y, theta)
/// over a fixed horizon; the paper's planar-pushing setup.
OCPDefinition pusher_goal_ocp(const Eigen::Vector4d& x_init, const Eigen::Vector3d& goal,
                              int elements, double horizon,
                              const PusherSliderParams& params = {});

/// Sticking-contact pusher with the contact on one of the four faces
/// (0 left, 1 top, 2 right, 3 bottom); 3-state, 2-control, friction cone as
/// slack bounds. Free duration in [t_lower, t_upper], minimum time.
OCPDefinition pusher_sticking_phase(int face, const Eigen::Vector3d& x_init,
                                    int elements, double t_lower, double t_upper,
                                    const PusherSliderParams& params = {});

/// Fixed mode sequence over faces with carried (x, y, theta); the final
/// phase is pinned to the goal pose.
PhaseSequence pusher_mode_sequence(const std::vector<int>& faces,
                                   const Eigen::Vector3d& x_init,
                                   const Eigen::Vector3d& goal, int elements_per_phase,
                                   double t_lower, double t_upper,
                                   const PusherSliderParams& params = {});

// ---------------------------------------------------------------------------
// Cart-pole between soft walls (linear complementarity system)
// ---------------------------------------------------------------------------

/// xdot = A x + B u + D lambda,  0 <= lambda ⟂ E x + F lambda + c >= 0.
/// Identified parameters: pole mass m_p and wall stiffnesses k_1, k_2.
struct LCSModel {
  Eigen::Matrix4d A;
  Eigen::Vector4d B;
  Eigen::Matrix<double, 4, 2> D;
  Eigen::Matrix<double, 2, 4> E;
  Eigen::Matrix2d F;
  Eigen::Vector2d c;
  Eigen::Vector3d params;  // (m_p, k_1, k_2)
};

struct CartpoleConstants {
  double m_c = 1.0;   // cart mass [kg]
  double length = 0.5;  // pole length [m]
  double gravity = 9.81;
  double wall_offset = 0.35;  // walls at +-d from the center [m]
};

LCSModel make_cartpole_lcs(const Eigen::Vector3d& params,
                           const CartpoleConstants& constants = {});

/// DAE residual of the cart-pole with soft walls; algebraics
/// (lambda_1, lambda_2, gap_1, gap_2), parameters (m_p, k_1, k_2).
void cartpole_softwall_residual(std::span<const ad::Var> xdot, std::span<const ad::Var> x,
                                std::span<const ad::Var> y, std::span<const ad::Var> u,
                                std::span<const ad::Var> p,
                                const CartpoleConstants& constants, std::span<ad::Var> out);

/// Implicit-Euler time stepping with the per-step LCP solved by active-set
/// enumeration; the independent oracle the transcription is tested against.
Trajectory simulate_lcs(const LCSModel& model, const Eigen::Vector4d& x0,
                        const Eigen::MatrixXd& u_seq, double h, int steps);

struct SysIdDataset {
  Trajectory observed;  // x carries the noise; xdot/y stay clean
  double sigma = 0.0;
  std::uint64_t seed = 0;
  Eigen::Vector3d true_params;
  double h = 0.01;
  CartpoleConstants constants;
  Eigen::Vector4d x0;
};

/// Simulates the cart-pole LCS driven by a seeded sum of three sinusoids and
/// adds Gaussian noise (std sigma) to every state channel. Deterministic
/// given the seed.
SysIdDataset generate_sysid_data(const Eigen::Vector3d& true_params, double sigma,
                                 std::uint64_t seed, int steps, double h,
                                 const Eigen::Vector4d& x0,
                                 const CartpoleConstants& constants = {});

/// Parameter-estimation OCP: p = (m_p, k_1, k_2) decision parameters,
/// controls pinned to the dataset inputs, squared state mismatch objective.
OCPDefinition build_sysid_ocp(const SysIdDataset& dataset, const Eigen::Vector3d& p_lb,
                              const Eigen::Vector3d& p_ub, const Eigen::Vector3d& p_guess);

/// CSV columns: t, state channels, input channels; sidecar JSON records
/// sigma and seed (true parameters only when revealed).
void write_dataset(const std::string& csv_path, const std::string& json_path,
                   const SysIdDataset& dataset, bool reveal_truth);

// ---------------------------------------------------------------------------
// Small analytic problems
// ---------------------------------------------------------------------------

/// Minimum-energy double integrator: (0,0) -> (1,0) on [0,1], cost ∫u².
/// The continuous optimum is 12.
OCPDefinition double_integrator_energy(int elements);

/// Minimum-time double integrator with |u| <= u_max; bang-bang optimum
/// T* = 2/sqrt(u_max) for the unit displacement.
OCPDefinition double_integrator_min_time(int elements, double u_max = 6.0);

/// min (x-1)^2 + (y-1)^2 s.t. 0 <= x ⟂ y >= 0, built directly as an NLP
/// (both complementarity branches cost exactly 1).
struct ToyMpcc {
  NLPProblem nlp;
  Eigen::Vector2d start{0.7, 0.3};
};
ToyMpcc make_mpcc_toy(const RelaxationMode& mode);

// ---------------------------------------------------------------------------
// Registry
// ---------------------------------------------------------------------------

/// Transcribed NLPs of every registered problem at default sizes, with
/// interior start points; the derivative acceptance suite runs over these.
struct NamedNlp {
  std::string name;
  NLPProblem nlp;
  Eigen::VectorXd start;
};
std::vector<NamedNlp> default_nlp_suite();

/// Names registered with the command-line driver.
std::vector<std::string> registered_names();

}  // namespace mpcc::problems

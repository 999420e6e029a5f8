#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "mpcc/autodiff.hpp"

using mpcc::ad::Tape;
using mpcc::ad::Var;

namespace {

std::vector<Var> quad(std::span<const Var> x) {  // x1^2 + x2
  return {x[0] * x[0] + x[1]};
}

std::vector<Var> trig_mix(std::span<const Var> x) {  // exp(x1)*sin(x2)
  return {mpcc::ad::exp(x[0]) * mpcc::ad::sin(x[1])};
}

bool close(double a, double b, double tol) { return std::abs(a - b) <= tol; }

}  // namespace

TEST_CASE("record and replay") {
  Tape t = mpcc::ad::record(2, quad);
  CHECK(t.num_inputs() == 2);
  CHECK(t.num_outputs() == 1);

  const std::vector<double> x{3.0, 1.0};
  CHECK(t.forward(x)[0] == 10.0);

  Tape s = mpcc::ad::record(2, [](std::span<const Var> x) -> std::vector<Var> {
    return {mpcc::ad::sin(x[0]) * x[1]};
  });
  const std::vector<double> x2{0.0, 5.0};
  CHECK(s.forward(x2)[0] == 0.0);
}

TEST_CASE("replay equals direct evaluation bitwise for arithmetic") {
  auto fn = [](std::span<const Var> x) -> std::vector<Var> {
    Var a = x[0] * x[1] - 3.0 * x[2];
    Var b = (x[0] + x[2]) / (x[1] - 0.5);
    return {a * b + x[2], a - b};
  };
  Tape t = mpcc::ad::record(3, fn);
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (int it = 0; it < 50; ++it) {
    std::vector<double> x{u(rng), u(rng) + 1.0, u(rng)};
    std::vector<Var> xv(x.begin(), x.end());
    auto direct = fn(xv);
    auto replay = t.forward(x);
    CHECK(replay[0] == direct[0].value);
    CHECK(replay[1] == direct[1].value);
  }
}

TEST_CASE("replay at the recording point reproduces recorded outputs") {
  const std::vector<double> pt{0.4, -1.2};
  Tape t = mpcc::ad::record(2, trig_mix, pt);
  CHECK(t.forward(pt)[0] == t.recorded_outputs()[0]);
}

TEST_CASE("branch on traced value raises a recording error") {
  CHECK_THROWS_AS(mpcc::ad::record(1,
                                   [](std::span<const Var> x) -> std::vector<Var> {
                                     if (x[0] > 0.0) return {x[0]};
                                     return {-x[0]};
                                   }),
                  mpcc::RecordingError);
}

TEST_CASE("gradient analytic cases") {
  Tape t = mpcc::ad::record(2, quad);
  auto g = mpcc::ad::gradient(t, std::vector<double>{3.0, 1.0});
  CHECK(g[0] == 6.0);
  CHECK(g[1] == 1.0);

  Tape p = mpcc::ad::record(2, [](std::span<const Var> x) -> std::vector<Var> {
    return {x[0] * x[1]};
  });
  auto gp = mpcc::ad::gradient(p, std::vector<double>{2.0, 5.0});
  CHECK(gp[0] == 5.0);
  CHECK(gp[1] == 2.0);
}

TEST_CASE("gradient matches central finite differences") {
  Tape t = mpcc::ad::record(2, trig_mix);
  const std::vector<double> x{0.3, 0.7};
  auto g = mpcc::ad::gradient(t, x);
  auto fd = mpcc::ad::fd_gradient(t, x, 1e-6);
  for (int i = 0; i < 2; ++i) {
    CHECK(close(g[i], fd[i], 1e-6 * std::max(1.0, std::abs(g[i]))));
  }
}

TEST_CASE("jacobian analytic and identity cases") {
  Tape t = mpcc::ad::record(2, [](std::span<const Var> x) -> std::vector<Var> {
    return {x[0] + x[1], x[1] * x[1]};
  });
  auto J = mpcc::ad::jacobian(t, std::vector<double>{1.0, 3.0});
  REQUIRE(J.pattern.entries.size() == 3);
  CHECK(J.pattern.entries[0] == std::make_pair(0, 0));
  CHECK(J.pattern.entries[1] == std::make_pair(0, 1));
  CHECK(J.pattern.entries[2] == std::make_pair(1, 1));
  CHECK(J.at(0, 0) == 1.0);
  CHECK(J.at(0, 1) == 1.0);
  CHECK(J.at(1, 1) == 6.0);
  CHECK(J.at(1, 0) == 0.0);

  Tape id3 = mpcc::ad::record(3, [](std::span<const Var> x) -> std::vector<Var> {
    return {x[0], x[1], x[2]};
  });
  auto Ji = mpcc::ad::jacobian(id3, std::vector<double>{4.0, 5.0, 6.0});
  REQUIRE(Ji.pattern.entries.size() == 3);
  for (int i = 0; i < 3; ++i) {
    CHECK(Ji.pattern.entries[i] == std::make_pair(i, i));
    CHECK(Ji.values[i] == 1.0);
  }
}

TEST_CASE("sparsity projection and conservativeness") {
  Tape t = mpcc::ad::record(3, [](std::span<const Var> x) -> std::vector<Var> {
    return {x[0], x[2]};
  });
  auto sp = mpcc::ad::sparsity(t);
  REQUIRE(sp.entries.size() == 2);
  CHECK(sp.entries[0] == std::make_pair(0, 0));
  CHECK(sp.entries[1] == std::make_pair(1, 2));

  // x1*0 + x2: the pattern may keep (0,0) but must contain (0,1).
  Tape z = mpcc::ad::record(2, [](std::span<const Var> x) -> std::vector<Var> {
    return {x[0] * 0.0 + x[1]};
  });
  auto spz = mpcc::ad::sparsity(z);
  bool has01 = false;
  for (auto& e : spz.entries) has01 = has01 || e == std::make_pair(0, 1);
  CHECK(has01);
}

TEST_CASE("hessian of the lagrangian, analytic") {
  Tape f = mpcc::ad::record(2, [](std::span<const Var> x) -> std::vector<Var> {
    return {x[0] * x[0] * x[1]};
  });
  Tape c = mpcc::ad::record(2, [](std::span<const Var> x) -> std::vector<Var> {
    return {x[0] * x[1]};
  });
  const std::vector<double> pt{1.0, 1.0};
  const std::vector<double> lam{2.0};
  auto H = mpcc::ad::hessian_lagrangian(f, c, pt, 1.0, lam);
  // dense lower triangle of [[2, 4], [4, 0]]
  CHECK(H.at(0, 0) == 2.0);
  CHECK(H.at(1, 0) == 4.0);
}

TEST_CASE("hessian of a linear problem is empty") {
  Tape f = mpcc::ad::record(2, [](std::span<const Var> x) -> std::vector<Var> {
    return {2.0 * x[0] - x[1]};
  });
  Tape c = mpcc::ad::record(2, [](std::span<const Var> x) -> std::vector<Var> {
    return {x[0] + 3.0 * x[1]};
  });
  const std::vector<double> pt{0.3, -0.4};
  const std::vector<double> lam{1.5};
  auto H = mpcc::ad::hessian_lagrangian(f, c, pt, 1.0, lam);
  CHECK(H.pattern.entries.empty());
}

TEST_CASE("derivatives match finite differences at random points") {
  auto fn = [](std::span<const Var> x) -> std::vector<Var> {
    Var r0 = mpcc::ad::exp(x[0]) * mpcc::ad::sin(x[1]) + x[2] / (2.0 + x[1] * x[1]);
    Var r1 = mpcc::ad::sqrt(4.0 + x[0] * x[0]) - mpcc::ad::log(3.0 + x[2]);
    Var r2 = mpcc::ad::pow(x[1], 3) + mpcc::ad::tan(0.3 * x[0]) +
             mpcc::ad::smooth_max(x[0], x[2], 1e-3);
    return {r0, r1, r2};
  };
  Tape t = mpcc::ad::record(3, fn);
  std::mt19937_64 rng(12345);
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  Tape::Workspace ws = t.make_workspace();
  std::vector<double> jv(t.jacobian_sparsity().entries.size());
  for (int it = 0; it < 100; ++it) {
    std::vector<double> x{u(rng), u(rng), u(rng)};
    t.jacobian_values(x, jv, ws);
    auto fd = mpcc::ad::fd_jacobian(t, x, 1e-6);
    for (std::size_t e = 0; e < jv.size(); ++e) {
      const auto [r, c] = t.jacobian_sparsity().entries[e];
      const double want = fd[static_cast<std::size_t>(r) * 3 + c];
      CHECK(close(jv[e], want, std::max(1e-6, 1e-4 * std::abs(want))));
    }
  }
}

TEST_CASE("sparsity is a superset of the jacobian support") {
  auto fn = [](std::span<const Var> x) -> std::vector<Var> {
    return {x[0] * x[1], mpcc::ad::cos(x[2]), x[1] + x[3] * x[3]};
  };
  Tape t = mpcc::ad::record(4, fn);
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (int it = 0; it < 20; ++it) {
    std::vector<double> x{u(rng), u(rng), u(rng), u(rng)};
    auto fd = mpcc::ad::fd_jacobian(t, x, 1e-6);
    auto sp = t.jacobian_sparsity();
    for (int r = 0; r < t.num_outputs(); ++r) {
      for (int c = 0; c < t.num_inputs(); ++c) {
        if (std::abs(fd[static_cast<std::size_t>(r) * 4 + c]) > 1e-7) {
          bool in = false;
          for (auto& e : sp.entries) in = in || e == std::make_pair(r, c);
          CHECK(in);
        }
      }
    }
  }
}

TEST_CASE("hessian kernels agree with the dense reference") {
  auto fn = [](std::span<const Var> x) -> std::vector<Var> {
    Var r0 = x[0] * x[1] * x[2] + mpcc::ad::exp(x[3] - x[0]);
    Var r1 = mpcc::ad::sin(x[2]) / (2.0 + x[3] * x[3]);
    return {r0, r1};
  };
  Tape t = mpcc::ad::record(4, fn);
  const std::vector<double> x{0.3, -0.8, 1.1, 0.2};
  const std::vector<double> w{1.0, -2.5};

  auto Hd = mpcc::ad::reference::hessian_dense(t, x, w);
  Tape::Workspace ws = t.make_workspace();
  std::vector<double> hv(t.hessian_sparsity().entries.size());
  t.hessian_values(x, w, hv, ws);

  // every stored entry matches the reference; every off-pattern entry is 0
  std::vector<double> dense(16, 0.0);
  for (std::size_t e = 0; e < hv.size(); ++e) {
    const auto [r, c] = t.hessian_sparsity().entries[e];
    CHECK(hv[e] == Hd[static_cast<std::size_t>(r) * 4 + c]);
    dense[static_cast<std::size_t>(r) * 4 + c] = hv[e];
    dense[static_cast<std::size_t>(c) * 4 + r] = hv[e];
  }
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) {
      CHECK(close(dense[static_cast<std::size_t>(r) * 4 + c],
                  Hd[static_cast<std::size_t>(r) * 4 + c], 1e-12));
    }
  }

  auto Jd = mpcc::ad::reference::jacobian_dense(t, x);
  std::vector<double> jv(t.jacobian_sparsity().entries.size());
  t.jacobian_values(x, jv, ws);
  for (std::size_t e = 0; e < jv.size(); ++e) {
    const auto [r, c] = t.jacobian_sparsity().entries[e];
    CHECK(jv[e] == Jd[static_cast<std::size_t>(r) * 4 + c]);
  }
}

TEST_CASE("parallel kernels return the same values as the serial path") {
  auto fn = [](std::span<const Var> x) -> std::vector<Var> {
    std::vector<Var> out;
    for (std::size_t i = 0; i + 1 < x.size(); ++i) {
      out.push_back(x[i] * x[i + 1] + mpcc::ad::sin(x[i]));
    }
    return out;
  };
  Tape t = mpcc::ad::record(20, fn);
  std::vector<double> x(20);
  for (int i = 0; i < 20; ++i) x[i] = 0.1 * (i - 10);

  Tape::Workspace ws = t.make_workspace();
  std::vector<double> j1(t.jacobian_sparsity().entries.size());
  std::vector<double> j4(j1.size());
  t.jacobian_values(x, j1, ws, 1);
  t.jacobian_values(x, j4, ws, 4);
  CHECK(j1 == j4);

  std::vector<double> w(t.num_outputs(), 1.0);
  std::vector<double> h1(t.hessian_sparsity().entries.size());
  std::vector<double> h4(h1.size());
  t.hessian_values(x, w, h1, ws, 1);
  t.hessian_values(x, w, h4, ws, 4);
  CHECK(h1 == h4);
}

TEST_CASE("fd hessian consistency of the lagrangian") {
  Tape f = mpcc::ad::record(3, [](std::span<const Var> x) -> std::vector<Var> {
    return {x[0] * x[0] * x[1] + mpcc::ad::cos(x[2])};
  });
  Tape c = mpcc::ad::record(3, [](std::span<const Var> x) -> std::vector<Var> {
    return {x[0] * x[2], x[1] * x[1] - x[2]};
  });
  const std::vector<double> pt{0.5, -0.3, 0.9};
  const std::vector<double> lam{1.2, -0.7};
  auto H = mpcc::ad::hessian_lagrangian(f, c, pt, 1.0, lam);

  // finite differences of the lagrangian gradient
  const double step = 1e-5;
  auto lag_grad = [&](const std::vector<double>& x) {
    auto gf = mpcc::ad::gradient(f, x);
    Tape::Workspace ws = c.make_workspace();
    std::vector<double> gc(3);
    c.gradient_weighted(x, lam, gc, ws);
    for (int i = 0; i < 3; ++i) gf[i] += gc[i];
    return gf;
  };
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j <= i; ++j) {
      auto xp = pt;
      xp[j] += step;
      auto gh = lag_grad(xp);
      xp[j] = pt[j] - step;
      auto gl = lag_grad(xp);
      const double want = (gh[i] - gl[i]) / (2.0 * step);
      CHECK(close(H.at(i, j), want, 1e-5));
    }
  }
}

TEST_CASE("var behaves like a double outside recording") {
  Var a = 2.0, b = 3.0;
  Var c = a * b + mpcc::ad::sin(a);
  CHECK(c.value == 2.0 * 3.0 + std::sin(2.0));
  CHECK(c.node == -1);
  CHECK(a < b);  // comparisons allowed when nothing is being traced
}

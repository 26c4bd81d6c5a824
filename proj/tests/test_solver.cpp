#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "generators.hpp"
#include "mfgdc/duality.hpp"
#include "mfgdc/solver.hpp"
#include "mfgdc/test_problems.hpp"
#include "oracles.hpp"

using namespace mfgdc;
using mfgdc::testing::Gen;

namespace {

ProblemSpec stationary_problem() {
  ProblemSpec p;
  p.m0 = problems::cosine(0.3, 1.0);
  p.g = FourierSeries::constant(0.0);
  p.coupling.m_bar = 1e6;
  return p;
}

ProblemSpec flat_problem() {
  ProblemSpec p;
  p.m0 = FourierSeries::constant(1.0);
  p.g = FourierSeries::constant(0.0);
  p.coupling.m_bar = 2.0;
  return p;
}

SolverOptions quick_options(double tol_gap = 1e-4) {
  SolverOptions o;
  o.tol_gap = tol_gap;
  o.check_every = 20;
  o.max_iters = 4000;
  return o;
}

// Feasible pair built by projecting random data onto the continuity equation.
void random_feasible(Gen& gen, const Discretization& disc, ScalarField& m, MomentumField& w) {
  const auto& g = disc.grid;
  m = ScalarField(g, FieldKind::density, 1.0);
  for (auto& v : m.values()) v = gen.uniform(0.8, 1.2);
  w = gen.momentum(g, -0.2, 0.2);
  project_continuity(m, w, disc, continuity_operator(g), SolverOptions{});
  restore_box(m, w, disc);
}

}  // namespace

TEST(Functionals, DualValueOfRestingUniformDensityIsZero) {
  const GridSpec g{1, 16, 8, 1.0};
  const Discretization disc(flat_problem(), g);
  ScalarField m(g, FieldKind::density, 1.0);
  MomentumField w(g);
  EXPECT_DOUBLE_EQ(eval_B(m, w, disc), 0.0);
}

TEST(Functionals, DualValueOfUniformFlowIsKinetic) {
  for (int d = 1; d <= 2; ++d) {
    const GridSpec g{d, 8, 8, 1.5};
    auto p = flat_problem();
    p.d = d;
    p.T = 1.5;
    const Discretization disc(p, g);
    ScalarField m(g, FieldKind::density, 1.0);
    MomentumField w(g);
    for (int k = 0; k < g.nt; ++k)
      for (int c = 0; c < g.cells(); ++c) w(k, 0, c) = 0.6;
    EXPECT_NEAR(eval_B(m, w, disc), 0.5 * 0.36 * 1.5, 1e-14);
  }
}

TEST(Functionals, DualValueFlagsMomentumOnEmptyCells) {
  const GridSpec g{1, 8, 4, 1.0};
  const Discretization disc(flat_problem(), g);
  ScalarField m(g, FieldKind::density, 1.0);
  MomentumField w(g);
  m(2, 3) = 0.0;
  m(2, 4) = 0.0;
  EXPECT_TRUE(std::isfinite(eval_B(m, w, disc)));
  w(1, 0, 3) = 0.1;
  EXPECT_EQ(eval_B(m, w, disc), kInf);
  ScalarField over(g, FieldKind::density, 1.0);
  over(1, 0) = 2.5;
  EXPECT_EQ(eval_B(over, MomentumField(g), disc), kInf);
}

TEST(Functionals, PrimalValueOfZeroData) {
  const GridSpec g{1, 8, 4, 1.0};
  const Discretization disc(flat_problem(), g);
  ScalarField u(g, FieldKind::value), alpha(g, FieldKind::generic);
  std::vector<double> aT(g.cells(), 0.0);
  EXPECT_DOUBLE_EQ(eval_A_relaxed(u, alpha, aT, disc), 0.0);
}

TEST(Functionals, PrimalValueIsLinearForZeroCoupling) {
  Gen gen(51);
  const GridSpec g{1, 8, 4, 2.0};
  auto p = flat_problem();
  p.T = 2.0;
  p.m0 = problems::cosine(0.4, 1.0);
  const Discretization disc(p, g);
  ScalarField u = gen.scalar(g, -1, 1);
  ScalarField alpha(g, FieldKind::generic, 1.0);
  auto aT = gen.vec(g.cells(), 0.0, 1.0);
  double atom = 0.0, lin = 0.0;
  for (int c = 0; c < g.cells(); ++c) {
    atom += aT[c] * g.dx();
    lin += u(0, c) * disc.m0[c] * g.dx();
  }
  const double expected = 2.0 * 2.0 + 2.0 * atom - lin;
  EXPECT_NEAR(eval_A_relaxed(u, alpha, aT, disc), expected, 1e-13);
  alpha(1, 2) = -0.5;
  EXPECT_THROW(eval_A_relaxed(u, alpha, aT, disc), std::invalid_argument);
}

TEST(FunctionalsProperty, WeakDualityOnRandomPairs) {
  // A(u) + B(m, w) >= 0 for every u and every feasible (m, w): the discrete
  // functionals are Fenchel conjugate through the shared layout.
  Gen gen(52);
  for (int trial = 0; trial < 40; ++trial) {
    const GridSpec g = gen.grid(trial % 2 + 1);
    ProblemSpec p = trial % 3 == 0 ? problems::power_coupling() : problems::saturating_well();
    p.d = g.d;
    p.T = g.T;
    if (g.d == 2) p.m0 = FourierSeries{{FourierTerm{{0, 0}, 1.0, 0.0}, FourierTerm{{1, 1}, 0.3, 0.0}}};
    const Discretization disc(p, g);
    ScalarField m;
    MomentumField w;
    random_feasible(gen, disc, m, w);
    ScalarField u = gen.scalar(g, -1, 1);
    for (int c = 0; c < g.cells(); ++c) u(g.nt, c) = disc.g[c];
    const double A = eval_A_discrete(u, disc), B = eval_B(m, w, disc);
    ASSERT_TRUE(std::isfinite(B));
    EXPECT_GE(A + B, -1e-10 * (std::abs(A) + std::abs(B))) << "trial " << trial;
  }
}

TEST(Solver, StationaryProblemIsSolvedExactly) {
  const GridSpec g{1, 16, 8, 1.0};
  const auto s = run(stationary_problem(), g, quick_options());
  EXPECT_TRUE(s.diag.converged);
  const Discretization disc(stationary_problem(), g);
  for (int k = 0; k <= g.nt; ++k)
    for (int c = 0; c < g.cells(); ++c) EXPECT_NEAR(s.m(k, c), disc.m0[c], 1e-8);
  for (double v : s.w.values()) EXPECT_NEAR(v, 0.0, 1e-8);
  for (double v : s.u.values()) EXPECT_NEAR(v, 0.0, 1e-8);
  for (double v : s.beta.values()) EXPECT_EQ(v, 0.0);
  for (double v : s.beta_T) EXPECT_EQ(v, 0.0);
  const auto r = certify(s, stationary_problem(), g);
  EXPECT_LE(std::abs(r.gap), 1e-10);
}

TEST(Solver, PerturbedValueFunctionRaisesTheGap) {
  const GridSpec g{1, 16, 8, 1.0};
  const auto p = problems::power_coupling();
  auto s = run(p, g, quick_options());
  ASSERT_TRUE(s.diag.converged);
  const auto base = certify(s, p, g);
  Gen gen(53);
  for (int trial = 0; trial < 5; ++trial) {
    Solution t = s;
    for (int k = 0; k < g.nt; ++k)
      for (int c = 0; c < g.cells(); ++c) t.u(k, c) += 0.05 * gen.uniform(-1, 1);
    const auto pr = extract_price(t.u, t.m, Discretization(p, g));
    t.beta = pr.beta;
    t.beta_T = pr.beta_T;
    EXPECT_GT(certify(t, p, g).gap, base.gap);
  }
}

TEST(Solver, SaturatingWellRespectsCapAndCertifies) {
  const GridSpec g{1, 32, 32, 1.0};
  const auto p = problems::saturating_well();
  const auto s = run(p, g, quick_options());
  ASSERT_TRUE(s.diag.converged);
  const auto r = certify(s, p, g);
  EXPECT_LE(r.relative_gap, 1e-4);
  EXPECT_LE(r.max_density, p.coupling.m_bar + 1e-6);
  EXPECT_GE(r.min_density, -1e-6);
  EXPECT_LE(r.mass_error, 1e-10);
  EXPECT_LE(r.continuity_residual, 1e-8);
  EXPECT_FALSE(r.negative_gap_warning);
  for (double b : s.beta.values()) EXPECT_GE(b, 0.0);
  for (double b : s.beta_T) EXPECT_GE(b, 0.0);
  // the independent certificate agrees with the solver's own bookkeeping
  EXPECT_NEAR(r.gap, s.diag.gap, 1e-12);
}

TEST(Solver, UnconstrainedRunHasNoPrice) {
  const GridSpec g{1, 32, 32, 1.0};
  const auto p = problems::hopf_lax();
  const auto s = run(p, g, quick_options());
  ASSERT_TRUE(s.diag.converged);
  const auto r = certify(s, p, g);
  EXPECT_EQ(r.beta_l1, 0.0);
  EXPECT_EQ(r.beta_T_l1, 0.0);
  const auto probe = regularity_probe(s, g, {{0.1, 0.9}});
  EXPECT_EQ(probe.windows[0].l1_norm, 0.0);
  EXPECT_EQ(probe.beta_T_l1, 0.0);
}

TEST(Solver, UnconstrainedValueMatchesHopfLax) {
  const GridSpec g{1, 32, 32, 1.0};
  const auto p = problems::hopf_lax();
  const auto s = run(p, g, quick_options());
  ASSERT_TRUE(s.diag.converged);
  const auto ref = mfgdc::testing::hopf_lax(p.g, g);
  std::vector<double> u0(s.u.slice(0).begin(), s.u.slice(0).end());
  EXPECT_LE(mfgdc::testing::mean_aligned_linf(u0, ref), 5.0 * (g.dx() + g.dt()));
}

TEST(Solver, NonConvergenceReturnsBestIterate) {
  const GridSpec g{1, 16, 16, 1.0};
  auto o = quick_options(1e-14);
  o.max_iters = 40;
  const auto s = run(problems::saturating_well(), g, o);
  EXPECT_FALSE(s.diag.converged);
  EXPECT_EQ(s.diag.iterations, 40);
  EXPECT_EQ(s.history.size(), 40u);
  EXPECT_TRUE(s.m.all_finite());
}

TEST(Solver, RejectsInvalidOptions) {
  SolverOptions o;
  o.r_admm = 0.0;
  EXPECT_THROW(run(problems::saturating_well(), GridSpec{1, 16, 8, 1.0}, o), std::invalid_argument);
  o = SolverOptions{};
  o.tol_gap = -1.0;
  EXPECT_THROW(o.validate(), std::invalid_argument);
}

TEST(Solver, CheckCallbackSeesEveryGapEvaluation) {
  const GridSpec g{1, 16, 8, 1.0};
  auto o = quick_options();
  int calls = 0;
  o.on_check = [&](int it, const Diagnostics&) {
    ++calls;
    EXPECT_EQ(it % o.check_every, 0);
  };
  const auto s = run(problems::power_coupling(), g, o);
  EXPECT_EQ(calls, s.diag.iterations / o.check_every);
}

TEST(Price, ExtractPriceMasksUnsaturatedCells) {
  const GridSpec g{1, 8, 4, 1.0};
  const Discretization disc(flat_problem(), g);
  ScalarField m(g, FieldKind::density, 1.0);
  ScalarField u(g, FieldKind::value);
  // u decreasing in time gives alpha = 1 everywhere
  for (int k = 0; k <= g.nt; ++k)
    for (int c = 0; c < g.cells(); ++c) u(k, c) = g.T - g.time_node(k);
  m(2, 5) = 2.0;
  m(g.nt, 1) = 2.0;
  const auto pr = extract_price(u, m, disc);
  EXPECT_DOUBLE_EQ(pr.beta(2, 5), 1.0);
  EXPECT_DOUBLE_EQ(pr.beta(2, 4), 0.0);
  EXPECT_DOUBLE_EQ(pr.beta_raw(2, 4), 1.0);
  EXPECT_DOUBLE_EQ(pr.beta_T[1], g.dt());
  EXPECT_DOUBLE_EQ(pr.beta_T[0], 0.0);
  EXPECT_DOUBLE_EQ(pr.beta_T_raw[0], g.dt());
}

TEST(Certificate, ReportRoundTrip) {
  GapReport r;
  r.A_value = 1.25;
  r.B_value = -1.2499;
  r.gap = 1e-4;
  r.relative_gap = 8e-5;
  r.negative_gap_warning = true;
  r.max_density = 3.0 - 1e-9;
  std::stringstream ss;
  write_report(ss, r);
  const auto back = read_report(ss);
  EXPECT_EQ(to_map(back), to_map(r));
}

TEST(Certificate, ProbeRejectsWindowsOutsideHorizon) {
  const GridSpec g{1, 8, 4, 1.0};
  Solution s{ScalarField(g, FieldKind::value), ScalarField(g, FieldKind::density), MomentumField(g),
             ScalarField(g, FieldKind::price),  std::vector<double>(8, 0.0),     ScalarField(g, FieldKind::price),
             std::vector<double>(8, 0.0),       {},                              {}};
  EXPECT_THROW(regularity_probe(s, g, {{0.0, 0.5}}), std::invalid_argument);
  EXPECT_THROW(regularity_probe(s, g, {{0.6, 0.5}}), std::invalid_argument);
}

TEST(Certificate, NullTranslationHasNoEffect) {
  const GridSpec g{1, 16, 16, 1.0};
  const auto p = problems::saturating_well();
  const auto s = run(p, g, quick_options(1e-3));
  EXPECT_EQ(translation_diagnostic(s, p, g, {0.0, 0.0}, 0.0), 0.0);
  // a converged solution is (nearly) optimal, so translated competitors cost more
  EXPECT_GT(translation_diagnostic(s, p, g, {0.05, 0.0}, 0.0), -1e-3);
  EXPECT_THROW(translation_diagnostic(s, p, g, {0.3, 0.0}, 0.0), std::invalid_argument);
}

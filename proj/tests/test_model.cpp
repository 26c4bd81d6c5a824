#include <gtest/gtest.h>

#include <cmath>

#include "generators.hpp"
#include "mfgdc/model.hpp"
#include "mfgdc/test_problems.hpp"

using namespace mfgdc;
using mfgdc::testing::Gen;

namespace {

CouplingSpec power(double kappa, double theta, double m_bar) {
  CouplingSpec c;
  c.kind = CouplingKind::power;
  c.kappa = kappa;
  c.theta = theta;
  c.m_bar = m_bar;
  return c;
}

// sup over a dense grid of [0, m_bar] of m alpha - F(m).
double brute_Fstar(const CouplingSpec& c, double alpha, int n = 200000) {
  double best = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double m = std::min(c.m_bar * i / n, c.m_bar);  // keep the cap itself on the grid
    best = std::max(best, m * alpha - c.F(m));
  }
  return best;
}

ProblemSpec uniform_problem(double m_bar, double c_bar) {
  ProblemSpec p;
  p.m0 = FourierSeries::constant(1.0);
  p.g = FourierSeries::constant(0.0);
  p.coupling.m_bar = m_bar;
  p.coupling.c_bar = c_bar;
  return p;
}

}  // namespace

TEST(Model, QuadraticHamiltonianIsSelfConjugate) {
  HamiltonianSpec h;
  const double p[2] = {3.0, 4.0};
  EXPECT_DOUBLE_EQ(eval_H(h, {0.1, 0.2}, p), 12.5);
  EXPECT_DOUBLE_EQ(eval_Hstar(h, {0.1, 0.2}, p), 12.5);
}

TEST(ModelProperty, QuadraticLagrangianIsEven) {
  Gen gen(21);
  HamiltonianSpec h;
  h.V = problems::cosine(0.3);
  for (int i = 0; i < 100; ++i) {
    const double q[2] = {gen.uniform(-3, 3), gen.uniform(-3, 3)}, mq[2] = {-q[0], -q[1]};
    const Point x{gen.uniform(0, 1), gen.uniform(0, 1)};
    EXPECT_DOUBLE_EQ(eval_L(h, x, q), eval_L(h, x, mq));
  }
}

TEST(ModelProperty, CubicConjugateMatchesDenseSearch) {
  Gen gen(22);
  HamiltonianSpec h;
  h.s = 3.0;
  h.V = problems::cosine(0.5, 0.2);
  for (int trial = 0; trial < 20; ++trial) {
    const double q = gen.uniform(-2.0, 2.0);
    const Point x{gen.uniform(0, 1), 0.0};
    double best = -kInf;
    const int n = 400000;
    for (int i = 0; i <= n; ++i) {
      const double p = -3.0 + 6.0 * i / n;
      best = std::max(best, p * q - eval_H(h, x, std::span<const double>(&p, 1)));
    }
    const double closed = std::pow(std::abs(q), 1.5) * 2.0 / 3.0 + h.V(x);
    EXPECT_NEAR(eval_Hstar(h, x, std::span<const double>(&q, 1)), closed, 1e-14);
    EXPECT_NEAR(closed, best, 1e-6);
  }
}

TEST(ModelProperty, ConjugateRespectsGrowthBounds) {
  // |q|^s'/s' - C <= H*(x, q) <= |q|^s'/s' + C with C bounding |V|.
  Gen gen(23);
  HamiltonianSpec h;
  h.s = 1.5;
  h.V = problems::cosine(0.7, 0.1);
  const double C = h.V.sup_bound();
  for (int i = 0; i < 200; ++i) {
    const double q[2] = {gen.uniform(-5, 5), gen.uniform(-5, 5)};
    const Point x{gen.uniform(0, 1), gen.uniform(0, 1)};
    const double r = std::pow(std::hypot(q[0], q[1]), 3.0) / 3.0;
    const double v = eval_Hstar(h, x, q);
    EXPECT_GE(v, r - C - 1e-12);
    EXPECT_LE(v, r + C + 1e-12);
  }
}

TEST(Model, PowerConjugateValues) {
  const auto c = power(1.0, 2.0, 2.0);
  EXPECT_DOUBLE_EQ(c.Fstar(-1.0), 0.0);
  EXPECT_DOUBLE_EQ(c.Fstar(1.0), 0.5);
  EXPECT_DOUBLE_EQ(c.Fstar(3.0), 4.0);
}

TEST(Model, ZeroCouplingConjugateIsScaledPositivePart) {
  CouplingSpec c;
  c.m_bar = 2.5;
  EXPECT_DOUBLE_EQ(eval_Fstar(c, {0, 0}, -1.0), 0.0);
  EXPECT_DOUBLE_EQ(eval_Fstar(c, {0, 0}, 0.0), 0.0);
  EXPECT_DOUBLE_EQ(eval_Fstar(c, {0, 0}, 2.0), 2.0 * 2.5);
}

TEST(Model, EnergyIsInfiniteOutsideBox) {
  const auto c = power(1.0, 2.0, 2.0);
  EXPECT_EQ(c.F(-0.1), kInf);
  EXPECT_EQ(c.F(2.1), kInf);
  EXPECT_DOUBLE_EQ(c.F(2.0), 2.0);
}

TEST(ModelProperty, ConjugateMatchesDenseSearch) {
  Gen gen(24);
  for (int trial = 0; trial < 60; ++trial) {
    CouplingSpec c = gen.coin() ? power(gen.uniform(0.1, 3.0), gen.uniform(1.3, 4.0), gen.uniform(1.1, 5.0))
                                : CouplingSpec{CouplingKind::zero, 0.0, 2.0, gen.uniform(1.1, 5.0)};
    const double alpha = gen.uniform(-2.0, 2.0 * c.f(c.m_bar) + 2.0);
    EXPECT_NEAR(c.Fstar(alpha), brute_Fstar(c, alpha), 1e-6) << "trial " << trial;
  }
}

TEST(ModelProperty, FenchelYoung) {
  // F(m) + F*(alpha) >= alpha m, with equality at alpha = f(m) for interior m.
  Gen gen(25);
  for (int trial = 0; trial < 500; ++trial) {
    const auto c = power(gen.uniform(0.1, 3.0), gen.uniform(1.3, 4.0), gen.uniform(1.1, 5.0));
    const double m = gen.uniform(0.0, c.m_bar), alpha = gen.uniform(-3.0, 10.0);
    EXPECT_GE(c.F(m) + c.Fstar(alpha) - alpha * m, -1e-12);
    const double a = c.f(m);
    EXPECT_NEAR(c.F(m) + c.Fstar(a) - a * m, 0.0, 1e-8);
    // any alpha >= f(m_bar) is a subgradient at the cap
    const double above = c.f(c.m_bar) + gen.uniform(0.0, 5.0);
    EXPECT_NEAR(c.F(c.m_bar) + c.Fstar(above) - above * c.m_bar, 0.0, 1e-8);
  }
}

TEST(Model, PenaltyValue) {
  CouplingSpec c;
  c.m_bar = 2.0;
  c.theta = 2.0;
  const auto pe = penalize(c, 0.1);
  EXPECT_DOUBLE_EQ(pe.f(3.0), 10.0);
  EXPECT_THROW(penalize(c, 0.0), std::invalid_argument);
  EXPECT_THROW(penalize(c, -1.0), std::invalid_argument);
}

TEST(ModelProperty, PenaltyInactiveBelowCapAndMonotoneAbove) {
  Gen gen(26);
  for (int trial = 0; trial < 200; ++trial) {
    const auto c = power(gen.uniform(0.0, 2.0), gen.uniform(1.5, 3.0), gen.uniform(1.1, 4.0));
    const double e1 = gen.uniform(0.01, 1.0), e2 = e1 * gen.uniform(1.1, 3.0);
    const double below = gen.uniform(0.0, c.m_bar), above = c.m_bar + gen.uniform(0.01, 2.0);
    EXPECT_DOUBLE_EQ(penalize(c, e1).f(below), c.f(below));
    EXPECT_GT(penalize(c, e1).f(above), penalize(c, e2).f(above));
    EXPECT_EQ(penalize(c, e1).f(0.0), 0.0);
    double prev = 0.0;
    for (int i = 1; i <= 50; ++i) {
      const double v = penalize(c, e1).f(2.0 * c.m_bar * i / 50);
      EXPECT_GE(v, prev);
      prev = v;
    }
  }
  const auto c = power(1.0, 2.0, 2.0);
  EXPECT_GT(penalize(c, 1e-6).f(2.5), 1e5);
}

TEST(Model, ValidateAcceptsUniformData) {
  const auto r = validate(uniform_problem(2.0, 0.5), GridSpec{1, 32, 8, 1.0});
  EXPECT_TRUE(r.ok) << r.summary();
  EXPECT_NEAR(r.m0_mass, 1.0, 1e-12);
  EXPECT_TRUE(r.hessian_bounds);
}

TEST(Model, ValidateRejectsInitialDensityNearCap) {
  // m0 = 1 + 0.9 cos(2 pi x) peaks at 1.9 >= m_bar - c_bar = 1.8
  auto p = uniform_problem(2.0, 0.2);
  p.m0 = problems::cosine(0.9, 1.0);
  const auto r = validate(p, GridSpec{1, 64, 8, 1.0});
  EXPECT_FALSE(r.ok);
  ASSERT_FALSE(r.errors.empty());
  EXPECT_NE(r.errors[0].find("m_bar - c_bar"), std::string::npos);
}

TEST(Model, ValidateRejectsCapBelowOne) {
  const auto r = validate(uniform_problem(0.5, 0.01), GridSpec{1, 16, 8, 1.0});
  EXPECT_FALSE(r.ok);
  EXPECT_NE(r.summary().find("m_bar"), std::string::npos);
}

TEST(Model, ValidateFlagsNonQuadraticGrowthButPasses) {
  auto p = uniform_problem(2.0, 0.5);
  p.H.s = 3.0;
  const auto r = validate(p, GridSpec{1, 16, 8, 1.0});
  EXPECT_TRUE(r.ok);
  EXPECT_FALSE(r.hessian_bounds);
}

TEST(Model, ValidateChecksShapes) {
  auto p = uniform_problem(2.0, 0.5);
  EXPECT_FALSE(validate(p, GridSpec{2, 16, 8, 1.0}).ok);
  EXPECT_FALSE(validate(p, GridSpec{1, 16, 8, 2.0}).ok);
  p.m0 = FourierSeries::constant(-1.0);
  EXPECT_FALSE(validate(p, GridSpec{1, 16, 8, 1.0}).ok);
}

TEST(Model, SampledInitialDensityHasUnitMass) {
  const auto p = problems::saturating_well();
  const GridSpec g{1, 37, 4, 1.0};
  const auto m0 = sample_m0(p, g);
  double s = 0.0;
  for (double v : m0) s += v;
  EXPECT_NEAR(s * g.cell_volume(), 1.0, 1e-14);
}

TEST(Model, FourierSeriesRealPart) {
  FourierSeries f{{FourierTerm{{1, 0}, 0.0, 1.0}}};  // Re(i e^{2 pi i x}) = -sin(2 pi x)
  EXPECT_NEAR(f({0.25, 0.0}), -1.0, 1e-15);
  const auto g = f.gradient({0.0, 0.0});
  EXPECT_NEAR(g[0], -2.0 * std::numbers::pi, 1e-14);
  EXPECT_DOUBLE_EQ(g[1], 0.0);
}

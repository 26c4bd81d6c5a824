#include <gtest/gtest.h>

#include <cmath>

#include "generators.hpp"
#include "mfgdc/grid.hpp"

using namespace mfgdc;
using mfgdc::testing::Gen;

namespace {

double periodic_distance(double a, double b) {
  double d = std::abs(a - b);
  d -= std::floor(d);
  return std::min(d, 1.0 - d);
}

// Sum of hat functions centred on the lattice (j + offset) dx, written
// independently of the library's index arithmetic.
double hat_interp(int nx, const std::vector<double>& v, double x, double offset) {
  const double h = 1.0 / nx;
  double s = 0.0;
  for (int j = 0; j < nx; ++j) s += std::max(0.0, 1.0 - periodic_distance(x, (j + offset) * h) / h) * v[j];
  return s;
}

double hat_interp_2d(int nx, const std::vector<double>& v, double x, double y) {
  const double h = 1.0 / nx;
  double s = 0.0;
  for (int j = 0; j < nx; ++j)
    for (int i = 0; i < nx; ++i) {
      const double wx = std::max(0.0, 1.0 - periodic_distance(x, (i + 0.5) * h) / h);
      const double wy = std::max(0.0, 1.0 - periodic_distance(y, (j + 0.5) * h) / h);
      s += wx * wy * v[i + nx * j];
    }
  return s;
}

}  // namespace

TEST(Grid, SpacingAndCells) {
  GridSpec g{2, 8, 4, 2.0};
  EXPECT_DOUBLE_EQ(g.dx() * g.nx, 1.0);
  EXPECT_DOUBLE_EQ(g.dt(), 0.5);
  EXPECT_EQ(g.cells(), 64);
  EXPECT_DOUBLE_EQ(g.cell_volume(), 1.0 / 64.0);
  EXPECT_DOUBLE_EQ(g.center(9, 0), 1.5 / 8);
  EXPECT_DOUBLE_EQ(g.center(9, 1), 1.5 / 8);
}

TEST(Grid, ValidateRejectsBadShapes) {
  EXPECT_THROW((GridSpec{3, 8, 4, 1.0}.validate()), std::invalid_argument);
  EXPECT_THROW((GridSpec{1, 2, 4, 1.0}.validate()), std::invalid_argument);
  EXPECT_THROW((GridSpec{1, 8, 1, 1.0}.validate()), std::invalid_argument);
  EXPECT_THROW((GridSpec{1, 8, 4, 0.0}.validate()), std::invalid_argument);
  EXPECT_NO_THROW((GridSpec{1, 8, 4, 1.0}.validate()));
}

TEST(Grid, NeighborWrapsPeriodically) {
  GridSpec g{2, 5, 2, 1.0};
  EXPECT_EQ(g.neighbor(4, 0, +1), 0);
  EXPECT_EQ(g.neighbor(0, 0, -1), 4);
  EXPECT_EQ(g.neighbor(20, 1, +1), 0);
  EXPECT_EQ(g.neighbor(3, 1, -1), 23);
}

TEST(Grid, DivergenceOfUnitFace) {
  GridSpec g{1, 4, 2, 1.0};
  std::vector<double> w{1.0, 0.0, 0.0, 0.0}, out(4);
  divergence_into(g, w, out);
  const double dx = g.dx();
  EXPECT_DOUBLE_EQ(out[0], 1.0 / dx);
  EXPECT_DOUBLE_EQ(out[1], -1.0 / dx);
  EXPECT_DOUBLE_EQ(out[2], 0.0);
  EXPECT_DOUBLE_EQ(out[3], 0.0);
}

TEST(Grid, GradientOfLinearRamp) {
  GridSpec g{1, 4, 2, 1.0};
  std::vector<double> u{0.0, 1.0, 2.0, 3.0};
  auto grad = gradient(g, u);
  EXPECT_DOUBLE_EQ(grad[0], 4.0);
  EXPECT_DOUBLE_EQ(grad[2], 4.0);
  EXPECT_DOUBLE_EQ(grad[3], -12.0);
}

TEST(GridProperty, GradientIsNegativeAdjointOfDivergence) {
  Gen gen(11);
  for (int trial = 0; trial < 200; ++trial) {
    const auto g = gen.grid(trial % 2 + 1);
    auto u = gen.vec(g.cells(), -1.0, 1.0);
    auto w = gen.vec(size_t(g.d) * g.cells(), -1.0, 1.0);
    std::vector<double> div(g.cells()), grad(w.size());
    divergence_into(g, w, div);
    gradient_into(g, u, grad);
    const double lhs = mfgdc::testing::dot(grad, w), rhs = -mfgdc::testing::dot(u, div);
    EXPECT_NEAR(lhs, rhs, 1e-12 * std::max(1.0, std::abs(lhs))) << "trial " << trial;
  }
}

TEST(GridProperty, DivergenceHasZeroMean) {
  Gen gen(12);
  for (int trial = 0; trial < 100; ++trial) {
    const auto g = gen.grid(trial % 2 + 1);
    auto w = gen.vec(size_t(g.d) * g.cells(), -5.0, 5.0);
    std::vector<double> div(g.cells());
    divergence_into(g, w, div);
    double s = 0.0;
    for (double v : div) s += v;
    EXPECT_NEAR(s * g.cell_volume(), 0.0, 1e-12);
  }
}

TEST(GridProperty, ContinuityResidualVanishesOnTransportedDensity) {
  // March m[k+1] = m[k] - dt div w[k] from random data: mass is conserved and
  // the residual is at round-off level.
  Gen gen(13);
  for (int trial = 0; trial < 50; ++trial) {
    const auto g = gen.grid(trial % 2 + 1);
    auto m0 = gen.density(g, 0.3);
    ScalarField m(g, FieldKind::density);
    auto w = gen.momentum(g, -0.05, 0.05);
    for (int c = 0; c < g.cells(); ++c) m(0, c) = m0[c];
    for (int k = 0; k < g.nt; ++k) {
      auto div = divergence(w, k);
      for (int c = 0; c < g.cells(); ++c) m(k + 1, c) = m(k, c) - g.dt() * div[c];
    }
    const auto r = continuity_residual(m, w, m0);
    EXPECT_LT(r.norm, 1e-10);
    EXPECT_EQ(r.initial_mismatch, 0.0);
    for (int k = 0; k <= g.nt; ++k) EXPECT_NEAR(m.mass(k), 1.0, 1e-12);
  }
}

TEST(Grid, ContinuityResidualOfStaticDensityWithFlux) {
  GridSpec g{1, 4, 2, 1.0};
  ScalarField m(g, FieldKind::density, 1.0);
  MomentumField w(g);
  w(0, 0, 0) = 1.0;
  std::vector<double> m0(4, 1.0);
  const auto r = continuity_residual(m, w, m0);
  EXPECT_DOUBLE_EQ(r.residual(0, 0), 4.0);
  EXPECT_DOUBLE_EQ(r.residual(0, 1), -4.0);
  // L2 over space-time: sqrt((16 + 16) dx dt)
  EXPECT_NEAR(r.norm, std::sqrt(32.0 * 0.25 * 0.5), 1e-14);
}

TEST(GridProperty, DensityInterpolationMatchesHatSum1D) {
  Gen gen(14);
  for (int trial = 0; trial < 100; ++trial) {
    GridSpec g = gen.grid(1);
    ScalarField m = gen.scalar(g, 0.0, 2.0);
    const int k = gen.integer(0, g.nt - 1);
    const double ft = gen.uniform(0.0, 1.0), t = (k + ft) * g.dt();
    const double x = gen.uniform(-1.0, 2.0);
    std::vector<double> a(m.slice(k).begin(), m.slice(k).end()), b(m.slice(k + 1).begin(), m.slice(k + 1).end());
    const double ref = (1.0 - ft) * hat_interp(g.nx, a, x, 0.5) + ft * hat_interp(g.nx, b, x, 0.5);
    EXPECT_NEAR(interp_density(m, t, std::span<const double>(&x, 1)), ref, 1e-12);
  }
}

TEST(GridProperty, DensityInterpolationMatchesHatSum2D) {
  Gen gen(15);
  for (int trial = 0; trial < 50; ++trial) {
    GridSpec g = gen.grid(2);
    ScalarField m = gen.scalar(g, 0.0, 2.0);
    const double x[2] = {gen.uniform(0.0, 1.0), gen.uniform(0.0, 1.0)};
    std::vector<double> a(m.slice(0).begin(), m.slice(0).end());
    EXPECT_NEAR(interp_density(m, 0.0, std::span<const double>(x, 2)), hat_interp_2d(g.nx, a, x[0], x[1]), 1e-12);
  }
}

TEST(GridProperty, MomentumInterpolationUsesFacePositions) {
  Gen gen(16);
  for (int trial = 0; trial < 100; ++trial) {
    GridSpec g = gen.grid(1);
    MomentumField w = gen.momentum(g, -1.0, 1.0);
    const int k = gen.integer(0, g.nt - 2);
    const double ft = gen.uniform(0.0, 1.0), t = (k + 0.5 + ft) * g.dt();
    const double x = gen.uniform(0.0, 1.0);
    std::vector<double> a(w.slice(k).begin(), w.slice(k).end()), b(w.slice(k + 1).begin(), w.slice(k + 1).end());
    const double ref = (1.0 - ft) * hat_interp(g.nx, a, x, 1.0) + ft * hat_interp(g.nx, b, x, 1.0);
    double out = 0.0;
    interp_momentum(w, t, std::span<const double>(&x, 1), std::span<double>(&out, 1));
    EXPECT_NEAR(out, ref, 1e-12);
  }
}

TEST(Grid, InterpolationAtCellCentreReturnsCellValue) {
  GridSpec g{1, 8, 2, 1.0};
  ScalarField m(g, FieldKind::density);
  for (int c = 0; c < 8; ++c) m(1, c) = c;
  const double x = g.center(5, 0);
  EXPECT_DOUBLE_EQ(interp_density(m, g.dt(), std::span<const double>(&x, 1)), 5.0);
  const double mid = 0.5 * (g.center(7, 0) + 1.0 + g.center(0, 0));
  EXPECT_NEAR(interp_density(m, g.dt(), std::span<const double>(&mid, 1)), 3.5, 1e-14);
}

TEST(Grid, VelocityBelowFloorThrows) {
  GridSpec g{1, 8, 2, 1.0};
  ScalarField m(g, FieldKind::density, 0.0);
  MomentumField w(g, 1.0);
  double x = 0.3, v = 0.0;
  EXPECT_THROW(interp_velocity(m, w, 0.5, std::span<const double>(&x, 1), std::span<double>(&v, 1)),
               DegenerateVelocityError);
}

TEST(Grid, FieldSliceBoundsAreChecked) {
  GridSpec g{1, 8, 2, 1.0};
  ScalarField m(g, FieldKind::density);
  MomentumField w(g);
  EXPECT_THROW(m.slice(3), std::out_of_range);
  EXPECT_THROW(w.slice(2), std::out_of_range);
  EXPECT_THROW(divergence(w, 2), std::out_of_range);
}

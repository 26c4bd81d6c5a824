#include <gtest/gtest.h>

#include <array>
#include <cmath>

#include "generators.hpp"
#include "mfgdc/prox.hpp"
#include "oracles.hpp"

using namespace mfgdc;
using mfgdc::testing::Gen;
using mfgdc::testing::ProxInstance;
using mfgdc::testing::brute_minimiser;
using mfgdc::testing::random_prox_instance;

namespace {

ProxResult run_prox(const ProxInstance& in) {
  return prox_pointwise(in.a_bar, std::span<const double>(in.b_bar.data(), in.H.size()), in.tau, in.coupling, in.H);
}

ProxInstance kink_setting(double a_bar, double b_bar) {
  ProxInstance in;
  in.coupling.m_bar = 1.0;
  in.a_bar = a_bar;
  in.b_bar[0] = b_bar;
  return in;
}

}  // namespace

TEST(Prox, ZeroRegionIsIdentity) {
  const auto in = kink_setting(2.0, 0.0);
  const auto r = run_prox(in);
  EXPECT_DOUBLE_EQ(r.a, 2.0);
  EXPECT_DOUBLE_EQ(r.b[0], 0.0);
  EXPECT_DOUBLE_EQ(r.m, 0.0);
}

TEST(Prox, LinearRegionShiftsByCap) {
  const auto in = kink_setting(-1.0, 0.0);
  const auto r = run_prox(in);
  EXPECT_NEAR(r.a, 0.0, 1e-12);
  EXPECT_NEAR(r.b[0], 0.0, 1e-12);
  const auto z = brute_minimiser(in, 2);
  EXPECT_NEAR(r.a, z[0], 1e-4);
  EXPECT_NEAR(r.b[0], z[1], 1e-4);
}

TEST(Prox, MixedPointMatchesBruteForce) {
  const auto in = kink_setting(-2.0, 1.0);
  const auto r = run_prox(in);
  const auto z = brute_minimiser(in, 2);
  EXPECT_NEAR(r.a, z[0], 1e-4);
  EXPECT_NEAR(r.b[0], z[1], 1e-4);
}

TEST(Prox, RejectsNonPositiveStep) {
  auto in = kink_setting(0.0, 0.0);
  in.tau = 0.0;
  EXPECT_THROW(run_prox(in), std::invalid_argument);
}

TEST(ProxProperty, MatchesBruteForceOnRandomInstances) {
  Gen gen(31);
  int worst_trial = -1;
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto in = random_prox_instance(gen, 1);
    const auto r = run_prox(in);
    const auto z = brute_minimiser(in, 2);
    const double err = std::max(std::abs(r.a - z[0]), std::abs(r.b[0] - z[1]));
    if (err > worst) {
      worst = err;
      worst_trial = trial;
    }
  }
  EXPECT_LE(worst, 1e-4) << "worst trial " << worst_trial;
}

TEST(ProxProperty, TwoBlockHamiltonianMatchesBruteForce) {
  Gen gen(32);
  for (int trial = 0; trial < 60; ++trial) {
    const auto in = random_prox_instance(gen, 2);
    const auto r = run_prox(in);
    const auto z = brute_minimiser(in, 3);
    EXPECT_NEAR(r.a, z[0], 1e-4) << "trial " << trial;
    EXPECT_NEAR(r.b[0], z[1], 1e-4) << "trial " << trial;
    EXPECT_NEAR(r.b[1], z[2], 1e-4) << "trial " << trial;
  }
}

TEST(ProxProperty, OutputSatisfiesStationarity) {
  // At the minimiser a - a_bar = tau m and the multiplier lies in [0, cap].
  Gen gen(33);
  for (int trial = 0; trial < 500; ++trial) {
    const auto in = random_prox_instance(gen, gen.integer(1, 2));
    const auto r = run_prox(in);
    EXPECT_NEAR(r.a - in.a_bar, in.tau * r.m, 1e-12);
    EXPECT_GE(r.m, 0.0);
    EXPECT_LE(r.m, in.coupling.cap());
  }
}

TEST(ProxProperty, RadialShrinkSolvesItsEquation) {
  Gen gen(34);
  for (int trial = 0; trial < 500; ++trial) {
    const double r = gen.uniform(0.0, 5.0), lambda = gen.uniform(0.0, 3.0), s = gen.uniform(1.2, 4.0);
    double rho = 0.0, drho = 0.0;
    detail::radial_shrink(r, lambda, s, 1e-15, rho, drho);
    EXPECT_NEAR(rho + lambda * std::pow(rho, s - 1.0), r, 1e-12 * std::max(1.0, r));
    EXPECT_GE(rho, 0.0);
    EXPECT_LE(rho, r);
  }
}

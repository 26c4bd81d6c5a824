#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "mfgdc/grid.hpp"
#include "mfgdc/model.hpp"
#include "mfgdc/prox.hpp"

namespace mfgdc {

/// Problem data sampled on a grid.
///
/// Discrete layout shared by the solver and the certificates:
///   u    on nodes k = 0..nt with u[nt] = g,
///   m    on nodes k = 0..nt with m[0] = m0,
///   W    on midpoints k+1/2 and faces,
/// and the space-time cell n = 1..nt carries the pair (m[n], W[n-1/2]) and the
/// Hamilton-Jacobi residual
///   alpha[n] = -(u[n] - u[n-1]) / dt + Hh(D u[n-1]),
/// where Hh averages H over the forward and backward differences. The
/// functionals below are exact Fenchel duals of each other on this layout.
struct Discretization {
  GridSpec grid;
  HamiltonianSpec H;
  CouplingSpec coupling;
  std::vector<double> m0, g, V;

  Discretization(const ProblemSpec& p, const GridSpec& gr)
      : grid(gr), H(p.H), coupling(p.coupling), m0(sample_m0(p, gr)), g(sample_g(p, gr)), V(sample_V(p, gr)) {
    grid.validate();
  }

  int pair_size() const { return 2 * grid.d; }

  /// Hh at cell c: weight 1/2 on each of the forward/backward blocks.
  BlockHamiltonian pair_hamiltonian(int c) const { return BlockHamiltonian{H.s, grid.d, 2, 0.5, V[c]}; }

  /// Forward then backward differences of slice u at cell c.
  void difference_pair(std::span<const double> u, int c, std::span<double> b) const {
    const double inv = 1.0 / grid.dx();
    for (int a = 0; a < grid.d; ++a) {
      b[a] = (u[grid.neighbor(c, a, +1)] - u[c]) * inv;
      b[grid.d + a] = (u[c] - u[grid.neighbor(c, a, -1)]) * inv;
    }
  }

  double omega() const { return grid.cell_volume() * grid.dt(); }
};

/// Lagrangian of the un-shifted radial part, |q|^s' / s'.
inline double radial_lagrangian(double s, std::span<const double> q) {
  double n2 = 0.0;
  for (double v : q) n2 += v * v;
  const double sp = s / (s - 1.0);
  return sp == 2.0 ? 0.5 * n2 : std::pow(std::sqrt(n2), sp) / sp;
}

/// alpha[n] on rows n = 1..nt (row 0 left at zero).
inline ScalarField hj_residual(const ScalarField& u, const Discretization& disc) {
  const auto& grid = disc.grid;
  ScalarField alpha(grid, FieldKind::generic);
  std::array<double, 4> b{};
  const int nb = disc.pair_size();
  for (int n = 1; n <= grid.nt; ++n) {
    auto prev = u.slice(n - 1);
    for (int c = 0; c < grid.cells(); ++c) {
      disc.difference_pair(prev, c, std::span<double>(b.data(), nb));
      alpha(n, c) = -(u(n, c) - u(n - 1, c)) / grid.dt() + disc.pair_hamiltonian(c).value({b.data(), size_t(nb)});
    }
  }
  return alpha;
}

/// Discrete primal functional A(u) = sum F*(alpha) dx^d dt - sum u[0] m0 dx^d.
inline double eval_A_discrete(const ScalarField& u, const Discretization& disc) {
  const auto alpha = hj_residual(u, disc);
  const auto& grid = disc.grid;
  double s = 0.0;
  for (int n = 1; n <= grid.nt; ++n)
    for (int c = 0; c < grid.cells(); ++c) s += disc.coupling.Fstar(alpha(n, c));
  s *= disc.omega();
  double lin = 0.0;
  for (int c = 0; c < grid.cells(); ++c) lin += u(0, c) * disc.m0[c];
  return s - lin * grid.cell_volume();
}

/// Relaxed functional: sum F*(alpha_ac) dx^d dt + m_bar sum alpha_T dx^d - sum u[0] m0 dx^d.
/// alpha_ac uses rows 1..nt.
inline double eval_A_relaxed(const ScalarField& u, const ScalarField& alpha_ac, std::span<const double> alpha_T,
                             const Discretization& disc) {
  const auto& grid = disc.grid;
  double s = 0.0;
  for (int n = 1; n <= grid.nt; ++n)
    for (int c = 0; c < grid.cells(); ++c) {
      const double a = alpha_ac(n, c);
      if (a < 0.0) throw std::invalid_argument("eval_A_relaxed: alpha_ac must be non-negative");
      s += disc.coupling.Fstar(a);
    }
  s *= disc.omega();
  double atom = 0.0;
  for (double a : alpha_T) {
    if (a < 0.0) throw std::invalid_argument("eval_A_relaxed: alpha_T must be non-negative");
    atom += a;
  }
  if (atom > 0.0 && !disc.coupling.hard()) return kInf;
  atom *= disc.coupling.m_bar * grid.cell_volume();
  double lin = 0.0;
  for (int c = 0; c < grid.cells(); ++c) lin += u(0, c) * disc.m0[c];
  return s + atom - lin * grid.cell_volume();
}

/// Discrete dual functional B(m, W); rows 1..nt of m are used, m[0] is
/// assumed equal to m0. The kinetic term of each cell charges
/// 1/2 m_c [L(v+) + L(v-)] with face velocities v = W_f / M_f and
/// M_f the mean density of the two cells sharing the face. Returns +inf on
/// M_f = 0 with W_f != 0, on m < -cap_tol, or on m > cap + cap_tol.
inline double eval_B(const ScalarField& m, const MomentumField& W, const Discretization& disc,
                     double cap_tol = 1e-6) {
  const auto& grid = disc.grid;
  const int d = grid.d;
  const double cap = disc.coupling.cap();
  double run = 0.0;
  std::array<double, 2> vp{}, vm{};
  for (int n = 1; n <= grid.nt; ++n) {
    const int k = n - 1;
    for (int c = 0; c < grid.cells(); ++c) {
      double mc = m(n, c);
      if (mc < -cap_tol || mc > cap + cap_tol || !std::isfinite(mc)) return kInf;
      mc = std::clamp(mc, 0.0, cap);
      for (int a = 0; a < d; ++a) {
        const int cp = grid.neighbor(c, a, +1), cm = grid.neighbor(c, a, -1);
        const double Mp = 0.5 * (mc + std::clamp(m(n, cp), 0.0, cap));
        const double Mm = 0.5 * (mc + std::clamp(m(n, cm), 0.0, cap));
        const double Wp = W(k, a, c), Wm = W(k, a, cm);
        if (Mp <= 0.0) {
          if (Wp != 0.0) return kInf;
          vp[a] = 0.0;
        } else {
          vp[a] = Wp / Mp;
        }
        if (Mm <= 0.0) {
          if (Wm != 0.0) return kInf;
          vm[a] = 0.0;
        } else {
          vm[a] = Wm / Mm;
        }
      }
      if (mc > 0.0)
        run += 0.5 * mc *
                   (radial_lagrangian(disc.H.s, {vp.data(), size_t(d)}) +
                    radial_lagrangian(disc.H.s, {vm.data(), size_t(d)})) +
               mc * disc.V[c];
      run += disc.coupling.F(mc);
    }
  }
  double term = 0.0;
  for (int c = 0; c < grid.cells(); ++c) term += disc.g[c] * m(grid.nt, c);
  return run * disc.omega() + term * grid.cell_volume();
}

/// Prices (alpha_ac, alpha_T) built from (f(m) + beta, beta_T), raised where
/// needed so that the Hamilton-Jacobi inequality holds cellwise; this keeps
/// eval_A_relaxed an upper bound of the primal optimum.
struct CertifiedPrices {
  ScalarField alpha_ac;
  std::vector<double> alpha_T;
  double hj_violation = 0.0;  // mass of the raise, sum (alpha - f - beta)_+ dx^d dt
};

inline CertifiedPrices certified_prices(const ScalarField& u, const ScalarField& m, const ScalarField& beta,
                                        std::span<const double> beta_T, const Discretization& disc) {
  const auto& grid = disc.grid;
  const auto alpha = hj_residual(u, disc);
  CertifiedPrices out{ScalarField(grid, FieldKind::generic), std::vector<double>(grid.cells(), 0.0), 0.0};
  const bool hard = disc.coupling.hard();
  for (int n = 1; n <= grid.nt; ++n)
    for (int c = 0; c < grid.cells(); ++c) {
      const double fm = disc.coupling.f(std::max(m(n, c), 0.0));
      double price, need = alpha(n, c);
      if (n < grid.nt) {
        price = fm + beta(n, c);
      } else {
        price = fm;
        if (hard) need -= beta_T[c] / grid.dt();
      }
      out.hj_violation += std::max(need - price, 0.0);
      out.alpha_ac(n, c) = std::max({price, need, 0.0});
    }
  out.hj_violation *= disc.omega();
  if (hard)
    for (int c = 0; c < grid.cells(); ++c) out.alpha_T[c] = std::max(beta_T[c], 0.0);
  return out;
}

struct EnergyBalance {
  double lhs = 0.0;
  double rhs = 0.0;
  double residual = 0.0;
  double relative = 0.0;
};

/// Discrete energy identity: sum m (-Hh + b.grad Hh + alpha_ac) dx^d dt + m_bar sum alpha_T dx^d
/// against sum (m0 u[0] - m[nt] g) dx^d.
inline EnergyBalance energy_balance(const ScalarField& u, const ScalarField& m, const CertifiedPrices& prices,
                                    const Discretization& disc) {
  const auto& grid = disc.grid;
  const int nb = disc.pair_size();
  std::array<double, 4> b{}, gb{};
  EnergyBalance e;
  double s = 0.0;
  for (int n = 1; n <= grid.nt; ++n) {
    auto prev = u.slice(n - 1);
    for (int c = 0; c < grid.cells(); ++c) {
      disc.difference_pair(prev, c, {b.data(), size_t(nb)});
      const auto Hh = disc.pair_hamiltonian(c);
      Hh.gradient({b.data(), size_t(nb)}, {gb.data(), size_t(nb)});
      double bg = 0.0;
      for (int i = 0; i < nb; ++i) bg += b[i] * gb[i];
      s += m(n, c) * (-Hh.value({b.data(), size_t(nb)}) + bg + prices.alpha_ac(n, c));
    }
  }
  double atom = 0.0;
  for (double a : prices.alpha_T) atom += a;
  e.lhs = s * disc.omega() + disc.coupling.m_bar * atom * grid.cell_volume();
  double r = 0.0;
  for (int c = 0; c < grid.cells(); ++c) r += disc.m0[c] * u(0, c) - m(grid.nt, c) * disc.g[c];
  e.rhs = r * grid.cell_volume();
  e.residual = std::abs(e.lhs - e.rhs);
  e.relative = e.residual / std::max({std::abs(e.lhs), std::abs(e.rhs), 1e-300});
  return e;
}

/// Relative gap |A + B| / max(|A|, |B|), with a floor on the scale so that the
/// trivial problem (A = B = 0) reads as converged.
inline double relative_gap(double A, double B) {
  if (!std::isfinite(A) || !std::isfinite(B)) return kInf;
  return std::abs(A + B) / std::max({std::abs(A), std::abs(B), 1e-6});
}

struct GapSummary {
  double A = 0.0;
  double B = 0.0;
  double gap = 0.0;
  double relative_gap = 0.0;
  double hj_violation = 0.0;
  double complementarity_interior = 0.0;  // sum beta |m_bar - m| / (m_bar sum beta), 0 when beta = 0
  double complementarity_terminal = 0.0;
  double beta_l1 = 0.0;    // interior rows, dx^d dt weighted
  double beta_T_l1 = 0.0;  // dx^d weighted
  EnergyBalance energy;
};

/// Evaluates both functionals and the optimality residuals of a candidate
/// (u, m, W, beta, beta_T). Uses nothing but the fields and the problem data.
inline GapSummary evaluate_gap(const ScalarField& u, const ScalarField& m, const MomentumField& W,
                               const ScalarField& beta, std::span<const double> beta_T, const Discretization& disc) {
  const auto& grid = disc.grid;
  GapSummary out;
  const auto prices = certified_prices(u, m, beta, beta_T, disc);
  out.A = eval_A_relaxed(u, prices.alpha_ac, prices.alpha_T, disc);
  out.B = eval_B(m, W, disc);
  out.gap = out.A + out.B;
  out.relative_gap = relative_gap(out.A, out.B);
  out.hj_violation = prices.hj_violation;
  const double mb = disc.coupling.m_bar;
  double sb = 0.0, sc = 0.0;
  for (int n = 1; n < grid.nt; ++n)
    for (int c = 0; c < grid.cells(); ++c) {
      sb += beta(n, c);
      sc += beta(n, c) * std::abs(mb - m(n, c));
    }
  out.beta_l1 = sb * disc.omega();
  out.complementarity_interior = sb > 0.0 ? sc / (mb * sb) : 0.0;
  sb = sc = 0.0;
  for (int c = 0; c < grid.cells(); ++c) {
    sb += beta_T[c];
    sc += beta_T[c] * std::abs(mb - m(grid.nt, c));
  }
  out.beta_T_l1 = sb * grid.cell_volume();
  out.complementarity_terminal = sb > 0.0 ? sc / (mb * sb) : 0.0;
  out.energy = energy_balance(u, m, prices, disc);
  return out;
}

}  // namespace mfgdc

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string>

#include "mfgdc/model.hpp"

namespace mfgdc {

/// Radial Hamiltonian acting on a stacked covector b = (b_1, ..., b_G), each
/// block of dimension `block_dim`:
///   Hh(b) = weight * sum_g |b_g|^s / s - V.
/// With one block and weight 1 this is H(x, p) itself; the solver uses two
/// blocks (forward and backward differences) with weight 1/2.
struct BlockHamiltonian {
  double s = 2.0;
  int block_dim = 1;
  int blocks = 1;
  double weight = 1.0;
  double V = 0.0;

  int size() const { return block_dim * blocks; }

  double value(std::span<const double> b) const {
    double h = 0.0;
    for (int g = 0; g < blocks; ++g) h += power(norm(b, g));
    return weight * h - V;
  }

  /// Gradient of Hh at b, written to out.
  void gradient(std::span<const double> b, std::span<double> out) const {
    for (int g = 0; g < blocks; ++g) {
      const double n = norm(b, g);
      const double scale = n > 0.0 ? weight * std::pow(n, s - 2.0) : 0.0;
      for (int i = 0; i < block_dim; ++i) out[g * block_dim + i] = scale * b[g * block_dim + i];
    }
  }

  double norm(std::span<const double> b, int g) const {
    double n2 = 0.0;
    for (int i = 0; i < block_dim; ++i) n2 += b[g * block_dim + i] * b[g * block_dim + i];
    return std::sqrt(n2);
  }
  double power(double n) const { return s == 2.0 ? 0.5 * n * n : std::pow(n, s) / s; }
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ProxResult {
  double a = 0.0;
  std::array<double, 4> b{};
  double m = 0.0;  // multiplier of the prox, equal to the density selected at the output
  int iterations = 0;
};

namespace detail {

/// rho solving rho + lambda * rho^(s-1) = r, r >= 0, plus d rho / d lambda.
inline void radial_shrink(double r, double lambda, double s, double tol, double& rho, double& drho) {
  if (r == 0.0 || lambda == 0.0) {
    rho = r;
    drho = r == 0.0 ? 0.0 : -std::pow(r, s - 1.0);
    return;
  }
  if (s == 2.0) {
    rho = r / (1.0 + lambda);
    drho = -rho / (1.0 + lambda);
    return;
  }
  double lo = 0.0, hi = r;
  double x = s > 2.0 ? std::min(r, std::pow(r / lambda, 1.0 / (s - 1.0))) : r / (1.0 + lambda);
  for (int it = 0; it < 200; ++it) {
    const double g = x + lambda * std::pow(x, s - 1.0) - r;
    if (g > 0.0)
      hi = x;
    else
      lo = x;
    if (hi - lo <= tol * std::max(r, 1e-300)) break;
    const double dg = 1.0 + lambda * (s - 1.0) * std::pow(x, s - 2.0);
    double xn = x - g / dg;
    if (!(xn > lo && xn < hi) || !std::isfinite(xn)) xn = 0.5 * (lo + hi);
    if (std::abs(xn - x) <= tol * std::max(r, 1e-300)) {
      x = xn;
      break;
    }
    x = xn;
  }
  rho = x;
  drho = x > 0.0 ? -std::pow(x, s - 1.0) / (1.0 + lambda * (s - 1.0) * std::pow(x, s - 2.0)) : 0.0;
}

}  // namespace detail

/// Proximal map of tau * c(a, b), c(a, b) = F*(-a + Hh(b)):
/// returns the minimiser of 1/2|a - a_bar|^2 + 1/2|b - b_bar|^2 + tau c(a, b).
///
/// Writing F*(alpha) = sup_m m alpha - F(m), the minimiser is
/// a = a_bar + tau m, b = prox_{tau m Hh}(b_bar), where m is the root of the
/// decreasing function psi(m) = -a_bar - tau m + Hh(b(m)) - f(m), clamped to
/// [0, cap]. psi(0) <= 0 is the zero region (identity), psi(cap) >= 0 the
/// linear region; otherwise m is found by safeguarded Newton.
inline ProxResult prox_pointwise(double a_bar, std::span<const double> b_bar, double tau,
                                 const CouplingSpec& coupling, const BlockHamiltonian& H, double tol = 1e-12,
                                 int max_iters = 200) {
  if (!(tau > 0.0)) throw std::invalid_argument("prox_pointwise: tau must be positive");
  const int nb = H.size();
  ProxResult out;
  std::array<double, 4> rbar{};
  for (int g = 0; g < H.blocks; ++g) rbar[g] = H.norm(b_bar, g);

  auto eval = [&](double m, double& psi, double& dpsi) {
    const double lambda = tau * m * H.weight;
    double hh = 0.0, dhh = 0.0;
    for (int g = 0; g < H.blocks; ++g) {
      double rho, drho;
      detail::radial_shrink(rbar[g], lambda, H.s, 1e-15, rho, drho);
      hh += H.power(rho);
      dhh += std::pow(rho, H.s - 1.0) * drho * tau * H.weight;
    }
    hh = H.weight * hh - H.V;
    dhh *= H.weight;
    psi = -a_bar - tau * m + hh - coupling.f(m);
    dpsi = -tau + dhh - coupling.df(m);
  };

  auto finish = [&](double m) {
    out.m = m;
    out.a = a_bar + tau * m;
    const double lambda = tau * m * H.weight;
    for (int g = 0; g < H.blocks; ++g) {
      double rho, drho;
      detail::radial_shrink(rbar[g], lambda, H.s, 1e-15, rho, drho);
      const double scale = rbar[g] > 0.0 ? rho / rbar[g] : 0.0;
      for (int i = 0; i < H.block_dim; ++i) out.b[g * H.block_dim + i] = scale * b_bar[g * H.block_dim + i];
    }
    for (int i = nb; i < 4; ++i) out.b[i] = 0.0;
    return out;
  };

  double psi, dpsi;
  eval(0.0, psi, dpsi);
  if (psi <= 0.0) return finish(0.0);

  const double cap = coupling.cap();
  double lo = 0.0, hi;
  if (std::isfinite(cap)) {
    // f is evaluated on the left of the cap, where it is single valued
    double psi_cap, dcap;
    eval(cap, psi_cap, dcap);
    if (psi_cap >= 0.0) return finish(cap);
    hi = cap;
  } else {
    hi = std::max(1.0, coupling.m_bar);
    double psi_hi, d_hi;
    eval(hi, psi_hi, d_hi);
    int guard = 0;
    while (psi_hi > 0.0) {
      lo = hi;
      hi *= 2.0;
      eval(hi, psi_hi, d_hi);
      if (++guard > 200) throw NumericError("prox_pointwise: cannot bracket the multiplier");
    }
  }

  const double scale = std::max(hi, 1.0);
  double m = 0.5 * (lo + hi);
  // Newton start: linearisation of psi at lo
  {
    double p0, d0;
    eval(lo, p0, d0);
    if (d0 < 0.0) {
      const double guess = lo - p0 / d0;
      if (guess > lo && guess < hi) m = guess;
    }
  }
  for (int it = 1; it <= max_iters; ++it) {
    eval(m, psi, dpsi);
    out.iterations = it;
    if (psi > 0.0)
      lo = m;
    else
      hi = m;
    if (psi == 0.0 || hi - lo <= tol * scale) return finish(m);
    double mn = dpsi < 0.0 ? m - psi / dpsi : 0.5 * (lo + hi);
    if (!(mn > lo && mn < hi) || !std::isfinite(mn)) mn = 0.5 * (lo + hi);
    if (std::abs(mn - m) <= tol * scale) return finish(mn);
    m = mn;
  }
  throw NumericError("prox_pointwise: multiplier iteration did not converge (a_bar = " + std::to_string(a_bar) +
                     ", tau = " + std::to_string(tau) + ")");
}

/// Objective minimised by prox_pointwise; +inf never occurs since F* is finite.
inline double prox_objective(double a, std::span<const double> b, double a_bar, std::span<const double> b_bar,
                             double tau, const CouplingSpec& coupling, const BlockHamiltonian& H) {
  double q = 0.5 * (a - a_bar) * (a - a_bar);
  for (int i = 0; i < H.size(); ++i) q += 0.5 * (b[i] - b_bar[i]) * (b[i] - b_bar[i]);
  return q + tau * coupling.Fstar(-a + H.value(b));
}

}  // namespace mfgdc

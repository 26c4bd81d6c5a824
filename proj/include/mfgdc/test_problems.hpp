#pragma once

#include <stdexcept>
#include <string>

#include "mfgdc/grid.hpp"
#include "mfgdc/model.hpp"

namespace mfgdc::problems {

// cos(2 pi x) as a Fourier series: Re(c e^{2 pi i k x}) with k = 1, c = 1.
inline FourierSeries cosine(double amp, double offset = 0.0) {
  std::vector<FourierTerm> t;
  if (offset != 0.0) t.push_back(FourierTerm{{0, 0}, offset, 0.0});
  t.push_back(FourierTerm{{1, 0}, amp, 0.0});
  return FourierSeries(std::move(t));
}

/// Saturating well: the mass gathers at the minimum of g and hits the cap m_bar = 3.
inline ProblemSpec saturating_well() {
  ProblemSpec p;
  p.T = 1.0;
  p.d = 1;
  p.H.s = 2.0;
  p.coupling.kind = CouplingKind::zero;
  p.coupling.m_bar = 3.0;
  p.m0 = cosine(0.8, 1.0);
  p.g = cosine(1.0);
  return p;
}

/// Saturating well with the cap replaced by the penalty (m - m_bar)_+ / eps.
inline ProblemSpec penalized_well(double eps) {
  auto p = saturating_well();
  p.coupling = penalize(p.coupling, eps);
  return p;
}

/// Saturating well with a cap that never binds.
inline ProblemSpec hopf_lax() {
  auto p = saturating_well();
  p.coupling.m_bar = 1e6;
  return p;
}

/// Power congestion f = m with cap 2.
inline ProblemSpec power_coupling() {
  ProblemSpec p;
  p.T = 1.0;
  p.d = 1;
  p.H.s = 2.0;
  p.coupling.kind = CouplingKind::power;
  p.coupling.kappa = 1.0;
  p.coupling.theta = 2.0;
  p.coupling.m_bar = 2.0;
  p.m0 = cosine(0.5, 1.0);
  p.g = cosine(1.0);
  return p;
}

inline GridSpec default_grid(int nx = 64, int nt = 64, int d = 1, double T = 1.0) { return GridSpec{d, nx, nt, T}; }

inline ProblemSpec by_name(const std::string& name) {
  if (name == "saturating_well") return saturating_well();
  if (name == "hopf_lax") return hopf_lax();
  if (name == "power_coupling") return power_coupling();
  if (name == "penalized_well") return penalized_well(1.0);
  throw std::invalid_argument("unknown test problem: " + name);
}

}  // namespace mfgdc::problems

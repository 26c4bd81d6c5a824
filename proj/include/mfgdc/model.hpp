#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mfgdc/grid.hpp"

namespace mfgdc {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

using Point = std::array<double, 2>;

inline Point cell_point(const GridSpec& g, int c) {
  return {g.center(c, 0), g.d == 2 ? g.center(c, 1) : 0.0};
}

/// One term c_k exp(2 pi i k.x) of a truncated Fourier series; only the real
/// part of the sum is used, so any coefficient list defines a real function.
struct FourierTerm {
  std::array<int, 2> k{0, 0};
  double re = 0.0;
  double im = 0.0;
};

class FourierSeries {
 public:
  FourierSeries() = default;
  FourierSeries(std::initializer_list<FourierTerm> terms) : terms_(terms) {}
  explicit FourierSeries(std::vector<FourierTerm> terms) : terms_(std::move(terms)) {}

  static FourierSeries constant(double v) { return FourierSeries{{FourierTerm{{0, 0}, v, 0.0}}}; }

  const std::vector<FourierTerm>& terms() const { return terms_; }
  bool empty() const { return terms_.empty(); }

  double operator()(const Point& x) const {
    double s = 0.0;
    for (const auto& t : terms_) {
      const double ph = 2.0 * std::numbers::pi * (t.k[0] * x[0] + t.k[1] * x[1]);
      s += t.re * std::cos(ph) - t.im * std::sin(ph);
    }
    return s;
  }

  /// Spatial gradient of the real part.
  std::array<double, 2> gradient(const Point& x) const {
    std::array<double, 2> g{0.0, 0.0};
    for (const auto& t : terms_) {
      const double ph = 2.0 * std::numbers::pi * (t.k[0] * x[0] + t.k[1] * x[1]);
      const double dph = -t.re * std::sin(ph) - t.im * std::cos(ph);
      for (int a = 0; a < 2; ++a) g[a] += 2.0 * std::numbers::pi * t.k[a] * dph;
    }
    return g;
  }

  /// sup |f| bounded by the sum of coefficient moduli.
  double sup_bound() const {
    double s = 0.0;
    for (const auto& t : terms_) s += std::hypot(t.re, t.im);
    return s;
  }

  std::vector<double> sample(const GridSpec& g) const {
    std::vector<double> v(g.cells());
    for (int c = 0; c < g.cells(); ++c) v[c] = (*this)(cell_point(g, c));
    return v;
  }

 private:
  std::vector<FourierTerm> terms_;
};

/// H(x,p) = |p|^s / s - V(x).
struct HamiltonianSpec {
  double s = 2.0;
  FourierSeries V;

  double conjugate_exponent() const { return s / (s - 1.0); }
};

enum class CouplingKind { zero, power };

/// f(x,m) = kappa * m^(theta-1) on [0, m_bar] (or f = 0 for kind zero).
///
/// A positive `penalty_eps` turns the hard cap into the finite coupling
/// f(min(m, m_bar)) + ((m - m_bar)_+)^(theta-1) / eps.
struct CouplingSpec {
  CouplingKind kind = CouplingKind::zero;
  double kappa = 0.0;
  double theta = 2.0;
  double m_bar = 2.0;
  double c_bar = -1.0;  // negative means the default 0.01 * m_bar
  double penalty_eps = 0.0;

  bool hard() const { return penalty_eps <= 0.0; }
  double slack() const { return c_bar > 0.0 ? c_bar : 0.01 * m_bar; }
  double cap() const { return hard() ? m_bar : kInf; }
  double kappa_eff() const { return kind == CouplingKind::power ? kappa : 0.0; }

  /// Unpenalized part on [0, m_bar].
  double f_base(double m) const {
    const double k = kappa_eff();
    return k == 0.0 ? 0.0 : k * std::pow(std::max(m, 0.0), theta - 1.0);
  }
  double F_base(double m) const {
    const double k = kappa_eff();
    return k == 0.0 ? 0.0 : k * std::pow(std::max(m, 0.0), theta) / theta;
  }

  /// f(x, m). For the hard cap the value at m > m_bar is the continuous
  /// extension f(m_bar).
  double f(double m) const {
    if (hard()) return f_base(std::min(m, m_bar));
    const double over = std::max(m - m_bar, 0.0);
    return f_base(std::min(m, m_bar)) + (over > 0.0 ? std::pow(over, theta - 1.0) / penalty_eps : 0.0);
  }

  /// Derivative of f in m (right derivative); used by Newton iterations.
  double df(double m) const {
    double d = 0.0;
    const double k = kappa_eff();
    if (k != 0.0 && m > 0.0 && m <= m_bar) d += k * (theta - 1.0) * std::pow(m, theta - 2.0);
    if (!hard() && m > m_bar) d += (theta - 1.0) * std::pow(m - m_bar, theta - 2.0) / penalty_eps;
    return d;
  }

  double F(double m) const {
    if (m < 0.0) return kInf;
    if (hard()) return m > m_bar ? kInf : F_base(m);
    const double over = std::max(m - m_bar, 0.0);
    double v = F_base(std::min(m, m_bar));
    if (over > 0.0) v += f_base(m_bar) * over + std::pow(over, theta) / (theta * penalty_eps);
    return v;
  }

  /// Maximiser m* of m*alpha - F(m), i.e. the density selected by the price alpha.
  double density_at(double alpha) const {
    if (alpha <= 0.0) return 0.0;
    const double k = kappa_eff();
    const double f_cap = f_base(m_bar);
    if (alpha <= f_cap && k > 0.0) return std::pow(alpha / k, 1.0 / (theta - 1.0));
    if (hard()) return m_bar;
    return m_bar + std::pow(penalty_eps * (alpha - f_cap), 1.0 / (theta - 1.0));
  }

  /// Exact Fenchel conjugate F*(alpha).
  double Fstar(double alpha) const {
    if (alpha <= 0.0) return 0.0;
    const double m = density_at(alpha);
    return m * alpha - F(m);
  }
};

struct ProblemSpec {
  double T = 1.0;
  int d = 1;
  HamiltonianSpec H;
  CouplingSpec coupling;
  FourierSeries m0;
  FourierSeries g;
};

// Pointwise evaluators.

inline double eval_H(const HamiltonianSpec& h, const Point& x, std::span<const double> p) {
  double n2 = 0.0;
  for (double v : p) n2 += v * v;
  return std::pow(std::sqrt(n2), h.s) / h.s - h.V(x);
}

inline double eval_Hstar(const HamiltonianSpec& h, const Point& x, std::span<const double> q) {
  const double sp = h.conjugate_exponent();
  double n2 = 0.0;
  for (double v : q) n2 += v * v;
  return std::pow(std::sqrt(n2), sp) / sp + h.V(x);
}

inline double eval_L(const HamiltonianSpec& h, const Point& x, std::span<const double> q) {
  std::array<double, 2> mq{0.0, 0.0};
  for (size_t i = 0; i < q.size(); ++i) mq[i] = -q[i];
  return eval_Hstar(h, x, std::span<const double>(mq.data(), q.size()));
}

inline double eval_F(const CouplingSpec& c, const Point& /*x*/, double m) { return c.F(m); }
inline double eval_Fstar(const CouplingSpec& c, const Point& /*x*/, double alpha) { return c.Fstar(alpha); }

/// Penalized coupling f^eps, finite for every m >= 0.
inline CouplingSpec penalize(const CouplingSpec& c, double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("penalize: eps must be positive");
  CouplingSpec out = c;
  out.penalty_eps = eps;
  return out;
}

// Sampling of the problem data on a grid.

inline std::vector<double> sample_m0(const ProblemSpec& p, const GridSpec& g) {
  auto v = p.m0.sample(g);
  double mass = 0.0;
  for (double x : v) mass += x;
  mass *= g.cell_volume();
  if (!(mass > 0.0)) throw std::invalid_argument("m0 has non-positive total mass");
  for (double& x : v) x /= mass;
  return v;
}

inline std::vector<double> sample_g(const ProblemSpec& p, const GridSpec& g) { return p.g.sample(g); }
inline std::vector<double> sample_V(const ProblemSpec& p, const GridSpec& g) { return p.H.V.sample(g); }

struct ValidationReport {
  bool ok = true;
  std::vector<std::string> errors;  // hard failures
  std::vector<std::string> notes;   // informational
  double m0_mass = 0.0;
  double m0_min = 0.0;
  double m0_max = 0.0;
  double growth_C = 1.0;  // constant of the two-sided power growth bounds
  bool hessian_bounds = false;   // lambda I <= D^2 H <= I / lambda
  double hessian_lambda = 0.0;
  bool coupling_slope_bound = false;  // lambda <= d f / d m <= 1 / lambda on (0, m_bar)
  double coupling_lambda = 0.0;
  bool smooth_data = true;

  std::string summary() const {
    std::ostringstream os;
    os << (ok ? "valid" : "INVALID");
    for (const auto& e : errors) os << "\n  error: " << e;
    for (const auto& n : notes) os << "\n  note: " << n;
    return os.str();
  }
};

inline ValidationReport validate(const ProblemSpec& p, const GridSpec& g) {
  ValidationReport r;
  auto fail = [&](std::string msg) {
    r.ok = false;
    r.errors.push_back(std::move(msg));
  };
  if (p.d != g.d) fail("problem dimension does not match grid dimension");
  if (std::abs(p.T - g.T) > 1e-14 * std::max(1.0, p.T)) fail("problem horizon does not match grid horizon");
  const auto& cp = p.coupling;
  if (!(cp.m_bar > 1.0)) fail("density cap m_bar = " + std::to_string(cp.m_bar) + " must exceed 1");
  if (!(p.H.s > 1.0)) fail("growth exponent s must exceed 1");
  if (!(cp.theta > 1.0)) fail("coupling exponent theta must exceed 1");
  if (cp.kind == CouplingKind::power && cp.kappa < 0.0) fail("kappa must be non-negative");
  if (!r.ok) return r;

  std::vector<double> raw = p.m0.sample(g);
  double raw_mass = 0.0;
  for (double v : raw) raw_mass += v;
  raw_mass *= g.cell_volume();
  if (!(raw_mass > 0.0)) {
    fail("m0 has non-positive mass");
    return r;
  }
  std::vector<double> m0 = sample_m0(p, g);
  r.m0_min = *std::min_element(m0.begin(), m0.end());
  r.m0_max = *std::max_element(m0.begin(), m0.end());
  double mass = 0.0;
  for (double v : m0) mass += v;
  r.m0_mass = mass * g.cell_volume();
  if (std::abs(r.m0_mass - 1.0) > 1e-10) fail("m0 mass is not 1 after normalization");
  if (r.m0_min < 0.0) fail("m0 takes negative values");
  if (r.m0_max >= cp.m_bar - cp.slack())
    fail("m0 reaches m_bar - c_bar = " + std::to_string(cp.m_bar - cp.slack()) + " (max m0 = " +
         std::to_string(r.m0_max) + ")");

  // Monotonicity of f on a fine sample of [0, m_bar], by finite differences.
  const int n = 256;
  double prev = cp.f(0.0);
  if (std::abs(prev) > 0.0) fail("f(x, 0) must vanish");
  for (int i = 1; i <= n; ++i) {
    const double v = cp.f(cp.m_bar * i / n);
    if (v < prev - 1e-14 * std::max(1.0, std::abs(prev))) {
      fail("f is decreasing in m");
      break;
    }
    prev = v;
  }

  r.growth_C = std::max(1.0, p.H.V.sup_bound());
  r.notes.push_back("power growth bounds hold with r = " + std::to_string(p.H.s) +
                    ", C = " + std::to_string(r.growth_C));

  if (std::abs(p.H.s - 2.0) < 1e-14) {
    r.hessian_bounds = true;
    r.hessian_lambda = 1.0;
    r.notes.push_back("Hessian bounds on H hold with lambda = 1");
  } else {
    r.hessian_bounds = false;
    r.notes.push_back("Hessian bounds on H fail for s != 2 (Hessian of H degenerates or blows up at p = 0); run permitted");
  }

  // Slope bounds on f over (0, m_bar).
  const double k = cp.kappa_eff();
  if (k == 0.0) {
    r.coupling_slope_bound = true;
    r.coupling_lambda = 1.0;
  } else if (cp.theta >= 2.0) {
    r.coupling_slope_bound = true;
    r.coupling_lambda = 1.0 / (k * (cp.theta - 1.0) * std::pow(cp.m_bar, cp.theta - 2.0));
  } else {
    r.coupling_slope_bound = false;
    r.notes.push_back("slope bound on f fails: d f / d m unbounded near m = 0 for theta < 2");
  }
  r.smooth_data = true;  // finite Fourier data is smooth
  return r;
}

}  // namespace mfgdc

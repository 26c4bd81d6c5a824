#pragma once

// Optimal transport on the circle R/Z through quantile functions, McCann
// interpolation, and the density-capped projection
//   min 1/2 W2^2(m0, m1) + int g m1   over   0 <= m1 <= m_bar, mass 1,
// solved by Frank-Wolfe. Densities are piecewise constant on nx cells.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

namespace mfgdc::geodesic {

/// Quantile of a piecewise-constant density, extended quasi-periodically:
/// Q(s + 1) = Q(s) + 1. Evaluation is exact (the CDF is piecewise linear).
class QuantileFn {
 public:
  QuantileFn() = default;

  explicit QuantileFn(std::span<const double> m) : n_(static_cast<int>(m.size())), cum_(m.size() + 1, 0.0) {
    if (n_ < 1) throw std::invalid_argument("quantile_from_density: empty density");
    for (int i = 0; i < n_; ++i) {
      if (m[i] < 0.0) throw std::invalid_argument("quantile_from_density: negative mass in cell " + std::to_string(i));
      cum_[i + 1] = cum_[i] + m[i];
    }
    const double total = cum_[n_];
    if (!(total > 0.0)) throw std::invalid_argument("quantile_from_density: zero total mass");
    for (auto& c : cum_) c /= total;
    cum_[n_] = 1.0;
  }

  int cells() const { return n_; }
  double cut = 0.0;  // rotation offset chosen by w2_circle

  /// Q(s) for any real s.
  double operator()(double s) const {
    const double fl = std::floor(s);
    return fl + eval01(s - fl);
  }

  /// CDF F(x) for x in [0, 1].
  double cdf(double x) const {
    x = std::clamp(x, 0.0, 1.0);
    const double pos = x * n_;
    const int i = std::min(static_cast<int>(pos), n_ - 1);
    return cum_[i] + (pos - i) * (cum_[i + 1] - cum_[i]);
  }

  /// Samples Q(j / ns), j = 0..ns-1.
  std::vector<double> samples(int ns) const {
    std::vector<double> v(ns);
    for (int j = 0; j < ns; ++j) v[j] = (*this)(static_cast<double>(j) / ns);
    return v;
  }

 private:
  // generalised inverse on [0, 1): smallest x with F(x) >= s
  double eval01(double s) const {
    if (s <= 0.0) {
      int i = 0;
      while (i < n_ && cum_[i + 1] <= 0.0) ++i;
      return static_cast<double>(i) / n_;
    }
    auto it = std::lower_bound(cum_.begin() + 1, cum_.end(), s);
    const int i = static_cast<int>(it - cum_.begin()) - 1;  // cum_[i] < s <= cum_[i+1]
    const double p = cum_[i + 1] - cum_[i];
    return (i + (s - cum_[i]) / p) / n_;
  }

  int n_ = 0;
  std::vector<double> cum_;
};

inline QuantileFn quantile_from_density(std::span<const double> m) { return QuantileFn(m); }

inline double wrap01(double x) {
  x -= std::floor(x);
  return x >= 1.0 ? 0.0 : x;
}

/// Nearest representative of x in [-1/2, 1/2).
inline double reduce(double x) { return x - std::floor(x + 0.5); }

/// Density on nx cells of the pushforward of the uniform measure on [0, 1]
/// by the piecewise-linear interpolant of q at s_j = j / ns, j = 0..ns.
inline std::vector<double> density_from_samples(std::span<const double> q, int nx) {
  const int ns = static_cast<int>(q.size()) - 1;
  std::vector<double> mass(nx, 0.0);
  const double mu = 1.0 / ns;
  for (int j = 0; j < ns; ++j) {
    double lo = q[j], hi = q[j + 1];
    if (lo > hi) std::swap(lo, hi);
    const double len = hi - lo;
    if (len < 1e-14) {
      const int i = std::min(static_cast<int>(wrap01(lo) * nx), nx - 1);
      mass[i] += mu;
      continue;
    }
    const double shift = std::floor(lo);
    lo -= shift;
    hi -= shift;
    int i0 = static_cast<int>(std::floor(lo * nx));
    const int i1 = static_cast<int>(std::floor(hi * nx));
    for (int i = i0; i <= i1; ++i) {
      const double a = std::max(lo, static_cast<double>(i) / nx), b = std::min(hi, static_cast<double>(i + 1) / nx);
      if (b > a) mass[((i % nx) + nx) % nx] += mu * (b - a) / len;
    }
  }
  for (auto& v : mass) v *= nx;
  return mass;
}

inline std::vector<double> density_from_quantile(const QuantileFn& Q, int nx, int ns = 0) {
  if (ns <= 0) ns = 64 * nx;
  std::vector<double> q(ns + 1);
  for (int j = 0; j <= ns; ++j) q[j] = Q(static_cast<double>(j) / ns);
  return density_from_samples(q, nx);
}

struct W2Result {
  double cost = 0.0;  // squared distance W2^2
  double cut = 0.0;   // offset theta with s -> (Q0(s), Q1(s + theta)) optimal
};

struct W2Options {
  int n_cut = 1024;
  int ns = 0;  // quadrature nodes in s; 0 picks 64 * nx (at least 4096)
  bool refine = true;
};

namespace detail {

inline int quad_nodes(int nx, int ns) { return ns > 0 ? ns : std::max(4096, 64 * nx); }

/// int_0^1 dist(Q0(s) - Q1(s + theta))^2 ds by the midpoint rule.
inline double cut_cost(const std::vector<double>& q0, const QuantileFn& Q1, double theta) {
  const int ns = static_cast<int>(q0.size());
  double sum = 0.0;
  for (int j = 0; j < ns; ++j) {
    const double s = (j + 0.5) / ns;
    const double dv = reduce(q0[j] - Q1(s + theta));
    sum += dv * dv;
  }
  return sum / ns;
}

inline std::vector<double> midpoint_samples(const QuantileFn& Q, int ns) {
  std::vector<double> q(ns);
  for (int j = 0; j < ns; ++j) q[j] = Q((j + 0.5) / ns);
  return q;
}

inline W2Result refine_cut(const std::vector<double>& q0, const QuantileFn& Q1, double center, double half) {
  const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
  double a = center - half, b = center + half;
  double x1 = b - phi * (b - a), x2 = a + phi * (b - a);
  double f1 = cut_cost(q0, Q1, x1), f2 = cut_cost(q0, Q1, x2);
  for (int it = 0; it < 40; ++it) {
    if (f1 <= f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - phi * (b - a);
      f1 = cut_cost(q0, Q1, x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + phi * (b - a);
      f2 = cut_cost(q0, Q1, x2);
    }
  }
  return f1 <= f2 ? W2Result{f1, wrap01(x1)} : W2Result{f2, wrap01(x2)};
}

}  // namespace detail

/// Squared Wasserstein-2 distance on the circle: min over offsets theta of
/// int_0^1 dist(Q0(s) - Q1(s + theta))^2 ds, scanned on n_cut offsets and
/// optionally refined by golden section around the best one.
inline W2Result w2_circle(std::span<const double> m0, std::span<const double> m1, const W2Options& opts = {}) {
  if (m0.size() != m1.size()) throw std::invalid_argument("w2_circle: size mismatch");
  const QuantileFn Q0(m0), Q1(m1);
  const auto q0 = detail::midpoint_samples(Q0, detail::quad_nodes(static_cast<int>(m0.size()), opts.ns));
  W2Result best{std::numeric_limits<double>::infinity(), 0.0};
  for (int j = 0; j < opts.n_cut; ++j) {
    const double th = static_cast<double>(j) / opts.n_cut;
    const double c = detail::cut_cost(q0, Q1, th);
    if (c < best.cost) best = {c, th};
  }
  if (opts.refine) {
    auto r = detail::refine_cut(q0, Q1, best.cut, 1.0 / opts.n_cut);
    if (r.cost < best.cost) best = r;
  }
  return best;
}

/// Displacement interpolation m_t between m0 and m1 given the optimal offset.
inline std::vector<double> mccann_interpolate(std::span<const double> m0, std::span<const double> m1, double t,
                                              double cut, int ns = 0) {
  if (t < 0.0 || t > 1.0) throw std::invalid_argument("mccann_interpolate: t outside [0, 1]");
  const int nx = static_cast<int>(m0.size());
  const QuantileFn Q0(m0), Q1(m1);
  if (ns <= 0) ns = 64 * nx;
  std::vector<double> q(ns + 1);
  for (int j = 0; j <= ns; ++j) {
    const double s = static_cast<double>(j) / ns;
    q[j] = Q0(s) + t * reduce(Q1(s + cut) - Q0(s));
  }
  return density_from_samples(q, nx);
}

inline std::vector<double> mccann_interpolate(std::span<const double> m0, std::span<const double> m1, double t) {
  return mccann_interpolate(m0, m1, t, w2_circle(m0, m1).cut);
}

// ---------------------------------------------------------------------------

struct ProjectionOptions {
  int max_iters = 3000;
  double fw_tol = 1e-6;
  W2Options w2;
};

struct ProjectionResult {
  std::vector<double> m1;
  double objective = 0.0;
  double fw_gap = 0.0;
  double cut = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> trace;  // objective per iteration
  std::vector<double> potential;  // psi + g at the last iterate, cell centres
};

namespace detail {

struct Evaluated {
  double value = 0.0;
  W2Result w2;
};

inline Evaluated projection_objective(const std::vector<double>& q0, std::span<const double> m1,
                                      std::span<const double> g, const W2Options& opts, double warm_cut,
                                      bool full_scan) {
  const int nx = static_cast<int>(m1.size());
  const QuantileFn Q1(m1);
  W2Result best{std::numeric_limits<double>::infinity(), 0.0};
  if (full_scan) {
    for (int j = 0; j < opts.n_cut; ++j) {
      const double th = static_cast<double>(j) / opts.n_cut;
      const double c = cut_cost(q0, Q1, th);
      if (c < best.cost) best = {c, th};
    }
  } else {
    const int span = 8;
    for (int j = -span; j <= span; ++j) {
      const double th = warm_cut + static_cast<double>(j) / opts.n_cut;
      const double c = cut_cost(q0, Q1, th);
      if (c < best.cost) best = {c, wrap01(th)};
    }
  }
  auto r = refine_cut(q0, Q1, best.cut, 1.0 / opts.n_cut);
  if (r.cost < best.cost) best = r;
  double lin = 0.0;
  for (int i = 0; i < nx; ++i) lin += g[i] * m1[i];
  return {0.5 * best.cost + lin / nx, best};
}

/// Kantorovich potential psi on the m1 side at cell centres, from
/// psi'(y) = y - S(y), S(y) = Q0(F1(y) - cut); the mean of psi' is removed.
inline std::vector<double> kantorovich_potential(const QuantileFn& Q0, const QuantileFn& Q1, double cut, int nx) {
  const int sub = 16;
  const int np = nx * sub;
  std::vector<double> dpsi(np);
  for (int j = 0; j < np; ++j) {
    const double y = (j + 0.5) / np;
    dpsi[j] = reduce(y - Q0(Q1.cdf(y) - cut));
  }
  const double mean = std::accumulate(dpsi.begin(), dpsi.end(), 0.0) / np;
  std::vector<double> psi(nx, 0.0);
  double acc = 0.0;
  const double h = 1.0 / np;
  std::vector<double> fine(np);
  for (int j = 0; j < np; ++j) {
    fine[j] = acc + 0.5 * h * (dpsi[j] - mean);
    acc += h * (dpsi[j] - mean);
  }
  for (int i = 0; i < nx; ++i) {
    // cell average of psi
    double s = 0.0;
    for (int k = 0; k < sub; ++k) s += fine[i * sub + k];
    psi[i] = s / sub;
  }
  return psi;
}

/// argmin of sum c_i s_i over 0 <= s <= m_bar, mean(s) = 1: fill the cheapest cells.
inline std::vector<double> bang_bang(const std::vector<double>& cost, double m_bar) {
  const int nx = static_cast<int>(cost.size());
  std::vector<int> idx(nx);
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return cost[a] < cost[b]; });
  std::vector<double> s(nx, 0.0);
  double left = 1.0;  // mass still to place
  for (int i : idx) {
    if (left <= 0.0) break;
    const double put = std::min(m_bar / nx, left);
    s[i] = put * nx;
    left -= put;
  }
  return s;
}

}  // namespace detail

/// Frank-Wolfe on J(m1) = 1/2 W2^2(m0, m1) + int g m1 over {0 <= m1 <= m_bar, mass 1}.
/// Step 2/(k+2), halved until J does not increase; stops when the
/// Frank-Wolfe gap falls below fw_tol.
inline ProjectionResult solve_projection(std::span<const double> m0, std::span<const double> g, double m_bar,
                                         const ProjectionOptions& opts = {}) {
  if (!(m_bar >= 1.0)) throw std::invalid_argument("solve_projection: m_bar < 1 cannot hold unit mass");
  const int nx = static_cast<int>(m0.size());
  if (static_cast<int>(g.size()) != nx) throw std::invalid_argument("solve_projection: size mismatch");
  const QuantileFn Q0(m0);
  const auto q0 = detail::midpoint_samples(Q0, detail::quad_nodes(nx, opts.w2.ns));
  ProjectionResult res;
  // start from m0 clipped into the box (already feasible under the usual hypothesis)
  res.m1.assign(m0.begin(), m0.end());
  double mass = std::accumulate(res.m1.begin(), res.m1.end(), 0.0) / nx;
  for (auto& v : res.m1) v = std::min(v / mass, m_bar);
  mass = std::accumulate(res.m1.begin(), res.m1.end(), 0.0) / nx;
  if (std::abs(mass - 1.0) > 1e-12) throw std::invalid_argument("solve_projection: m0 exceeds m_bar");
  auto cur = detail::projection_objective(q0, res.m1, g, opts.w2, 0.0, true);
  res.trace.push_back(cur.value);
  for (int k = 0; k < opts.max_iters; ++k) {
    const QuantileFn Q1(res.m1);
    auto psi = detail::kantorovich_potential(Q0, Q1, cur.w2.cut, nx);
    for (int i = 0; i < nx; ++i) psi[i] += g[i];
    const auto s = detail::bang_bang(psi, m_bar);
    double gap = 0.0;
    for (int i = 0; i < nx; ++i) gap += psi[i] * (res.m1[i] - s[i]);
    gap /= nx;
    res.fw_gap = gap;
    res.potential = psi;
    res.iterations = k;
    if (gap <= opts.fw_tol) {
      res.converged = true;
      break;
    }
    double step = 2.0 / (k + 2.0);
    std::vector<double> trial(nx);
    detail::Evaluated next;
    bool accepted = false;
    for (int bt = 0; bt < 30; ++bt) {
      for (int i = 0; i < nx; ++i) trial[i] = (1.0 - step) * res.m1[i] + step * s[i];
      next = detail::projection_objective(q0, trial, g, opts.w2, cur.w2.cut, k % 50 == 0);
      if (next.value <= cur.value) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      res.converged = gap <= 10.0 * opts.fw_tol;
      break;
    }
    res.m1 = trial;
    cur = next;
    res.trace.push_back(cur.value);
  }
  res.objective = cur.value;
  res.cut = cur.w2.cut;
  return res;
}

// ---------------------------------------------------------------------------

/// Coefficient of the displacement-interpolation bound
/// ||m_t||_inf <= m_bar lambda / ((1 - t) + t lambda^(1/d)).
inline double density_bound_coefficient(double lambda, double t, int d = 1) {
  return lambda / ((1.0 - t) + t * std::pow(lambda, 1.0 / d));
}

struct BoundRow {
  double t = 0.0;
  double max_density = 0.0;
  double bound = 0.0;
};

struct BoundReport {
  double lambda = 0.0;
  double slack = 0.0;
  double max_violation = 0.0;  // max over t of max_density - bound (may be negative)
  bool holds = false;          // max_violation <= slack
  std::vector<BoundRow> rows;
};

/// Lipschitz constant of a cell density, by finite differences on the circle.
inline double lipschitz(std::span<const double> m) {
  const int n = static_cast<int>(m.size());
  double L = 0.0;
  for (int i = 0; i < n; ++i) L = std::max(L, std::abs(m[(i + 1) % n] - m[i]) * n);
  return L;
}

/// Checks max_x m_t against m_bar * density_bound_coefficient for each t, with
/// slack 3 Lip(m0) dx.
inline BoundReport density_bound_check(std::span<const double> m0, std::span<const double> m1, double m_bar, double c,
                                 const std::vector<double>& t_samples, double cut) {
  const int nx = static_cast<int>(m0.size());
  BoundReport r;
  r.lambda = (m_bar - c) / m_bar;
  r.slack = 3.0 * lipschitz(m0) / nx;
  r.max_violation = -std::numeric_limits<double>::infinity();
  for (double t : t_samples) {
    const auto mt = mccann_interpolate(m0, m1, t, cut);
    BoundRow row{t, *std::max_element(mt.begin(), mt.end()), m_bar * density_bound_coefficient(r.lambda, t)};
    r.max_violation = std::max(r.max_violation, row.max_density - row.bound);
    r.rows.push_back(row);
  }
  r.holds = r.max_violation <= r.slack;
  return r;
}

}  // namespace mfgdc::geodesic

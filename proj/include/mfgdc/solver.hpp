#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mfgdc/functionals.hpp"
#include "mfgdc/grid.hpp"
#include "mfgdc/model.hpp"
#include "mfgdc/parallel.hpp"
#include "mfgdc/prox.hpp"
#include "mfgdc/spacetime_operator.hpp"

namespace mfgdc {

struct SolverOptions {
  double r_admm = 1.0;
  int max_iters = 20000;
  double tol_feas = 1e-6;  // box tolerance on the projected density
  double tol_gap = 1e-4;   // relative duality gap
  double cg_tol = 1e-12;
  int cg_max_iters = 50;
  double prox_tol = 1e-12;
  int check_every = 25;
  double mask_tol = 1e-3;
  int threads = 1;
  bool precondition = true;  // false: plain CG on the elliptic systems
  std::function<void(int iter, const struct Diagnostics&)> on_check;  // called at every gap check

  void validate() const {
    if (!(r_admm > 0.0)) throw std::invalid_argument("r_admm must be positive");
    if (max_iters < 1) throw std::invalid_argument("max_iters must be >= 1");
    if (!(tol_feas > 0.0 && tol_gap > 0.0 && cg_tol > 0.0 && prox_tol > 0.0 && mask_tol > 0.0))
      throw std::invalid_argument("solver tolerances must be positive");
    if (cg_max_iters < 1 || check_every < 1) throw std::invalid_argument("cg_max_iters and check_every must be >= 1");
  }
};

struct Diagnostics;

struct IterRecord {
  int iter = 0;
  double primal = 0.0;  // || Lambda phi - q ||, dx^d dt weighted
  double dual = 0.0;    // r || q - q_prev ||
  double gap = std::numeric_limits<double>::quiet_NaN();
  double relative_gap = std::numeric_limits<double>::quiet_NaN();
};

class NotConvergedError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Iterates of the augmented Lagrangian on the constraint q = Lambda phi with
/// Lambda phi = ((phi[n] - phi[n-1]) / dt, D+ phi[n-1], D- phi[n-1]), n = 1..nt.
/// The multiplier is stored as mu = -sigma: mu.m holds the density on rows
/// 1..nt (row 0 is m0) and mu_b the momentum split over the
/// forward/backward difference blocks.
struct SolverState {
  ScalarField phi;
  std::vector<double> qa, qb;
  ScalarField mu_m;
  std::vector<double> mu_b;
  std::vector<double> la, lb;  // Lambda phi from the last elliptic step
  std::vector<IterRecord> history;
  double clamp_total = 0.0;
  int cg_iterations = 0;

  explicit SolverState(const Discretization& disc)
      : phi(disc.grid, FieldKind::value),
        mu_m(disc.grid, FieldKind::density) {
    const auto& g = disc.grid;
    const size_t rows = static_cast<size_t>(g.nt) * g.cells();
    qa.assign(rows, 0.0);
    qb.assign(rows * disc.pair_size(), 0.0);
    la.assign(rows, 0.0);
    lb.assign(rows * disc.pair_size(), 0.0);
    mu_b.assign(rows * disc.pair_size(), 0.0);
    for (int k = 0; k <= g.nt; ++k)
      for (int c = 0; c < g.cells(); ++c) mu_m(k, c) = disc.m0[c];
    for (int c = 0; c < g.cells(); ++c) phi(g.nt, c) = disc.g[c];
  }

  /// Face momentum carried by mu_b: W(c, a) = w+_a(c) + w-_a(c + e_a).
  MomentumField momentum(const Discretization& disc) const {
    const auto& g = disc.grid;
    const int nc = g.cells(), nb = disc.pair_size();
    MomentumField W(g);
    for (int k = 0; k < g.nt; ++k)
      for (int a = 0; a < g.d; ++a)
        for (int c = 0; c < nc; ++c) {
          const size_t here = (static_cast<size_t>(k) * nc + c) * nb;
          const size_t next = (static_cast<size_t>(k) * nc + g.neighbor(c, a, +1)) * nb;
          W(k, a, c) = mu_b[here + a] + mu_b[next + g.d + a];
        }
    return W;
  }
};

struct Diagnostics {
  double A = 0.0, B = 0.0, gap = 0.0, relative_gap = 0.0;
  double feas = 0.0;              // continuity residual norm of the returned (m, w)
  double initial_mismatch = 0.0;  // || m[0] - m0 ||
  double max_density = 0.0, min_density = 0.0, mass_error = 0.0;
  double complementarity_interior = 0.0, complementarity_terminal = 0.0;
  double energy_residual = 0.0, energy_relative = 0.0;
  double hj_violation = 0.0;
  double clamp_total = 0.0;
  double box_blend = 0.0;  // weight of the static pair mixed in to restore 0 <= m <= cap
  double u_shift = 0.0;    // slope c of the shift u - c (T - t)
  int iterations = 0;
  int cg_iterations = 0;
  bool converged = false;
  double wall_seconds = 0.0;
};

struct PriceFields {
  ScalarField beta, beta_raw;
  std::vector<double> beta_T, beta_T_raw;
};

struct Solution {
  ScalarField u, m;
  MomentumField w;
  ScalarField beta;
  std::vector<double> beta_T;
  ScalarField beta_raw;
  std::vector<double> beta_T_raw;
  Diagnostics diag;
  std::vector<IterRecord> history;
};

namespace detail {

/// Lambda phi on rows n = 1..nt, stored at row index n-1.
inline void apply_lambda(const ScalarField& phi, const Discretization& disc, std::vector<double>& la,
                         std::vector<double>& lb) {
  const auto& g = disc.grid;
  const int nc = g.cells(), nb = disc.pair_size();
  const double idt = 1.0 / g.dt();
  for (int r = 0; r < g.nt; ++r) {
    auto prev = phi.slice(r);
    for (int c = 0; c < nc; ++c) {
      const size_t i = static_cast<size_t>(r) * nc + c;
      la[i] = (phi(r + 1, c) - phi(r, c)) * idt;
      disc.difference_pair(prev, c, std::span<double>(lb.data() + i * nb, nb));
    }
  }
}

/// Adjoint of the u -> Lambda u map restricted to the free rows 0..nt-1.
inline void apply_lambda_adjoint(const std::vector<double>& za, const std::vector<double>& zb,
                                 const Discretization& disc, std::vector<double>& out) {
  const auto& g = disc.grid;
  const int nc = g.cells(), nb = disc.pair_size(), d = g.d;
  const double idt = 1.0 / g.dt(), idx = 1.0 / g.dx();
  for (int r = 0; r < g.nt; ++r)
    for (int c = 0; c < nc; ++c) {
      const size_t i = static_cast<size_t>(r) * nc + c;
      double v = -za[i] * idt;
      if (r > 0) v += za[i - nc] * idt;
      const size_t row = static_cast<size_t>(r) * nc;
      for (int a = 0; a < d; ++a) {
        const int cm = g.neighbor(c, a, -1), cp = g.neighbor(c, a, +1);
        // forward block: (y[c-e] - y[c]) / dx
        v += (zb[(row + cm) * nb + a] - zb[i * nb + a]) * idx;
        // backward block: (y[c] - y[c+e]) / dx
        v += (zb[i * nb + d + a] - zb[(row + cp) * nb + d + a]) * idx;
      }
      out[i] = v;
    }
}

inline std::vector<double> time_diag(int nt) {
  std::vector<double> dg(nt, 2.0);
  dg[0] = 1.0;
  return dg;
}

inline CgResult solve_spd(const SpaceTimeOperator& op, std::span<const double> rhs, std::span<double> x,
                          const SolverOptions& opts) {
  std::function<void(std::span<const double>, std::span<double>)> A = [&](auto in, auto out) { op.apply(in, out); };
  std::function<void(std::span<const double>, std::span<double>)> P = [&](auto in, auto out) { op.solve(in, out); };
  auto res = conjugate_gradient(A, opts.precondition ? &P : nullptr, rhs, x, opts.cg_tol, opts.cg_max_iters);
  // the tolerance is relative; a residual at round-off level of the operator is accepted
  if (!res.converged && res.residual > 1e3 * opts.cg_tol)
    throw NotConvergedError("elliptic solve: CG stopped at relative residual " + std::to_string(res.residual));
  return res;
}

}  // namespace detail

/// Space-time operator Lambda0^T Lambda0 of the u-step (time tridiagonal
/// [1, 2, ..., 2] with terminal row eliminated by u[nt] = g, twice the
/// periodic Laplacian from the two difference blocks).
inline SpaceTimeOperator elliptic_operator(const GridSpec& g) {
  return SpaceTimeOperator(g, detail::time_diag(g.nt), std::vector<double>(g.nt - 1, -1.0), 2.0);
}

/// C C^T for the continuity map C(m[1..nt], W) -> (m[n] - m[n-1]) / dt + div W.
inline SpaceTimeOperator continuity_operator(const GridSpec& g) {
  return SpaceTimeOperator(g, detail::time_diag(g.nt), std::vector<double>(g.nt - 1, -1.0), 1.0);
}

/// u-step: minimises the augmented Lagrangian in phi with q and mu fixed.
/// Rows 0..nt-1 are unknown; phi[nt] = g. The operator has no kernel (the
/// terminal row is Dirichlet), so no mean pinning is needed.
inline void elliptic_step(SolverState& st, const Discretization& disc, const SolverOptions& opts,
                          const SpaceTimeOperator& op) {
  const auto& g = disc.grid;
  const int nc = g.cells(), nb = disc.pair_size();
  const size_t rows = static_cast<size_t>(g.nt) * nc;
  const double r = opts.r_admm;
  std::vector<double> za(rows), zb(rows * nb), rhs(rows);
  for (size_t i = 0; i < rows; ++i) za[i] = st.qa[i] + st.mu_m.values()[i + nc] / r;
  for (size_t i = 0; i < zb.size(); ++i) zb[i] = st.qb[i] + st.mu_b[i] / r;
  // terminal data: the a-row nt-1 contains + g / dt
  for (int c = 0; c < nc; ++c) za[rows - nc + c] -= disc.g[c] / g.dt();
  detail::apply_lambda_adjoint(za, zb, disc, rhs);
  for (int c = 0; c < nc; ++c) rhs[c] += disc.m0[c] / (r * g.dt());
  std::span<double> x(st.phi.values().data(), rows);
  auto res = detail::solve_spd(op, rhs, x, opts);
  st.cg_iterations += res.iterations;
  for (int c = 0; c < nc; ++c) st.phi(g.nt, c) = disc.g[c];
}

/// q-step: pointwise prox of the cost on Lambda phi - mu / r.
inline void prox_step(SolverState& st, const Discretization& disc, const SolverOptions& opts) {
  const auto& g = disc.grid;
  const int nc = g.cells(), nb = disc.pair_size();
  const double r = opts.r_admm, tau = 1.0 / r;
  const int rows = g.nt * nc;
  parallel_for(rows, opts.threads, [&](int begin, int end) {
    std::array<double, 4> bb{};
    for (int i = begin; i < end; ++i) {
      const int c = i % nc;
      const double abar = st.la[i] - st.mu_m.values()[i + nc] / r;
      for (int j = 0; j < nb; ++j) bb[j] = st.lb[size_t(i) * nb + j] - st.mu_b[size_t(i) * nb + j] / r;
      ProxResult p;
      try {
        p = prox_pointwise(abar, {bb.data(), size_t(nb)}, tau, disc.coupling, disc.pair_hamiltonian(c),
                           opts.prox_tol);
      } catch (const NumericError& e) {
        throw NumericError(std::string(e.what()) + " at time row " + std::to_string(i / nc + 1) + ", cell " +
                           std::to_string(c));
      }
      st.qa[i] = p.a;
      for (int j = 0; j < nb; ++j) st.qb[size_t(i) * nb + j] = p.b[j];
    }
  });
}

/// mu <- mu - r (Lambda phi - q), i.e. sigma <- sigma + r (Lambda phi - q) with
/// sigma = -mu; the density part is clamped at zero (amount recorded).
inline void multiplier_update(SolverState& st, const Discretization& disc, const SolverOptions& opts) {
  const auto& g = disc.grid;
  const int nc = g.cells();
  const size_t rows = static_cast<size_t>(g.nt) * nc;
  const double r = opts.r_admm;
  auto& mm = st.mu_m.values();
  for (size_t i = 0; i < rows; ++i) {
    double v = mm[i + nc] - r * (st.la[i] - st.qa[i]);
    if (v < 0.0) {
      st.clamp_total += -v;
      v = 0.0;
    }
    mm[i + nc] = v;
  }
  for (size_t i = 0; i < st.mu_b.size(); ++i) st.mu_b[i] -= r * (st.lb[i] - st.qb[i]);
}

/// Least-squares projection of (m[1..nt], W) onto the discrete continuity
/// equation with m[0] = m0. Mass is conserved exactly.
inline void project_continuity(ScalarField& m, MomentumField& W, const Discretization& disc,
                               const SpaceTimeOperator& op, const SolverOptions& opts, int* cg_iters = nullptr) {
  const auto& g = disc.grid;
  const int nc = g.cells();
  const size_t rows = static_cast<size_t>(g.nt) * nc;
  for (int c = 0; c < nc; ++c) m(0, c) = disc.m0[c];
  std::vector<double> rhs(rows), lam(rows, 0.0), div(nc), grad(static_cast<size_t>(g.d) * nc);
  const double idt = 1.0 / g.dt();
  for (int k = 0; k < g.nt; ++k) {
    divergence_into(g, W.slice(k), div);
    for (int c = 0; c < nc; ++c) rhs[static_cast<size_t>(k) * nc + c] = (m(k + 1, c) - m(k, c)) * idt + div[c];
  }
  auto res = detail::solve_spd(op, rhs, lam, opts);
  if (cg_iters) *cg_iters += res.iterations;
  for (int n = 1; n <= g.nt; ++n)
    for (int c = 0; c < nc; ++c) {
      const double next = n < g.nt ? lam[static_cast<size_t>(n) * nc + c] : 0.0;
      m(n, c) -= (lam[static_cast<size_t>(n - 1) * nc + c] - next) * idt;
    }
  for (int k = 0; k < g.nt; ++k) {
    gradient_into(g, std::span<const double>(lam.data() + static_cast<size_t>(k) * nc, nc), grad);
    auto s = W.slice(k);
    for (size_t i = 0; i < grad.size(); ++i) s[i] += grad[i];
  }
}

/// (beta, beta_T) from u and m: beta = (alpha - f(m))_+ on interior rows and
/// beta_T = dt (alpha[nt] - f(m[nt]))_+, the jump u[nt-1] - g net of the
/// last step's running cost. Masked copies vanish off {m >= m_bar (1 - mask_tol)}.
inline PriceFields extract_price(const ScalarField& u, const ScalarField& m, const Discretization& disc,
                                 double mask_tol = 1e-3) {
  const auto& g = disc.grid;
  const int nc = g.cells();
  PriceFields p{ScalarField(g, FieldKind::price), ScalarField(g, FieldKind::price), std::vector<double>(nc, 0.0),
                std::vector<double>(nc, 0.0)};
  const double thresh = disc.coupling.m_bar * (1.0 - mask_tol);
  const auto alpha = hj_residual(u, disc);
  for (int n = 1; n < g.nt; ++n)
    for (int c = 0; c < nc; ++c) {
      const double b = std::max(alpha(n, c) - disc.coupling.f(std::max(m(n, c), 0.0)), 0.0);
      p.beta_raw(n, c) = b;
      p.beta(n, c) = m(n, c) >= thresh ? b : 0.0;
    }
  // discrete jump: dt (alpha[nt] - f(m[nt]))_+ = (u[nt-1] - g - dt (f - Hh))_+
  for (int c = 0; c < nc; ++c) {
    const double b = std::max(g.dt() * (alpha(g.nt, c) - disc.coupling.f(std::max(m(g.nt, c), 0.0))), 0.0);
    p.beta_T_raw[c] = b;
    p.beta_T[c] = m(g.nt, c) >= thresh ? b : 0.0;
  }
  return p;
}

/// Pulls a continuity-feasible (m, W) into the box [0, cap] by a convex
/// combination with the static pair (m0, 0), which is feasible and strictly
/// inside the box when m0 > 0. Returns the blend weight (0 if untouched).
inline double restore_box(ScalarField& m, MomentumField& W, const Discretization& disc) {
  const auto& g = disc.grid;
  const double cap = disc.coupling.cap();
  double theta = 0.0;
  for (int n = 1; n <= g.nt; ++n)
    for (int c = 0; c < g.cells(); ++c) {
      const double v = m(n, c), base = disc.m0[c];
      if (v < 0.0 && base > 0.0) theta = std::max(theta, -v / (base - v));
      if (v > cap && base < cap) theta = std::max(theta, (v - cap) / (v - base));
    }
  if (theta <= 0.0) return 0.0;
  theta = std::min(1.0, theta * (1.0 + 1e-12));
  for (int n = 1; n <= g.nt; ++n)
    for (int c = 0; c < g.cells(); ++c) m(n, c) = (1.0 - theta) * m(n, c) + theta * disc.m0[c];
  for (double& w : W.values()) w *= 1.0 - theta;
  return theta;
}

/// Lowers u by c (T - t) with the c >= 0 minimising the certified primal
/// value; this trades the linear cost c T against the price of the residual
/// Hamilton-Jacobi violations. Returns c.
inline double subsolution_shift(ScalarField& u, const ScalarField& m, const Discretization& disc,
                                double mask_tol) {
  const auto& g = disc.grid;
  auto shifted = [&](double c) {
    ScalarField v = u;
    for (int k = 0; k < g.nt; ++k)
      for (int i = 0; i < g.cells(); ++i) v(k, i) -= c * (g.T - g.time_node(k));
    return v;
  };
  auto value = [&](double c) {
    const auto v = shifted(c);
    const auto pr = extract_price(v, m, disc, mask_tol);
    const auto cp = certified_prices(v, m, pr.beta, pr.beta_T, disc);
    return eval_A_relaxed(v, cp.alpha_ac, cp.alpha_T, disc);
  };
  // the largest useful shift removes every violation
  const auto alpha = hj_residual(u, disc);
  double hi = 0.0;
  for (int n = 1; n <= g.nt; ++n)
    for (int i = 0; i < g.cells(); ++i)
      hi = std::max(hi, alpha(n, i) - disc.coupling.f(std::clamp(m(n, i), 0.0, disc.coupling.cap())));
  if (!(hi > 0.0)) return 0.0;
  // golden section on a convex function of c
  const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
  double a = 0.0, b = hi;
  double x1 = b - phi * (b - a), x2 = a + phi * (b - a);
  double f1 = value(x1), f2 = value(x2);
  for (int it = 0; it < 80 && b - a > 1e-14 * std::max(1.0, hi); ++it) {
    if (f1 <= f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - phi * (b - a);
      f1 = value(x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + phi * (b - a);
      f2 = value(x2);
    }
  }
  double best = f1 <= f2 ? x1 : x2;
  if (value(0.0) <= std::min(f1, f2)) best = 0.0;
  if (best > 0.0) u = shifted(best);
  return best;
}

namespace detail {

inline Solution assemble(const SolverState& st, const Discretization& disc, const SolverOptions& opts,
                         const SpaceTimeOperator& proj, int* cg_iters) {
  const auto& g = disc.grid;
  Solution s{st.phi, st.mu_m, st.momentum(disc), ScalarField(g, FieldKind::price), {},
             ScalarField(g, FieldKind::price), {}, {}, {}};
  s.m.set_kind(FieldKind::density);
  project_continuity(s.m, s.w, disc, proj, opts, cg_iters);
  s.diag.box_blend = restore_box(s.m, s.w, disc);
  s.diag.u_shift = subsolution_shift(s.u, s.m, disc, opts.mask_tol);
  auto pr = extract_price(s.u, s.m, disc, opts.mask_tol);
  s.beta = std::move(pr.beta);
  s.beta_raw = std::move(pr.beta_raw);
  s.beta_T = std::move(pr.beta_T);
  s.beta_T_raw = std::move(pr.beta_T_raw);
  const auto gs = evaluate_gap(s.u, s.m, s.w, s.beta, s.beta_T, disc);
  auto& dg = s.diag;
  dg.A = gs.A;
  dg.B = gs.B;
  dg.gap = gs.gap;
  dg.relative_gap = gs.relative_gap;
  dg.hj_violation = gs.hj_violation;
  dg.complementarity_interior = gs.complementarity_interior;
  dg.complementarity_terminal = gs.complementarity_terminal;
  dg.energy_residual = gs.energy.residual;
  dg.energy_relative = gs.energy.relative;
  const auto cr = continuity_residual(s.m, s.w, disc.m0);
  dg.feas = cr.norm;
  dg.initial_mismatch = cr.initial_mismatch;
  dg.max_density = *std::max_element(s.m.values().begin(), s.m.values().end());
  dg.min_density = *std::min_element(s.m.values().begin(), s.m.values().end());
  for (int k = 0; k <= g.nt; ++k) dg.mass_error = std::max(dg.mass_error, std::abs(s.m.mass(k) - 1.0));
  return s;
}

}  // namespace detail

/// Runs the augmented Lagrangian iteration; the returned (m, w) is the
/// multiplier projected onto the continuity equation and (beta, beta_T) are
/// extracted from (u, m). Convergence: relative gap <= tol_gap and the
/// projected density inside [-tol_feas, m_bar + tol_feas]. On
/// non-convergence the best checked iterate is returned with
/// diag.converged = false.
inline Solution run(const ProblemSpec& problem, const GridSpec& grid, const SolverOptions& opts) {
  opts.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const Discretization disc(problem, grid);
  const auto uop = elliptic_operator(grid);
  const auto cop = continuity_operator(grid);
  SolverState st(disc);
  std::vector<double> qa_prev;
  int proj_cg = 0;

  std::optional<Solution> best;
  const double cap = disc.coupling.cap();
  auto feasible = [&](const Solution& s) {
    return s.diag.min_density >= -opts.tol_feas && s.diag.max_density <= cap + opts.tol_feas;
  };

  int it = 0;
  bool done = false;
  while (it < opts.max_iters && !done) {
    ++it;
    elliptic_step(st, disc, opts, uop);
    detail::apply_lambda(st.phi, disc, st.la, st.lb);
    qa_prev = st.qa;
    const auto qb_prev = st.qb;
    prox_step(st, disc, opts);
    multiplier_update(st, disc, opts);

    IterRecord rec;
    rec.iter = it;
    double p2 = 0.0, d2 = 0.0;
    for (size_t i = 0; i < st.qa.size(); ++i) {
      p2 += (st.la[i] - st.qa[i]) * (st.la[i] - st.qa[i]);
      d2 += (st.qa[i] - qa_prev[i]) * (st.qa[i] - qa_prev[i]);
    }
    for (size_t i = 0; i < st.qb.size(); ++i) {
      p2 += (st.lb[i] - st.qb[i]) * (st.lb[i] - st.qb[i]);
      d2 += (st.qb[i] - qb_prev[i]) * (st.qb[i] - qb_prev[i]);
    }
    rec.primal = std::sqrt(p2 * disc.omega());
    rec.dual = opts.r_admm * std::sqrt(d2 * disc.omega());

    if (it % opts.check_every == 0 || it == opts.max_iters) {
      auto cand = detail::assemble(st, disc, opts, cop, &proj_cg);
      rec.gap = cand.diag.gap;
      rec.relative_gap = cand.diag.relative_gap;
      if (opts.on_check) opts.on_check(it, cand.diag);
      const bool ok = feasible(cand) && cand.diag.relative_gap <= opts.tol_gap;
      const bool better = !best || (feasible(cand) && !feasible(*best)) ||
                          (feasible(cand) == feasible(*best) && cand.diag.relative_gap < best->diag.relative_gap);
      if (better || ok) {
        cand.diag.iterations = it;
        best = std::move(cand);
      }
      if (ok) {
        best->diag.converged = true;
        done = true;
      }
    }
    st.history.push_back(rec);
  }
  Solution out = std::move(*best);
  out.history = std::move(st.history);
  out.diag.clamp_total = st.clamp_total;
  out.diag.cg_iterations = st.cg_iterations + proj_cg;
  if (!out.diag.converged) out.diag.iterations = it;
  out.diag.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

}  // namespace mfgdc

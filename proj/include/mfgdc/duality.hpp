#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mfgdc/functionals.hpp"
#include "mfgdc/solver.hpp"

namespace mfgdc {

struct GapReport {
  double A_value = 0.0;
  double B_value = 0.0;
  double gap = 0.0;
  double relative_gap = 0.0;
  double complementarity_interior = 0.0;
  double complementarity_terminal = 0.0;
  double energy_residual = 0.0;
  double energy_relative = 0.0;
  double hj_violation = 0.0;
  double beta_l1 = 0.0;
  double beta_T_l1 = 0.0;
  double continuity_residual = 0.0;
  double initial_mismatch = 0.0;
  double max_density = 0.0;
  double min_density = 0.0;
  double mass_error = 0.0;
  bool negative_gap_warning = false;  // A + B below -1e-8 (|A| + |B|)
};

/// Certificate computed from the solution fields alone.
inline GapReport certify(const Solution& s, const ProblemSpec& problem, const GridSpec& grid) {
  const Discretization disc(problem, grid);
  const auto gs = evaluate_gap(s.u, s.m, s.w, s.beta, s.beta_T, disc);
  GapReport r;
  r.A_value = gs.A;
  r.B_value = gs.B;
  r.gap = gs.gap;
  r.relative_gap = gs.relative_gap;
  r.complementarity_interior = gs.complementarity_interior;
  r.complementarity_terminal = gs.complementarity_terminal;
  r.energy_residual = gs.energy.residual;
  r.energy_relative = gs.energy.relative;
  r.hj_violation = gs.hj_violation;
  r.beta_l1 = gs.beta_l1;
  r.beta_T_l1 = gs.beta_T_l1;
  const auto cr = continuity_residual(s.m, s.w, disc.m0);
  r.continuity_residual = cr.norm;
  r.initial_mismatch = cr.initial_mismatch;
  const auto& v = s.m.values();
  r.max_density = *std::max_element(v.begin(), v.end());
  r.min_density = *std::min_element(v.begin(), v.end());
  for (int k = 0; k <= grid.nt; ++k) r.mass_error = std::max(r.mass_error, std::abs(s.m.mass(k) - 1.0));
  r.negative_gap_warning = r.gap < -1e-8 * (std::abs(r.A_value) + std::abs(r.B_value));
  return r;
}

inline std::map<std::string, double> to_map(const GapReport& r) {
  return {{"A_value", r.A_value},
          {"B_value", r.B_value},
          {"gap", r.gap},
          {"relative_gap", r.relative_gap},
          {"complementarity_interior", r.complementarity_interior},
          {"complementarity_terminal", r.complementarity_terminal},
          {"energy_residual", r.energy_residual},
          {"energy_relative", r.energy_relative},
          {"hj_violation", r.hj_violation},
          {"beta_l1", r.beta_l1},
          {"beta_T_l1", r.beta_T_l1},
          {"continuity_residual", r.continuity_residual},
          {"initial_mismatch", r.initial_mismatch},
          {"max_density", r.max_density},
          {"min_density", r.min_density},
          {"mass_error", r.mass_error},
          {"negative_gap_warning", r.negative_gap_warning ? 1.0 : 0.0}};
}

/// Flat key=value text, one entry per line.
inline void write_report(std::ostream& os, const GapReport& r) {
  os << std::setprecision(17);
  for (const auto& [k, v] : to_map(r)) os << k << '=' << v << '\n';
}

inline GapReport read_report(std::istream& is) {
  std::map<std::string, double> kv;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw std::runtime_error("gap report: malformed line '" + line + "'");
    kv[line.substr(0, eq)] = std::stod(line.substr(eq + 1));
  }
  auto get = [&](const char* k) {
    auto it = kv.find(k);
    if (it == kv.end()) throw std::runtime_error(std::string("gap report: missing key ") + k);
    return it->second;
  };
  GapReport r;
  r.A_value = get("A_value");
  r.B_value = get("B_value");
  r.gap = get("gap");
  r.relative_gap = get("relative_gap");
  r.complementarity_interior = get("complementarity_interior");
  r.complementarity_terminal = get("complementarity_terminal");
  r.energy_residual = get("energy_residual");
  r.energy_relative = get("energy_relative");
  r.hj_violation = get("hj_violation");
  r.beta_l1 = get("beta_l1");
  r.beta_T_l1 = get("beta_T_l1");
  r.continuity_residual = get("continuity_residual");
  r.initial_mismatch = get("initial_mismatch");
  r.max_density = get("max_density");
  r.min_density = get("min_density");
  r.mass_error = get("mass_error");
  r.negative_gap_warning = get("negative_gap_warning") != 0.0;
  return r;
}

// ---------------------------------------------------------------------------
// Interior regularity of the price under refinement.

struct ProbeWindow {
  double t1 = 0.0, t2 = 0.0;
  double max_norm = 0.0;  // sup over the window
  double l2_norm = 0.0;   // (sum beta^2 dx^d dt)^(1/2)
  double l1_norm = 0.0;
};

struct ProbeResult {
  int nx = 0;
  std::vector<ProbeWindow> windows;
  double slab_l1 = 0.0;    // beta on [T - delta, T)
  double beta_T_l1 = 0.0;  // terminal atom
};

/// Norms of beta on the interior nodes t_n in [t1, t2], for each window.
/// For d = 2 the L2 norm is the L^{d/(d-1)} norm; for d = 1 the max norm
/// stands in for L^inf and the L2 norm is reported alongside.
inline ProbeResult regularity_probe(const Solution& s, const GridSpec& grid,
                                    const std::vector<std::pair<double, double>>& windows, double slab = 0.1) {
  ProbeResult out;
  out.nx = grid.nx;
  const double w = grid.cell_volume() * grid.dt();
  for (auto [t1, t2] : windows) {
    if (!(t1 > 0.0 && t2 < grid.T && t1 < t2)) throw std::invalid_argument("regularity_probe: window outside (0, T)");
    ProbeWindow pw{t1, t2, 0.0, 0.0, 0.0};
    double sq = 0.0;
    for (int n = 1; n < grid.nt; ++n) {
      const double t = grid.time_node(n);
      if (t < t1 - 1e-12 || t > t2 + 1e-12) continue;
      for (int c = 0; c < grid.cells(); ++c) {
        const double b = s.beta(n, c);
        pw.max_norm = std::max(pw.max_norm, b);
        sq += b * b;
        pw.l1_norm += b;
      }
    }
    pw.l2_norm = std::sqrt(sq * w);
    pw.l1_norm *= w;
    out.windows.push_back(pw);
  }
  for (int n = 1; n < grid.nt; ++n) {
    if (grid.time_node(n) < grid.T - slab - 1e-12) continue;
    for (int c = 0; c < grid.cells(); ++c) out.slab_l1 += s.beta(n, c) * w;
  }
  for (double b : s.beta_T) out.beta_T_l1 += b * grid.cell_volume();
  return out;
}

inline void write_probe_csv(std::ostream& os, const std::vector<ProbeResult>& rows) {
  os << "# regularity probe: norms of the interior price beta [cost/time] per window, terminal atom beta_T [cost]\n";
  os << "nx,t1,t2,max_norm,l2_norm,l1_norm,slab_l1,beta_T_l1\n" << std::setprecision(10);
  for (const auto& r : rows)
    for (const auto& w : r.windows)
      os << r.nx << ',' << w.t1 << ',' << w.t2 << ',' << w.max_norm << ',' << w.l2_norm << ',' << w.l1_norm << ','
         << r.slab_l1 << ',' << r.beta_T_l1 << '\n';
}

// ---------------------------------------------------------------------------
// Translation competitor.

/// B(m', w') - B(m, w) for the competitor
///   m'(t, x) = m(t + z(t) eta, x + z(t) delta),
///   w'(t, x) = w(t + z(t) eta, x + z(t) delta) (1 + eta z'(t)) - z'(t) delta m'(t, x),
/// with the cutoff z(t) = sin^2(pi t / T), which solves the continuity
/// equation whenever (m, w) does. The sampled competitor is projected back
/// onto the discrete continuity equation before evaluation.
inline double translation_diagnostic(const Solution& s, const ProblemSpec& problem, const GridSpec& grid,
                                     std::array<double, 2> delta, double eta) {
  if (std::abs(eta) > 0.25 * grid.T || std::abs(delta[0]) > 0.25 || std::abs(delta[1]) > 0.25)
    throw std::invalid_argument("translation_diagnostic: shift too large");
  const Discretization disc(problem, grid);
  const double base = eval_B(s.m, s.w, disc);
  if (delta[0] == 0.0 && delta[1] == 0.0 && eta == 0.0) return 0.0;
  const double pi = std::numbers::pi;
  auto z = [&](double t) { return std::pow(std::sin(pi * t / grid.T), 2); };
  auto dz = [&](double t) { return pi / grid.T * std::sin(2.0 * pi * t / grid.T); };
  ScalarField m(grid, FieldKind::density);
  MomentumField W(grid);
  std::array<double, 2> x{}, v{};
  for (int n = 0; n <= grid.nt; ++n) {
    const double t = grid.time_node(n), tau = t + z(t) * eta;
    for (int c = 0; c < grid.cells(); ++c) {
      for (int a = 0; a < grid.d; ++a) x[a] = grid.center(c, a) + z(t) * delta[a];
      m(n, c) = interp_density(s.m, tau, {x.data(), size_t(grid.d)});
    }
  }
  for (int k = 0; k < grid.nt; ++k) {
    const double t = (k + 0.5) * grid.dt(), tau = t + z(t) * eta;
    for (int a = 0; a < grid.d; ++a)
      for (int c = 0; c < grid.cells(); ++c) {
        for (int b = 0; b < grid.d; ++b) x[b] = grid.center(c, b) + (a == b ? 0.5 * grid.dx() : 0.0) + z(t) * delta[b];
        interp_momentum(s.w, tau, {x.data(), size_t(grid.d)}, {v.data(), size_t(grid.d)});
        const double mf = interp_density(s.m, tau, {x.data(), size_t(grid.d)});
        W(k, a, c) = v[a] * (1.0 + eta * dz(t)) - dz(t) * delta[a] * mf;
      }
  }
  SolverOptions opts;
  project_continuity(m, W, disc, continuity_operator(grid), opts);
  restore_box(m, W, disc);
  return eval_B(m, W, disc) - base;
}

}  // namespace mfgdc

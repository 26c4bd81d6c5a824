#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "mfgdc/functionals.hpp"
#include "mfgdc/geodesic.hpp"
#include "mfgdc/grid.hpp"
#include "mfgdc/parallel.hpp"
#include "mfgdc/solver.hpp"

namespace mfgdc::flows {

// ---------------------------------------------------------------------------
// Heat-kernel mollification.

/// Periodic heat kernel of width eps sampled at the lattice offsets j dx,
/// j in [-nx/2, nx/2), summed over the nearest images and normalized to unit
/// discrete mass.
inline std::vector<double> heat_kernel(int nx, double eps) {
  if (!(eps > 0.0) || eps >= 0.25) throw std::invalid_argument("mollify: eps must lie in (0, 0.25)");
  const double dx = 1.0 / nx;
  std::vector<double> k(nx, 0.0);
  double total = 0.0;
  for (int j = 0; j < nx; ++j) {
    const int off = j < (nx + 1) / 2 ? j : j - nx;
    double v = 0.0;
    for (int p = -3; p <= 3; ++p) {
      const double y = off * dx + p;
      v += std::exp(-y * y / (2.0 * eps * eps));
    }
    k[j] = v;
    total += v;
  }
  for (auto& v : k) v /= total;
  return k;
}

/// Circular convolution of one cell slice with the kernel along every axis.
inline void convolve_slice(const GridSpec& grid, const std::vector<double>& kernel, std::span<double> v) {
  const int n = grid.nx;
  std::vector<double> line(n), out(n);
  const int lines = grid.d == 1 ? 1 : n;
  for (int a = 0; a < grid.d; ++a) {
    const int stride = a == 0 ? 1 : n;
    for (int l = 0; l < lines; ++l) {
      const int base = a == 0 ? l * n : l;
      for (int i = 0; i < n; ++i) line[i] = v[base + i * stride];
      for (int i = 0; i < n; ++i) {
        double s = 0.0;
        for (int j = 0; j < n; ++j) s += kernel[j] * line[(i - j + n) % n];
        out[i] = s;
      }
      for (int i = 0; i < n; ++i) v[base + i * stride] = out[i];
    }
  }
}

inline ScalarField mollify_scalar(const ScalarField& f, double eps) {
  const auto& grid = f.grid();
  const auto kernel = heat_kernel(grid.nx, eps);
  ScalarField out = f;
  for (int k = 0; k <= grid.nt; ++k) convolve_slice(grid, kernel, out.slice(k));
  return out;
}

inline MomentumField mollify_momentum(const MomentumField& w, double eps) {
  const auto& grid = w.grid();
  const auto kernel = heat_kernel(grid.nx, eps);
  MomentumField out = w;
  const int nc = grid.cells();
  for (int k = 0; k < grid.nt; ++k)
    for (int a = 0; a < grid.d; ++a) convolve_slice(grid, kernel, out.slice(k).subspan(size_t(a) * nc, nc));
  return out;
}

inline std::vector<double> mollify_cells(const GridSpec& grid, std::span<const double> v, double eps) {
  std::vector<double> out(v.begin(), v.end());
  convolve_slice(grid, heat_kernel(grid.nx, eps), out);
  return out;
}

struct MollifiedFields {
  ScalarField m;
  MomentumField w;
  double eps = 0.0;
  double floor = 1e-12;
  double min_density = 0.0;  // before flooring
};

inline MollifiedFields mollify(const ScalarField& m, const MomentumField& w, double eps, double floor = 1e-12) {
  MollifiedFields out{mollify_scalar(m, eps), mollify_momentum(w, eps), eps, floor, kInf};
  for (auto& v : out.m.values()) {
    out.min_density = std::min(out.min_density, v);
    v = std::max(v, floor);
  }
  return out;
}

inline MollifiedFields mollify(const Solution& s, double eps, double floor = 1e-12) {
  return mollify(s.m, s.w, eps, floor);
}

// ---------------------------------------------------------------------------
// Path ensemble.

struct PathEnsemble {
  int N = 0, steps = 0, d = 1;  // steps = nt + 1 nodes per path
  std::uint64_t seed = 0;
  std::vector<double> x;        // [path][node][axis], wrapped to [0, 1)
  std::vector<double> kinetic;  // int L(gamma, gamma')
  std::vector<double> running;  // int (f(m) + beta)(t, gamma)
  std::vector<double> terminal; // g(gamma(T)) + beta_T(gamma(T))

  double at(int j, int k, int a) const { return x[(size_t(j) * steps + k) * d + a]; }
  double& at(int j, int k, int a) { return x[(size_t(j) * steps + k) * d + a]; }
};

namespace detail {

/// Per-path stream derived from (seed, index) alone.
inline std::mt19937_64 path_rng(std::uint64_t seed, std::uint64_t index) {
  std::seed_seq seq{std::uint32_t(seed), std::uint32_t(seed >> 32), std::uint32_t(index), std::uint32_t(index >> 32)};
  return std::mt19937_64(seq);
}

inline double uniform01(std::mt19937_64& rng) { return double(rng() >> 11) * 0x1.0p-53; }

inline void velocity(const MollifiedFields& f, double t, const double* x, double* v) {
  const int d = f.m.grid().d;
  interp_velocity(f.m, f.w, t, {x, size_t(d)}, {v, size_t(d)}, f.floor);
}

/// Kinetic action sum_k L(gamma_k, (gamma_{k+1} - gamma_k) / dt) dt over nodes [k0, k1].
template <class Get>
double path_action(const HamiltonianSpec& H, int d, double dt, int k0, int k1, Get&& get) {
  double s = 0.0;
  std::array<double, 2> q{};
  for (int k = k0; k < k1; ++k) {
    Point x{0.0, 0.0};
    for (int a = 0; a < d; ++a) {
      q[a] = geodesic::reduce(get(k + 1, a) - get(k, a)) / dt;
      x[a] = get(k, a);
    }
    s += eval_L(H, x, {q.data(), size_t(d)}) * dt;
  }
  return s;
}

inline double interp_cell_values(const GridSpec& grid, std::span<const double> v, const double* x) {
  const double offs[2] = {0.5, 0.5};
  return mfgdc::detail::interp_cells(grid, v, x, offs);
}

}  // namespace detail

/// Starting points drawn from the cell density m0: exact inverse CDF in d = 1,
/// rejection against the cell maximum in d = 2.
inline void sample_start(const GridSpec& grid, std::span<const double> m0, const geodesic::QuantileFn* Q, double m0_max,
                         std::mt19937_64& rng, double* x) {
  if (grid.d == 1) {
    x[0] = geodesic::wrap01((*Q)(detail::uniform01(rng)));
    return;
  }
  for (;;) {
    const double x0 = detail::uniform01(rng), x1 = detail::uniform01(rng);
    const int c = std::min(int(x0 * grid.nx), grid.nx - 1) + grid.nx * std::min(int(x1 * grid.nx), grid.nx - 1);
    if (detail::uniform01(rng) * m0_max < m0[c]) {
      x[0] = x0;
      x[1] = x1;
      return;
    }
  }
}

/// Integrates x' = w_eps / m_eps with classical RK4 at the grid time step from
/// N starting points drawn from m0. Path costs are filled by `price_paths`.
inline PathEnsemble sample_paths(const MollifiedFields& f, std::span<const double> m0, int N, std::uint64_t seed,
                                 int threads = 1) {
  if (N < 1) throw std::invalid_argument("sample_paths: N must be positive");
  const auto& grid = f.m.grid();
  if (int(m0.size()) != grid.cells()) throw std::invalid_argument("sample_paths: m0 size mismatch");
  const int d = grid.d, nt = grid.nt;
  const double dt = grid.dt();
  PathEnsemble e;
  e.N = N;
  e.steps = nt + 1;
  e.d = d;
  e.seed = seed;
  e.x.assign(size_t(N) * e.steps * d, 0.0);
  e.kinetic.assign(N, 0.0);
  e.running.assign(N, 0.0);
  e.terminal.assign(N, 0.0);
  std::optional<geodesic::QuantileFn> Q;
  if (d == 1) Q.emplace(m0);
  const double m0_max = *std::max_element(m0.begin(), m0.end());
  if (!(m0_max > 0.0)) throw std::invalid_argument("sample_paths: m0 has no mass");
  parallel_for(N, threads, [&](int b, int end) {
    std::array<double, 2> x{}, y{}, k1{}, k2{}, k3{}, k4{};
    for (int j = b; j < end; ++j) {
      auto rng = detail::path_rng(seed, std::uint64_t(j));
      sample_start(grid, m0, Q ? &*Q : nullptr, m0_max, rng, x.data());
      for (int a = 0; a < d; ++a) e.at(j, 0, a) = x[a];
      for (int k = 0; k < nt; ++k) {
        const double t = k * dt;
        detail::velocity(f, t, x.data(), k1.data());
        for (int a = 0; a < d; ++a) y[a] = x[a] + 0.5 * dt * k1[a];
        detail::velocity(f, t + 0.5 * dt, y.data(), k2.data());
        for (int a = 0; a < d; ++a) y[a] = x[a] + 0.5 * dt * k2[a];
        detail::velocity(f, t + 0.5 * dt, y.data(), k3.data());
        for (int a = 0; a < d; ++a) y[a] = x[a] + dt * k3[a];
        detail::velocity(f, t + dt, y.data(), k4.data());
        for (int a = 0; a < d; ++a) {
          x[a] = geodesic::wrap01(x[a] + dt / 6.0 * (k1[a] + 2.0 * k2[a] + 2.0 * k3[a] + k4[a]));
          e.at(j, k + 1, a) = x[a];
        }
      }
    }
  });
  return e;
}

/// Mollified running price f(m) + beta on the nodes 1..nt.
inline ScalarField running_price(const Solution& s, const Discretization& disc, double eps) {
  const auto& grid = disc.grid;
  ScalarField a(grid, FieldKind::price);
  for (int n = 1; n <= grid.nt; ++n)
    for (int c = 0; c < grid.cells(); ++c) a(n, c) = disc.coupling.f(s.m(n, c)) + s.beta(n, c);
  return mollify_scalar(a, eps);
}

/// Fills the per-path action decomposition: kinetic with the exact Lagrangian
/// along chords, running price by the right-endpoint rule, terminal g + beta_T.
inline void price_paths(PathEnsemble& e, const Solution& s, const ProblemSpec& problem, double eps, int threads = 1) {
  const auto& grid = s.m.grid();
  const Discretization disc(problem, grid);
  const auto alpha = running_price(s, disc, eps);
  const double dt = grid.dt();
  parallel_for(e.N, threads, [&](int b, int end) {
    for (int j = b; j < end; ++j) {
      auto get = [&](int k, int a) { return e.at(j, k, a); };
      e.kinetic[j] = detail::path_action(problem.H, e.d, dt, 0, grid.nt, get);
      double r = 0.0;
      std::array<double, 2> x{};
      for (int n = 1; n <= grid.nt; ++n) {
        for (int a = 0; a < e.d; ++a) x[a] = e.at(j, n, a);
        r += detail::interp_cell_values(grid, alpha.slice(n), x.data()) * dt;
      }
      e.running[j] = r;
      Point xp{x[0], x[1]};
      e.terminal[j] = problem.g(xp) + detail::interp_cell_values(grid, s.beta_T, x.data());
    }
  });
}

// ---------------------------------------------------------------------------
// Superposition checks.

/// Counts per grid cell at node k; the total is exactly N.
inline std::vector<long> histogram(const PathEnsemble& e, const GridSpec& grid, int k) {
  std::vector<long> h(grid.cells(), 0);
  for (int j = 0; j < e.N; ++j) {
    int c = 0, stride = 1;
    for (int a = 0; a < e.d; ++a) {
      c += std::min(int(e.at(j, k, a) * grid.nx), grid.nx - 1) * stride;
      stride *= grid.nx;
    }
    ++h[c];
  }
  return h;
}

/// Kinetic part of the discrete primal energy, sum m L0(w / M_face) over cells.
inline double grid_kinetic_energy(const ScalarField& m, const MomentumField& W, const Discretization& disc) {
  const auto& grid = disc.grid;
  const int d = grid.d;
  double run = 0.0;
  std::array<double, 2> vp{}, vm{};
  for (int n = 1; n <= grid.nt; ++n) {
    for (int c = 0; c < grid.cells(); ++c) {
      const double mc = std::max(m(n, c), 0.0);
      if (mc <= 0.0) continue;
      for (int a = 0; a < d; ++a) {
        const int cp = grid.neighbor(c, a, +1), cm = grid.neighbor(c, a, -1);
        const double Mp = 0.5 * (mc + std::max(m(n, cp), 0.0)), Mm = 0.5 * (mc + std::max(m(n, cm), 0.0));
        vp[a] = W(n - 1, a, c) / Mp;
        vm[a] = W(n - 1, a, cm) / Mm;
      }
      run += 0.5 * mc *
             (radial_lagrangian(disc.H.s, {vp.data(), size_t(d)}) + radial_lagrangian(disc.H.s, {vm.data(), size_t(d)}));
    }
  }
  return run * disc.omega();
}

/// Mean over paths of sum_k L0((gamma_{k+1} - gamma_k) / dt) dt.
inline double ensemble_kinetic_energy(const PathEnsemble& e, const GridSpec& grid, double s) {
  double total = 0.0;
  std::array<double, 2> q{};
  for (int j = 0; j < e.N; ++j)
    for (int k = 0; k < grid.nt; ++k) {
      for (int a = 0; a < e.d; ++a) q[a] = geodesic::reduce(e.at(j, k + 1, a) - e.at(j, k, a)) / grid.dt();
      total += radial_lagrangian(s, {q.data(), size_t(e.d)}) * grid.dt();
    }
  return total / e.N;
}

struct MarginalReport {
  std::vector<double> l1;  // per time node
  double max_l1 = 0.0;
  double bound = 0.0;      // 2 (N^{-1/2} + dx)
  double max_empirical_density = 0.0;
  double ensemble_energy = 0.0;
  double grid_energy = 0.0;
};

/// L1 distance between the ensemble histogram and m[k] dx^d at each node,
/// plus the kinetic comparison between paths and grid.
inline MarginalReport marginal_error(const PathEnsemble& e, const ScalarField& m, const MomentumField& w,
                                     const Discretization& disc) {
  const auto& grid = disc.grid;
  MarginalReport r;
  r.l1.resize(grid.nt + 1);
  const double vol = grid.cell_volume();
  for (int k = 0; k <= grid.nt; ++k) {
    const auto h = histogram(e, grid, k);
    double s = 0.0;
    for (int c = 0; c < grid.cells(); ++c) {
      const double p = double(h[c]) / e.N;
      s += std::abs(p - m(k, c) * vol);
      r.max_empirical_density = std::max(r.max_empirical_density, p / vol);
    }
    r.l1[k] = s;
    r.max_l1 = std::max(r.max_l1, s);
  }
  r.bound = 2.0 * (1.0 / std::sqrt(double(e.N)) + grid.dx());
  r.ensemble_energy = ensemble_kinetic_energy(e, grid, disc.H.s);
  r.grid_energy = grid_kinetic_energy(m, w, disc);
  return r;
}

struct EnergyResidual {
  double lhs = 0.0;       // int u(0) m0
  double terminal = 0.0;  // int g m(T)
  double atom = 0.0;      // m_bar int beta_T
  double action = 0.0;    // mean path action int L
  double running = 0.0;   // int int (f(m) + beta) m
  double residual = 0.0;
  double relative = 0.0;
};

/// Energy identity int u(0) m0 = int g m(T) + m_bar int beta_T + int int L deta
/// + int int (f(m) + beta) m, with the paths supplying the action.
inline EnergyResidual energy_residual(const PathEnsemble& e, const Solution& s, const ProblemSpec& problem) {
  const auto& grid = s.m.grid();
  const Discretization disc(problem, grid);
  const double vol = grid.cell_volume();
  EnergyResidual r;
  for (int c = 0; c < grid.cells(); ++c) {
    r.lhs += s.u(0, c) * disc.m0[c] * vol;
    r.terminal += disc.g[c] * s.m(grid.nt, c) * vol;
  }
  if (disc.coupling.hard())
    for (double b : s.beta_T) r.atom += disc.coupling.m_bar * b * vol;
  for (int n = 1; n <= grid.nt; ++n)
    for (int c = 0; c < grid.cells(); ++c)
      r.running += (disc.coupling.f(s.m(n, c)) + s.beta(n, c)) * s.m(n, c) * disc.omega();
  double act = 0.0;
  for (int j = 0; j < e.N; ++j) {
    auto get = [&](int k, int a) { return e.at(j, k, a); };
    act += detail::path_action(problem.H, e.d, grid.dt(), 0, grid.nt, get);
  }
  r.action = act / e.N;
  const double rhs = r.terminal + r.atom + r.action + r.running;
  r.residual = std::abs(r.lhs - rhs);
  r.relative = r.residual / std::max({std::abs(r.lhs), std::abs(rhs), 1e-12});
  return r;
}

// ---------------------------------------------------------------------------
// Single-path optimality against random perturbations.

struct PerturbationOptions {
  double t1 = 0.25, t2 = 0.75;
  int K = 20;
  std::uint64_t seed = 1;
  double tol_nash = -1.0;  // negative: 10 (dx + eps)
  double amplitude = 0.1;
  int modes = 4;
  int threads = 1;
};

struct PerturbationReport {
  int paths = 0, trials = 0;
  long violating_trials = 0;
  int violating_paths = 0;
  double trial_fraction = 0.0;  // violations / (paths K)
  double path_fraction = 0.0;   // paths with at least one violation / paths
  double worst_margin = -kInf;  // max of LHS - RHS
  double tol_nash = 0.0;
};

/// Perturbation omega(t) = sum_j a_j sin((j - 1/2) pi (t - t1) / (t2 - t1)),
/// zero at t1 and free at t2; a_j uniform in [0, amplitude] with a random
/// sign per axis.
inline void draw_perturbation(std::mt19937_64& rng, int d, int modes, double amplitude, std::vector<double>& coeff) {
  coeff.assign(size_t(modes) * d, 0.0);
  for (auto& c : coeff) {
    const double a = amplitude * detail::uniform01(rng);
    c = detail::uniform01(rng) < 0.5 ? -a : a;
  }
}

/// LHS - RHS of the path optimality inequality on [t1, t2] for one path and
/// one perturbation; coeff empty means omega = 0.
inline double optimality_margin(const PathEnsemble& e, int j, const ScalarField& u_hat, const ScalarField& alpha_hat,
                                const HamiltonianSpec& H, int n1, int n2, const std::vector<double>& coeff, int modes) {
  const auto& grid = u_hat.grid();
  const int d = e.d;
  const double dt = grid.dt(), len = (n2 - n1) * dt;
  auto omega = [&](int k, int a) {
    if (coeff.empty()) return 0.0;
    const double s = (k - n1) * dt / len;
    double v = 0.0;
    for (int i = 0; i < modes; ++i) v += coeff[size_t(i) * d + a] * std::sin((i + 0.5) * std::numbers::pi * s);
    return v;
  };
  auto base = [&](int k, int a) { return e.at(j, k, a); };
  auto pert = [&](int k, int a) { return e.at(j, k, a) + omega(k, a); };
  auto side = [&](auto&& get) {
    double v = detail::path_action(H, d, dt, n1, n2, get);
    std::array<double, 2> x{};
    for (int n = n1 + 1; n <= n2; ++n) {
      for (int a = 0; a < d; ++a) x[a] = geodesic::wrap01(get(n, a));
      v += detail::interp_cell_values(grid, alpha_hat.slice(n), x.data()) * dt;
    }
    for (int a = 0; a < d; ++a) x[a] = geodesic::wrap01(get(n2, a));
    return v + detail::interp_cell_values(grid, u_hat.slice(n2), x.data());
  };
  return side(base) - side(pert);
}

inline int aligned_node(const GridSpec& grid, double t, const char* what) {
  const double s = t / grid.dt();
  const int n = int(std::lround(s));
  if (std::abs(s - n) > 1e-9) throw std::invalid_argument(std::string("perturbation_test: ") + what + " not on a grid node");
  return n;
}

inline PerturbationReport perturbation_test(const PathEnsemble& e, const Solution& s, const ProblemSpec& problem,
                                            double eps, const PerturbationOptions& opt) {
  const auto& grid = s.m.grid();
  if (!(opt.t1 > 0.0 && opt.t1 < opt.t2 && opt.t2 < grid.T))
    throw std::invalid_argument("perturbation_test: need 0 < t1 < t2 < T");
  if (opt.K < 1) throw std::invalid_argument("perturbation_test: K must be positive");
  const int n1 = aligned_node(grid, opt.t1, "t1"), n2 = aligned_node(grid, opt.t2, "t2");
  const Discretization disc(problem, grid);
  const auto u_hat = mollify_scalar(s.u, eps);
  const auto alpha_hat = running_price(s, disc, eps);
  PerturbationReport r;
  r.paths = e.N;
  r.trials = e.N * opt.K;
  r.tol_nash = opt.tol_nash >= 0.0 ? opt.tol_nash : 10.0 * (grid.dx() + eps);
  std::vector<int> bad(e.N, 0);
  std::vector<double> worst(e.N, -kInf);
  parallel_for(e.N, opt.threads, [&](int b, int end) {
    std::vector<double> coeff;
    for (int j = b; j < end; ++j) {
      auto rng = detail::path_rng(opt.seed ^ 0x9e3779b97f4a7c15ULL, std::uint64_t(j));
      for (int k = 0; k < opt.K; ++k) {
        draw_perturbation(rng, e.d, opt.modes, opt.amplitude, coeff);
        const double m = optimality_margin(e, j, u_hat, alpha_hat, problem.H, n1, n2, coeff, opt.modes);
        worst[j] = std::max(worst[j], m);
        if (m > r.tol_nash) ++bad[j];
      }
    }
  });
  for (int j = 0; j < e.N; ++j) {
    r.violating_trials += bad[j];
    r.violating_paths += bad[j] > 0;
    r.worst_margin = std::max(r.worst_margin, worst[j]);
  }
  r.trial_fraction = double(r.violating_trials) / r.trials;
  r.path_fraction = double(r.violating_paths) / r.paths;
  return r;
}

inline void write_report(std::ostream& os, const PerturbationReport& r) {
  os << std::setprecision(17) << "paths=" << r.paths << "\ntrials=" << r.trials << "\nviolating_trials="
     << r.violating_trials << "\nviolating_paths=" << r.violating_paths << "\ntrial_fraction=" << r.trial_fraction
     << "\npath_fraction=" << r.path_fraction << "\nworst_margin=" << r.worst_margin << "\ntol_nash=" << r.tol_nash
     << '\n';
}

// ---------------------------------------------------------------------------
// Ensemble file: "MFGP", u64 N, u64 nt + 1, u64 d, then f64 coordinates.

inline void save_ensemble(const std::filesystem::path& path, const PathEnsemble& e) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os.write("MFGP", 4);
  const std::uint64_t hdr[3] = {std::uint64_t(e.N), std::uint64_t(e.steps), std::uint64_t(e.d)};
  os.write(reinterpret_cast<const char*>(hdr), sizeof hdr);
  os.write(reinterpret_cast<const char*>(e.x.data()), std::streamsize(e.x.size() * sizeof(double)));
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

inline PathEnsemble load_ensemble(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read " + path.string());
  char magic[4];
  std::uint64_t hdr[3];
  is.read(magic, 4);
  is.read(reinterpret_cast<char*>(hdr), sizeof hdr);
  if (!is || std::string(magic, 4) != "MFGP") throw std::runtime_error(path.string() + ": not an ensemble file");
  if (hdr[2] < 1 || hdr[2] > 2 || hdr[1] < 2) throw std::runtime_error(path.string() + ": bad ensemble header");
  PathEnsemble e;
  e.N = int(hdr[0]);
  e.steps = int(hdr[1]);
  e.d = int(hdr[2]);
  e.x.resize(size_t(e.N) * e.steps * e.d);
  is.read(reinterpret_cast<char*>(e.x.data()), std::streamsize(e.x.size() * sizeof(double)));
  if (!is) throw std::runtime_error(path.string() + ": truncated ensemble");
  e.kinetic.assign(e.N, 0.0);
  e.running.assign(e.N, 0.0);
  e.terminal.assign(e.N, 0.0);
  return e;
}

}  // namespace mfgdc::flows

#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mfgdc/config.hpp"
#include "mfgdc/duality.hpp"
#include "mfgdc/flows.hpp"
#include "mfgdc/geodesic.hpp"
#include "mfgdc/solution_io.hpp"
#include "mfgdc/solver.hpp"

namespace mfgdc::cli {

namespace fs = std::filesystem;

enum ExitCode : int { kOk = 0, kFailure = 1, kInvalid = 2, kNotConverged = 3 };

inline constexpr const char* kVersion = "1.0.0";

/// Thrown for missing or inconsistent inputs; maps to exit code 2.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Context {
  RunConfig config;
  fs::path out;
  int threads = 1;
  bool verbose = false;
  std::ostream* log = &std::cerr;
};

inline Context make_context(RunConfig rc, std::optional<fs::path> out, std::optional<int> threads) {
  Context ctx;
  if (out) rc.output.directory = out->string();
  if (threads) {
    if (*threads < 1) throw ConfigError("--threads must be >= 1");
    rc.solver.threads = *threads;
  }
  ctx.out = rc.output.directory;
  ctx.threads = rc.solver.threads;
  ctx.config = std::move(rc);
  return ctx;
}

namespace detail {

inline std::ofstream open_out(const fs::path& p) {
  std::ofstream os(p);
  if (!os) throw std::runtime_error("cannot write " + p.string());
  os << std::setprecision(12);
  return os;
}

inline std::string eps_dir(double eps) {
  std::ostringstream os;
  os << "eps_" << std::setprecision(6) << eps;
  return os.str();
}

inline void write_history(const fs::path& p, const Solution& s) {
  auto os = open_out(p);
  os << "# solver history; residuals in the space-time L2 norm, gap [cost] at checks only (nan elsewhere)\n";
  os << "iter,primal,dual,gap,relative_gap\n";
  for (const auto& r : s.history) {
    const bool checked = r.gap != 0.0 || r.relative_gap != 0.0;
    os << r.iter << ',' << r.primal << ',' << r.dual << ',';
    if (checked)
      os << r.gap << ',' << r.relative_gap << '\n';
    else
      os << "nan,nan\n";
  }
}

inline nlohmann::json diag_json(const Diagnostics& d) {
  return {{"A", d.A},
          {"B", d.B},
          {"gap", d.gap},
          {"relative_gap", d.relative_gap},
          {"feasibility", d.feas},
          {"max_density", d.max_density},
          {"min_density", d.min_density},
          {"mass_error", d.mass_error},
          {"box_blend", d.box_blend},
          {"u_shift", d.u_shift},
          {"iterations", d.iterations},
          {"cg_iterations", d.cg_iterations},
          {"converged", d.converged},
          {"wall_seconds", d.wall_seconds}};
}

inline double max_abs(const ScalarField& f) {
  double m = 0.0;
  for (double v : f.values()) m = std::max(m, std::abs(v));
  return m;
}

/// Space-time L2 distance over the nodes 1..nt.
inline double l2_distance(const ScalarField& a, const ScalarField& b) {
  const auto& g = a.grid();
  double s = 0.0;
  for (int n = 1; n <= g.nt; ++n)
    for (int c = 0; c < g.cells(); ++c) s += std::pow(a(n, c) - b(n, c), 2);
  return std::sqrt(s * g.cell_volume() * g.dt());
}

inline void write_gap_report(const fs::path& p, const GapReport& r) {
  auto os = open_out(p);
  write_report(os, r);
}

inline SolverOptions solver_options(const Context& ctx) {
  SolverOptions o = ctx.config.solver;
  o.threads = ctx.threads;
  if (ctx.verbose) {
    auto* log = ctx.log;
    o.on_check = [log](int it, const Diagnostics& d) {
      *log << "  iter " << it << "  rel_gap " << d.relative_gap << "  max m " << d.max_density << '\n';
    };
  }
  return o;
}

inline nlohmann::json read_json(const fs::path& p) {
  std::ifstream is(p);
  if (!is) throw InputError("missing " + p.string());
  try {
    return nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(p.string() + ": " + e.what());
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// solve

/// Runs the solver, certifies the result and writes fields, gap report,
/// history and manifest; then runs the penalized sweep, if configured, into
/// out/penalized/eps_<value>. Exit 0 iff every run converged and certified.
inline int cmd_solve(const Context& ctx) {
  const auto& rc = ctx.config;
  auto& log = *ctx.log;
  const auto grid = rc.grid();
  const auto vr = validate(rc.problem, grid);
  if (!vr.ok) {
    log << "invalid problem: " << vr.summary() << '\n';
    return kInvalid;
  }
  fs::create_directories(ctx.out);
  const auto opts = detail::solver_options(ctx);
  auto s = run(rc.problem, grid, opts);
  io::save_solution(ctx.out, s, rc.output.bin, rc.output.csv);
  const auto rep = certify(s, rc.problem, grid);
  detail::write_gap_report(ctx.out / "gap_report.txt", rep);
  detail::write_history(ctx.out / "history.csv", s);
  const bool certified = s.diag.converged && rep.relative_gap <= opts.tol_gap && !rep.negative_gap_warning;
  log << "solve: " << (s.diag.converged ? "converged" : "NOT converged") << " after " << s.diag.iterations
      << " iterations, relative gap " << rep.relative_gap << ", " << s.diag.wall_seconds << " s\n";
  if (rep.negative_gap_warning) log << "warning: negative duality gap\n";

  bool all_ok = certified;
  nlohmann::json sweep = nlohmann::json::array();
  if (!rc.penalized.empty()) {
    const fs::path pdir = ctx.out / "penalized";
    fs::create_directories(pdir);
    auto table = detail::open_out(pdir / "sweep.csv");
    table << "# penalized sweep against the hard-cap solution; d=" << grid.d << " nx=" << grid.nx << " nt=" << grid.nt
          << " T=" << grid.T << " m_bar=" << rc.problem.coupling.m_bar << "\n";
    table << "# units: eps [cost * volume / mass], max_density and excess [mass / volume], l2_distance [mass / "
             "volume * (volume * time)^(1/2)], B [cost]\n";
    table << "eps,max_density,excess,l2_distance,B,relative_gap,converged\n";
    for (double eps : rc.penalized) {
      ProblemSpec p = rc.problem;
      p.coupling = penalize(p.coupling, eps);
      auto sp = run(p, grid, opts);
      const fs::path dir = pdir / detail::eps_dir(eps);
      io::save_solution(dir, sp, rc.output.bin, rc.output.csv);
      const auto rp = certify(sp, p, grid);
      detail::write_gap_report(dir / "gap_report.txt", rp);
      const double excess = std::max(0.0, rp.max_density - rc.problem.coupling.m_bar);
      const double l2 = detail::l2_distance(sp.m, s.m);
      table << eps << ',' << rp.max_density << ',' << excess << ',' << l2 << ',' << rp.B_value << ','
            << rp.relative_gap << ',' << (sp.diag.converged ? 1 : 0) << '\n';
      sweep.push_back({{"eps", eps},
                       {"max_density", rp.max_density},
                       {"excess", excess},
                       {"l2_distance", l2},
                       {"B", rp.B_value},
                       {"diagnostics", detail::diag_json(sp.diag)}});
      log << "penalized eps=" << eps << ": max m " << rp.max_density << ", relative gap " << rp.relative_gap
          << (sp.diag.converged ? "" : " (NOT converged)") << '\n';
      all_ok = all_ok && sp.diag.converged;
    }
  }

  RunConfig echo = rc;
  echo.output.directory = ctx.out.string();
  echo.solver.threads = ctx.threads;
  nlohmann::json manifest = {{"config", to_json(echo)},
                             {"problem_name", rc.problem_name},
                             {"version", kVersion},
                             {"compiler", __VERSION__},
                             {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) +
                                           "." + std::to_string(EIGEN_MINOR_VERSION)},
                             {"diagnostics", detail::diag_json(s.diag)},
                             {"certified", certified},
                             {"penalized", sweep},
                             {"validation_notes", vr.notes}};
  auto mf = detail::open_out(ctx.out / "manifest.json");
  mf << manifest.dump(2) << '\n';
  return all_ok ? kOk : kNotConverged;
}

// ---------------------------------------------------------------------------
// project

/// Static projection of m0 onto {m1 <= m_bar} in the Wasserstein metric with
/// potential g, and the displacement-interpolation density bound along the
/// geodesic from m0 to the projection.
inline int cmd_project(const Context& ctx) {
  const auto& rc = ctx.config;
  auto& log = *ctx.log;
  const auto grid = rc.grid();
  const auto vr = validate(rc.problem, grid);
  if (!vr.ok) {
    log << "invalid problem: " << vr.summary() << '\n';
    return kInvalid;
  }
  if (grid.d != 1) {
    log << "project: the static projection is implemented for d = 1 only\n";
    return kInvalid;
  }
  if (!rc.problem.coupling.hard()) {
    log << "project: needs a hard density cap\n";
    return kInvalid;
  }
  fs::create_directories(ctx.out);
  const Discretization disc(rc.problem, grid);
  const double m_bar = rc.problem.coupling.m_bar;
  // 1/(2T) W2^2 + int g m1 has the minimizers of 1/2 W2^2 + T int g m1.
  std::vector<double> g = disc.g;
  for (auto& v : g) v *= grid.T;
  geodesic::ProjectionOptions po;
  po.max_iters = rc.projection.max_iters;
  po.fw_tol = rc.projection.fw_tol;
  const auto pr = geodesic::solve_projection(disc.m0, g, m_bar, po);
  const double c = rc.projection.c > 0.0 ? rc.projection.c : rc.problem.coupling.slack();
  const auto br = geodesic::density_bound_check(disc.m0, pr.m1, m_bar, c, rc.projection.t_samples, pr.cut);
  {
    auto os = detail::open_out(ctx.out / "projection.csv");
    io::write_csv_header(os, grid, FieldKind::density, "mass / volume; potential in cost");
    os << "x,m0,m1,potential\n";
    for (int i = 0; i < grid.nx; ++i)
      os << grid.center(i, 0) << ',' << disc.m0[i] << ',' << pr.m1[i] << ','
         << (pr.potential.empty() ? 0.0 : pr.potential[i]) << '\n';
  }
  {
    auto os = detail::open_out(ctx.out / "density_bound.csv");
    os << "# density bound along the geodesic; nx=" << grid.nx << " m_bar=" << m_bar << " c=" << c
       << " lambda=" << br.lambda << " slack=" << br.slack << "\n";
    os << "# units: t [geodesic time in [0, 1]], max_density and bound [mass / volume], coefficient [1]\n";
    os << "t,max_density,bound,coefficient,violation\n";
    for (const auto& r : br.rows)
      os << r.t << ',' << r.max_density << ',' << r.bound << ',' << r.bound / m_bar << ',' << r.max_density - r.bound
         << '\n';
  }
  double l1_dynamic = -1.0;
  if (io::has_solution(ctx.out)) {
    const auto s = io::load_solution(ctx.out);
    if (s.m.grid() == grid) {
      l1_dynamic = 0.0;
      for (int i = 0; i < grid.nx; ++i) l1_dynamic += std::abs(s.m(grid.nt, i) - pr.m1[i]) * grid.dx();
    }
  }
  auto os = detail::open_out(ctx.out / "projection_report.txt");
  os << std::setprecision(17) << "objective=" << pr.objective << "\nfw_gap=" << pr.fw_gap
     << "\niterations=" << pr.iterations << "\nconverged=" << (pr.converged ? 1 : 0) << "\ncut=" << pr.cut
     << "\nlambda=" << br.lambda << "\nslack=" << br.slack << "\nmax_violation=" << br.max_violation
     << "\nbound_holds=" << (br.holds ? 1 : 0) << "\nl1_to_dynamic=" << l1_dynamic << '\n';
  log << "project: " << (pr.converged ? "converged" : "NOT converged") << " in " << pr.iterations
      << " iterations, density bound " << (br.holds ? "holds" : "VIOLATED") << " (max violation " << br.max_violation
      << ")\n";
  return pr.converged ? kOk : kNotConverged;
}

// ---------------------------------------------------------------------------
// sample

inline flows::PathEnsemble head(const flows::PathEnsemble& e, int n) {
  n = std::min(n, e.N);
  flows::PathEnsemble h = e;
  h.N = n;
  h.x.resize(size_t(n) * e.steps * e.d);
  h.kinetic.resize(n);
  h.running.resize(n);
  h.terminal.resize(n);
  return h;
}

/// Samples the optimal flow of a prior solve, checks marginals and the energy
/// identity, and runs the path optimality test with its negative control.
inline int cmd_sample(const Context& ctx) {
  const auto& rc = ctx.config;
  auto& log = *ctx.log;
  if (!io::has_solution(ctx.out)) {
    log << "sample: no solution in " << ctx.out << "; run solve first\n";
    return kInvalid;
  }
  const auto s = io::load_solution(ctx.out);
  const auto grid = rc.grid();
  if (!(s.m.grid() == grid)) {
    log << "sample: the stored solution lives on a different grid than the config\n";
    return kInvalid;
  }
  const Discretization disc(rc.problem, grid);
  const double eps = rc.eps_mollify();
  const auto f = flows::mollify(s, eps);
  auto e = flows::sample_paths(f, disc.m0, rc.flows.N, rc.flows.seed, ctx.threads);
  flows::price_paths(e, s, rc.problem, eps, ctx.threads);
  flows::save_ensemble(ctx.out / "paths.mfgp", e);
  {
    auto os = detail::open_out(ctx.out / "path_costs.csv");
    os << "# per-path action decomposition [cost]; N=" << e.N << " seed=" << e.seed << " eps=" << eps << "\n";
    os << "path,kinetic,running,terminal\n";
    for (int j = 0; j < e.N; ++j) os << j << ',' << e.kinetic[j] << ',' << e.running[j] << ',' << e.terminal[j] << '\n';
  }
  const auto mr = flows::marginal_error(e, s.m, s.w, disc);
  {
    auto os = detail::open_out(ctx.out / "marginals.csv");
    io::write_csv_header(os, grid, FieldKind::generic, "L1 distance between histogram and m dx^d, dimensionless");
    os << "t,l1,bound\n";
    for (int k = 0; k <= grid.nt; ++k) os << grid.time_node(k) << ',' << mr.l1[k] << ',' << mr.bound << '\n';
  }
  const auto er = flows::energy_residual(e, s, rc.problem);

  flows::PerturbationOptions po;
  po.t1 = rc.t1();
  po.t2 = rc.t2();
  po.K = rc.flows.K_perturb;
  po.seed = rc.flows.seed;
  po.tol_nash = rc.flows.tol_nash;
  po.threads = ctx.threads;
  const auto sub = head(e, rc.flows.N_perturb);
  const auto nash = flows::perturbation_test(sub, s, rc.problem, eps, po);
  MomentumField reversed = s.w;
  for (auto& v : reversed.values()) v = -v;
  const auto fr = flows::mollify(s.m, reversed, eps);
  const auto neg = flows::sample_paths(fr, disc.m0, rc.flows.N_perturb, rc.flows.seed, ctx.threads);
  const auto control = flows::perturbation_test(neg, s, rc.problem, eps, po);

  auto os = detail::open_out(ctx.out / "flows_report.txt");
  os << std::setprecision(17) << "N=" << e.N << "\nseed=" << e.seed << "\neps_mollify=" << eps
     << "\nmin_mollified_density=" << f.min_density << "\nmarginal_max_l1=" << mr.max_l1
     << "\nmarginal_bound=" << mr.bound << "\nmax_empirical_density=" << mr.max_empirical_density
     << "\nensemble_kinetic=" << mr.ensemble_energy << "\ngrid_kinetic=" << mr.grid_energy
     << "\nenergy_lhs=" << er.lhs << "\nenergy_terminal=" << er.terminal << "\nenergy_atom=" << er.atom
     << "\nenergy_action=" << er.action << "\nenergy_running=" << er.running << "\nenergy_residual=" << er.residual
     << "\nenergy_relative=" << er.relative << "\nt1=" << po.t1 << "\nt2=" << po.t2 << "\nK_perturb=" << po.K << '\n';
  os << "# perturbation test\n";
  flows::write_report(os, nash);
  os << "# negative control (reversed momentum)\n";
  std::ostringstream cs;
  flows::write_report(cs, control);
  std::istringstream ci(cs.str());
  for (std::string line; std::getline(ci, line);) os << "control_" << line << '\n';
  log << "sample: marginal L1 " << mr.max_l1 << " (bound " << mr.bound << "), energy relative residual " << er.relative
      << ", violating paths " << nash.path_fraction << ", control " << control.path_fraction << '\n';
  return kOk;
}

// ---------------------------------------------------------------------------
// report

struct RunSummary {
  fs::path dir;
  std::string problem;
  GridSpec grid;
  GapReport gap;
  bool converged = false;
  double max_abs_u = 0.0;
  ProbeResult probe;
};

inline RunSummary summarize_run(const fs::path& dir) {
  RunSummary r;
  r.dir = dir;
  const auto manifest = detail::read_json(dir / "manifest.json");
  r.problem = manifest.value("problem_name", std::string("explicit"));
  r.converged = manifest.contains("diagnostics") && manifest["diagnostics"].value("converged", false);
  std::ifstream gr(dir / "gap_report.txt");
  if (!gr) throw InputError("missing " + (dir / "gap_report.txt").string());
  r.gap = read_report(gr);
  if (!io::has_solution(dir)) throw InputError(dir.string() + ": no solution files");
  const auto s = io::load_solution(dir);
  r.grid = s.u.grid();
  r.max_abs_u = detail::max_abs(s.u);
  r.probe = regularity_probe(s, r.grid, {{0.1, 0.9}});
  return r;
}

/// Aggregates run directories into one text report: run table, refinement
/// table of the price norms, penalized sweeps and density-bound tables.
inline int cmd_report(const std::vector<fs::path>& dirs, const fs::path& out, std::ostream& os, std::ostream& log) {
  if (dirs.empty()) {
    log << "report: no run directories\n";
    return kInvalid;
  }
  std::vector<RunSummary> runs;
  for (const auto& d : dirs) runs.push_back(summarize_run(d));
  std::ostringstream r;
  r << std::setprecision(8);
  r << "# runs\n";
  r << "dir,problem,nx,nt,converged,relative_gap,max_density,min_density,mass_error,complementarity_interior,"
       "complementarity_terminal,beta_l1,beta_T_l1,max_abs_u\n";
  for (const auto& s : runs)
    r << s.dir.filename().string() << ',' << s.problem << ',' << s.grid.nx << ',' << s.grid.nt << ','
      << (s.converged ? 1 : 0) << ',' << s.gap.relative_gap << ',' << s.gap.max_density << ','
      << s.gap.min_density << ',' << s.gap.mass_error << ',' << s.gap.complementarity_interior << ','
      << s.gap.complementarity_terminal << ',' << s.gap.beta_l1 << ',' << s.gap.beta_T_l1 << ',' << s.max_abs_u
      << '\n';

  std::map<std::string, std::vector<const RunSummary*>> by_problem;
  for (const auto& s : runs) by_problem[s.problem].push_back(&s);
  r << "\n# refinement of the price on [0.1, 0.9]; ratios against the previous (coarser) row\n";
  r << "problem,nx,beta_l1_window,beta_max_window,beta_l2_window,slab_l1,beta_T_l1,max_abs_u,l1_ratio,beta_T_ratio,"
       "u_ratio\n";
  for (auto& [name, rs] : by_problem) {
    std::stable_sort(rs.begin(), rs.end(), [](auto* a, auto* b) { return a->grid.nx < b->grid.nx; });
    const RunSummary* prev = nullptr;
    for (const auto* s : rs) {
      const auto& w = s->probe.windows.front();
      r << name << ',' << s->grid.nx << ',' << w.l1_norm << ',' << w.max_norm << ',' << w.l2_norm << ','
        << s->probe.slab_l1 << ',' << s->probe.beta_T_l1 << ',' << s->max_abs_u << ',';
      if (prev) {
        const auto& pw = prev->probe.windows.front();
        auto ratio = [](double a, double b) { return b != 0.0 ? a / b : 0.0; };
        r << ratio(w.l1_norm, pw.l1_norm) << ',' << ratio(s->probe.beta_T_l1, prev->probe.beta_T_l1) << ','
          << ratio(s->max_abs_u, prev->max_abs_u) << '\n';
      } else {
        r << ",,\n";
      }
      prev = s;
    }
  }

  auto copy_table = [&](const fs::path& p, const std::string& title) {
    std::ifstream is(p);
    if (!is) return;
    r << "\n# " << title << " (" << p.parent_path().filename().string() << ")\n";
    for (std::string line; std::getline(is, line);)
      if (!line.empty() && line[0] != '#') r << line << '\n';
  };
  for (const auto& s : runs) {
    copy_table(s.dir / "penalized" / "sweep.csv", "penalized sweep " + s.dir.filename().string());
    copy_table(s.dir / "density_bound.csv", "density bound " + s.dir.filename().string());
  }
  os << r.str();
  if (!out.empty()) {
    fs::create_directories(out);
    auto f = detail::open_out(out / "report.txt");
    f << r.str();
  }
  return kOk;
}

}  // namespace mfgdc::cli

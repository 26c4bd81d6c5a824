#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "mfgdc/grid.hpp"
#include "mfgdc/model.hpp"
#include "mfgdc/parallel.hpp"
#include "mfgdc/solver.hpp"
#include "mfgdc/test_problems.hpp"

namespace mfgdc {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct FlowsConfig {
  int N = 100000;             // paths for the marginal and energy checks
  int N_perturb = 10000;      // paths used by the perturbation test
  double eps_mollify = -1.0;  // negative: dx
  std::uint64_t seed = 1;
  double t1 = -1.0, t2 = -1.0;  // negative: 3 dt and T - 3 dt
  int K_perturb = 20;
  double tol_nash = -1.0;     // negative: 10 (dx + eps)
};

struct ProjectionConfig {
  int max_iters = 3000;
  double fw_tol = 1e-6;
  double c = -1.0;  // density bound constant; negative: the problem slack c_bar
  std::vector<double> t_samples{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
};

struct OutputConfig {
  std::string directory = "runs/out";
  bool csv = true;
  bool bin = true;
};

struct RunConfig {
  std::string problem_name;  // empty for a fully explicit problem
  ProblemSpec problem;
  int nx = 64, nt = 64;
  SolverOptions solver;
  std::vector<double> penalized;  // eps sweep, empty for none
  FlowsConfig flows;
  ProjectionConfig projection;
  OutputConfig output;

  GridSpec grid() const { return GridSpec{problem.d, nx, nt, problem.T}; }
  double eps_mollify() const { return flows.eps_mollify > 0.0 ? flows.eps_mollify : 1.0 / nx; }
  double t1() const { return flows.t1 > 0.0 ? flows.t1 : 3.0 * problem.T / nt; }
  double t2() const { return flows.t2 > 0.0 ? flows.t2 : problem.T - 3.0 * problem.T / nt; }
};

namespace config_detail {

using nlohmann::json;

inline void only_keys(const json& j, const char* where, std::initializer_list<const char*> keys) {
  if (!j.is_object()) throw ConfigError(std::string(where) + ": expected an object");
  std::set<std::string> allowed(keys.begin(), keys.end());
  for (const auto& [k, v] : j.items())
    if (!allowed.count(k)) throw ConfigError(std::string(where) + ": unknown key '" + k + "'");
}

template <class T>
void read(const json& j, const char* key, T& out, const char* where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string(where) + "." + key + ": " + e.what());
  }
}

inline FourierSeries read_series(const json& j, const char* where) {
  if (j.is_number()) return FourierSeries::constant(j.get<double>());
  if (!j.is_array()) throw ConfigError(std::string(where) + ": expected a number or a list of Fourier terms");
  std::vector<FourierTerm> terms;
  for (const auto& t : j) {
    only_keys(t, where, {"k", "re", "im"});
    FourierTerm ft;
    if (!t.contains("k") || !t["k"].is_array() || t["k"].empty() || t["k"].size() > 2)
      throw ConfigError(std::string(where) + ": each term needs k = [k1] or [k1, k2]");
    ft.k[0] = t["k"][0].get<int>();
    ft.k[1] = t["k"].size() > 1 ? t["k"][1].get<int>() : 0;
    read(t, "re", ft.re, where);
    read(t, "im", ft.im, where);
    terms.push_back(ft);
  }
  return FourierSeries(std::move(terms));
}

inline json write_series(const FourierSeries& f) {
  json a = json::array();
  for (const auto& t : f.terms()) a.push_back({{"k", {t.k[0], t.k[1]}}, {"re", t.re}, {"im", t.im}});
  return a;
}

inline void read_problem(const json& j, RunConfig& rc) {
  only_keys(j, "problem", {"name", "T", "d", "hamiltonian", "coupling", "m0", "g"});
  if (j.contains("name")) {
    rc.problem_name = j["name"].get<std::string>();
    try {
      rc.problem = problems::by_name(rc.problem_name);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  } else {
    for (const char* k : {"m0", "g"})
      if (!j.contains(k)) throw ConfigError(std::string("problem: explicit problem needs '") + k + "'");
  }
  auto& p = rc.problem;
  read(j, "T", p.T, "problem");
  read(j, "d", p.d, "problem");
  if (j.contains("hamiltonian")) {
    const auto& h = j["hamiltonian"];
    only_keys(h, "problem.hamiltonian", {"s", "V"});
    read(h, "s", p.H.s, "problem.hamiltonian");
    if (h.contains("V")) p.H.V = read_series(h["V"], "problem.hamiltonian.V");
  }
  if (j.contains("coupling")) {
    const auto& c = j["coupling"];
    only_keys(c, "problem.coupling", {"kind", "kappa", "theta", "m_bar", "c_bar", "penalty_eps"});
    if (c.contains("kind")) {
      const auto k = c["kind"].get<std::string>();
      if (k == "zero")
        p.coupling.kind = CouplingKind::zero;
      else if (k == "power")
        p.coupling.kind = CouplingKind::power;
      else
        throw ConfigError("problem.coupling.kind: expected 'zero' or 'power', got '" + k + "'");
    }
    read(c, "kappa", p.coupling.kappa, "problem.coupling");
    read(c, "theta", p.coupling.theta, "problem.coupling");
    read(c, "m_bar", p.coupling.m_bar, "problem.coupling");
    read(c, "c_bar", p.coupling.c_bar, "problem.coupling");
    read(c, "penalty_eps", p.coupling.penalty_eps, "problem.coupling");
  }
  if (j.contains("m0")) p.m0 = read_series(j["m0"], "problem.m0");
  if (j.contains("g")) p.g = read_series(j["g"], "problem.g");
}

}  // namespace config_detail

inline RunConfig parse_config(const nlohmann::json& j) {
  using namespace config_detail;
  only_keys(j, "config", {"problem", "grid", "solver", "penalized", "flows", "projection", "output"});
  RunConfig rc;
  rc.solver.threads = default_threads();
  if (!j.contains("problem")) throw ConfigError("config: missing 'problem'");
  read_problem(j["problem"], rc);
  if (j.contains("grid")) {
    only_keys(j["grid"], "grid", {"nx", "nt"});
    read(j["grid"], "nx", rc.nx, "grid");
    read(j["grid"], "nt", rc.nt, "grid");
  }
  if (j.contains("solver")) {
    const auto& s = j["solver"];
    only_keys(s, "solver", {"r_admm", "max_iters", "tol_feas", "tol_gap", "cg_tol", "cg_max_iters", "prox_tol",
                            "check_every", "mask_tol", "threads", "precondition"});
    auto& o = rc.solver;
    read(s, "r_admm", o.r_admm, "solver");
    read(s, "max_iters", o.max_iters, "solver");
    read(s, "tol_feas", o.tol_feas, "solver");
    read(s, "tol_gap", o.tol_gap, "solver");
    read(s, "cg_tol", o.cg_tol, "solver");
    read(s, "cg_max_iters", o.cg_max_iters, "solver");
    read(s, "prox_tol", o.prox_tol, "solver");
    read(s, "check_every", o.check_every, "solver");
    read(s, "mask_tol", o.mask_tol, "solver");
    read(s, "threads", o.threads, "solver");
    read(s, "precondition", o.precondition, "solver");
  }
  read(j, "penalized", rc.penalized, "config");
  for (double e : rc.penalized)
    if (!(e > 0.0)) throw ConfigError("penalized: every eps must be positive");
  if (j.contains("flows")) {
    const auto& f = j["flows"];
    only_keys(f, "flows", {"N", "N_perturb", "eps_mollify", "seed", "t1", "t2", "K_perturb", "tol_nash"});
    read(f, "N", rc.flows.N, "flows");
    read(f, "N_perturb", rc.flows.N_perturb, "flows");
    read(f, "eps_mollify", rc.flows.eps_mollify, "flows");
    read(f, "seed", rc.flows.seed, "flows");
    read(f, "t1", rc.flows.t1, "flows");
    read(f, "t2", rc.flows.t2, "flows");
    read(f, "K_perturb", rc.flows.K_perturb, "flows");
    read(f, "tol_nash", rc.flows.tol_nash, "flows");
  }
  if (j.contains("projection")) {
    const auto& p = j["projection"];
    only_keys(p, "projection", {"max_iters", "fw_tol", "c", "t_samples"});
    read(p, "max_iters", rc.projection.max_iters, "projection");
    read(p, "fw_tol", rc.projection.fw_tol, "projection");
    read(p, "c", rc.projection.c, "projection");
    read(p, "t_samples", rc.projection.t_samples, "projection");
  }
  if (j.contains("output")) {
    const auto& o = j["output"];
    only_keys(o, "output", {"directory", "formats"});
    read(o, "directory", rc.output.directory, "output");
    if (o.contains("formats")) {
      rc.output.csv = rc.output.bin = false;
      for (const auto& f : o["formats"]) {
        const auto s = f.get<std::string>();
        if (s == "csv")
          rc.output.csv = true;
        else if (s == "bin")
          rc.output.bin = true;
        else
          throw ConfigError("output.formats: expected 'csv' or 'bin', got '" + s + "'");
      }
    }
  }
  if (rc.nx < 2 || rc.nt < 1) throw ConfigError("grid: need nx >= 2 and nt >= 1");
  if (rc.problem.d != 1 && rc.problem.d != 2) throw ConfigError("problem.d must be 1 or 2");
  if (rc.flows.N < 1 || rc.flows.N_perturb < 1 || rc.flows.K_perturb < 1)
    throw ConfigError("flows: N, N_perturb and K_perturb must be positive");
  try {
    rc.solver.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("solver: ") + e.what());
  }
  return rc;
}

inline RunConfig parse_config_text(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text, nullptr, true, true);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  // A run manifest carries the resolved config under "config".
  std::string name;
  if (j.is_object() && j.contains("config") && !j.contains("problem")) {
    if (j.contains("problem_name") && j["problem_name"].is_string()) name = j["problem_name"].get<std::string>();
    j = nlohmann::json(j["config"]);
  }
  try {
    auto rc = parse_config(j);
    if (!name.empty()) rc.problem_name = name;
    return rc;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config " + path.string());
  std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return parse_config_text(text);
}

/// Fully resolved configuration; parsing the result gives back the same run.
inline nlohmann::json to_json(const RunConfig& rc) {
  using config_detail::write_series;
  const auto& p = rc.problem;
  nlohmann::json j;
  j["problem"] = {{"T", p.T},
                  {"d", p.d},
                  {"hamiltonian", {{"s", p.H.s}, {"V", write_series(p.H.V)}}},
                  {"coupling",
                   {{"kind", p.coupling.kind == CouplingKind::power ? "power" : "zero"},
                    {"kappa", p.coupling.kappa},
                    {"theta", p.coupling.theta},
                    {"m_bar", p.coupling.m_bar},
                    {"c_bar", p.coupling.c_bar},
                    {"penalty_eps", p.coupling.penalty_eps}}},
                  {"m0", write_series(p.m0)},
                  {"g", write_series(p.g)}};
  j["grid"] = {{"nx", rc.nx}, {"nt", rc.nt}};
  const auto& o = rc.solver;
  j["solver"] = {{"r_admm", o.r_admm},         {"max_iters", o.max_iters},     {"tol_feas", o.tol_feas},
                 {"tol_gap", o.tol_gap},       {"cg_tol", o.cg_tol},           {"cg_max_iters", o.cg_max_iters},
                 {"prox_tol", o.prox_tol},     {"check_every", o.check_every}, {"mask_tol", o.mask_tol},
                 {"threads", o.threads},       {"precondition", o.precondition}};
  j["penalized"] = rc.penalized;
  j["flows"] = {{"N", rc.flows.N},
                {"N_perturb", rc.flows.N_perturb},
                {"eps_mollify", rc.flows.eps_mollify},
                {"seed", rc.flows.seed},
                {"t1", rc.flows.t1},
                {"t2", rc.flows.t2},
                {"K_perturb", rc.flows.K_perturb},
                {"tol_nash", rc.flows.tol_nash}};
  j["projection"] = {{"max_iters", rc.projection.max_iters},
                     {"fw_tol", rc.projection.fw_tol},
                     {"c", rc.projection.c},
                     {"t_samples", rc.projection.t_samples}};
  nlohmann::json formats = nlohmann::json::array();
  if (rc.output.bin) formats.push_back("bin");
  if (rc.output.csv) formats.push_back("csv");
  j["output"] = {{"directory", rc.output.directory}, {"formats", formats}};
  return j;
}

}  // namespace mfgdc

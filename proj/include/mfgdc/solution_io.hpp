#pragma once

#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>

#include "mfgdc/field_io.hpp"
#include "mfgdc/solver.hpp"

namespace mfgdc::io {

// A solution directory holds u.bin, m.bin, w.bin, beta.bin, beta_T.bin and,
// when requested, CSV copies of the same fields.

inline void save_solution(const std::filesystem::path& dir, const Solution& s, bool bin = true, bool csv = true) {
  std::filesystem::create_directories(dir);
  const auto& g = s.u.grid();
  if (bin) {
    save(dir / "u.bin", s.u);
    save(dir / "m.bin", s.m);
    save(dir / "w.bin", s.w);
    save(dir / "beta.bin", s.beta);
    save_binary(dir / "beta_T.bin", g, FieldKind::terminal, s.beta_T);
  }
  if (csv) {
    auto open = [&](const char* name) {
      std::ofstream os(dir / name);
      if (!os) throw std::runtime_error("cannot write " + (dir / name).string());
      return os;
    };
    {
      auto os = open("u.csv");
      write_csv(os, s.u, "cost");
    }
    {
      auto os = open("m.csv");
      write_csv(os, s.m, "mass / volume");
    }
    {
      auto os = open("w.csv");
      write_csv(os, s.w, "mass * velocity / volume");
    }
    {
      auto os = open("beta.csv");
      write_csv(os, s.beta, "cost / time");
    }
    {
      auto os = open("beta_T.csv");
      write_terminal_csv(os, g, s.beta_T, "cost");
    }
  }
}

inline bool has_solution(const std::filesystem::path& dir) {
  for (const char* f : {"u.bin", "m.bin", "w.bin", "beta.bin", "beta_T.bin"})
    if (!std::filesystem::exists(dir / f)) return false;
  return true;
}

/// Loads the binary fields; diagnostics and history are left empty.
inline Solution load_solution(const std::filesystem::path& dir) {
  if (!has_solution(dir)) throw std::runtime_error(dir.string() + ": no solution files");
  auto u = load_scalar(dir / "u.bin");
  auto m = load_scalar(dir / "m.bin");
  auto w = load_momentum(dir / "w.bin");
  auto beta = load_scalar(dir / "beta.bin");
  GridSpec tg;
  auto beta_T = load_terminal(dir / "beta_T.bin", &tg);
  const auto& g = u.grid();
  if (!(m.grid() == g) || !(w.grid() == g) || !(beta.grid() == g) || !(tg == g))
    throw std::runtime_error(dir.string() + ": solution fields live on different grids");
  Solution s{std::move(u), std::move(m), std::move(w), std::move(beta), beta_T,
             ScalarField(g, FieldKind::price), beta_T, {}, {}};
  return s;
}

}  // namespace mfgdc::io

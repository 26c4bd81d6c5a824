#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mfgdc/grid.hpp"

namespace mfgdc::io {

// Binary layout (little-endian):
//   "MFGF" | u32 version | u32 d | u32 nx | u32 nt | f64 T | u8 kind | f64 payload...
// Payload length depends on kind: (nt+1)*cells for node fields, nt*d*cells
// for momentum, cells for a terminal slice.

inline constexpr std::uint32_t kFieldVersion = 1;
inline constexpr std::array<char, 4> kFieldMagic = {'M', 'F', 'G', 'F'};

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xffu);
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline void put_f64(std::ostream& os, double v) {
  std::uint64_t u = std::bit_cast<std::uint64_t>(v);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((u >> (8 * i)) & 0xffu);
  os.write(reinterpret_cast<const char*>(b), 8);
}

inline std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw std::runtime_error("field file truncated");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

inline double get_f64(std::istream& is) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8)) throw std::runtime_error("field file truncated");
  std::uint64_t u = 0;
  for (int i = 0; i < 8; ++i) u |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return std::bit_cast<double>(u);
}

inline size_t payload_size(const GridSpec& g, FieldKind kind) {
  switch (kind) {
    case FieldKind::momentum: return static_cast<size_t>(g.nt) * g.d * g.cells();
    case FieldKind::terminal: return static_cast<size_t>(g.cells());
    default: return static_cast<size_t>(g.nt + 1) * g.cells();
  }
}

}  // namespace detail

struct RawField {
  GridSpec grid;
  FieldKind kind = FieldKind::generic;
  std::vector<double> values;
};

inline void write_binary(std::ostream& os, const GridSpec& grid, FieldKind kind, const std::vector<double>& values) {
  if (values.size() != detail::payload_size(grid, kind))
    throw std::invalid_argument("write_binary: payload size does not match kind");
  os.write(kFieldMagic.data(), 4);
  detail::put_u32(os, kFieldVersion);
  detail::put_u32(os, static_cast<std::uint32_t>(grid.d));
  detail::put_u32(os, static_cast<std::uint32_t>(grid.nx));
  detail::put_u32(os, static_cast<std::uint32_t>(grid.nt));
  detail::put_f64(os, grid.T);
  const auto k = static_cast<std::uint8_t>(kind);
  os.write(reinterpret_cast<const char*>(&k), 1);
  for (double v : values) detail::put_f64(os, v);
}

inline RawField read_binary(std::istream& is) {
  std::array<char, 4> magic{};
  if (!is.read(magic.data(), 4) || magic != kFieldMagic) throw std::runtime_error("not an MFGF field file");
  RawField f;
  const auto version = detail::get_u32(is);
  if (version != kFieldVersion) throw std::runtime_error("unsupported MFGF version " + std::to_string(version));
  f.grid.d = static_cast<int>(detail::get_u32(is));
  f.grid.nx = static_cast<int>(detail::get_u32(is));
  f.grid.nt = static_cast<int>(detail::get_u32(is));
  f.grid.T = detail::get_f64(is);
  std::uint8_t k = 0;
  if (!is.read(reinterpret_cast<char*>(&k), 1)) throw std::runtime_error("field file truncated");
  if (k > static_cast<std::uint8_t>(FieldKind::terminal)) throw std::runtime_error("unknown field kind");
  f.kind = static_cast<FieldKind>(k);
  f.grid.validate();
  f.values.resize(detail::payload_size(f.grid, f.kind));
  for (auto& v : f.values) v = detail::get_f64(is);
  return f;
}

inline void save_binary(const std::filesystem::path& p, const GridSpec& grid, FieldKind kind,
                        const std::vector<double>& values) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + p.string());
  write_binary(os, grid, kind, values);
}

inline RawField load_binary(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + p.string());
  return read_binary(is);
}

inline void save(const std::filesystem::path& p, const ScalarField& f) {
  save_binary(p, f.grid(), f.kind(), f.values());
}
inline void save(const std::filesystem::path& p, const MomentumField& w) {
  save_binary(p, w.grid(), FieldKind::momentum, w.values());
}

inline ScalarField load_scalar(const std::filesystem::path& p) {
  auto raw = load_binary(p);
  if (raw.kind == FieldKind::momentum || raw.kind == FieldKind::terminal)
    throw std::runtime_error(p.string() + ": not a node field");
  ScalarField f(raw.grid, raw.kind);
  f.values() = std::move(raw.values);
  return f;
}

inline MomentumField load_momentum(const std::filesystem::path& p) {
  auto raw = load_binary(p);
  if (raw.kind != FieldKind::momentum) throw std::runtime_error(p.string() + ": not a momentum field");
  MomentumField w(raw.grid);
  w.values() = std::move(raw.values);
  return w;
}

inline std::vector<double> load_terminal(const std::filesystem::path& p, GridSpec* grid = nullptr) {
  auto raw = load_binary(p);
  if (raw.kind != FieldKind::terminal) throw std::runtime_error(p.string() + ": not a terminal slice");
  if (grid) *grid = raw.grid;
  return std::move(raw.values);
}

// CSV output: '#' comment lines carry grid metadata and units, then a header
// row and one row per cell (per face for momentum).

inline void write_csv_header(std::ostream& os, const GridSpec& g, FieldKind kind, const std::string& units) {
  os << "# kind=" << to_string(kind) << " d=" << g.d << " nx=" << g.nx << " nt=" << g.nt << " T=" << g.T
     << " dx=" << g.dx() << " dt=" << g.dt() << "\n";
  os << "# units: t [time], x" << (g.d == 2 ? ",y" : "") << " [torus length], value [" << units << "]\n";
}

inline void write_csv(std::ostream& os, const ScalarField& f, const std::string& units) {
  const auto& g = f.grid();
  write_csv_header(os, g, f.kind(), units);
  os << (g.d == 1 ? "t,x,value\n" : "t,x,y,value\n");
  os << std::setprecision(17);
  for (int k = 0; k <= g.nt; ++k)
    for (int c = 0; c < g.cells(); ++c) {
      os << g.time_node(k) << ',' << g.center(c, 0);
      if (g.d == 2) os << ',' << g.center(c, 1);
      os << ',' << f(k, c) << '\n';
    }
}

inline void write_csv(std::ostream& os, const MomentumField& w, const std::string& units) {
  const auto& g = w.grid();
  write_csv_header(os, g, FieldKind::momentum, units);
  os << (g.d == 1 ? "t,axis,x,value\n" : "t,axis,x,y,value\n");
  os << std::setprecision(17);
  for (int k = 0; k < g.nt; ++k)
    for (int a = 0; a < g.d; ++a)
      for (int c = 0; c < g.cells(); ++c) {
        const double tm = (k + 0.5) * g.dt();
        double x = g.center(c, 0) + (a == 0 ? 0.5 * g.dx() : 0.0);
        os << tm << ',' << a << ',' << x;
        if (g.d == 2) os << ',' << g.center(c, 1) + (a == 1 ? 0.5 * g.dx() : 0.0);
        os << ',' << w(k, a, c) << '\n';
      }
}

inline void write_terminal_csv(std::ostream& os, const GridSpec& g, const std::vector<double>& v,
                               const std::string& units) {
  write_csv_header(os, g, FieldKind::terminal, units);
  os << (g.d == 1 ? "t,x,value\n" : "t,x,y,value\n");
  os << std::setprecision(17);
  for (int c = 0; c < g.cells(); ++c) {
    os << g.T << ',' << g.center(c, 0);
    if (g.d == 2) os << ',' << g.center(c, 1);
    os << ',' << v[c] << '\n';
  }
}

}  // namespace mfgdc::io

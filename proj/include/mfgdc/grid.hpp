#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mfgdc {

/// Uniform space-time grid on [0,T] x T^d with periodic space.
///
/// Cells are indexed c = i0 + nx*i1 (d = 2). The spacing is stored only
/// through nx so that dx*nx == 1 holds exactly in the representation.
struct GridSpec {
  int d = 1;
  int nx = 64;
  int nt = 64;
  double T = 1.0;

  double dx() const { return 1.0 / nx; }
  double dt() const { return T / nt; }
  int cells() const { return d == 1 ? nx : nx * nx; }
  /// Lebesgue weight of one cell, dx^d.
  double cell_volume() const { return d == 1 ? dx() : dx() * dx(); }

  void validate() const {
    if (d != 1 && d != 2) throw std::invalid_argument("grid: d must be 1 or 2");
    if (nx < 4) throw std::invalid_argument("grid: nx must be >= 4");
    if (nt < 2) throw std::invalid_argument("grid: nt must be >= 2");
    if (!(T > 0.0) || !std::isfinite(T)) throw std::invalid_argument("grid: T must be positive");
  }

  int axis_index(int c, int axis) const { return axis == 0 ? c % nx : c / nx; }

  /// Neighbouring cell along `axis` with periodic wrap; step is +1 or -1.
  int neighbor(int c, int axis, int step) const {
    if (axis == 0) {
      int i = c % nx;
      int base = c - i;
      return base + (i + step + nx) % nx;
    }
    int j = c / nx;
    int i = c % nx;
    return i + nx * ((j + step + nx) % nx);
  }

  /// Coordinate of the centre of cell c along `axis`.
  double center(int c, int axis) const { return (axis_index(c, axis) + 0.5) * dx(); }

  double time_node(int k) const { return k * dt(); }

  bool operator==(const GridSpec&) const = default;
};

/// Role tag carried by a stored field; the numeric values are part of the
/// binary file format.
enum class FieldKind : std::uint8_t {
  density = 0,
  value = 1,
  price = 2,
  generic = 3,
  momentum = 4,
  terminal = 5,
};

inline const char* to_string(FieldKind k) {
  switch (k) {
    case FieldKind::density: return "density";
    case FieldKind::value: return "value";
    case FieldKind::price: return "price";
    case FieldKind::generic: return "generic";
    case FieldKind::momentum: return "momentum";
    case FieldKind::terminal: return "terminal";
  }
  return "unknown";
}

/// Cell-centred field on the time nodes k = 0..nt, stored time-major.
class ScalarField {
 public:
  ScalarField() = default;
  ScalarField(const GridSpec& grid, FieldKind kind, double fill = 0.0)
      : grid_(grid), kind_(kind), values_(static_cast<size_t>(grid.nt + 1) * grid.cells(), fill) {}

  const GridSpec& grid() const { return grid_; }
  FieldKind kind() const { return kind_; }
  void set_kind(FieldKind k) { kind_ = k; }

  double& operator()(int k, int c) { return values_[index(k, c)]; }
  double operator()(int k, int c) const { return values_[index(k, c)]; }

  std::span<double> slice(int k) {
    check_node(k);
    return {values_.data() + static_cast<size_t>(k) * grid_.cells(), static_cast<size_t>(grid_.cells())};
  }
  std::span<const double> slice(int k) const {
    check_node(k);
    return {values_.data() + static_cast<size_t>(k) * grid_.cells(), static_cast<size_t>(grid_.cells())};
  }

  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }

  /// Mass of slice k, i.e. sum of values times dx^d.
  double mass(int k) const {
    double s = 0.0;
    for (double v : slice(k)) s += v;
    return s * grid_.cell_volume();
  }

  bool all_finite() const {
    for (double v : values_)
      if (!std::isfinite(v)) return false;
    return true;
  }

 private:
  size_t index(int k, int c) const { return static_cast<size_t>(k) * grid_.cells() + c; }
  void check_node(int k) const {
    if (k < 0 || k > grid_.nt) throw std::out_of_range("ScalarField: time node out of range");
  }

  GridSpec grid_{};
  FieldKind kind_ = FieldKind::generic;
  std::vector<double> values_;
};

/// Face momentum on the time midpoints k+1/2, k = 0..nt-1.
///
/// Face (c, axis) sits between cell c and its +1 neighbour along axis.
class MomentumField {
 public:
  MomentumField() = default;
  explicit MomentumField(const GridSpec& grid, double fill = 0.0)
      : grid_(grid), values_(static_cast<size_t>(grid.nt) * grid.d * grid.cells(), fill) {}

  const GridSpec& grid() const { return grid_; }

  double& operator()(int k, int axis, int c) { return values_[index(k, axis, c)]; }
  double operator()(int k, int axis, int c) const { return values_[index(k, axis, c)]; }

  /// All faces of midpoint k, axis-major (d * cells values).
  std::span<double> slice(int k) {
    check_mid(k);
    const size_t n = static_cast<size_t>(grid_.d) * grid_.cells();
    return {values_.data() + static_cast<size_t>(k) * n, n};
  }
  std::span<const double> slice(int k) const {
    check_mid(k);
    const size_t n = static_cast<size_t>(grid_.d) * grid_.cells();
    return {values_.data() + static_cast<size_t>(k) * n, n};
  }

  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }

 private:
  size_t index(int k, int axis, int c) const {
    return (static_cast<size_t>(k) * grid_.d + axis) * grid_.cells() + c;
  }
  void check_mid(int k) const {
    if (k < 0 || k >= grid_.nt) throw std::out_of_range("MomentumField: time midpoint out of range");
  }

  GridSpec grid_{};
  std::vector<double> values_;
};

// Discrete differential operators. gradient maps cells -> faces with
// (u[c+e] - u[c]) / dx; divergence is its negative adjoint so that
// <gradient u, w>_faces = -<u, divergence w>_cells holds exactly.

inline void divergence_into(const GridSpec& grid, std::span<const double> faces, std::span<double> out) {
  const int nc = grid.cells();
  const double inv = 1.0 / grid.dx();
  for (int c = 0; c < nc; ++c) out[c] = 0.0;
  for (int a = 0; a < grid.d; ++a) {
    const double* w = faces.data() + static_cast<size_t>(a) * nc;
    for (int c = 0; c < nc; ++c) out[c] += (w[c] - w[grid.neighbor(c, a, -1)]) * inv;
  }
}

inline void gradient_into(const GridSpec& grid, std::span<const double> u, std::span<double> faces) {
  const int nc = grid.cells();
  const double inv = 1.0 / grid.dx();
  for (int a = 0; a < grid.d; ++a) {
    double* g = faces.data() + static_cast<size_t>(a) * nc;
    for (int c = 0; c < nc; ++c) g[c] = (u[grid.neighbor(c, a, +1)] - u[c]) * inv;
  }
}

/// Divergence of the face momentum at midpoint k, as a cell slice.
inline std::vector<double> divergence(const MomentumField& w, int k) {
  const auto& grid = w.grid();
  if (k < 0 || k >= grid.nt) throw std::out_of_range("divergence: time index out of range");
  std::vector<double> out(grid.cells());
  divergence_into(grid, w.slice(k), out);
  return out;
}

/// Face gradient of one cell slice (axis-major, d * cells values).
inline std::vector<double> gradient(const GridSpec& grid, std::span<const double> u) {
  if (static_cast<int>(u.size()) != grid.cells()) throw std::invalid_argument("gradient: slice size mismatch");
  std::vector<double> out(static_cast<size_t>(grid.d) * grid.cells());
  gradient_into(grid, u, out);
  return out;
}

struct ContinuityResidual {
  ScalarField residual;  // row k holds the residual at midpoint k+1/2; row nt is unused
  double norm = 0.0;     // discrete L2 norm over space-time
  double initial_mismatch = 0.0;  // discrete L2 norm of m[0] - m0
};

/// r[k] = (m[k+1] - m[k]) / dt + div w[k+1/2].
inline ContinuityResidual continuity_residual(const ScalarField& m, const MomentumField& w,
                                              std::span<const double> m0) {
  const auto& grid = m.grid();
  if (!(w.grid() == grid) || static_cast<int>(m0.size()) != grid.cells())
    throw std::invalid_argument("continuity_residual: shape mismatch");
  ContinuityResidual out{ScalarField(grid, FieldKind::generic), 0.0, 0.0};
  std::vector<double> div(grid.cells());
  const double dt = grid.dt();
  double sq = 0.0;
  for (int k = 0; k < grid.nt; ++k) {
    divergence_into(grid, w.slice(k), div);
    for (int c = 0; c < grid.cells(); ++c) {
      const double r = (m(k + 1, c) - m(k, c)) / dt + div[c];
      out.residual(k, c) = r;
      sq += r * r;
    }
  }
  out.norm = std::sqrt(sq * grid.cell_volume() * dt);
  double sq0 = 0.0;
  for (int c = 0; c < grid.cells(); ++c) sq0 += (m(0, c) - m0[c]) * (m(0, c) - m0[c]);
  out.initial_mismatch = std::sqrt(sq0 * grid.cell_volume());
  return out;
}

/// Raised when a velocity is requested where the density is below the floor.
class DegenerateVelocityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline double wrap01(double x) {
  x -= std::floor(x);
  return x >= 1.0 ? 0.0 : x;
}

/// Linear interpolation weights for a periodic lattice with nodes at
/// (j + offset) * h; returns lower index and weight of the upper node.
inline void lattice_weights(double x, int n, double offset, int& j0, double& frac) {
  double s = wrap01(x) * n - offset;
  double f = std::floor(s);
  frac = s - f;
  j0 = ((static_cast<int>(f) % n) + n) % n;
}

inline double interp_cells(const GridSpec& grid, std::span<const double> v, const double* x, const double* offs) {
  int j0[2] = {0, 0};
  double fr[2] = {0.0, 0.0};
  for (int a = 0; a < grid.d; ++a) lattice_weights(x[a], grid.nx, offs[a], j0[a], fr[a]);
  if (grid.d == 1) return (1.0 - fr[0]) * v[j0[0]] + fr[0] * v[(j0[0] + 1) % grid.nx];
  const int n = grid.nx;
  const int i0 = j0[0], i1 = (j0[0] + 1) % n, k0 = j0[1], k1 = (j0[1] + 1) % n;
  return (1.0 - fr[0]) * (1.0 - fr[1]) * v[i0 + n * k0] + fr[0] * (1.0 - fr[1]) * v[i1 + n * k0] +
         (1.0 - fr[0]) * fr[1] * v[i0 + n * k1] + fr[0] * fr[1] * v[i1 + n * k1];
}

}  // namespace detail

/// Density interpolated at (t, x): linear in time between nodes, (bi)linear
/// in space between cell centres.
inline double interp_density(const ScalarField& m, double t, std::span<const double> x) {
  const auto& grid = m.grid();
  double s = std::clamp(t / grid.dt(), 0.0, static_cast<double>(grid.nt));
  int k0 = std::min(static_cast<int>(std::floor(s)), grid.nt - 1);
  double ft = s - k0;
  const double offs[2] = {0.5, 0.5};
  const double a = detail::interp_cells(grid, m.slice(k0), x.data(), offs);
  const double b = detail::interp_cells(grid, m.slice(k0 + 1), x.data(), offs);
  return (1.0 - ft) * a + ft * b;
}

/// Face momentum interpolated at (t, x) for each axis; the time nodes of w are
/// the midpoints (k + 1/2) dt, held constant beyond the first and last one.
inline void interp_momentum(const MomentumField& w, double t, std::span<const double> x, std::span<double> out) {
  const auto& grid = w.grid();
  double s = t / grid.dt() - 0.5;
  s = std::clamp(s, 0.0, static_cast<double>(grid.nt - 1));
  int k0 = std::min(static_cast<int>(std::floor(s)), std::max(grid.nt - 2, 0));
  double ft = s - k0;
  const int nc = grid.cells();
  for (int a = 0; a < grid.d; ++a) {
    double offs[2] = {0.5, 0.5};
    offs[a] = 1.0;  // faces along axis a sit at (i + 1) dx
    auto s0 = w.slice(k0).subspan(static_cast<size_t>(a) * nc, nc);
    auto s1 = w.slice(std::min(k0 + 1, grid.nt - 1)).subspan(static_cast<size_t>(a) * nc, nc);
    out[a] = (1.0 - ft) * detail::interp_cells(grid, s0, x.data(), offs) +
             ft * detail::interp_cells(grid, s1, x.data(), offs);
  }
}

/// Velocity w/m at (t, x). Throws DegenerateVelocityError below `floor`.
inline void interp_velocity(const ScalarField& m, const MomentumField& w, double t, std::span<const double> x,
                            std::span<double> v, double floor = 1e-12) {
  const double rho = interp_density(m, t, x);
  if (!(rho >= floor))
    throw DegenerateVelocityError("interp_velocity: density " + std::to_string(rho) + " below floor");
  interp_momentum(w, t, x, v);
  for (int a = 0; a < m.grid().d; ++a) v[a] /= rho;
}

}  // namespace mfgdc

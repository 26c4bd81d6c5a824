#pragma once

#include <cmath>
#include <complex>
#include <functional>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "mfgdc/grid.hpp"

namespace mfgdc {

/// Symmetric positive definite operator on `rows` time rows of cell slices:
///   A = (1/dt^2) Tm (x) I  +  space_coeff * I (x) (-Laplacian_h)
/// with Tm a symmetric tridiagonal matrix and the periodic 5-point (3-point
/// in 1-D) Laplacian. The exact inverse is computed by FFT in space and a
/// tridiagonal solve in time per Fourier mode.
class SpaceTimeOperator {
 public:
  SpaceTimeOperator(const GridSpec& grid, std::vector<double> diag, std::vector<double> off, double space_coeff)
      : grid_(grid), diag_(std::move(diag)), off_(std::move(off)), space_coeff_(space_coeff) {
    if (off_.size() + 1 != diag_.size()) throw std::invalid_argument("SpaceTimeOperator: bad tridiagonal shape");
    const int n = grid_.nx;
    mode_eig_.resize(n);
    for (int k = 0; k < n; ++k) {
      const double s = std::sin(std::numbers::pi * k / n);
      mode_eig_[k] = 4.0 * s * s / (grid_.dx() * grid_.dx());
    }
  }

  int rows() const { return static_cast<int>(diag_.size()); }
  size_t size() const { return static_cast<size_t>(rows()) * grid_.cells(); }
  const GridSpec& grid() const { return grid_; }

  void apply(std::span<const double> x, std::span<double> y) const {
    const int nc = grid_.cells();
    const int R = rows();
    const double it2 = 1.0 / (grid_.dt() * grid_.dt());
    const double inv2 = 1.0 / (grid_.dx() * grid_.dx());
    for (int r = 0; r < R; ++r) {
      const double* xr = x.data() + static_cast<size_t>(r) * nc;
      double* yr = y.data() + static_cast<size_t>(r) * nc;
      for (int c = 0; c < nc; ++c) {
        double t = diag_[r] * xr[c];
        if (r > 0) t += off_[r - 1] * xr[c - nc];
        if (r + 1 < R) t += off_[r] * xr[c + nc];
        double lap = 0.0;
        for (int a = 0; a < grid_.d; ++a)
          lap += 2.0 * xr[c] - xr[grid_.neighbor(c, a, +1)] - xr[grid_.neighbor(c, a, -1)];
        yr[c] = it2 * t + space_coeff_ * inv2 * lap;
      }
    }
  }

  /// x = A^{-1} b.
  void solve(std::span<const double> b, std::span<double> x) const {
    const int n = grid_.nx;
    const int nc = grid_.cells();
    const int R = rows();
    std::vector<std::complex<double>> hat(static_cast<size_t>(R) * nc);
    std::vector<std::complex<double>> tmp_in(n), tmp_out(n);
    // forward transform of each row
    for (int r = 0; r < R; ++r) {
      auto* h = hat.data() + static_cast<size_t>(r) * nc;
      const double* br = b.data() + static_cast<size_t>(r) * nc;
      for (int c = 0; c < nc; ++c) h[c] = br[c];
      transform(h, tmp_in, tmp_out, false);
    }
    // tridiagonal solve per mode
    const double it2 = 1.0 / (grid_.dt() * grid_.dt());
    std::vector<double> cp(R);
    std::vector<std::complex<double>> dp(R);
    for (int c = 0; c < nc; ++c) {
      double lam = mode_eig_[c % n];
      if (grid_.d == 2) lam += mode_eig_[c / n];
      const double shift = space_coeff_ * lam;
      // Thomas algorithm
      double denom = it2 * diag_[0] + shift;
      cp[0] = R > 1 ? it2 * off_[0] / denom : 0.0;
      dp[0] = hat[c] / denom;
      for (int r = 1; r < R; ++r) {
        const double a = it2 * off_[r - 1];
        denom = it2 * diag_[r] + shift - a * cp[r - 1];
        cp[r] = r + 1 < R ? it2 * off_[r] / denom : 0.0;
        dp[r] = (hat[static_cast<size_t>(r) * nc + c] - a * dp[r - 1]) / denom;
      }
      hat[static_cast<size_t>(R - 1) * nc + c] = dp[R - 1];
      for (int r = R - 2; r >= 0; --r)
        hat[static_cast<size_t>(r) * nc + c] = dp[r] - cp[r] * hat[static_cast<size_t>(r + 1) * nc + c];
    }
    for (int r = 0; r < R; ++r) {
      auto* h = hat.data() + static_cast<size_t>(r) * nc;
      transform(h, tmp_in, tmp_out, true);
      double* xr = x.data() + static_cast<size_t>(r) * nc;
      for (int c = 0; c < nc; ++c) xr[c] = h[c].real();
    }
  }

 private:
  void transform(std::complex<double>* h, std::vector<std::complex<double>>& in,
                 std::vector<std::complex<double>>& out, bool inverse) const {
    const int n = grid_.nx;
    auto run = [&](int stride, int offset) {
      for (int i = 0; i < n; ++i) in[i] = h[offset + i * stride];
      if (inverse)
        fft_.inv(out, in);
      else
        fft_.fwd(out, in);
      for (int i = 0; i < n; ++i) h[offset + i * stride] = out[i];
    };
    if (grid_.d == 1) {
      run(1, 0);
    } else {
      for (int j = 0; j < n; ++j) run(1, j * n);
      for (int i = 0; i < n; ++i) run(n, i);
    }
  }

  GridSpec grid_;
  std::vector<double> diag_, off_;
  double space_coeff_;
  std::vector<double> mode_eig_;
  mutable Eigen::FFT<double> fft_;
};

struct CgResult {
  int iterations = 0;
  double residual = 0.0;  // ||b - A x|| / max(||b||, tiny)
  bool converged = false;
};

/// Conjugate gradients on an SPD operator with optional preconditioner.
/// Stops when ||b - A x|| <= tol * ||b||.
inline CgResult conjugate_gradient(const std::function<void(std::span<const double>, std::span<double>)>& A,
                                   const std::function<void(std::span<const double>, std::span<double>)>* precond,
                                   std::span<const double> b, std::span<double> x, double tol, int max_iters) {
  const size_t n = b.size();
  std::vector<double> r(n), z(n), p(n), Ap(n);
  auto dot = [](std::span<const double> a, std::span<const double> c) {
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += a[i] * c[i];
    return s;
  };
  A(x, Ap);
  for (size_t i = 0; i < n; ++i) r[i] = b[i] - Ap[i];
  const double bnorm = std::max(std::sqrt(dot(b, b)), 1e-300);
  CgResult res;
  double rnorm = std::sqrt(dot(r, r));
  res.residual = rnorm / bnorm;
  if (rnorm <= tol * bnorm) {
    res.converged = true;
    return res;
  }
  if (precond)
    (*precond)(r, z);
  else
    z = r;
  p = z;
  double rz = dot(r, z);
  for (int it = 1; it <= max_iters; ++it) {
    A(p, Ap);
    const double pAp = dot(p, Ap);
    if (!(pAp > 0.0)) break;
    const double alpha = rz / pAp;
    for (size_t i = 0; i < n; ++i) {
      x[i] += alpha * p[i];
      r[i] -= alpha * Ap[i];
    }
    rnorm = std::sqrt(dot(r, r));
    res.iterations = it;
    res.residual = rnorm / bnorm;
    if (rnorm <= tol * bnorm) {
      res.converged = true;
      return res;
    }
    if (precond)
      (*precond)(r, z);
    else
      z = r;
    const double rz_new = dot(r, z);
    const double beta = rz_new / rz;
    rz = rz_new;
    for (size_t i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
  }
  return res;
}

}  // namespace mfgdc

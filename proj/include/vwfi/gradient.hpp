#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <cmath>

#include "vwfi/grid.hpp"

namespace vwfi {

using SpMatR = Eigen::SparseMatrix<double>;
using SpMatC = Eigen::SparseMatrix<Complex>;

// First-difference operators along x and z with the zero-padded (Neumann)
// convention: forward differences divided by h, last sample along the axis
// set to zero. The adjoints are the exact discrete adjoints under the
// standard inner product, so grad^T grad is the usual discrete Laplacian.

template <typename Derived>
auto grad_x(const Grid2D& g, const Eigen::MatrixBase<Derived>& f) {
  check_field(g, f.size(), "grad_x");
  Eigen::Vector<typename Derived::Scalar, Eigen::Dynamic> out(g.n());
  const double inv_h = 1.0 / g.h;
  for (int ix = 0; ix < g.nx; ++ix)
    for (int iz = 0; iz < g.nz; ++iz) {
      const int i = g.index(iz, ix);
      out[i] = (ix + 1 < g.nx) ? (f[g.index(iz, ix + 1)] - f[i]) * inv_h
                               : typename Derived::Scalar(0);
    }
  return out;
}

template <typename Derived>
auto grad_z(const Grid2D& g, const Eigen::MatrixBase<Derived>& f) {
  check_field(g, f.size(), "grad_z");
  Eigen::Vector<typename Derived::Scalar, Eigen::Dynamic> out(g.n());
  const double inv_h = 1.0 / g.h;
  for (int ix = 0; ix < g.nx; ++ix)
    for (int iz = 0; iz < g.nz; ++iz) {
      const int i = g.index(iz, ix);
      out[i] = (iz + 1 < g.nz) ? (f[i + 1] - f[i]) * inv_h : typename Derived::Scalar(0);
    }
  return out;
}

template <typename Derived>
auto grad_x_adjoint(const Grid2D& g, const Eigen::MatrixBase<Derived>& f) {
  check_field(g, f.size(), "grad_x_adjoint");
  Eigen::Vector<typename Derived::Scalar, Eigen::Dynamic> out(g.n());
  out.setZero();
  const double inv_h = 1.0 / g.h;
  for (int ix = 0; ix < g.nx; ++ix)
    for (int iz = 0; iz < g.nz; ++iz) {
      const int i = g.index(iz, ix);
      typename Derived::Scalar v(0);
      if (ix + 1 < g.nx) v -= f[i];                    // -D row of this cell
      if (ix > 0) v += f[g.index(iz, ix - 1)];         // +D row of the left neighbour
      out[i] = v * inv_h;
    }
  return out;
}

template <typename Derived>
auto grad_z_adjoint(const Grid2D& g, const Eigen::MatrixBase<Derived>& f) {
  check_field(g, f.size(), "grad_z_adjoint");
  Eigen::Vector<typename Derived::Scalar, Eigen::Dynamic> out(g.n());
  out.setZero();
  const double inv_h = 1.0 / g.h;
  for (int ix = 0; ix < g.nx; ++ix)
    for (int iz = 0; iz < g.nz; ++iz) {
      const int i = g.index(iz, ix);
      typename Derived::Scalar v(0);
      if (iz + 1 < g.nz) v -= f[i];
      if (iz > 0) v += f[i - 1];
      out[i] = v * inv_h;
    }
  return out;
}

/// Isotropic total variation of a complex field: sum over cells of
/// sqrt(|grad_x|^2 + |grad_z|^2), |.| the complex magnitude, i.e. the
/// Euclidean norm of the four real components per cell.
inline double tv_norm(const Grid2D& g, const VecC& f) {
  const VecC gx = grad_x(g, f);
  const VecC gz = grad_z(g, f);
  double s = 0.0;
  for (int i = 0; i < g.n(); ++i)
    s += std::sqrt(std::norm(gx[i]) + std::norm(gz[i]));
  return s;
}

inline double tv_norm(const Grid2D& g, const VecR& f) {
  const VecR gx = grad_x(g, f);
  const VecR gz = grad_z(g, f);
  double s = 0.0;
  for (int i = 0; i < g.n(); ++i)
    s += std::hypot(gx[i], gz[i]);
  return s;
}

inline double tv_norm(const ComplexField& f) { return tv_norm(f.grid, f.values); }

/// Sparse matrix of grad_x (real entries; acts on real or complex vectors).
inline SpMatR grad_x_matrix(const Grid2D& g) {
  SpMatR D(g.n(), g.n());
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(2 * g.n());
  const double inv_h = 1.0 / g.h;
  for (int ix = 0; ix + 1 < g.nx; ++ix)
    for (int iz = 0; iz < g.nz; ++iz) {
      const int i = g.index(iz, ix);
      t.emplace_back(i, i, -inv_h);
      t.emplace_back(i, g.index(iz, ix + 1), inv_h);
    }
  D.setFromTriplets(t.begin(), t.end());
  return D;
}

inline SpMatR grad_z_matrix(const Grid2D& g) {
  SpMatR D(g.n(), g.n());
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(2 * g.n());
  const double inv_h = 1.0 / g.h;
  for (int ix = 0; ix < g.nx; ++ix)
    for (int iz = 0; iz + 1 < g.nz; ++iz) {
      const int i = g.index(iz, ix);
      t.emplace_back(i, i, -inv_h);
      t.emplace_back(i, i + 1, inv_h);
    }
  D.setFromTriplets(t.begin(), t.end());
  return D;
}

/// gamma_x * Dx^T Dx + gamma_z * Dz^T Dz, the TV part of the normal equations.
inline SpMatR tv_gram(const Grid2D& g, double gamma_x, double gamma_z) {
  const SpMatR dx = grad_x_matrix(g);
  const SpMatR dz = grad_z_matrix(g);
  SpMatR out = gamma_x * SpMatR(dx.transpose() * dx) + gamma_z * SpMatR(dz.transpose() * dz);
  out.makeCompressed();
  return out;
}

}  // namespace vwfi

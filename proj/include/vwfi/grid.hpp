#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <stdexcept>
#include <string>

namespace vwfi {

using Complex = std::complex<double>;
using VecC = Eigen::VectorXcd;
using VecR = Eigen::VectorXd;

/// Uniform 2D grid with spacing h in both directions. Fields on the grid are
/// stored column-major (z fastest) as length nz*nx vectors.
///
/// Degenerate grids with nz == 1 or nx == 1 are permitted so that 1-D signals
/// (e.g. the compressed-sensing scenario) can reuse the 2-D machinery; the
/// gradient along a length-1 axis is identically zero.
struct Grid2D {
  int nz = 0;
  int nx = 0;
  double h = 0.0;

  Grid2D() = default;
  Grid2D(int nz_, int nx_, double h_) : nz(nz_), nx(nx_), h(h_) {
    if (nz < 1 || nx < 1 || static_cast<long>(nz) * nx < 2)
      throw std::invalid_argument("Grid2D: need at least 2 cells (nz=" + std::to_string(nz) +
                                  ", nx=" + std::to_string(nx) + ")");
    if (!(h > 0.0)) throw std::invalid_argument("Grid2D: spacing must be positive");
  }

  int n() const { return nz * nx; }
  int index(int iz, int ix) const { return iz + ix * nz; }
  int iz_of(int i) const { return i % nz; }
  int ix_of(int i) const { return i / nz; }

  bool operator==(const Grid2D& o) const { return nz == o.nz && nx == o.nx && h == o.h; }
  bool operator!=(const Grid2D& o) const { return !(*this == o); }
};

inline void check_field(const Grid2D& g, Eigen::Index len, const char* where) {
  if (len != g.n())
    throw std::invalid_argument(std::string(where) + ": field length " + std::to_string(len) +
                                " does not match grid (" + std::to_string(g.nz) + "x" +
                                std::to_string(g.nx) + ")");
}

/// Real-valued field sampled on a Grid2D.
struct RealField {
  Grid2D grid;
  VecR values;

  RealField() = default;
  RealField(const Grid2D& g, VecR v) : grid(g), values(std::move(v)) {
    check_field(grid, values.size(), "RealField");
  }
  static RealField constant(const Grid2D& g, double c) { return {g, VecR::Constant(g.n(), c)}; }

  double& operator()(int iz, int ix) { return values[grid.index(iz, ix)]; }
  double operator()(int iz, int ix) const { return values[grid.index(iz, ix)]; }
};

/// Complex-valued field sampled on a Grid2D, with consistent cartesian and
/// polar views. The phase of an exact zero is defined as 0 so that the polar
/// decomposition is total.
struct ComplexField {
  Grid2D grid;
  VecC values;

  ComplexField() = default;
  ComplexField(const Grid2D& g, VecC v) : grid(g), values(std::move(v)) {
    check_field(grid, values.size(), "ComplexField");
  }
  static ComplexField constant(const Grid2D& g, Complex c) {
    return {g, VecC::Constant(g.n(), c)};
  }

  Complex& operator()(int iz, int ix) { return values[grid.index(iz, ix)]; }
  Complex operator()(int iz, int ix) const { return values[grid.index(iz, ix)]; }

  VecR real_part() const { return values.real(); }
  VecR imag_part() const { return values.imag(); }
  VecR magnitude() const { return values.array().abs(); }
  VecR phase() const {
    VecR th(values.size());
    for (Eigen::Index i = 0; i < values.size(); ++i) {
      const Complex z = values[i];
      th[i] = (z.real() == 0.0 && z.imag() == 0.0) ? 0.0 : std::atan2(z.imag(), z.real());
    }
    return th;
  }

  static ComplexField from_polar(const Grid2D& g, const VecR& a, const VecR& theta) {
    check_field(g, a.size(), "from_polar magnitude");
    check_field(g, theta.size(), "from_polar phase");
    VecC v(a.size());
    for (Eigen::Index i = 0; i < a.size(); ++i)
      v[i] = std::polar(a[i], theta[i]);
    return {g, std::move(v)};
  }
};

}  // namespace vwfi

#pragma once

#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <memory>
#include <set>
#include <vector>

#include "vwfi/errors.hpp"
#include "vwfi/gradient.hpp"
#include "vwfi/grid.hpp"

namespace vwfi {

// Discrete visco-acoustic Helmholtz operator A = Lap + w^2 C diag(m) B on a
// PML-extended grid, under the e^{-iwt} Fourier convention: Im(m) > 0 means
// waves decay with travel distance, and outgoing waves match H0^(1).
//
// The PML is a complex coordinate stretch xi = 1 + i*kappa(d) with a
// polynomial damping profile; the equation is multiplied through by
// xi_x*xi_z, which puts the stretch Jacobian in the diagonal operator C and
// keeps the assembled matrix complex-symmetric (reciprocity holds exactly
// for the five-point stencil).

struct PmlProfile {
  int n_layers = 20;
  double power = 2.0;
  double max_damping = 1.5;  // dimensionless peak of the stretch imaginary part

  void validate() const {
    if (n_layers < 0 || power < 1.0 || max_damping < 0.0)
      throw std::invalid_argument("PmlProfile: need n_layers >= 0, power >= 1, max_damping >= 0");
  }
};

enum class Stencil { FivePoint, NinePoint };

// Nine-point coefficients: standard/rotated Laplacian mix and per-neighbour
// anti-lumped mass weights (centre weight is 1 - 4*edge - 4*corner).
inline constexpr double kNineMixStd = 0.5461;
inline constexpr double kNineMassEdge = 0.09381;
inline constexpr double kNineMassCorner = (1.0 - 0.6248 - 4.0 * 0.09381) / 4.0;

/// Receiver gather: u at a list of distinct cell indices.
struct ObservationOperator {
  std::vector<int> indices;

  ObservationOperator() = default;
  explicit ObservationOperator(std::vector<int> idx) : indices(std::move(idx)) {}

  void validate(int n) const {
    std::set<int> seen;
    for (int i : indices) {
      if (i < 0 || i >= n)
        throw std::invalid_argument("ObservationOperator: index " + std::to_string(i) +
                                    " out of range");
      if (!seen.insert(i).second)
        throw std::invalid_argument("ObservationOperator: duplicate index " + std::to_string(i));
    }
  }

  Eigen::Index size() const { return static_cast<Eigen::Index>(indices.size()); }

  VecC sample(const VecC& u) const {
    VecC d(size());
    for (Eigen::Index k = 0; k < size(); ++k) {
      const int i = indices[static_cast<size_t>(k)];
      if (i < 0 || i >= u.size())
        throw std::invalid_argument("sample: receiver index out of range");
      d[k] = u[i];
    }
    return d;
  }

  VecC scatter(const VecC& d, Eigen::Index n) const {
    if (d.size() != size()) throw std::invalid_argument("scatter: data length mismatch");
    VecC u = VecC::Zero(n);
    for (Eigen::Index k = 0; k < size(); ++k)
      u[indices[static_cast<size_t>(k)]] += d[k];
    return u;
  }
};

inline VecC sample(const ObservationOperator& P, const VecC& u) { return P.sample(u); }

struct SourceTerm {
  int cell = 0;
  Complex amplitude{1.0, 0.0};
};

namespace detail {

// Normalised PML depth (0 in the interior, 1 at the outer edge) at a
// continuous cell coordinate q along an axis of N cells with L layers.
inline double pml_depth(double q, int N, int L) {
  if (L == 0) return 0.0;
  const double left = (static_cast<double>(L) - q) / L;
  const double right = (q - static_cast<double>(N - 1 - L)) / L;
  return std::max({left, right, 0.0});
}

inline Complex pml_stretch(double q, int N, const PmlProfile& pml) {
  const double d = pml_depth(q, N, pml.n_layers);
  return {1.0, d > 0.0 ? pml.max_damping * std::pow(d, pml.power) : 0.0};
}

}  // namespace detail

class HelmholtzSystem {
 public:
  /// Assemble A(omega, m) on `grid` (already PML-extended; `pml.n_layers`
  /// cells on every side are damped). m is the complex squared slowness.
  static HelmholtzSystem assemble(const Grid2D& grid, const VecC& m, double omega,
                                  const PmlProfile& pml, Stencil stencil) {
    pml.validate();
    check_field(grid, m.size(), "HelmholtzSystem::assemble");
    if (!(omega > 0.0)) throw std::invalid_argument("assemble: omega must be positive");
    if (grid.nz < 3 || grid.nx < 3)
      throw std::invalid_argument("assemble: grid too small for the stencil");
    if (grid.nz <= 2 * pml.n_layers || grid.nx <= 2 * pml.n_layers)
      throw std::invalid_argument("assemble: grid has no cells left inside the PML");
    for (int i = 0; i < grid.n(); ++i)
      if (!std::isfinite(m[i].real()) || !std::isfinite(m[i].imag()))
        throw std::invalid_argument("assemble: nonfinite model entry at cell " + std::to_string(i));

    HelmholtzSystem sys;
    sys.grid_ = grid;
    sys.omega_ = omega;
    sys.pml_ = pml;
    sys.stencil_ = stencil;
    sys.m_ = m;

    const int nz = grid.nz, nx = grid.nx, n = grid.n();
    const double inv_h2 = 1.0 / (grid.h * grid.h);
    // Fixed, frequency-independent rotated-grid mix and anti-lumped mass
    // weights (Jo-Shin-Suh values); good to ~0.25% phase-velocity error down
    // to 4 points per wavelength.
    const double mix_std = (stencil == Stencil::NinePoint) ? kNineMixStd : 1.0;
    const double mix_rot = 1.0 - mix_std;

    auto xi_x = [&](double q) { return detail::pml_stretch(q, nx, pml); };
    auto xi_z = [&](double q) { return detail::pml_stretch(q, nz, pml); };

    std::vector<Eigen::Triplet<Complex>> lap;
    lap.reserve(static_cast<size_t>(n) * (stencil == Stencil::NinePoint ? 9 : 5));
    auto add_edge = [&](int a, int b, Complex w) {
      // Edge contribution w*(u_b - u_a) to row a and symmetrically to row b;
      // out-of-grid endpoints are homogeneous Dirichlet (keep the diagonal).
      if (a >= 0) lap.emplace_back(a, a, -w);
      if (b >= 0) lap.emplace_back(b, b, -w);
      if (a >= 0 && b >= 0) {
        lap.emplace_back(a, b, w);
        lap.emplace_back(b, a, w);
      }
    };
    auto cell = [&](int iz, int ix) {
      return (iz >= 0 && iz < nz && ix >= 0 && ix < nx) ? grid.index(iz, ix) : -1;
    };

    // Standard Laplacian: d/dx((xi_z/xi_x) d/dx) + d/dz((xi_x/xi_z) d/dz).
    for (int ix = -1; ix < nx; ++ix)
      for (int iz = 0; iz < nz; ++iz) {
        const Complex w = mix_std * xi_z(iz) / xi_x(ix + 0.5) * inv_h2;
        add_edge(cell(iz, ix), cell(iz, ix + 1), w);
      }
    for (int ix = 0; ix < nx; ++ix)
      for (int iz = -1; iz < nz; ++iz) {
        const Complex w = mix_std * xi_x(ix) / xi_z(iz + 0.5) * inv_h2;
        add_edge(cell(iz, ix), cell(iz + 1, ix), w);
      }

    if (stencil == Stencil::NinePoint) {
      // 45-degree rotated Laplacian over the diagonal neighbours, with the
      // stretch ratio averaged over the two rotated directions.
      for (int ix = -1; ix < nx; ++ix)
        for (int iz = -1; iz < nz; ++iz) {
          const Complex rx = xi_x(ix + 0.5), rz = xi_z(iz + 0.5);
          const Complex w = mix_rot * 0.5 * (rz / rx + rx / rz) * 0.5 * inv_h2;
          add_edge(cell(iz, ix), cell(iz + 1, ix + 1), w);
          add_edge(cell(iz + 1, ix), cell(iz, ix + 1), w);
        }
    }

    sys.lap_.resize(n, n);
    sys.lap_.setFromTriplets(lap.begin(), lap.end());
    sys.lap_.makeCompressed();

    // Mass operator B: identity for FivePoint; for NinePoint, anti-lumped
    // averaging 0.6/0.3/0.1 (centre / four edges / four corners) over cells
    // whose whole 3x3 footprint is PML-free, tapering to identity elsewhere
    // so that B stays symmetric with unit row sums.
    std::vector<Eigen::Triplet<double>> bt;
    for (int i = 0; i < n; ++i) bt.emplace_back(i, i, 1.0);
    if (stencil == Stencil::NinePoint) {
      auto averaging = [&](int iz, int ix) {
        if (iz < 1 || iz >= nz - 1 || ix < 1 || ix >= nx - 1) return false;
        return detail::pml_depth(ix - 1, nx, pml.n_layers) == 0.0 &&
               detail::pml_depth(ix + 1, nx, pml.n_layers) == 0.0 &&
               detail::pml_depth(iz - 1, nz, pml.n_layers) == 0.0 &&
               detail::pml_depth(iz + 1, nz, pml.n_layers) == 0.0;
      };
      auto add_mass_edge = [&](int iz0, int ix0, int iz1, int ix1, double w) {
        if (!averaging(iz0, ix0) || !averaging(iz1, ix1)) return;
        const int a = grid.index(iz0, ix0), b = grid.index(iz1, ix1);
        bt.emplace_back(a, b, w);
        bt.emplace_back(b, a, w);
        bt.emplace_back(a, a, -w);
        bt.emplace_back(b, b, -w);
      };
      const double we = kNineMassEdge, wc = kNineMassCorner;
      for (int ix = 0; ix < nx; ++ix)
        for (int iz = 0; iz < nz; ++iz) {
          if (ix + 1 < nx) add_mass_edge(iz, ix, iz, ix + 1, we);
          if (iz + 1 < nz) add_mass_edge(iz, ix, iz + 1, ix, we);
          if (ix + 1 < nx && iz + 1 < nz) {
            add_mass_edge(iz, ix, iz + 1, ix + 1, wc);
            add_mass_edge(iz + 1, ix, iz, ix + 1, wc);
          }
        }
    }
    sys.mass_.resize(n, n);
    sys.mass_.setFromTriplets(bt.begin(), bt.end());
    sys.mass_.makeCompressed();

    sys.c_diag_.resize(n);
    for (int ix = 0; ix < nx; ++ix)
      for (int iz = 0; iz < nz; ++iz)
        sys.c_diag_[grid.index(iz, ix)] = xi_x(ix) * xi_z(iz);

    // A = Lap + w^2 diag(C) diag(m) B
    SpMatC massC = sys.mass_.cast<Complex>();
    const VecC scale = (omega * omega) * sys.c_diag_.cwiseProduct(sys.m_);
    sys.a_ = sys.lap_ + SpMatC(scale.asDiagonal() * massC);
    sys.a_.makeCompressed();
    return sys;
  }

  const Grid2D& grid() const { return grid_; }
  double omega() const { return omega_; }
  Stencil stencil() const { return stencil_; }
  const PmlProfile& pml() const { return pml_; }
  const SpMatC& matrix() const { return a_; }
  const SpMatC& laplacian() const { return lap_; }
  const SpMatR& mass() const { return mass_; }
  const VecC& boundary_factor() const { return c_diag_; }
  const VecC& model() const { return m_; }

  VecC rhs_of(const SourceTerm& s) const {
    if (s.cell < 0 || s.cell >= grid_.n())
      throw std::invalid_argument("source cell out of range");
    VecC b = VecC::Zero(grid_.n());
    b[s.cell] = s.amplitude;
    return b;
  }

  /// Direct solve of A u = b with the cached sparse LU; one step of iterative
  /// refinement keeps the relative residual at or below 1e-10.
  VecC solve(const VecC& b) const {
    ensure_factorized();
    VecC u = lu_->solve(b);
    const double bn = b.norm();
    if (bn == 0.0) return VecC::Zero(b.size());
    double res = (a_ * u - b).norm() / bn;
    if (res > 1e-12) {
      u += lu_->solve(VecC(b - a_ * u));
      res = (a_ * u - b).norm() / bn;
    }
    if (!(res <= 1e-10))
      throw SolverError("Helmholtz solve: relative residual " + std::to_string(res) +
                        " exceeds 1e-10 (system near singular?)");
    return u;
  }

  VecC solve_forward(const SourceTerm& s) const { return solve(rhs_of(s)); }

  /// Diagonal of the virtual-source operator dA/dm u = w^2 C diag(B u).
  VecC virtual_source_diag(const VecC& u) const {
    return (omega_ * omega_) * c_diag_.cwiseProduct(mass_ * u);
  }

  VecC apply_laplacian(const VecC& u) const { return lap_ * u; }

 private:
  void ensure_factorized() const {
    if (lu_) return;
    lu_ = std::make_shared<Eigen::SparseLU<SpMatC>>();
    lu_->compute(a_);
    if (lu_->info() != Eigen::Success)
      throw SolverError("Helmholtz solve: sparse LU factorization failed");
  }

  Grid2D grid_;
  double omega_ = 0.0;
  PmlProfile pml_;
  Stencil stencil_ = Stencil::FivePoint;
  VecC m_;
  SpMatC a_, lap_;
  SpMatR mass_;
  VecC c_diag_;
  mutable std::shared_ptr<Eigen::SparseLU<SpMatC>> lu_;
};

/// Normal-equation solver for the data-assimilated wavefield problem
///   min (gamma/2)||rhs_d - P u||^2 + (lambda/2)||rhs_b - A u||^2,
/// i.e. (lambda A^H A + gamma P^T P) u = lambda A^H rhs_b + gamma P^T rhs_d.
/// The Hermitian positive definite normal matrix is factored once per model
/// update (symbolic analysis reused) and shared across sources.
class AugmentedWavefieldSolver {
 public:
  AugmentedWavefieldSolver(const ObservationOperator& P, double lambda, double gamma)
      : receivers_(P), lambda_(lambda), gamma_(gamma) {
    if (!(lambda > 0.0) || !(gamma >= 0.0))
      throw std::invalid_argument("AugmentedWavefieldSolver: need lambda > 0, gamma >= 0");
  }

  /// (Re)build and factor the normal matrix for the given assembled system.
  void refactor(const HelmholtzSystem& sys) {
    const Eigen::Index n = sys.grid().n();
    receivers_.validate(static_cast<int>(n));
    adjoint_ = sys.matrix().adjoint();
    normal_ = lambda_ * SpMatC(adjoint_ * sys.matrix());
    if (gamma_ > 0.0) {
      VecC d = VecC::Zero(n);
      for (int i : receivers_.indices) d[i] = gamma_;
      SpMatC diag(n, n);
      diag = d.asDiagonal();
      normal_ = normal_ + diag;
    }
    normal_.makeCompressed();
    if (!analyzed_) {
      llt_.analyzePattern(normal_);
      analyzed_ = true;
    }
    llt_.factorize(normal_);
    if (llt_.info() != Eigen::Success) {
      // Pattern may differ from the analysed one (e.g. different system);
      // retry with a fresh analysis before giving up.
      llt_.analyzePattern(normal_);
      llt_.factorize(normal_);
      if (llt_.info() != Eigen::Success)
        throw SolverError("augmented solve: Cholesky factorization of the normal matrix failed");
    }
  }

  /// Solve for one source; rhs_b is source + scaled dual (length n), rhs_d is
  /// data + scaled dual (length #receivers). Thread-safe once factored.
  VecC solve(const VecC& rhs_b, const VecC& rhs_d) const {
    VecC rhs = lambda_ * (adjoint_ * rhs_b);
    if (gamma_ > 0.0) rhs += gamma_ * receivers_.scatter(rhs_d, rhs.size());
    VecC u = llt_.solve(rhs);
    u += llt_.solve(VecC(rhs - normal_ * u));
    const double rn = rhs.norm();
    if (rn > 0.0) {
      const double res = (normal_ * u - rhs).norm() / rn;
      if (!(res <= 1e-10))
        throw SolverError("augmented solve: normal-equation residual " + std::to_string(res) +
                          " exceeds 1e-10");
    }
    return u;
  }

  double lambda() const { return lambda_; }
  double gamma() const { return gamma_; }

 private:
  ObservationOperator receivers_;
  double lambda_, gamma_;
  SpMatC adjoint_, normal_;
  Eigen::SimplicialLLT<SpMatC, Eigen::Lower> llt_;
  bool analyzed_ = false;
};

/// Convenience wrapper matching the one-shot contract.
inline VecC augmented_wavefield_solve(const HelmholtzSystem& sys, const ObservationOperator& P,
                                      const VecC& rhs_b, const VecC& rhs_d, double lambda,
                                      double gamma) {
  AugmentedWavefieldSolver solver(P, lambda, gamma);
  solver.refactor(sys);
  return solver.solve(rhs_b, rhs_d);
}

/// Fourier coefficient of the zero-phase Ricker wavelet under the e^{-iwt}
/// synthesis convention: (2/sqrt(pi)) (w^2/wp^3) exp(-w^2/wp^2), wp = 2 pi fp.
inline Complex ricker_spectrum(double f_dominant, double omega) {
  if (!(f_dominant > 0.0)) throw std::invalid_argument("ricker_spectrum: f_dominant must be > 0");
  const double wp = 2.0 * M_PI * f_dominant;
  const double r = omega / wp;
  return Complex(2.0 / std::sqrt(M_PI) * r * r / wp * std::exp(-r * r), 0.0);
}

/// Interior grid plus PML book-keeping: builds the extended grid, maps
/// interior cells to extended indices, and crops/extends fields.
struct PmlExtension {
  Grid2D interior;
  int layers = 0;

  PmlExtension(const Grid2D& g, int n_layers) : interior(g), layers(n_layers) {
    if (n_layers < 0) throw std::invalid_argument("PmlExtension: negative layer count");
  }

  Grid2D extended() const {
    return Grid2D(interior.nz + 2 * layers, interior.nx + 2 * layers, interior.h);
  }

  int ext_index(int iz, int ix) const {
    return extended().index(iz + layers, ix + layers);
  }

  template <typename Vec>
  Vec extend(const Vec& f) const {
    check_field(interior, f.size(), "PmlExtension::extend");
    const Grid2D ge = extended();
    Vec out(ge.n());
    for (int ix = 0; ix < ge.nx; ++ix) {
      const int jx = std::clamp(ix - layers, 0, interior.nx - 1);
      for (int iz = 0; iz < ge.nz; ++iz) {
        const int jz = std::clamp(iz - layers, 0, interior.nz - 1);
        out[ge.index(iz, ix)] = f[interior.index(jz, jx)];
      }
    }
    return out;
  }

  template <typename Vec>
  Vec crop(const Vec& f) const {
    const Grid2D ge = extended();
    check_field(ge, f.size(), "PmlExtension::crop");
    Vec out(interior.n());
    for (int ix = 0; ix < interior.nx; ++ix)
      for (int iz = 0; iz < interior.nz; ++iz)
        out[interior.index(iz, ix)] = f[ge.index(iz + layers, ix + layers)];
    return out;
  }
};

}  // namespace vwfi

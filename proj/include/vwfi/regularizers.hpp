#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <memory>
#include <utility>
#include <vector>

#include "vwfi/errors.hpp"
#include "vwfi/gradient.hpp"
#include "vwfi/grid.hpp"

namespace vwfi {

// Complex-valued TV-regularized least-squares solvers over a generic linear
// measurement operator:
//   - SplitBregmanTvSolver: isotropic TV on the complex model (joint mode)
//     or separate TV on the real and imaginary parts (separate mode).
//   - MagnitudePhaseTvSolver: TV on the magnitude plus a convex phase
//     penalty, phase updated by a generalized proximal point step with an
//     Armijo backtracking line search.
// All three iterate a stacked least-squares model solve, a shrinkage update
// of the auxiliary gradients, and a scaled-dual (Bregman) update; an outer
// data-refinement loop turns the penalty formulation into the method of
// multipliers.

enum class PhaseRegKind { TVPhase, SmoothPhase };

struct RegHyperparams {
  double lambda = 1.0;
  double gamma_x = 0.0;  // <= 0 requests the scale-aware default
  double gamma_z = 0.0;
  double tau = 0.5;
  int max_iters = 100;
  PhaseRegKind phase_reg = PhaseRegKind::SmoothPhase;
  double armijo_alpha = 1e-4;
  double armijo_shrink = 0.5;

  void validate() const {
    if (!(lambda > 0.0)) throw std::invalid_argument("RegHyperparams: lambda must be > 0");
    if (!(tau >= 0.0 && tau <= 1.0)) throw std::invalid_argument("RegHyperparams: tau in [0,1]");
    if (max_iters < 1) throw std::invalid_argument("RegHyperparams: max_iters >= 1");
    if (!(armijo_alpha > 0.0) || !(armijo_shrink > 0.0) || !(armijo_shrink < 1.0))
      throw std::invalid_argument("RegHyperparams: bad Armijo parameters");
  }
};

// ---------------------------------------------------------------------------
// Shrinkage / proximal updates
// ---------------------------------------------------------------------------

/// Weighting function phi_gamma(x) = max(1 - gamma/x, 0); cells with x <= 0
/// return 0.
inline VecR shrink_weight(const VecR& x, double gamma) {
  VecR w(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i)
    w[i] = x[i] > 0.0 ? std::max(1.0 - gamma / x[i], 0.0) : 0.0;
  return w;
}

namespace detail {

// Joint shrinkage with explicit threshold levels t_x, t_z applied against the
// four-component magnitude sqrt(Re(zx)^2+Im(zx)^2+Re(zz)^2+Im(zz)^2).
template <typename Vec>
std::pair<Vec, Vec> joint_shrink_level(const Vec& zx, const Vec& zz, double tx, double tz) {
  Vec px(zx.size()), pz(zz.size());
  for (Eigen::Index i = 0; i < zx.size(); ++i) {
    const double s = std::sqrt(std::norm(Complex(zx[i])) + std::norm(Complex(zz[i])));
    const double wx = s > 0.0 ? std::max(1.0 - tx / s, 0.0) : 0.0;
    const double wz = s > 0.0 ? std::max(1.0 - tz / s, 0.0) : 0.0;
    px[i] = wx * zx[i];
    pz[i] = wz * zz[i];
  }
  return {std::move(px), std::move(pz)};
}

}  // namespace detail

/// Isotropic complex shrinkage p = phi_{1/gamma}(|z|) o z (Algorithm 1,
/// lines 5-6). Affects only the magnitude; the phase of each nonzero
/// component is preserved.
inline std::pair<VecC, VecC> joint_prox_update(const VecC& zx, const VecC& zz, double gamma_x,
                                               double gamma_z) {
  if (zx.size() != zz.size()) throw std::invalid_argument("joint_prox_update: size mismatch");
  return detail::joint_shrink_level(zx, zz, 1.0 / gamma_x, 1.0 / gamma_z);
}

/// Separate shrinkage of real and imaginary parts (Algorithm 2, line 7):
/// real parts thresholded at tau/gamma against |Re(z)|, imaginary parts at
/// (1-tau)/gamma against |Im(z)|.
inline std::pair<VecC, VecC> separate_ri_prox_update(const VecC& zx, const VecC& zz,
                                                     double gamma_x, double gamma_z, double tau) {
  if (zx.size() != zz.size())
    throw std::invalid_argument("separate_ri_prox_update: size mismatch");
  auto [prx, prz] = detail::joint_shrink_level(VecR(zx.real()), VecR(zz.real()), tau / gamma_x,
                                               tau / gamma_z);
  auto [pix, piz] = detail::joint_shrink_level(VecR(zx.imag()), VecR(zz.imag()),
                                               (1.0 - tau) / gamma_x, (1.0 - tau) / gamma_z);
  VecC px(zx.size()), pz(zz.size());
  px.real() = prx;
  px.imag() = pix;
  pz.real() = prz;
  pz.imag() = piz;
  return {std::move(px), std::move(pz)};
}

// ---------------------------------------------------------------------------
// Measurement operator abstraction
// ---------------------------------------------------------------------------

/// Residual-checked solver for (lambda G^H G + R) x = rhs with R real SPD.
class NormalSolver {
 public:
  virtual ~NormalSolver() = default;
  virtual VecC solve(const VecC& rhs) const = 0;
  virtual VecR solve_real(const VecR& rhs) const = 0;
};

/// A complex linear map from model space to data space together with the
/// observed data y. Implementations provide factored normal-equation solvers
/// so that structured operators (diagonal stacks) keep their fast path.
class LinearMeasurement {
 public:
  explicit LinearMeasurement(VecC y) : y_(std::move(y)) {}
  virtual ~LinearMeasurement() = default;

  const VecC& data() const { return y_; }
  virtual Eigen::Index rows() const = 0;
  virtual Eigen::Index cols() const = 0;
  virtual VecC apply(const VecC& x) const = 0;
  virtual VecC apply_adjoint(const VecC& y) const = 0;

  /// diag(G^H G), used for the scale-aware default penalty weight.
  virtual VecR gram_diagonal() const = 0;

  /// Factorized solver for (lambda G^H G + R).
  virtual std::unique_ptr<NormalSolver> normal_solver(double lambda, const SpMatR& R) const = 0;

  /// Factorized real solver for (lambda Re(D^H G^H G D) + R), D = diag(e^{i theta}).
  virtual std::unique_ptr<NormalSolver> real_normal_solver(double lambda, const SpMatR& R,
                                                           const VecR& theta) const = 0;

  /// Whether the real-restricted normal matrix actually depends on theta
  /// (false for diagonal stacks, whose Gram is phase-invariant).
  virtual bool real_normal_depends_on_theta() const { return true; }

 private:
  VecC y_;
};

namespace detail {

inline void residual_guard(double res, const char* what) {
  if (!(res <= 1e-9))
    throw SolverError(std::string(what) + ": normal-equation residual " + std::to_string(res) +
                      " exceeds 1e-9");
}

class DenseNormalSolver final : public NormalSolver {
 public:
  explicit DenseNormalSolver(Eigen::MatrixXcd N) : n_(std::move(N)) {
    ldlt_.compute(n_);
    if (ldlt_.info() != Eigen::Success)
      throw SolverError("dense normal solve: LDLT factorization failed");
  }
  VecC solve(const VecC& rhs) const override {
    VecC x = ldlt_.solve(rhs);
    x += ldlt_.solve(VecC(rhs - n_ * x));
    const double rn = rhs.norm();
    if (rn > 0.0) residual_guard((n_ * x - rhs).norm() / rn, "dense normal solve");
    return x;
  }
  VecR solve_real(const VecR& rhs) const override {
    return solve(rhs.cast<Complex>()).real();
  }

 private:
  Eigen::MatrixXcd n_;
  Eigen::LDLT<Eigen::MatrixXcd> ldlt_;
};

class DenseRealNormalSolver final : public NormalSolver {
 public:
  explicit DenseRealNormalSolver(Eigen::MatrixXd N) : n_(std::move(N)) {
    ldlt_.compute(n_);
    if (ldlt_.info() != Eigen::Success)
      throw SolverError("real normal solve: LDLT factorization failed");
  }
  VecR solve_real(const VecR& rhs) const override {
    VecR x = ldlt_.solve(rhs);
    x += ldlt_.solve(VecR(rhs - n_ * x));
    const double rn = rhs.norm();
    if (rn > 0.0) residual_guard((n_ * x - rhs).norm() / rn, "real normal solve");
    return x;
  }
  VecC solve(const VecC& rhs) const override {
    VecC out(rhs.size());
    out.real() = solve_real(rhs.real());
    out.imag() = solve_real(rhs.imag());
    return out;
  }

 private:
  Eigen::MatrixXd n_;
  Eigen::LDLT<Eigen::MatrixXd> ldlt_;
};

class SparseRealNormalSolver final : public NormalSolver {
 public:
  explicit SparseRealNormalSolver(SpMatR N) : n_(std::move(N)) {
    n_.makeCompressed();
    ldlt_.compute(n_);
    if (ldlt_.info() != Eigen::Success)
      throw SolverError("sparse normal solve: factorization failed (singular normal matrix?)");
  }
  VecR solve_real(const VecR& rhs) const override {
    VecR x = ldlt_.solve(rhs);
    x += ldlt_.solve(VecR(rhs - n_ * x));
    const double rn = rhs.norm();
    if (rn > 0.0) residual_guard((n_ * x - rhs).norm() / rn, "sparse normal solve");
    return x;
  }
  VecC solve(const VecC& rhs) const override {
    VecC out(rhs.size());
    out.real() = solve_real(rhs.real());
    out.imag() = solve_real(rhs.imag());
    return out;
  }

 private:
  SpMatR n_;
  Eigen::SimplicialLDLT<SpMatR> ldlt_;
};

}  // namespace detail

/// Measurement backed by an explicit (dense) complex matrix.
class DenseMeasurement final : public LinearMeasurement {
 public:
  DenseMeasurement(Eigen::MatrixXcd G, VecC y)
      : LinearMeasurement(std::move(y)), g_(std::move(G)), gram_(g_.adjoint() * g_) {
    if (data().size() != g_.rows())
      throw std::invalid_argument("DenseMeasurement: data length does not match operator rows");
  }

  Eigen::Index rows() const override { return g_.rows(); }
  Eigen::Index cols() const override { return g_.cols(); }
  VecC apply(const VecC& x) const override { return g_ * x; }
  VecC apply_adjoint(const VecC& y) const override { return g_.adjoint() * y; }
  VecR gram_diagonal() const override { return gram_.diagonal().real(); }
  const Eigen::MatrixXcd& matrix() const { return g_; }

  std::unique_ptr<NormalSolver> normal_solver(double lambda, const SpMatR& R) const override {
    Eigen::MatrixXcd N = lambda * gram_;
    N += Eigen::MatrixXd(R).cast<Complex>();
    return std::make_unique<detail::DenseNormalSolver>(std::move(N));
  }

  std::unique_ptr<NormalSolver> real_normal_solver(double lambda, const SpMatR& R,
                                                   const VecR& theta) const override {
    // Re(D^H gram D)_{jk} = Re(gram_{jk} e^{i(theta_k - theta_j)})
    VecC e(theta.size());
    for (Eigen::Index i = 0; i < theta.size(); ++i) e[i] = std::polar(1.0, theta[i]);
    Eigen::MatrixXcd rotated = e.conjugate().asDiagonal() * gram_ * e.asDiagonal();
    Eigen::MatrixXd N = lambda * rotated.real();
    N += Eigen::MatrixXd(R);
    return std::make_unique<detail::DenseRealNormalSolver>(std::move(N));
  }

 private:
  Eigen::MatrixXcd g_;
  Eigen::MatrixXcd gram_;
};

/// Stack of diagonal blocks G = [diag(d_1); diag(d_2); ...] — the structure
/// of the virtual-source system. Its Gram matrix is the real diagonal
/// sum_j |d_j|^2, so the normal equations stay sparse and phase-invariant.
class DiagonalStackMeasurement final : public LinearMeasurement {
 public:
  DiagonalStackMeasurement(std::vector<VecC> diags, VecC y)
      : LinearMeasurement(std::move(y)), diags_(std::move(diags)) {
    if (diags_.empty()) throw std::invalid_argument("DiagonalStackMeasurement: no blocks");
    n_ = diags_.front().size();
    for (const auto& d : diags_)
      if (d.size() != n_) throw std::invalid_argument("DiagonalStackMeasurement: ragged blocks");
    if (data().size() != rows())
      throw std::invalid_argument("DiagonalStackMeasurement: data length mismatch");
  }

  Eigen::Index rows() const override { return n_ * static_cast<Eigen::Index>(diags_.size()); }
  Eigen::Index cols() const override { return n_; }

  VecC apply(const VecC& x) const override {
    VecC y(rows());
    for (size_t b = 0; b < diags_.size(); ++b)
      y.segment(static_cast<Eigen::Index>(b) * n_, n_) = diags_[b].cwiseProduct(x);
    return y;
  }

  VecC apply_adjoint(const VecC& y) const override {
    VecC x = VecC::Zero(n_);
    for (size_t b = 0; b < diags_.size(); ++b)
      x += diags_[b].conjugate().cwiseProduct(y.segment(static_cast<Eigen::Index>(b) * n_, n_));
    return x;
  }

  VecR gram_diagonal() const override {
    VecR g = VecR::Zero(n_);
    for (const auto& d : diags_) g += d.cwiseAbs2();
    return g;
  }

  std::unique_ptr<NormalSolver> normal_solver(double lambda, const SpMatR& R) const override {
    SpMatR N = R;
    const VecR g = gram_diagonal();
    SpMatR diag(n_, n_);
    diag = VecR(lambda * g).asDiagonal();
    N = N + diag;
    return std::make_unique<detail::SparseRealNormalSolver>(std::move(N));
  }

  std::unique_ptr<NormalSolver> real_normal_solver(double lambda, const SpMatR& R,
                                                   const VecR&) const override {
    return normal_solver(lambda, R);
  }

  bool real_normal_depends_on_theta() const override { return false; }

  const std::vector<VecC>& blocks() const { return diags_; }

 private:
  std::vector<VecC> diags_;
  Eigen::Index n_ = 0;
};

// ---------------------------------------------------------------------------
// Shared solver state and logging
// ---------------------------------------------------------------------------

/// Auxiliary gradients p and scaled duals q of the split-Bregman TV scheme,
/// all initialized to zero on the model grid.
struct TvAuxState {
  VecC p_x, p_z, q_x, q_z;

  static TvAuxState zeros(Eigen::Index n) {
    TvAuxState s;
    s.p_x = s.p_z = s.q_x = s.q_z = VecC::Zero(n);
    return s;
  }
};

/// Polar model state of the magnitude/phase solver.
struct PolarState {
  VecR a;      // magnitude, kept nonnegative
  VecR theta;  // unwrapped phase, free real field

  VecC model() const {
    VecC m(a.size());
    for (Eigen::Index i = 0; i < a.size(); ++i) m[i] = std::polar(a[i], theta[i]);
    return m;
  }
};

struct IterationRecord {
  int iter = 0;
  double data_misfit = 0.0;
  double tv_a = 0.0;
  double phase_reg = 0.0;
  double constraint_violation = 0.0;
  double beta = 0.0;
  double c = 0.0;
};

struct IterationLog {
  std::vector<IterationRecord> rows;

  void write_csv(const std::string& path) const {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open " + path + " for writing");
    f << "iter,data_misfit,tv_a,phase_reg,constraint_violation,beta,c\n";
    f.precision(17);
    for (const auto& r : rows)
      f << r.iter << ',' << r.data_misfit << ',' << r.tv_a << ',' << r.phase_reg << ','
        << r.constraint_violation << ',' << r.beta << ',' << r.c << '\n';
  }
};

namespace detail {
inline std::pair<double, double> resolve_gammas(const LinearMeasurement& G,
                                                const RegHyperparams& h) {
  double gx = h.gamma_x, gz = h.gamma_z;
  if (gx <= 0.0 || gz <= 0.0) {
    VecR d = G.gram_diagonal().cwiseAbs();
    std::sort(d.data(), d.data() + d.size());
    const double med = d[d.size() / 2];
    const double def = 0.01 * h.lambda * med;
    if (gx <= 0.0) gx = def;
    if (gz <= 0.0) gz = def;
  }
  return {gx, gz};
}
}  // namespace detail

// ---------------------------------------------------------------------------
// Stacked least-squares model solve (Eq. of the x-update)
// ---------------------------------------------------------------------------

/// Least-squares solution of the stacked system
///   [sqrt(lambda) G; sqrt(gx) Dx; sqrt(gz) Dz] x ~ [sqrt(lambda) y_eff;
///   sqrt(gx)(p_x+q_x); sqrt(gz)(p_z+q_z)]
/// via its normal equations. One-shot variant; the solvers below keep the
/// factorization across iterations.
inline VecC tv_model_solve(const LinearMeasurement& G, const VecC& y_eff, const TvAuxState& s,
                           const Grid2D& grid, const RegHyperparams& h) {
  h.validate();
  check_field(grid, G.cols(), "tv_model_solve");
  auto [gx, gz] = detail::resolve_gammas(G, h);
  const SpMatR R = tv_gram(grid, gx, gz);
  auto ns = G.normal_solver(h.lambda, R);
  VecC rhs = h.lambda * G.apply_adjoint(y_eff);
  rhs += gx * grad_x_adjoint(grid, VecC(s.p_x + s.q_x));
  rhs += gz * grad_z_adjoint(grid, VecC(s.p_z + s.q_z));
  return ns->solve(rhs);
}

/// Scaled-dual data refinement (method of multipliers): y' = y_running + (y0 - Gx).
inline VecC refine_data(const VecC& y_running, const VecC& y0, const LinearMeasurement& G,
                        const VecC& x) {
  return y_running + (y0 - G.apply(x));
}

// ---------------------------------------------------------------------------
// Algorithms 1 and 2
// ---------------------------------------------------------------------------

class SplitBregmanTvSolver {
 public:
  enum class Mode { Joint, SeparateRI };

  SplitBregmanTvSolver(Mode mode, const Grid2D& grid, const RegHyperparams& h)
      : mode_(mode), grid_(grid), hyper_(h) {
    hyper_.validate();
    dx_ = grad_x_matrix(grid_);
    dz_ = grad_z_matrix(grid_);
    reset();
  }

  void reset() {
    aux_ = TvAuxState::zeros(grid_.n());
    x_ = VecC::Zero(grid_.n());
  }

  /// One iteration: model solve, shrinkage, dual update. Set
  /// refresh_operator when G changed since the previous call.
  const VecC& step(const LinearMeasurement& G, const VecC& y_eff, bool refresh_operator) {
    check_field(grid_, G.cols(), "SplitBregmanTvSolver");
    if (refresh_operator || !ns_) {
      if (gx_ <= 0.0) std::tie(gx_, gz_) = detail::resolve_gammas(G, hyper_);
      if (!r_built_) {
        r_ = tv_gram(grid_, gx_, gz_);
        r_built_ = true;
      }
      ns_ = G.normal_solver(hyper_.lambda, r_);
    }
    VecC rhs = hyper_.lambda * G.apply_adjoint(y_eff);
    rhs += gx_ * (dx_.transpose() * VecC(aux_.p_x + aux_.q_x));
    rhs += gz_ * (dz_.transpose() * VecC(aux_.p_z + aux_.q_z));
    x_ = ns_->solve(rhs);

    const VecC zx = dx_ * x_ - aux_.q_x;
    const VecC zz = dz_ * x_ - aux_.q_z;
    if (mode_ == Mode::Joint)
      std::tie(aux_.p_x, aux_.p_z) = joint_prox_update(zx, zz, gx_, gz_);
    else
      std::tie(aux_.p_x, aux_.p_z) = separate_ri_prox_update(zx, zz, gx_, gz_, hyper_.tau);
    aux_.q_x = aux_.p_x - zx;  // q + p - Dx == p - z
    aux_.q_z = aux_.p_z - zz;
    return x_;
  }

  const VecC& current() const { return x_; }
  const TvAuxState& aux() const { return aux_; }
  double gamma_x() const { return gx_; }
  double gamma_z() const { return gz_; }
  const Grid2D& grid() const { return grid_; }

 private:
  Mode mode_;
  Grid2D grid_;
  RegHyperparams hyper_;
  SpMatR dx_, dz_, r_;
  bool r_built_ = false;
  double gx_ = -1.0, gz_ = -1.0;
  std::unique_ptr<NormalSolver> ns_;
  TvAuxState aux_;
  VecC x_;
};

// ---------------------------------------------------------------------------
// Phase machinery of Algorithm 3
// ---------------------------------------------------------------------------

/// Gradient of the phase misfit f(theta) = 1/2 ||y - G diag(e^{i theta}) a||^2:
///   grad = Im(diag(a o e^{-i theta}) G^H (G diag(e^{i theta}) a - y)).
inline VecR phase_misfit_gradient(const VecR& theta, const VecR& a, const LinearMeasurement& G,
                                  const VecC& y) {
  if (theta.size() != a.size()) throw std::invalid_argument("phase gradient: size mismatch");
  VecC h(a.size());
  for (Eigen::Index i = 0; i < a.size(); ++i) h[i] = std::polar(a[i], theta[i]);
  const VecC gh = G.apply_adjoint(VecC(G.apply(h) - y));
  VecR out(a.size());
  for (Eigen::Index i = 0; i < a.size(); ++i)
    out[i] = (std::conj(h[i]) * gh[i]).imag();
  return out;
}

namespace detail {

// Spectral-norm estimate of the Gauss-Newton phase Hessian
// Re(diag(h)^H G^H G diag(h)), h = a o e^{i theta}, by power iteration.
inline double estimate_phase_curvature(const VecR& a, const VecR& theta,
                                       const LinearMeasurement& G, int iters = 10) {
  const Eigen::Index n = a.size();
  VecC h(n);
  for (Eigen::Index i = 0; i < n; ++i) h[i] = std::polar(a[i], theta[i]);
  VecR v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = 1.0 + static_cast<double>(i) / (2.0 * n);
  v.normalize();
  double c = 0.0;
  for (int k = 0; k < iters; ++k) {
    const VecC gv = G.apply_adjoint(G.apply(h.cwiseProduct(v.cast<Complex>())));
    VecR mv(n);
    for (Eigen::Index i = 0; i < n; ++i) mv[i] = (std::conj(h[i]) * gv[i]).real();
    c = mv.norm();
    if (c == 0.0) break;
    v = mv / c;
  }
  return c;
}

// prox_{eta TV}(w) by a fixed 20-iteration split-Bregman loop.
inline VecR tv_prox(const Grid2D& g, const VecR& w, double eta, int iters = 20) {
  if (eta <= 0.0) return w;
  const double lam = 1.0 / eta;       // data weight of the denoising problem
  const double gamma = 2.0 * lam;     // split penalty
  const SpMatR dx = grad_x_matrix(g), dz = grad_z_matrix(g);
  SpMatR N = tv_gram(g, gamma, gamma);
  SpMatR diag(g.n(), g.n());
  diag = VecR::Constant(g.n(), lam).asDiagonal();
  N = N + diag;
  Eigen::SimplicialLDLT<SpMatR> ldlt(N);
  VecR px = VecR::Zero(g.n()), pz = px, qx = px, qz = px, u = w;
  for (int k = 0; k < iters; ++k) {
    VecR rhs = lam * w + gamma * (dx.transpose() * (px + qx)) + gamma * (dz.transpose() * (pz + qz));
    u = ldlt.solve(rhs);
    const VecR zx = dx * u - qx, zz = dz * u - qz;
    std::tie(px, pz) = joint_shrink_level(zx, zz, 1.0 / gamma, 1.0 / gamma);
    qx = px - zx;
    qz = pz - zz;
  }
  return u;
}

}  // namespace detail

/// Search direction of the generalized proximal point step:
///   delta = theta - prox_{(1-tau)/(c lambda) phi}(theta - grad / c).
/// The prox is the identity when tau = 1, a linear solve (I + eta D^T D)^{-1}
/// for the smooth phase penalty phi = 1/2 ||grad theta||^2, and an inner
/// split-Bregman TV prox for the TV phase penalty.
inline VecR composite_gradient_step(const Grid2D& grid, const VecR& theta, const VecR& grad,
                                    double c, const RegHyperparams& h) {
  if (!(c > 0.0)) throw std::invalid_argument("composite_gradient_step: c must be > 0");
  const VecR w = theta - grad / c;
  if (h.tau >= 1.0) return theta - w;  // grad / c
  const double eta = (1.0 - h.tau) / (c * h.lambda);
  if (h.phase_reg == PhaseRegKind::SmoothPhase) {
    SpMatR N = tv_gram(grid, eta, eta);
    SpMatR eye(grid.n(), grid.n());
    eye.setIdentity();
    N = N + eye;
    Eigen::SimplicialLDLT<SpMatR> ldlt(N);
    VecR p = ldlt.solve(w);
    p += ldlt.solve(VecR(w - N * p));
    return theta - p;
  }
  return theta - detail::tv_prox(grid, w, eta);
}

struct ArmijoResult {
  double beta = 0.0;
  bool stagnated = false;
};

/// Backtracking line search: largest beta in {1, s, s^2, ...} with
/// Phi(theta - beta*delta) <= Phi(theta) - alpha*beta*||delta||^2; returns
/// beta = 0 with the stagnation flag after 30 shrinks.
template <typename Objective>
ArmijoResult armijo_search(const VecR& theta, const VecR& delta, const RegHyperparams& h,
                           Objective&& objective) {
  const double phi0 = objective(theta);
  const double d2 = delta.squaredNorm();
  double beta = 1.0;
  for (int t = 0; t <= 30; ++t) {
    if (objective(VecR(theta - beta * delta)) <= phi0 - h.armijo_alpha * beta * d2)
      return {beta, false};
    beta *= h.armijo_shrink;
  }
  return {0.0, true};
}

// ---------------------------------------------------------------------------
// Algorithm 3
// ---------------------------------------------------------------------------

class MagnitudePhaseTvSolver {
 public:
  MagnitudePhaseTvSolver(const Grid2D& grid, const RegHyperparams& h) : grid_(grid), hyper_(h) {
    hyper_.validate();
    dx_ = grad_x_matrix(grid_);
    dz_ = grad_z_matrix(grid_);
    reset();
  }

  void reset() {
    state_.a = VecR::Zero(grid_.n());
    state_.theta = VecR::Zero(grid_.n());
    px_ = pz_ = qx_ = qz_ = VecR::Zero(grid_.n());
    curvature_ = 0.0;
    curvature_set_ = false;
  }

  /// Seed the polar state from a complex model (warm start).
  void initialize_from(const VecC& m) {
    check_field(grid_, m.size(), "MagnitudePhaseTvSolver::initialize_from");
    state_.a.resize(m.size());
    state_.theta.resize(m.size());
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      state_.a[i] = std::abs(m[i]);
      state_.theta[i] = (m[i] == Complex(0.0, 0.0)) ? 0.0 : std::arg(m[i]);
    }
  }

  /// One iteration: real-restricted magnitude solve + TV shrinkage, then one
  /// composite-gradient phase step with Armijo line search.
  const PolarState& step(const LinearMeasurement& G, const VecC& y_eff, bool refresh_operator) {
    check_field(grid_, G.cols(), "MagnitudePhaseTvSolver");
    if (refresh_operator || gx_ <= 0.0) {
      if (gx_ <= 0.0) std::tie(gx_, gz_) = detail::resolve_gammas(G, hyper_);
      if (!r_built_) {
        r_ = tv_gram(grid_, gx_, gz_);
        r_built_ = true;
      }
      ns_.reset();
    }

    // Magnitude step: minimizer over real a of the stacked system with the
    // phase-rotated operator, then projection onto a >= 0.
    if (!ns_ || G.real_normal_depends_on_theta())
      ns_ = G.real_normal_solver(hyper_.lambda, r_, state_.theta);
    VecC e(grid_.n());
    for (int i = 0; i < grid_.n(); ++i) e[i] = std::polar(1.0, state_.theta[i]);
    VecR rhs = (e.conjugate().cwiseProduct(G.apply_adjoint(y_eff)) * hyper_.lambda).real();
    rhs += gx_ * (dx_.transpose() * (px_ + qx_));
    rhs += gz_ * (dz_.transpose() * (pz_ + qz_));
    state_.a = ns_->solve_real(rhs).cwiseMax(0.0);

    // TV shrinkage of the magnitude at threshold tau/gamma.
    const VecR zx = dx_ * state_.a - qx_;
    const VecR zz = dz_ * state_.a - qz_;
    std::tie(px_, pz_) = detail::joint_shrink_level(zx, zz, hyper_.tau / gx_, hyper_.tau / gz_);
    qx_ = px_ - zx;
    qz_ = pz_ - zz;

    // Phase step.
    const VecR grad = phase_misfit_gradient(state_.theta, state_.a, G, y_eff);
    if (!curvature_set_) {
      curvature_ = detail::estimate_phase_curvature(state_.a, state_.theta, G);
      if (!(curvature_ > 0.0)) curvature_ = 1.0;
      curvature_set_ = true;
    }
    last_beta_ = 0.0;
    if (grad.norm() > 0.0) {
      const VecR delta = composite_gradient_step(grid_, state_.theta, grad, curvature_, hyper_);
      if (delta.norm() > 0.0) {
        auto objective = [&](const VecR& th) { return phase_objective(G, y_eff, th); };
        const ArmijoResult r = armijo_search(state_.theta, delta, hyper_, objective);
        last_beta_ = r.beta;
        if (r.stagnated)
          curvature_ *= 2.0;  // Lipschitz surrogate too small; be more conservative
        else
          state_.theta -= r.beta * delta;
      }
    }
    return state_;
  }

  /// Armijo merit Phi = (1-tau) g(theta) + (lambda/2) ||y - G diag(e^{i th}) a||^2.
  double phase_objective(const LinearMeasurement& G, const VecC& y_eff, const VecR& theta) const {
    VecC x(grid_.n());
    for (int i = 0; i < grid_.n(); ++i) x[i] = std::polar(state_.a[i], theta[i]);
    const double misfit = (y_eff - G.apply(x)).squaredNorm();
    return (1.0 - hyper_.tau) * phase_penalty(theta) + 0.5 * hyper_.lambda * misfit;
  }

  double phase_penalty(const VecR& theta) const {
    if (hyper_.phase_reg == PhaseRegKind::SmoothPhase)
      return 0.5 * ((dx_ * theta).squaredNorm() + (dz_ * theta).squaredNorm());
    return tv_norm(grid_, theta);
  }

  const PolarState& state() const { return state_; }
  double curvature() const { return curvature_; }
  double last_beta() const { return last_beta_; }
  double gamma_x() const { return gx_; }
  double gamma_z() const { return gz_; }
  double magnitude_tv() const { return tv_norm(grid_, state_.a); }

 private:
  Grid2D grid_;
  RegHyperparams hyper_;
  SpMatR dx_, dz_, r_;
  bool r_built_ = false;
  double gx_ = -1.0, gz_ = -1.0;
  std::unique_ptr<NormalSolver> ns_;
  PolarState state_;
  VecR px_, pz_, qx_, qz_;
  double curvature_ = 0.0;
  bool curvature_set_ = false;
  double last_beta_ = 0.0;
};

// ---------------------------------------------------------------------------
// One-shot drivers
// ---------------------------------------------------------------------------

namespace detail {
inline void log_step(IterationLog* log, int k, double misfit, double tv, double phase,
                     double violation, double beta, double c) {
  if (log) log->rows.push_back({k, misfit, tv, phase, violation, beta, c});
}
}  // namespace detail

inline VecC alg1_solve(const LinearMeasurement& G, const Grid2D& grid, const RegHyperparams& h,
                       bool refine, IterationLog* log = nullptr) {
  SplitBregmanTvSolver solver(SplitBregmanTvSolver::Mode::Joint, grid, h);
  VecC y_run = G.data();
  VecC x;
  for (int k = 0; k < h.max_iters; ++k) {
    x = solver.step(G, y_run, k == 0);
    if (refine) y_run = refine_data(y_run, G.data(), G, x);
    detail::log_step(log, k, (y_run - G.apply(x)).norm(), tv_norm(grid, x), 0.0,
                     (G.data() - G.apply(x)).norm(), 0.0, 0.0);
  }
  return x;
}

inline VecC alg2_solve(const LinearMeasurement& G, const Grid2D& grid, const RegHyperparams& h,
                       bool refine, IterationLog* log = nullptr) {
  SplitBregmanTvSolver solver(SplitBregmanTvSolver::Mode::SeparateRI, grid, h);
  VecC y_run = G.data();
  VecC x;
  for (int k = 0; k < h.max_iters; ++k) {
    x = solver.step(G, y_run, k == 0);
    if (refine) y_run = refine_data(y_run, G.data(), G, x);
    detail::log_step(log, k, (y_run - G.apply(x)).norm(), tv_norm(grid, x), 0.0,
                     (G.data() - G.apply(x)).norm(), 0.0, 0.0);
  }
  return x;
}

inline PolarState alg3_solve(const LinearMeasurement& G, const Grid2D& grid,
                             const RegHyperparams& h, bool refine, IterationLog* log = nullptr) {
  MagnitudePhaseTvSolver solver(grid, h);
  VecC y_run = G.data();
  for (int k = 0; k < h.max_iters; ++k) {
    const PolarState& s = solver.step(G, y_run, k == 0);
    const VecC x = s.model();
    if (refine) y_run = refine_data(y_run, G.data(), G, x);
    detail::log_step(log, k, (y_run - G.apply(x)).norm(), solver.magnitude_tv(),
                     solver.phase_penalty(s.theta), (G.data() - G.apply(x)).norm(),
                     solver.last_beta(), solver.curvature());
  }
  return solver.state();
}

}  // namespace vwfi

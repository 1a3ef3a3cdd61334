#pragma once

#include <cmath>
#include <complex>
#include <utility>
#include <vector>

#include "vwfi/errors.hpp"
#include "vwfi/grid.hpp"

namespace vwfi {

// Mappings between the physical pair (phase velocity v, attenuation factor
// alpha at the reference frequency) and the complex squared slowness m, for
// the Kolsky-Futterman and standard-linear-solid mechanisms. All complex
// square roots are principal-branch (cut on the negative real axis).

enum class AttenuationModelKind { KF, SLS };

/// Angular frequency and reference angular frequency, both rad/s.
struct FrequencySpec {
  double omega;
  double omega_r;

  FrequencySpec(double w, double wr) : omega(w), omega_r(wr) {
    if (!(omega > 0.0) || !(omega_r > 0.0))
      throw std::invalid_argument("FrequencySpec: frequencies must be positive");
  }
};

/// Real phase velocity (m/s) and dimensionless attenuation factor on a grid.
struct AttenuationPair {
  Grid2D grid;
  VecR v;
  VecR alpha;

  AttenuationPair(const Grid2D& g, VecR v_, VecR alpha_)
      : grid(g), v(std::move(v_)), alpha(std::move(alpha_)) {
    check_field(grid, v.size(), "AttenuationPair.v");
    check_field(grid, alpha.size(), "AttenuationPair.alpha");
  }
};

namespace detail {
inline void require_positive_velocity(const VecR& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (!(v[i] > 0.0))
      throw std::domain_error("attenuation mapping: nonpositive velocity at cell " +
                              std::to_string(i));
}
// Extracted alpha values within noise of zero are clamped; larger negatives
// are kept so cross-talk artifacts stay visible.
inline double clamp_alpha_noise(double a) { return (a < 0.0 && a > -1e-12) ? 0.0 : a; }
}  // namespace detail

/// KF forward mapping: m = (1/v^2) (1 - alpha/pi ln|w/wr| + i alpha/2)^2.
inline ComplexField kf_forward(const AttenuationPair& p, const FrequencySpec& f) {
  detail::require_positive_velocity(p.v);
  const double L = std::log(std::abs(f.omega / f.omega_r));
  VecC m(p.grid.n());
  for (int i = 0; i < p.grid.n(); ++i) {
    const Complex root(1.0 - p.alpha[i] / M_PI * L, 0.5 * p.alpha[i]);
    m[i] = root * root / (p.v[i] * p.v[i]);
  }
  return {p.grid, std::move(m)};
}

/// KF inverse mapping:
///   vhat     = 1 / (Re sqrt(m) + (2/pi) ln|w/wr| Im sqrt(m))
///   alphahat = 2 Im sqrt(m) * vhat
inline AttenuationPair kf_inverse(const ComplexField& m, const FrequencySpec& f) {
  const double L2 = 2.0 / M_PI * std::log(std::abs(f.omega / f.omega_r));
  VecR v(m.grid.n()), alpha(m.grid.n());
  std::vector<int> bad;
  for (int i = 0; i < m.grid.n(); ++i) {
    const Complex s = std::sqrt(m.values[i]);
    const double den = s.real() + L2 * s.imag();
    if (!(den > 0.0)) {
      bad.push_back(i);
      continue;
    }
    v[i] = 1.0 / den;
    alpha[i] = detail::clamp_alpha_noise(2.0 * s.imag() / den);
  }
  if (!bad.empty()) throw ExtractionError("KF extraction: nonpositive slowness denominator", bad);
  return {m.grid, std::move(v), std::move(alpha)};
}

/// SLS relaxation times: tau_eps = (sqrt(1+a^2)+a)/wr, tau_sig = (sqrt(1+a^2)-a)/wr.
/// They satisfy tau_eps * tau_sig = 1/wr^2 exactly.
inline std::pair<VecR, VecR> sls_relaxation_times(const VecR& alpha, double omega_r) {
  VecR te(alpha.size()), ts(alpha.size());
  for (Eigen::Index i = 0; i < alpha.size(); ++i) {
    const double s = std::sqrt(1.0 + alpha[i] * alpha[i]);
    te[i] = (s + alpha[i]) / omega_r;
    ts[i] = (s - alpha[i]) / omega_r;
  }
  return {std::move(te), std::move(ts)};
}

namespace detail {
// Re(sqrt((1+i wr ts)/(1+i wr te)))^-2, the SLS normalisation constant.
inline double sls_norm_factor(double te, double ts, double omega_r) {
  const Complex r =
      std::sqrt((Complex(1.0, omega_r * ts)) / (Complex(1.0, omega_r * te)));
  return 1.0 / (r.real() * r.real());
}
}  // namespace detail

/// SLS forward mapping:
///   m = (1/v^2) Re(sqrt((1+i wr ts)/(1+i wr te)))^-2 (1+i w ts)/(1+i w te).
inline ComplexField sls_forward(const AttenuationPair& p, const FrequencySpec& f) {
  detail::require_positive_velocity(p.v);
  auto [te, ts] = sls_relaxation_times(p.alpha, f.omega_r);
  VecC m(p.grid.n());
  for (int i = 0; i < p.grid.n(); ++i) {
    const double K = detail::sls_norm_factor(te[i], ts[i], f.omega_r);
    m[i] = K / (p.v[i] * p.v[i]) * (Complex(1.0, f.omega * ts[i]) / Complex(1.0, f.omega * te[i]));
  }
  return {p.grid, std::move(m)};
}

/// SLS inverse mapping: alphahat from Im/Re of 1/m, then the relaxation times
/// of alphahat, then vhat = sqrt(Re(1/m) K (1+w^2 ts^2)/(1+w^2 ts te)).
inline AttenuationPair sls_inverse(const ComplexField& m, const FrequencySpec& f) {
  const double w = f.omega, wr = f.omega_r;
  VecR v(m.grid.n()), alpha(m.grid.n());
  std::vector<int> bad;
  for (int i = 0; i < m.grid.n(); ++i) {
    const Complex inv = 1.0 / m.values[i];
    if (!(inv.real() > 0.0)) {
      bad.push_back(i);
      continue;
    }
    double a = 0.0;
    if (inv.imag() != 0.0)
      a = (w * w + wr * wr) / (2.0 * w * wr) * inv.imag() / inv.real();
    a = detail::clamp_alpha_noise(a);
    const double s = std::sqrt(1.0 + a * a);
    const double te = (s + a) / wr, ts = (s - a) / wr;
    const double K = detail::sls_norm_factor(te, ts, wr);
    v[i] = std::sqrt(inv.real() * K * (1.0 + w * w * ts * ts) / (1.0 + w * w * ts * te));
    alpha[i] = a;
  }
  if (!bad.empty()) throw ExtractionError("SLS extraction: nonpositive Re(1/m)", bad);
  return {m.grid, std::move(v), std::move(alpha)};
}

inline ComplexField attenuation_forward(AttenuationModelKind kind, const AttenuationPair& p,
                                        const FrequencySpec& f) {
  return kind == AttenuationModelKind::KF ? kf_forward(p, f) : sls_forward(p, f);
}

inline AttenuationPair attenuation_inverse(AttenuationModelKind kind, const ComplexField& m,
                                           const FrequencySpec& f) {
  return kind == AttenuationModelKind::KF ? kf_inverse(m, f) : sls_inverse(m, f);
}

/// Band-wise piecewise-constant approximation: one frequency-independent m
/// per batch, the forward mapping evaluated at the batch centre frequency
/// (arithmetic mean of the batch frequencies).
inline std::vector<ComplexField> piecewise_band_models(const AttenuationPair& p,
                                                       const std::vector<std::vector<double>>& batches,
                                                       double omega_r,
                                                       AttenuationModelKind kind) {
  if (batches.empty()) throw std::invalid_argument("piecewise_band_models: no batches");
  std::vector<ComplexField> out;
  out.reserve(batches.size());
  for (const auto& b : batches) {
    if (b.empty()) throw std::invalid_argument("piecewise_band_models: empty batch");
    double c = 0.0;
    for (double w : b) c += w;
    c /= static_cast<double>(b.size());
    out.push_back(attenuation_forward(kind, p, FrequencySpec(c, omega_r)));
  }
  return out;
}

/// Local dispersion-curve view of a complex squared slowness: the (v, alpha)
/// pair of each cell read off at the evaluation frequency itself, i.e.
/// v = 1/Re(sqrt(m)), alpha = 2 Im(sqrt(m))/Re(sqrt(m)). Used to plot the
/// band-wise staircase against the continuous dispersion curves.
inline std::pair<VecR, VecR> local_dispersion_pair(const ComplexField& m) {
  VecR v(m.grid.n()), alpha(m.grid.n());
  std::vector<int> bad;
  for (int i = 0; i < m.grid.n(); ++i) {
    const Complex s = std::sqrt(m.values[i]);
    if (!(s.real() > 0.0)) {
      bad.push_back(i);
      continue;
    }
    v[i] = 1.0 / s.real();
    alpha[i] = 2.0 * s.imag() / s.real();
  }
  if (!bad.empty()) throw ExtractionError("dispersion view: nonpositive Re(sqrt(m))", bad);
  return {std::move(v), std::move(alpha)};
}

}  // namespace vwfi

#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "vwfi/atten.hpp"

using namespace vwfi;

namespace {

std::mt19937_64 rng(7011);

AttenuationPair random_pair(const Grid2D& g, double v_lo = 1500, double v_hi = 4500,
                            double a_lo = 0.0, double a_hi = 0.2) {
  std::uniform_real_distribution<double> dv(v_lo, v_hi), da(a_lo, a_hi);
  VecR v(g.n()), a(g.n());
  for (int i = 0; i < g.n(); ++i) {
    v[i] = dv(rng);
    a[i] = da(rng);
  }
  return {g, v, a};
}

double rel_err(const VecR& est, const VecR& truth) {
  return (est - truth).norm() / truth.norm();
}

}  // namespace

TEST_CASE("KF forward: attenuation-free limit and closed form at the reference") {
  const Grid2D g(2, 2, 1.0);
  const double wr = 20.0 * M_PI;

  AttenuationPair lossless(g, VecR::Constant(4, 3000.0), VecR::Zero(4));
  for (double w : {0.3 * wr, wr, 4.0 * wr}) {
    const ComplexField m = kf_forward(lossless, {w, wr});
    for (int i = 0; i < 4; ++i)
      CHECK(std::abs(m.values[i] - Complex(1.0 / 9e6, 0.0)) <= 1e-22);
  }

  // omega = omega_r, v = 2000, alpha = 0.1: (1 + 0.05i)^2 / 4e6 = (0.9975 + 0.1i)/4e6
  AttenuationPair p(g, VecR::Constant(4, 2000.0), VecR::Constant(4, 0.1));
  const ComplexField m = kf_forward(p, {wr, wr});
  CHECK(m.values[0].real() == Catch::Approx(0.9975 / 4e6).epsilon(1e-14));
  CHECK(m.values[0].imag() == Catch::Approx(0.1 / 4e6).epsilon(1e-14));
  CHECK(m.values[0].imag() > 0.0);  // sign convention at the reference frequency
}

TEST_CASE("KF inverse: real model and reference-frequency roundtrip") {
  const Grid2D g(2, 2, 1.0);
  const double wr = 20.0 * M_PI;

  const ComplexField real_m = ComplexField::constant(g, Complex(1.0 / 4e6, 0.0));
  const AttenuationPair out = kf_inverse(real_m, {2.0 * wr, wr});
  CHECK(out.v[0] == Catch::Approx(2000.0).epsilon(1e-13));
  CHECK(out.alpha[0] == 0.0);

  AttenuationPair p(g, VecR::Constant(4, 2000.0), VecR::Constant(4, 0.1));
  const AttenuationPair back = kf_inverse(kf_forward(p, {wr, wr}), {wr, wr});
  CHECK(rel_err(back.v, p.v) <= 1e-12);
  CHECK(rel_err(back.alpha, p.alpha) <= 1e-12);
}

TEST_CASE("KF roundtrip on random pairs at omega = 2 omega_r") {
  const Grid2D g(20, 25, 1.0);
  const double wr = 20.0 * M_PI;
  const AttenuationPair p = random_pair(g);
  const AttenuationPair back = kf_inverse(kf_forward(p, {2.0 * wr, wr}), {2.0 * wr, wr});
  CHECK(rel_err(back.v, p.v) <= 1e-10);
  CHECK(rel_err(back.alpha, p.alpha) <= 1e-10);
}

TEST_CASE("KF inverse rejects nonpositive denominators with cell indices") {
  const Grid2D g(2, 2, 1.0);
  VecC m = VecC::Constant(4, Complex(1.0 / 4e6, 0.0));
  m[2] = Complex(-1.0, 0.0);  // sqrt is purely imaginary, denominator <= 0
  try {
    kf_inverse(ComplexField(g, m), {20.0 * M_PI, 20.0 * M_PI});
    FAIL("expected ExtractionError");
  } catch (const ExtractionError& e) {
    REQUIRE(e.cells == std::vector<int>{2});
  }
  CHECK_THROWS_AS(kf_forward(AttenuationPair(g, VecR::Zero(4), VecR::Zero(4)), {1.0, 1.0}),
                  std::domain_error);
}

TEST_CASE("SLS relaxation times: identities and frozen high-precision value") {
  const double wr = 20.0 * M_PI;
  VecR alpha(3);
  alpha << 0.0, 0.1, 0.3;
  auto [te, ts] = sls_relaxation_times(alpha, wr);

  CHECK(te[0] == Catch::Approx(1.0 / wr).epsilon(1e-15));
  CHECK(ts[0] == Catch::Approx(1.0 / wr).epsilon(1e-15));
  for (int i = 0; i < 3; ++i) {
    CHECK(te[i] * ts[i] * wr * wr == Catch::Approx(1.0).epsilon(1e-14));
    CHECK(te[i] >= ts[i]);
  }
  // mpmath, 50 digits: alpha = 0.1, omega_r = 20 pi
  CHECK(te[1] == Catch::Approx(0.017586423256520169175).epsilon(1e-15));
  CHECK(ts[1] == Catch::Approx(0.014403324394682262459).epsilon(1e-15));
}

TEST_CASE("SLS forward: lossless limit and frozen high-precision values") {
  const Grid2D g(2, 2, 1.0);
  const double wr = 20.0 * M_PI;

  AttenuationPair lossless(g, VecR::Constant(4, 2000.0), VecR::Zero(4));
  for (double w : {0.5 * wr, wr, 3.0 * wr}) {
    const ComplexField m = sls_forward(lossless, {w, wr});
    CHECK(std::abs(m.values[0] - Complex(2.5e-7, 0.0)) <= 1e-21);
  }

  // mpmath, 50 digits: v = 2000, alpha = 0.066, omega_r = 20 pi
  AttenuationPair p(g, VecR::Constant(4, 2000.0), VecR::Constant(4, 0.066));
  const ComplexField m_ref = sls_forward(p, {wr, wr});
  CHECK(std::abs(m_ref.values[0]) == Catch::Approx(2.5027165864892855782e-7).epsilon(1e-14));
  CHECK(std::arg(m_ref.values[0]) == Catch::Approx(-0.065904417689837450732).epsilon(1e-13));
  const ComplexField m12 = sls_forward(p, {24.0 * M_PI, wr});
  CHECK(m12.values[0].real() == Catch::Approx(2.4679742402065707324e-7).epsilon(1e-14));
  CHECK(m12.values[0].imag() == Catch::Approx(-1.602160326429183623e-8).epsilon(1e-13));
}

TEST_CASE("SLS inverse: trivial branches and roundtrips") {
  const Grid2D g(2, 2, 1.0);
  const double wr = 20.0 * M_PI;

  // real positive m -> (1/sqrt(m), 0)
  const ComplexField real_m = ComplexField::constant(g, Complex(2.5e-7, 0.0));
  const AttenuationPair out = sls_inverse(real_m, {wr, wr});
  CHECK(out.v[0] == Catch::Approx(2000.0).epsilon(1e-13));
  CHECK(out.alpha[0] == 0.0);

  // omega = omega_r: alphahat = Im(1/m)/Re(1/m)
  const Complex m0(3.0e-7, -2.0e-8);
  const Complex inv = 1.0 / m0;
  const AttenuationPair loc = sls_inverse(ComplexField::constant(g, m0), {wr, wr});
  CHECK(loc.alpha[0] == Catch::Approx(inv.imag() / inv.real()).epsilon(1e-14));

  const AttenuationPair p = random_pair(Grid2D(10, 10, 1.0));
  const FrequencySpec f(1.2 * wr, wr);
  const AttenuationPair back = sls_inverse(sls_forward(p, f), f);
  CHECK(rel_err(back.v, p.v) <= 1e-10);
  CHECK((back.alpha - p.alpha).norm() <= 1e-10 * (1.0 + p.alpha.norm()));

  CHECK_THROWS_AS(sls_inverse(ComplexField::constant(g, Complex(-1.0, 0.0)), f), ExtractionError);
}

TEST_CASE("KF and SLS agree exactly when alpha = 0") {
  const Grid2D g(4, 4, 1.0);
  AttenuationPair p(g, VecR::Constant(16, 2345.0), VecR::Zero(16));
  for (double ratio : {0.3, 1.0, 2.7}) {
    const FrequencySpec f(ratio * 20.0 * M_PI, 20.0 * M_PI);
    const ComplexField mk = kf_forward(p, f);
    const ComplexField ms = sls_forward(p, f);
    CHECK((mk.values - ms.values).norm() <= 1e-20);
  }
}

TEST_CASE("piecewise band models: trivial bands and the staircase oracle") {
  const Grid2D g(1, 2, 1.0);
  const double wr = 20.0 * M_PI;
  AttenuationPair p(g, VecR::Constant(2, 2000.0), VecR::Constant(2, 0.066));

  // single batch holding only omega_r reproduces the forward mapping there
  const auto single = piecewise_band_models(p, {{wr}}, wr, AttenuationModelKind::SLS);
  CHECK((single[0].values - sls_forward(p, {wr, wr}).values).norm() == 0.0);

  // alpha = 0: every band model equals 1/v^2
  AttenuationPair lossless(g, VecR::Constant(2, 2000.0), VecR::Zero(2));
  const auto bands0 = piecewise_band_models(lossless, {{wr}, {2 * wr, 3 * wr}}, wr,
                                            AttenuationModelKind::KF);
  for (const auto& b : bands0)
    CHECK(std::abs(b.values[0] - Complex(2.5e-7, 0.0)) <= 1e-21);

  CHECK_THROWS_AS(piecewise_band_models(p, {}, wr, AttenuationModelKind::KF),
                  std::invalid_argument);
  CHECK_THROWS_AS(piecewise_band_models(p, {{wr}, {}}, wr, AttenuationModelKind::KF),
                  std::invalid_argument);

  // 1 Hz bands over 1-20 Hz: per-band local extraction equals the exact
  // dispersion curve at band centres (construction identity).
  std::vector<std::vector<double>> batches;
  for (int f0 = 1; f0 < 20; ++f0)
    batches.push_back({2 * M_PI * f0, 2 * M_PI * (f0 + 1.0)});
  for (auto kind : {AttenuationModelKind::KF, AttenuationModelKind::SLS}) {
    const auto bands = piecewise_band_models(p, batches, wr, kind);
    for (size_t b = 0; b < bands.size(); ++b) {
      const double wc = 2 * M_PI * (b + 1.5);
      const ComplexField exact = attenuation_forward(kind, p, {wc, wr});
      auto [vb, ab] = local_dispersion_pair(bands[b]);
      auto [ve, ae] = local_dispersion_pair(exact);
      CHECK(std::abs(vb[0] - ve[0]) <= 1e-12 * ve[0]);
      CHECK(std::abs(ab[0] - ae[0]) <= 1e-12 * (1.0 + std::abs(ae[0])));
    }
  }
}

TEST_CASE("roundtrip property over a frequency sweep") {
  const Grid2D g(8, 8, 1.0);
  const double wr = 2 * M_PI * 10.0;
  const AttenuationPair p = random_pair(g, 1500, 4500, 0.0, 0.2);
  for (double fratio : {0.11, 0.5, 1.0, 1.9, 6.0}) {
    const FrequencySpec f(fratio * wr, wr);
    for (auto kind : {AttenuationModelKind::KF, AttenuationModelKind::SLS}) {
      const AttenuationPair back = attenuation_inverse(kind, attenuation_forward(kind, p, f), f);
      CHECK(rel_err(back.v, p.v) <= 1e-10);
      CHECK((back.alpha - p.alpha).norm() <= 1e-10 * p.alpha.norm());
    }
  }
}

#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <random>

#include "vwfi/gradient.hpp"
#include "vwfi/grid.hpp"
#include "vwfi/io.hpp"

using namespace vwfi;

namespace {

std::mt19937_64 rng(20240817);

VecC random_complex(int n) {
  std::normal_distribution<double> g;
  VecC v(n);
  for (int i = 0; i < n; ++i) v[i] = Complex(g(rng), g(rng));
  return v;
}

}  // namespace

TEST_CASE("Grid2D validates its invariants") {
  CHECK_THROWS_AS(Grid2D(0, 4, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(Grid2D(1, 1, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(Grid2D(4, 4, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(Grid2D(4, 4, -1.0), std::invalid_argument);
  const Grid2D g(3, 5, 0.5);
  CHECK(g.n() == 15);
  CHECK(g.index(2, 1) == 5);  // column-major, z fastest
  CHECK(g.iz_of(5) == 2);
  CHECK(g.ix_of(5) == 1);
  CHECK_NOTHROW(Grid2D(500, 1, 1.0));  // degenerate 1-D grid allowed
}

TEST_CASE("gradients of a constant field vanish") {
  const Grid2D g(6, 7, 0.25);
  const VecC c = VecC::Constant(g.n(), Complex(2.5, -1.0));
  CHECK(grad_x(g, c).norm() == 0.0);
  CHECK(grad_z(g, c).norm() == 0.0);
  CHECK(tv_norm(g, c) == 0.0);
}

TEST_CASE("ramp along x has unit grad_x except on the boundary column") {
  const Grid2D g(4, 6, 1.0);
  VecC f(g.n());
  for (int ix = 0; ix < g.nx; ++ix)
    for (int iz = 0; iz < g.nz; ++iz) f[g.index(iz, ix)] = Complex(ix, 0.0);
  const VecC gx = grad_x(g, f);
  for (int ix = 0; ix < g.nx; ++ix)
    for (int iz = 0; iz < g.nz; ++iz) {
      const double expect = (ix + 1 < g.nx) ? 1.0 : 0.0;
      CHECK(gx[g.index(iz, ix)] == Complex(expect, 0.0));
    }
}

TEST_CASE("gradient adjoints satisfy the dot-product identity") {
  auto dot = [](const VecC& a, const VecC& b) { return a.dot(b); };  // conj(a).b
  for (auto [nz, nx] : {std::pair{2, 2}, {5, 3}, {8, 8}, {1, 12}, {9, 1}}) {
    const Grid2D g(nz, nx, 0.7);
    for (int trial = 0; trial < 10; ++trial) {
      const VecC u = random_complex(g.n());
      const VecC v = random_complex(g.n());
      const Complex lhs_x = dot(grad_x(g, u), v);
      const Complex rhs_x = dot(u, grad_x_adjoint(g, v));
      const Complex lhs_z = dot(grad_z(g, u), v);
      const Complex rhs_z = dot(u, grad_z_adjoint(g, v));
      const double scale = u.norm() * v.norm();
      REQUIRE(std::abs(lhs_x - rhs_x) <= 1e-12 * scale);
      REQUIRE(std::abs(lhs_z - rhs_z) <= 1e-12 * scale);
    }
  }
}

TEST_CASE("adjoint of zero is zero and grad^T grad is positive semidefinite") {
  const Grid2D g(7, 5, 1.3);
  CHECK(grad_x_adjoint(g, VecC(VecC::Zero(g.n()))).norm() == 0.0);
  CHECK(grad_z_adjoint(g, VecC(VecC::Zero(g.n()))).norm() == 0.0);
  for (int trial = 0; trial < 20; ++trial) {
    const VecC f = random_complex(g.n());
    const Complex qx = f.dot(grad_x_adjoint(g, grad_x(g, f)));
    const Complex qz = f.dot(grad_z_adjoint(g, grad_z(g, f)));
    CHECK(qx.real() >= -1e-12 * f.squaredNorm());
    CHECK(qz.real() >= -1e-12 * f.squaredNorm());
    CHECK(std::abs(qx.imag()) <= 1e-12 * f.squaredNorm());
  }
}

TEST_CASE("sparse gradient matrices match the operator functions") {
  const Grid2D g(5, 6, 0.8);
  const SpMatR dx = grad_x_matrix(g), dz = grad_z_matrix(g);
  const VecC f = random_complex(g.n());
  CHECK((VecC(dx * f) - grad_x(g, f)).norm() <= 1e-15 * f.norm());
  CHECK((VecC(dz * f) - grad_z(g, f)).norm() <= 1e-15 * f.norm());
  CHECK((VecC(dx.transpose() * f) - grad_x_adjoint(g, f)).norm() <= 1e-15 * f.norm());
}

TEST_CASE("tv_norm of a unit step across one column boundary") {
  // 0 | 1 step along x on a unit-spacing grid: the only nonzero gradient is
  // the column just left of the jump, one unit per row.
  const Grid2D g(4, 6, 1.0);
  VecC f(g.n());
  for (int ix = 0; ix < g.nx; ++ix)
    for (int iz = 0; iz < g.nz; ++iz) f[g.index(iz, ix)] = Complex(ix >= 3 ? 1.0 : 0.0, 0.0);
  CHECK(tv_norm(g, f) == Catch::Approx(4.0).margin(1e-14));
}

TEST_CASE("tv_norm properties: phase invariance, homogeneity, zero iff constant") {
  const Grid2D g(6, 6, 0.5);
  const VecC f = random_complex(g.n());
  const double tv = tv_norm(g, f);

  const Complex phase = std::polar(1.0, 1.234);
  CHECK(tv_norm(g, VecC(phase * f)) == Catch::Approx(tv).epsilon(1e-13));

  const Complex c(2.0, -3.0);
  CHECK(tv_norm(g, VecC(c * f)) == Catch::Approx(std::abs(c) * tv).epsilon(1e-13));

  CHECK(tv_norm(g, VecC(VecC::Constant(g.n(), Complex(3.0, 4.0)))) == 0.0);
  CHECK(tv > 0.0);  // random field is almost surely nonconstant
}

TEST_CASE("complex field views round-trip through polar form") {
  const Grid2D g(5, 4, 1.0);
  ComplexField f(g, random_complex(g.n()));
  f.values[3] = Complex(0.0, 0.0);  // phase of an exact zero is defined as 0
  const VecR mag = f.magnitude();
  const VecR ph = f.phase();
  CHECK(ph[3] == 0.0);
  const ComplexField back = ComplexField::from_polar(g, mag, ph);
  for (int i = 0; i < g.n(); ++i)
    CHECK(std::abs(back.values[i] - f.values[i]) <= 1e-14 * (1.0 + std::abs(f.values[i])));
}

TEST_CASE("dimension mismatches are rejected") {
  const Grid2D g(4, 4, 1.0);
  const VecC wrong = VecC::Zero(7);
  CHECK_THROWS_AS(grad_x(g, wrong), std::invalid_argument);
  CHECK_THROWS_AS(grad_z_adjoint(g, wrong), std::invalid_argument);
  CHECK_THROWS_AS(ComplexField(g, wrong), std::invalid_argument);
}

TEST_CASE("VWF1 round-trips real and complex fields") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "vwfi_io_test";
  fs::create_directories(dir);

  const Grid2D g(5, 7, 25.0);
  const VecC zc = random_complex(g.n());
  write_field((dir / "c.vwf").string(), g, zc);
  const LoadedField lc = read_field((dir / "c.vwf").string());
  REQUIRE(lc.is_complex);
  REQUIRE(lc.grid == g);
  CHECK((lc.values - zc).norm() == 0.0);

  const VecR zr = zc.real();
  write_field((dir / "r.vwf").string(), g, zr);
  const LoadedField lr = read_field((dir / "r.vwf").string());
  REQUIRE(!lr.is_complex);
  CHECK((lr.values.real() - zr).norm() == 0.0);

  write_csv((dir / "r.csv").string(), g, zr);
  CHECK(fs::file_size(dir / "r.csv") > 0);
  fs::remove_all(dir);
}

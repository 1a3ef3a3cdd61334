#pragma once

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <variant>

#include "vwfi/grid.hpp"

namespace vwfi {

// VWF1 field files: a 32-byte text header "VWF1 <nz> <nx> <h> <R|C>\n"
// (space-padded before the final newline) followed by little-endian 64-bit
// floats, row after row, (re, im) interleaved for complex fields.

static_assert(std::endian::native == std::endian::little,
              "field files are little-endian; big-endian hosts are not supported");

namespace detail {

inline std::string field_header(const Grid2D& g, bool complex_values) {
  char h[64];
  const int len = std::snprintf(h, sizeof h, "VWF1 %d %d %.17g %c", g.nz, g.nx, g.h,
                                complex_values ? 'C' : 'R');
  if (len < 0 || len > 31)
    throw std::invalid_argument("field header does not fit in 32 bytes");
  std::string out(h, static_cast<size_t>(len));
  out.resize(31, ' ');
  out.push_back('\n');
  return out;
}

}  // namespace detail

inline void write_field(const std::string& path, const Grid2D& g, const VecR& v) {
  check_field(g, v.size(), "write_field");
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  f << detail::field_header(g, false);
  for (int iz = 0; iz < g.nz; ++iz)
    for (int ix = 0; ix < g.nx; ++ix) {
      const double d = v[g.index(iz, ix)];
      f.write(reinterpret_cast<const char*>(&d), sizeof d);
    }
  if (!f) throw std::runtime_error("write failed: " + path);
}

inline void write_field(const std::string& path, const Grid2D& g, const VecC& v) {
  check_field(g, v.size(), "write_field");
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  f << detail::field_header(g, true);
  for (int iz = 0; iz < g.nz; ++iz)
    for (int ix = 0; ix < g.nx; ++ix) {
      const Complex z = v[g.index(iz, ix)];
      const double re = z.real(), im = z.imag();
      f.write(reinterpret_cast<const char*>(&re), sizeof re);
      f.write(reinterpret_cast<const char*>(&im), sizeof im);
    }
  if (!f) throw std::runtime_error("write failed: " + path);
}

inline void write_field(const std::string& path, const RealField& f) {
  write_field(path, f.grid, f.values);
}
inline void write_field(const std::string& path, const ComplexField& f) {
  write_field(path, f.grid, f.values);
}

struct LoadedField {
  Grid2D grid;
  bool is_complex = false;
  VecC values;  // imaginary part zero for real files

  RealField as_real() const { return {grid, values.real()}; }
  ComplexField as_complex() const { return {grid, values}; }
};

inline LoadedField read_field(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path);
  char header[32];
  f.read(header, 32);
  if (!f || std::memcmp(header, "VWF1 ", 5) != 0 || header[31] != '\n')
    throw std::runtime_error(path + ": not a VWF1 field file");
  std::istringstream hs(std::string(header + 5, 26));
  int nz = 0, nx = 0;
  double h = 0;
  char kind = 0;
  hs >> nz >> nx >> h >> kind;
  if (!hs || (kind != 'R' && kind != 'C'))
    throw std::runtime_error(path + ": malformed VWF1 header");
  LoadedField out;
  out.grid = Grid2D(nz, nx, h);
  out.is_complex = (kind == 'C');
  out.values.resize(out.grid.n());
  for (int iz = 0; iz < nz; ++iz)
    for (int ix = 0; ix < nx; ++ix) {
      double re = 0, im = 0;
      f.read(reinterpret_cast<char*>(&re), sizeof re);
      if (out.is_complex) f.read(reinterpret_cast<char*>(&im), sizeof im);
      out.values[out.grid.index(iz, ix)] = Complex(re, im);
    }
  if (!f) throw std::runtime_error(path + ": truncated field data");
  return out;
}

/// CSV export, one line per grid row (fixed z), for plotting.
inline void write_csv(const std::string& path, const Grid2D& g, const VecR& v) {
  check_field(g, v.size(), "write_csv");
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  f.precision(17);
  for (int iz = 0; iz < g.nz; ++iz) {
    for (int ix = 0; ix < g.nx; ++ix)
      f << (ix ? "," : "") << v[g.index(iz, ix)];
    f << '\n';
  }
}

}  // namespace vwfi

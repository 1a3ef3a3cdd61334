#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace vwfi {

/// Linear-solver failure (singular factorisation, residual above tolerance).
struct SolverError : std::runtime_error {
  explicit SolverError(const std::string& what) : std::runtime_error(what) {}
};

/// Physical-parameter extraction failed at one or more cells.
struct ExtractionError : std::runtime_error {
  std::vector<int> cells;  // offending cell indices (column-major)
  ExtractionError(const std::string& what, std::vector<int> bad)
      : std::runtime_error(what + " (" + std::to_string(bad.size()) + " cells, first at " +
                           (bad.empty() ? std::string("-") : std::to_string(bad.front())) + ")"),
        cells(std::move(bad)) {}
};

/// Invalid experiment configuration or config file.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace vwfi

#pragma once

#include <complex>
#include <stdexcept>
#include <string>

namespace rie {

using cplx = std::complex<double>;

constexpr double kPi = 3.14159265358979323846;

/// Thrown when an iterative solver fails to reach its tolerance.
class SolverError : public std::runtime_error {
  public:
    SolverError(const std::string& what, double residual)
        : std::runtime_error(what + " (residual " + std::to_string(residual) + ")"),
          residual_(residual) {}

    double residual() const { return residual_; }

  private:
    double residual_;
};

inline bool is_finite(cplx z) { return std::isfinite(z.real()) && std::isfinite(z.imag()); }

} // namespace rie

#pragma once

#include <algorithm>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "rie/types.hpp"

namespace rie {

/// Observed singular values of S together with the matrix dimensions.
struct SingularSpectrum {
    Eigen::VectorXd gammas;  // nonincreasing, length min(n, m)
    int n = 0;               // rows
    int m = 0;               // cols

    SingularSpectrum() = default;

    SingularSpectrum(Eigen::VectorXd g, int rows, int cols) : gammas(std::move(g)), n(rows), m(cols) {
        if (n <= 0 || m <= 0) throw std::invalid_argument("SingularSpectrum: bad dimensions");
        if (gammas.size() != std::min(n, m))
            throw std::invalid_argument("SingularSpectrum: need min(n,m) singular values");
        std::sort(gammas.data(), gammas.data() + gammas.size(), std::greater<double>());
        if (gammas.size() > 0 && gammas(gammas.size() - 1) < 0.0)
            throw std::invalid_argument("SingularSpectrum: negative singular value");
    }

    double alpha() const { return static_cast<double>(n) / m; }
    int modes() const { return static_cast<int>(gammas.size()); }
};

/// Cauchy-kernel evaluators for the symmetrized limiting law of S.
/// Queries are pure; the default offset follows z = x - i sqrt(1/(2N)).
class SpectralEvaluator {
  public:
    static constexpr double kEdgeDensityFloor = 1e-4;

    explicit SpectralEvaluator(SingularSpectrum spectrum, double eta = 0.0)
        : spectrum_(std::move(spectrum)),
          eta_(eta > 0.0 ? eta : std::sqrt(1.0 / (2.0 * spectrum_.n))) {}

    const SingularSpectrum& spectrum() const { return spectrum_; }
    double eta() const { return eta_; }

    /// (1/2K) sum_k [ 1/(z - gamma_k) + 1/(z + gamma_k) ].
    cplx stieltjes(cplx z) const {
        if (z.imag() == 0.0)
            throw std::domain_error("SpectralEvaluator::stieltjes: need Im(z) != 0");
        cplx acc = 0.0;
        const auto& g = spectrum_.gammas;
        for (Eigen::Index k = 0; k < g.size(); ++k)
            acc += 1.0 / (z - g(k)) + 1.0 / (z + g(k));
        return acc / (2.0 * static_cast<double>(g.size()));
    }

    cplx z_at(double x) const { return cplx(x, -eta_); }

    struct DensityHilbert {
        double density = 0.0;
        double hilbert = 0.0;
        bool edge = false;
    };

    DensityHilbert density_and_hilbert(double x) const {
        const cplx g = stieltjes(z_at(x));
        DensityHilbert out;
        out.density = g.imag() / kPi;
        out.hilbert = g.real() / kPi;
        out.edge = out.density < kEdgeDensityFloor;
        return out;
    }

    /// Bandwidth tied to the mean level spacing: factor * (range / K), never
    /// below the sqrt(1/(2N)) default. Wide spectra need this to keep
    /// per-mode kernel queries out of the single-spacing regime.
    static double spacing_bandwidth(const SingularSpectrum& s, double factor) {
        const int k = s.modes();
        const double base = std::sqrt(1.0 / (2.0 * s.n));
        if (k < 2 || factor <= 0.0) return base;
        return std::max(base, factor * (s.gammas(0) - s.gammas(k - 1)) / (k - 1));
    }

  private:
    SingularSpectrum spectrum_;
    double eta_;
};

/// One singular value per line; blank lines and '#' comments are skipped.
inline std::vector<double> load_spectrum_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_spectrum_file: cannot open " + path);
    std::vector<double> values;
    std::string line;
    while (std::getline(in, line)) {
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') continue;
        std::istringstream ss(line);
        double v;
        if (!(ss >> v)) throw std::runtime_error("load_spectrum_file: bad line: " + line);
        values.push_back(v);
    }
    if (values.empty()) throw std::runtime_error("load_spectrum_file: empty file " + path);
    return values;
}

} // namespace rie

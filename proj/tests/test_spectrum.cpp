#include <catch2/catch.hpp>

#include <fstream>

#include "rie/ensembles.hpp"
#include "rie/spectrum.hpp"
#include "rie/transforms.hpp"

using namespace rie;
using Catch::Detail::Approx;

namespace {

SingularSpectrum gaussian_spectrum(int n, int m, uint64_t seed) {
    const Eigen::MatrixXd y = sample_y(GaussianIIDPrior{}, n, m, seed);
    Eigen::BDCSVD<Eigen::MatrixXd> svd(y);
    return SingularSpectrum(svd.singularValues(), n, m);
}

// Sup distance between the kernel estimate and the closed-form symmetrized
// transform of the Gaussian singular law, over the central bulk.
double kernel_sup_error(const SingularSpectrum& spec, double eta) {
    SpectralEvaluator ev(spec, eta);
    const Measure law = Measure::gaussian_singular(spec.alpha());
    const int k = spec.modes();
    double sup = 0.0;
    for (int i = k / 20; i < k - k / 20; i += std::max(1, k / 200)) {
        const cplx z = ev.z_at(spec.gammas(i));
        sup = std::max(sup, std::abs(ev.stieltjes(z) - symmetrized_stieltjes_of(law, z)));
    }
    return sup;
}

} // namespace

TEST_CASE("singular spectrum construction") {
    Eigen::VectorXd g(3);
    g << 0.5, 2.0, 1.0;
    const SingularSpectrum spec(g, 3, 5);
    REQUIRE(spec.gammas(0) == 2.0);  // sorted nonincreasing
    REQUIRE(spec.gammas(2) == 0.5);
    REQUIRE(spec.alpha() == Approx(0.6));
    REQUIRE_THROWS_AS(SingularSpectrum(g, 4, 5), std::invalid_argument);
    Eigen::VectorXd bad(3);
    bad << 1.0, -0.1, 0.5;
    REQUIRE_THROWS_AS(SingularSpectrum(bad, 3, 5), std::invalid_argument);
}

TEST_CASE("kernel stieltjes") {
    SECTION("single atom matches the two-pole sum") {
        Eigen::VectorXd g(1);
        g << 1.0;
        SpectralEvaluator ev(SingularSpectrum(g, 1, 1), 0.01);
        const cplx z(2.0, -0.01);
        const cplx expect = 0.5 * (1.0 / (z - 1.0) + 1.0 / (z + 1.0));
        REQUIRE(std::abs(ev.stieltjes(z) - expect) < 1e-15);
    }

    SECTION("odd in z and Schwarz-reflected") {
        SpectralEvaluator ev(gaussian_spectrum(200, 400, 5), 0.05);
        const cplx z(1.3, -0.05);
        REQUIRE(std::abs(ev.stieltjes(-z) + ev.stieltjes(z)) < 1e-15);
        REQUIRE(std::abs(ev.stieltjes(std::conj(z)) - std::conj(ev.stieltjes(z))) < 1e-15);
    }

    SECTION("real z rejected") {
        SpectralEvaluator ev(gaussian_spectrum(50, 100, 6), 0.05);
        REQUIRE_THROWS_AS(ev.stieltjes(cplx(1.0, 0.0)), std::domain_error);
    }

    SECTION("default eta follows sqrt(1/(2N))") {
        SpectralEvaluator ev(gaussian_spectrum(200, 400, 7));
        REQUIRE(ev.eta() == Approx(std::sqrt(1.0 / 400.0)));
    }
}

TEST_CASE("density and hilbert estimates") {
    const SingularSpectrum spec = gaussian_spectrum(1000, 2000, 11);
    SpectralEvaluator ev(spec);

    SECTION("symmetrization parity") {
        const auto plus = ev.density_and_hilbert(1.2);
        const auto minus = ev.density_and_hilbert(-1.2);
        REQUIRE(plus.density == Approx(minus.density).margin(1e-14));
        REQUIRE(plus.hilbert == Approx(-minus.hilbert).margin(1e-14));
    }

    SECTION("bulk median matches the closed-form density within 5%") {
        const double x = spec.gammas(spec.modes() / 2);
        const Measure law = Measure::gaussian_singular(0.5);
        // Symmetrized density is half the singular density at |x|.
        const double expect = 0.5 * law.density(x);
        REQUIRE(ev.density_and_hilbert(x).density == Approx(expect).epsilon(0.05));
    }

    SECTION("far outside the support the density is tiny") {
        REQUIRE(ev.density_and_hilbert(25.0).density < 1e-3);
    }

    SECTION("density estimate integrates to about one") {
        const double hi = spec.gammas(0) + 1.0;
        const int steps = 4000;
        double acc = 0.0;
        for (int i = 0; i <= steps; ++i) {
            const double x = -hi + 2.0 * hi * i / steps;
            acc += ev.density_and_hilbert(x).density * ((i == 0 || i == steps) ? 0.5 : 1.0);
        }
        acc *= 2.0 * hi / steps;
        REQUIRE(acc == Approx(1.0).margin(0.02));
    }
}

TEST_CASE("kernel error shrinks with N") {
    const double e500 = kernel_sup_error(gaussian_spectrum(500, 1000, 3), 0.0);
    const double e1000 = kernel_sup_error(gaussian_spectrum(1000, 2000, 3), 0.0);
    const double e2000 = kernel_sup_error(gaussian_spectrum(2000, 4000, 3), 0.0);
    REQUIRE(e2000 < e500);
    REQUIRE(e1000 < 1.5 * e500);  // monotone within noise
    REQUIRE(e1000 < 0.04);
}

TEST_CASE("spectrum file loader") {
    const std::string path = "/tmp/rie_spectrum_test.txt";
    {
        std::ofstream out(path);
        out << "# singular values\n2.0\n\n1.0\n0.5\n";
    }
    const auto values = load_spectrum_file(path);
    REQUIRE(values == std::vector<double>{2.0, 1.0, 0.5});
    REQUIRE_THROWS(load_spectrum_file("/tmp/does_not_exist_rie.txt"));
}

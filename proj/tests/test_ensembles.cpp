#include <catch2/catch.hpp>

#include <Eigen/Eigenvalues>
#include <cstdio>

#include "rie/ensembles.hpp"
#include "rie/rng.hpp"

using namespace rie;
using Catch::Detail::Approx;

namespace {

// Kolmogorov-Smirnov distance between sorted samples and a law's CDF built
// by quadrature of its closed-form density.
double ks_distance(Eigen::VectorXd samples, const Measure& law) {
    std::sort(samples.data(), samples.data() + samples.size());
    auto [lo, hi] = law.support();
    double ks = 0.0;
    for (int i = 0; i < samples.size(); ++i) {
        const double x = samples(i);
        // CDF(x) by trapezoid on [lo, x].
        double cdf = 0.0;
        if (x >= hi) cdf = 1.0;
        else if (x > lo) {
            const int steps = 400;
            const double h = (x - lo) / steps;
            for (int s = 0; s <= steps; ++s)
                cdf += law.density(lo + s * h) * ((s == 0 || s == steps) ? 0.5 : 1.0);
            cdf *= h;
        }
        ks = std::max(ks, std::abs(cdf - (i + 0.5) / samples.size()));
    }
    return ks;
}

} // namespace

TEST_CASE("counter rng") {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) REQUIRE(a.next_u64() == b.next_u64());
    Rng x = Rng(42).stream(1), y = Rng(42).stream(2);
    REQUIRE(x.next_u64() != y.next_u64());
    Rng g(7);
    double mean = 0.0, var = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double v = g.next_gaussian();
        mean += v;
        var += v * v;
    }
    mean /= n;
    var = var / n - mean * mean;
    REQUIRE(mean == Approx(0.0).margin(0.01));
    REQUIRE(var == Approx(1.0).margin(0.02));
}

TEST_CASE("haar orthogonal sampling") {
    SECTION("dim one gives a sign") {
        Rng rng(3);
        const Eigen::MatrixXd q = haar_orthogonal(1, rng);
        REQUIRE(std::abs(std::abs(q(0, 0)) - 1.0) < 1e-14);
    }

    SECTION("orthogonality at dim 200") {
        Rng rng(5);
        const Eigen::MatrixXd q = haar_orthogonal(200, rng);
        const Eigen::MatrixXd err = q.transpose() * q - Eigen::MatrixXd::Identity(200, 200);
        REQUIRE(err.cwiseAbs().maxCoeff() < 1e-10);
    }

    SECTION("first-column moments match the uniform sphere") {
        const int dim = 50, draws = 1000;
        Rng rng(11);
        double mean = 0.0, second = 0.0;
        for (int d = 0; d < draws; ++d) {
            const Eigen::MatrixXd q = haar_stiefel(dim, 1, rng);
            mean += q.col(0).sum();
            second += q.col(0).squaredNorm();
        }
        const double n_entries = static_cast<double>(dim) * draws;
        mean /= n_entries;
        second /= n_entries;  // exactly 1/dim per draw by normalization
        const double sigma_mean = std::sqrt(1.0 / dim / n_entries);
        REQUIRE(std::abs(mean) < 3.0 * sigma_mean);
        REQUIRE(second == Approx(1.0 / dim).margin(1e-12));
    }
}

TEST_CASE("x samplers") {
    SECTION("wigner eigenvalues stay within the finite-size edge") {
        const Eigen::MatrixXd x = sample_x(WignerSymPrior{}, 1000, 21);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(x, Eigen::EigenvaluesOnly);
        REQUIRE(eig.eigenvalues().minCoeff() > -2.2);
        REQUIRE(eig.eigenvalues().maxCoeff() < 2.2);
    }

    SECTION("wishart spectrum is Marchenko-Pastur") {
        const Eigen::MatrixXd x = sample_x(WishartPrior{0.25}, 1000, 22);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(x, Eigen::EigenvaluesOnly);
        REQUIRE(ks_distance(eig.eigenvalues(), Measure::marchenko_pastur(0.25)) < 0.05);
    }

    SECTION("bernoulli spectral prior is idempotent") {
        const Eigen::MatrixXd x = sample_x(BernoulliSpectralHaarPrior{0.5}, 300, 23);
        REQUIRE((x * x - x).cwiseAbs().maxCoeff() < 1e-10);
    }

    SECTION("sqrt wishart squares back to wishart-distributed spectrum") {
        const Eigen::MatrixXd x = sample_x(SqrtWishartPrior{0.25}, 400, 24);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(x * x, Eigen::EigenvaluesOnly);
        REQUIRE(ks_distance(eig.eigenvalues(), Measure::marchenko_pastur(0.25)) < 0.08);
    }
}

TEST_CASE("y samplers") {
    SECTION("prescribed singular values are exact") {
        const Eigen::MatrixXd y =
            sample_y(HaarWithSingularsPrior{Measure::uniform_singular(1.0, 3.0)}, 200, 400, 31);
        Eigen::BDCSVD<Eigen::MatrixXd> svd(y);
        REQUIRE(svd.singularValues().maxCoeff() < 3.0 + 1e-10);
        REQUIRE(svd.singularValues().minCoeff() > 1.0 - 1e-10);
    }

    SECTION("gaussian squared singular law is Marchenko-Pastur") {
        const Eigen::MatrixXd y = sample_y(GaussianIIDPrior{}, 1000, 2000, 32);
        Eigen::BDCSVD<Eigen::MatrixXd> svd(y);
        const Eigen::VectorXd squared = svd.singularValues().array().square();
        REQUIRE(ks_distance(squared, Measure::marchenko_pastur(0.5)) < 0.05);
    }

    SECTION("bernoulli-rademacher zero fraction") {
        const Eigen::MatrixXd y = sample_y(BernoulliRademacherPrior{0.9}, 1000, 2000, 33);
        const double zeros = (y.array() == 0.0).count() / 2.0e6;
        REQUIRE(zeros == Approx(0.9).margin(0.01));
    }

    SECTION("factor spectra stay order one") {
        const Eigen::MatrixXd y = sample_y(GaussianIIDPrior{}, 500, 1000, 34);
        Eigen::BDCSVD<Eigen::MatrixXd> svd(y);
        auto [lo, hi] = Measure::gaussian_singular(0.5).support();
        REQUIRE(svd.singularValues().maxCoeff() < hi * 1.1);
    }
}

TEST_CASE("synthesize") {
    EnsembleSpec spec;
    spec.n = 200;
    spec.m = 400;
    spec.seed = 99;

    SECTION("kappa zero reduces to the noise") {
        spec.kappa = 0.0;
        const auto inst = synthesize(spec);
        REQUIRE((inst.s - inst.w).cwiseAbs().maxCoeff() == 0.0);
    }

    SECTION("same seed is bit-identical, different seed is not") {
        spec.kappa = 1.0;
        const auto a = synthesize(spec);
        const auto b = synthesize(spec);
        REQUIRE((a.s - b.s).cwiseAbs().maxCoeff() == 0.0);
        spec.seed = 100;
        const auto c = synthesize(spec);
        REQUIRE((a.s - c.s).cwiseAbs().maxCoeff() > 0.0);
    }

    SECTION("signal and noise powers add") {
        spec.n = 500;
        spec.m = 1000;
        spec.kappa = 1.0;
        const auto inst = synthesize(spec);
        const double lhs = inst.s.squaredNorm() / spec.n;
        const double rhs = inst.w.squaredNorm() / spec.n + (inst.x * inst.y).squaredNorm() / spec.n;
        REQUIRE(lhs == Approx(rhs).epsilon(0.2));
    }

    SECTION("model identity holds to machine precision") {
        spec.kappa = 2.5;
        const auto inst = synthesize(spec);
        const Eigen::MatrixXd recon = std::sqrt(2.5) * inst.x * inst.y + inst.w;
        REQUIRE((inst.s - recon).cwiseAbs().maxCoeff() < 1e-14);
    }
}

TEST_CASE("binary instance container") {
    EnsembleSpec spec;
    spec.n = 20;
    spec.m = 30;
    spec.kappa = 1.0;
    spec.seed = 5;
    const auto inst = synthesize(spec);
    const std::string path = "/tmp/rie_instance_test.bin";
    save_instance(inst, path);
    const auto loaded = load_instance(path);
    REQUIRE((loaded.x - inst.x).cwiseAbs().maxCoeff() == 0.0);
    REQUIRE((loaded.y - inst.y).cwiseAbs().maxCoeff() == 0.0);
    REQUIRE((loaded.w - inst.w).cwiseAbs().maxCoeff() == 0.0);
    REQUIRE((loaded.s - inst.s).cwiseAbs().maxCoeff() == 0.0);
    std::remove(path.c_str());
}

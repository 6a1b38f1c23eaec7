#include <catch2/catch.hpp>

#include <Eigen/Eigenvalues>

#include "rie/ensembles.hpp"
#include "rie/evaluate.hpp"
#include "rie/newton.hpp"
#include "rie/rie_x.hpp"

using namespace rie;
using Catch::Detail::Approx;

namespace {

struct Prepared {
    ObservationInstance inst;
    ObservationSVD svd;
    SpectralEvaluator ev;
};

Prepared prepare(XPrior xp, int n, int m, double kappa, uint64_t seed) {
    EnsembleSpec spec;
    spec.x_prior = xp;
    spec.n = n;
    spec.m = m;
    spec.kappa = kappa;
    spec.seed = seed;
    ObservationInstance inst = synthesize(spec);
    ObservationSVD svd = observation_svd(inst.s);
    SpectralEvaluator ev(svd.spectrum());
    return {std::move(inst), std::move(svd), std::move(ev)};
}

double pearson(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    const Eigen::VectorXd ac = a.array() - a.mean();
    const Eigen::VectorXd bc = b.array() - b.mean();
    return ac.dot(bc) / (ac.norm() * bc.norm());
}

} // namespace

TEST_CASE("x saddle-point parameters") {
    const auto p = prepare(WishartPrior{0.25}, 400, 800, 1.0, 3);
    const Measure gauss = Measure::gaussian_singular(0.5);
    const double alpha = 0.5;

    SECTION("gaussian closed form has zeta1 = zeta3") {
        const cplx z = p.ev.z_at(p.svd.gammas(100));
        const XParams params = solve_x_params(p.ev, gauss, gauss, z, alpha);
        REQUIRE(params.gaussian_closed_form);
        REQUIRE(params.zeta1 == params.zeta3);
        const cplx gs = p.ev.stieltjes(z);
        REQUIRE(std::abs(params.zeta1 - (gs + (1.0 - alpha) / (alpha * z))) < 1e-14);
    }

    SECTION("general solver reproduces the closed form") {
        for (int mode : {40, 200, 350}) {
            const cplx z = p.ev.z_at(p.svd.gammas(mode));
            const XParams closed = solve_x_params(p.ev, gauss, gauss, z, alpha);
            const XParams general = solve_x_params(p.ev, gauss, gauss, z, alpha, true);
            REQUIRE(std::abs(closed.zeta1 - general.zeta1) < 1e-9);
            REQUIRE(std::abs(closed.zeta3 - general.zeta3) < 1e-9);
        }
    }

    SECTION("p1, p2 are tied to the data transform") {
        const cplx z = p.ev.z_at(p.svd.gammas(57));
        const cplx gs = p.ev.stieltjes(z);
        const XParams params = solve_x_params(gs, z, gauss, gauss, alpha);
        REQUIRE(params.p1 == gs);
        REQUIRE(std::abs(params.p2 - (alpha * gs + (1.0 - alpha) / z)) < 1e-15);
    }
}

TEST_CASE("self-consistent zeta for Wigner X with gaussian noise") {
    // The scalar reduction z/zeta - 1 - 1/u = R_{X^2}(u), u = zeta^2 +
    // (1 - 1/alpha) zeta / z with R_{X^2}(u) = 1/(1-u) pins down the
    // limiting transform. Solve it independently, reconstruct G from the
    // root, and check the production solver lands on the same point.
    const double alpha = 0.5;
    const auto p = prepare(WignerSymPrior{}, 600, 1200, 1.0, 9);
    const Measure gauss = Measure::gaussian_singular(alpha);

    auto relation_residual = [&](cplx zeta, cplx z) {
        const cplx u = zeta * zeta + (1.0 - 1.0 / alpha) * zeta / z;
        return z / zeta - 1.0 - 1.0 / u - 1.0 / (1.0 - u);
    };

    for (int mode : {100, 300, 480}) {
        const double gamma = p.svd.gammas(mode);
        const cplx z = p.ev.z_at(gamma);
        const cplx seed = p.ev.stieltjes(z) + (1.0 - alpha) / (alpha * z);
        const NewtonResult sol = complex_newton([&](cplx zeta) { return relation_residual(zeta, z); }, seed);
        REQUIRE(sol.converged);
        // Kernel estimate should be near the self-consistent point.
        REQUIRE(std::abs(seed - sol.root) < 0.05);

        const cplx gs_theory = sol.root - (1.0 - alpha) / (alpha * z);
        const XParams params = solve_x_params(gs_theory, z, gauss, gauss, alpha, true);
        REQUIRE(std::abs(relation_residual(params.zeta1, z)) < 1e-6);
        REQUIRE(std::abs(params.zeta1 - sol.root) < 1e-8);
        REQUIRE(std::abs(params.zeta3 - sol.root) < 1e-8);
    }
}

TEST_CASE("estimate_x") {
    const Measure gauss = Measure::gaussian_singular(0.5);

    SECTION("symmetric prior gives the zero estimator") {
        const auto p = prepare(WignerSymPrior{}, 200, 400, 1.0, 5);
        const XEstimate est = estimate_x(p.ev, Measure::semicircle(), gauss, gauss, 1.0, 0.5);
        REQUIRE(est.xi.cwiseAbs().maxCoeff() < 1e-10);
    }

    SECTION("kappa must be positive") {
        const auto p = prepare(WishartPrior{0.25}, 60, 120, 1.0, 6);
        REQUIRE_THROWS_AS(
            estimate_x(p.ev, Measure::marchenko_pastur(0.25), gauss, gauss, 0.0, 0.5),
            std::invalid_argument);
    }

    SECTION("tracks the oracle at moderate SNR") {
        const std::vector<std::pair<XPrior, Measure>> priors = {
            {WishartPrior{0.25}, Measure::marchenko_pastur(0.25)},
            {ShiftedWignerPrior{3.0}, Measure::shifted_wigner(3.0)},
        };
        for (const auto& [prior, rho] : priors) {
            const auto p = prepare(prior, 500, 1000, 2.0, 7);
            SpectralEvaluator ev(p.svd.spectrum(),
                                 SpectralEvaluator::spacing_bandwidth(p.svd.spectrum(), 16.0));
            const XEstimate est = estimate_x(ev, rho, gauss, gauss, 2.0, 0.5);
            const Eigen::VectorXd oracle = oracle_x(p.svd, p.inst.x).xi;
            REQUIRE(pearson(est.xi, oracle) > 0.99);
            const double mse_est = mse_from_modes(est.xi, oracle, p.inst.x.squaredNorm());
            const double mse_oracle = mse_from_modes(oracle, oracle, p.inst.x.squaredNorm());
            REQUIRE(mse_oracle <= mse_est + 1e-12);
        }
    }

    SECTION("estimates are real and finite") {
        const auto p = prepare(ShiftedWignerPrior{3.0}, 300, 600, 1.0, 8);
        const XEstimate est = estimate_x(p.ev, Measure::shifted_wigner(3.0), gauss, gauss, 1.0, 0.5);
        REQUIRE(est.xi.allFinite());
    }

    SECTION("all-edge spectrum raises an estimation error") {
        const auto p = prepare(WishartPrior{0.25}, 60, 120, 1.0, 10);
        SpectralEvaluator flat(p.svd.spectrum(), 1e8);  // density ~ 1/(pi eta) ~ 0
        REQUIRE_THROWS_AS(
            estimate_x(flat, Measure::marchenko_pastur(0.25), gauss, gauss, 1.0, 0.5), SolverError);
    }
}

TEST_CASE("estimate_x2 and the psd square root") {
    const Measure gauss = Measure::gaussian_singular(0.5);

    SECTION("limit formula vanishes at the symbolic point") {
        REQUIRE(x2_eigenvalue_gaussian_limit(1.7, 1.0, 0.0, 1.0, 1.0) == Approx(0.0).margin(1e-15));
    }

    SECTION("closed-form zeta path equals the forced general path") {
        const auto p = prepare(WishartPrior{0.25}, 400, 800, 1.0, 11);
        const XEstimate closed = estimate_x2(p.ev, gauss, gauss, 1.0, 0.5);
        const XEstimate general = estimate_x2(p.ev, gauss, gauss, 1.0, 0.5, true);
        REQUIRE((*closed.xi2 - *general.xi2).cwiseAbs().maxCoeff() < 1e-8);
    }

    SECTION("boundary-limit formula agrees up to the eta bias") {
        const auto p = prepare(WishartPrior{0.25}, 600, 1200, 1.0, 12);
        const XEstimate est = estimate_x2(p.ev, gauss, gauss, 1.0, 0.5);
        const int mode = 300;
        const auto dh = p.ev.density_and_hilbert(p.svd.gammas(mode));
        const double limit = x2_eigenvalue_gaussian_limit(p.svd.gammas(mode), kPi * dh.density,
                                                          kPi * dh.hilbert, 1.0, 0.5);
        REQUIRE((*est.xi2)(mode) == Approx(limit).epsilon(0.08));
    }

    SECTION("square root clamps negatives and counts them") {
        XEstimate est;
        est.xi2 = Eigen::VectorXd(4);
        *est.xi2 << 0.0, 1.0, 4.0, -0.3;
        const XEstimate rooted = sqrt_psd_estimate(est);
        REQUIRE(rooted.xi(0) == 0.0);
        REQUIRE(rooted.xi(1) == 1.0);
        REQUIRE(rooted.xi(2) == 2.0);
        REQUIRE(rooted.xi(3) == 0.0);
        REQUIRE(rooted.clamped_negative == 1);
        REQUIRE_THROWS_AS(sqrt_psd_estimate(XEstimate{}), std::invalid_argument);
    }

    SECTION("psd square root is close to but above the direct estimator") {
        double mse_sqrt = 0.0, mse_rie = 0.0;
        for (uint64_t seed : {41, 42}) {
            const auto p = prepare(WishartPrior{0.25}, 1000, 2000, 1.0, seed);
            SpectralEvaluator ev(p.svd.spectrum(),
                                 SpectralEvaluator::spacing_bandwidth(p.svd.spectrum(), 16.0));
            const Measure rho = Measure::marchenko_pastur(0.25);
            const XEstimate direct = estimate_x(ev, rho, gauss, gauss, 1.0, 0.5);
            const XEstimate rooted = sqrt_psd_estimate(estimate_x2(ev, gauss, gauss, 1.0, 0.5));
            const Eigen::VectorXd oracle = oracle_x(p.svd, p.inst.x).xi;
            const double xn = p.inst.x.squaredNorm();
            mse_rie += mse_from_modes(direct.xi, oracle, xn) / xn / 2.0;
            mse_sqrt += mse_from_modes(rooted.xi, oracle, xn) / xn / 2.0;
        }
        REQUIRE(mse_sqrt == Approx(0.0733).margin(0.008));
        REQUIRE(mse_sqrt > mse_rie);
    }

    SECTION("wishart x2 error at kappa = 1 reproduces the benchmark value") {
        double acc = 0.0;
        for (uint64_t seed : {13, 14}) {
            const auto p = prepare(WishartPrior{0.25}, 1000, 2000, 1.0, seed);
            const XEstimate est = estimate_x2(p.ev, gauss, gauss, 1.0, 0.5);
            const Eigen::MatrixXd x2 = p.inst.x * p.inst.x;
            const Eigen::VectorXd oracle = oracle_x(p.svd, x2).xi;
            acc += mse_from_modes(*est.xi2, oracle, x2.squaredNorm()) / x2.squaredNorm();
        }
        REQUIRE(acc / 2.0 == Approx(0.173).margin(0.012));
    }
}

TEST_CASE("x overlap theory") {
    const auto p = prepare(WignerSymPrior{}, 500, 1000, 1.0, 15);
    const Measure gauss = Measure::gaussian_singular(0.5);
    const int mode = 150;
    const cplx z = p.ev.z_at(p.svd.gammas(mode));
    const cplx gs = p.ev.stieltjes(z);
    const XParams params = solve_x_params(gs, z, gauss, gauss, 0.5);
    const double density = gs.imag() / kPi;

    SECTION("even in lambda") {
        for (double lam : {0.3, 1.1, 1.9})
            REQUIRE(overlap_x_theory(params, lam, density) ==
                    Approx(overlap_x_theory(params, -lam, density)).margin(1e-15));
    }

    SECTION("normalizes over the spectrum of X") {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(p.inst.x, Eigen::EigenvaluesOnly);
        double acc = 0.0;
        for (int j = 0; j < p.svd.n; ++j)
            acc += overlap_x_theory(params, eig.eigenvalues()(j), density);
        REQUIRE(acc / p.svd.n == Approx(1.0).margin(0.04));
    }
}

TEST_CASE("rotation covariance of the x estimator") {
    const auto p = prepare(WishartPrior{0.25}, 100, 200, 1.0, 17);
    const Measure gauss = Measure::gaussian_singular(0.5);
    const Measure rho = Measure::marchenko_pastur(0.25);

    Rng rng(18);
    const Eigen::MatrixXd q = haar_orthogonal(100, rng);
    const Eigen::MatrixXd v = haar_orthogonal(200, rng);
    const Eigen::MatrixXd rotated = q * p.inst.s * v.transpose();

    const ObservationSVD svd_rot = observation_svd(rotated);
    SpectralEvaluator ev_rot(svd_rot.spectrum());

    const XEstimate base = estimate_x(p.ev, rho, gauss, gauss, 1.0, 0.5);
    const XEstimate rot = estimate_x(ev_rot, rho, gauss, gauss, 1.0, 0.5);

    const Eigen::MatrixXd lhs = assemble_x(svd_rot.u, rot.xi);
    const Eigen::MatrixXd rhs = q * assemble_x(p.svd.u, base.xi) * q.transpose();
    REQUIRE((lhs - rhs).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("alpha greater than one") {
    const double alpha = 2.0;
    const Measure gauss = Measure::gaussian_singular(alpha);
    const auto p = prepare(WishartPrior{0.25}, 600, 300, 1.0, 19);

    SECTION("gaussian closed form is G/alpha") {
        const cplx z = p.ev.z_at(p.svd.gammas(100));
        const XParams params = solve_x_params(p.ev, gauss, gauss, z, alpha);
        REQUIRE(std::abs(params.zeta1 - p.ev.stieltjes(z) / alpha) < 1e-14);
        REQUIRE(params.zeta1 == params.zeta3);
        const XParams general = solve_x_params(p.ev, gauss, gauss, z, alpha, true);
        REQUIRE(std::abs(general.zeta3 - params.zeta3) < 1e-9);
    }

    SECTION("null modes share one eigenvalue and the estimate tracks the oracle") {
        SpectralEvaluator ev(p.svd.spectrum(),
                             SpectralEvaluator::spacing_bandwidth(p.svd.spectrum(), 4.0));
        const XEstimate est =
            estimate_x(ev, Measure::marchenko_pastur(0.25), gauss, gauss, 1.0, alpha);
        REQUIRE(est.xi.size() == 600);
        for (int i = 301; i < 600; ++i) REQUIRE(est.xi(i) == est.xi(300));
        const Eigen::VectorXd oracle = oracle_x(p.svd, p.inst.x).xi;
        REQUIRE(pearson(est.xi.head(300), oracle.head(300)) > 0.85);
        const double mse_est = mse_from_modes(est.xi, oracle, p.inst.x.squaredNorm());
        REQUIRE(mse_from_modes(oracle, oracle, p.inst.x.squaredNorm()) <= mse_est + 1e-12);
    }
}

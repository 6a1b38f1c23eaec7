#pragma once

#include <optional>
#include <vector>

#include <Eigen/Core>

#include "rie/measure.hpp"
#include "rie/spectrum.hpp"
#include "rie/transforms.hpp"
#include "rie/types.hpp"

namespace rie {

/// Saddle-point parameters of the X channel at one spectral point.
struct XParams {
    cplx z{};
    cplx zeta1{}, zeta2{}, zeta3{};
    cplx p1{}, p2{}, p3{};
    double alpha = 1.0;
    double residual = 0.0;
    int iterations = 0;
    bool gaussian_closed_form = false;
};

struct XEstimate {
    Eigen::VectorXd xi;                   // length N, ordered like the left singular vectors
    std::optional<Eigen::VectorXd> xi2;   // estimates for X^2 when requested
    std::vector<bool> edge_flags;         // per bulk mode
    std::vector<XParams> params_per_mode; // bulk modes only
    double max_residual = 0.0;
    int clamped_negative = 0;             // negative xi2 clamped by the PSD square root
};

namespace detail {

inline bool matches_gaussian_shortcut(const Measure& m, double alpha) {
    if (m.kind() != Measure::Kind::GaussianIIDSingular) return false;
    const double expect = alpha <= 1.0 ? 1.0 / alpha : 1.0;
    return std::abs(m.second_moment() - expect) < 1e-12;
}

} // namespace detail

/// Solves for (zeta1, zeta2, zeta3) at z given gs = G_{mu_S}(z). Gaussian
/// mu_Y, mu_W collapse to the closed form; otherwise zeta3 comes from a
/// damped fixed point with the rectangular R-transform inside.
inline XParams solve_x_params(cplx gs, cplx z, const Measure& mu_y, const Measure& mu_w,
                              double alpha, bool force_general = false) {
    XParams out;
    out.z = z;
    out.alpha = alpha;

    const bool below = alpha <= 1.0;
    const double ratio = below ? alpha : 1.0 / alpha;
    const double pref = below ? 1.0 : 1.0 / alpha;

    if (below) {
        out.p1 = gs;
        out.p2 = alpha * gs + (1.0 - alpha) / z;
        out.zeta2 = alpha * z * (z * gs - 1.0) / (alpha * z * gs + 1.0 - alpha);
    } else {
        out.p1 = gs / alpha + (1.0 - 1.0 / alpha) / z;
        out.p2 = gs;
        out.zeta2 = z - 1.0 / gs;
    }

    const bool gaussian =
        detail::matches_gaussian_shortcut(mu_y, alpha) && detail::matches_gaussian_shortcut(mu_w, alpha);
    const cplx zeta_gauss = below ? gs + (1.0 - alpha) / (alpha * z) : gs / alpha;

    if (gaussian && !force_general) {
        out.zeta1 = out.zeta3 = zeta_gauss;
        out.gaussian_closed_form = true;
        out.p3 = ((z - out.zeta1) * out.p1 - 1.0) / out.zeta3;
        return out;
    }

    out.zeta1 = pref * rect_c_transform(mu_w, ratio, out.p1 * out.p2) / out.p1;
    const cplx d = (z - out.zeta1) * out.p1 - 1.0;

    // The consistency equation d = pref * C_Y(p2 d / zeta3) inverts exactly:
    // with C = M o H^{-1} it says M(u) = d/pref and H(u) = p2 d / zeta3,
    // hence u = M^{-1}(d/pref) and zeta3 = p2 d / (u T(d/pref)).
    if (mu_y.kind() == Measure::Kind::GaussianIIDSingular && !force_general) {
        // Linear C: zeta3 = pref * m2 * p2 for any variance scale.
        out.zeta3 = pref * mu_y.second_moment() * out.p2;
    } else {
        const cplx target = d / pref;
        const cplx u = rect_moment_inverse(mu_y, target);
        out.zeta3 = out.p2 * d / (u * detail::rect_T(ratio, target));
        out.residual = std::abs(detail::rect_moment_gen(mu_y, u) - target);
        if (out.residual > 1e-8)
            throw SolverError("solve_x_params: zeta3 consistency equation failed", out.residual);
    }
    out.p3 = d / out.zeta3;
    return out;
}

inline XParams solve_x_params(const SpectralEvaluator& ev, const Measure& mu_y, const Measure& mu_w,
                              cplx z, double alpha, bool force_general = false) {
    return solve_x_params(ev.stieltjes(z), z, mu_y, mu_w, alpha, force_general);
}

/// Rescaled mean-squared overlap between the i-th left singular vector of S
/// (at singular value gamma, density mu_bar) and an eigenvector of X at
/// eigenvalue lambda.
inline double overlap_x_theory(const XParams& params, double lambda, double mu_bar_density) {
    const double pref = params.alpha <= 1.0 ? 1.0 : params.alpha;
    const cplx denom = params.z - params.zeta1 - params.zeta3 * lambda * lambda;
    return pref / (kPi * mu_bar_density) * (1.0 / denom).imag();
}

namespace detail {

/// Substitutes the nearest non-edge value into edge-flagged bulk modes.
/// Modes are sorted by gamma, so index distance is the natural metric.
inline void substitute_edges(Eigen::VectorXd& xi, const std::vector<bool>& edge, int k) {
    std::vector<int> dist(k, -1);
    std::vector<int> source(k, -1);
    for (int i = 0; i < k; ++i)
        if (!edge[i]) { dist[i] = 0; source[i] = i; }
    bool any_good = false;
    for (int i = 0; i < k; ++i) any_good |= dist[i] == 0;
    if (!any_good) throw SolverError("estimate: every mode is edge-flagged", 1.0);
    for (int i = 1; i < k; ++i)
        if (dist[i - 1] >= 0 && (dist[i] < 0 || dist[i - 1] + 1 < dist[i])) {
            dist[i] = dist[i - 1] + 1;
            source[i] = source[i - 1];
        }
    for (int i = k - 2; i >= 0; --i)
        if (dist[i + 1] >= 0 && (dist[i] < 0 || dist[i + 1] + 1 < dist[i])) {
            dist[i] = dist[i + 1] + 1;
            source[i] = source[i + 1];
        }
    for (int i = 0; i < k; ++i)
        if (edge[i]) xi(i) = xi(source[i]);
}

struct XModeContext {
    cplx z, gs;
    double pi_mu;  // Im G(z) = pi * density
    bool edge;
};

inline XModeContext x_mode_context(const SpectralEvaluator& ev, double gamma) {
    XModeContext ctx;
    ctx.z = ev.z_at(gamma);
    ctx.gs = ev.stieltjes(ctx.z);
    ctx.pi_mu = ctx.gs.imag();
    ctx.edge = ctx.pi_mu / kPi < SpectralEvaluator::kEdgeDensityFloor;
    return ctx;
}

} // namespace detail

/// Explicit RIE for X: per-mode optimal eigenvalues from the saddle-point
/// parameters and the Stieltjes transform of rho_X. For alpha > 1 the N - M
/// null modes share the z -> -i0+ value.
inline XEstimate estimate_x(const SpectralEvaluator& ev, const Measure& rho_x, const Measure& mu_y,
                            const Measure& mu_w, double kappa, double alpha,
                            bool force_general = false) {
    if (!(kappa > 0.0)) throw std::invalid_argument("estimate_x: kappa must be positive");
    const auto& spec = ev.spectrum();
    const int k = spec.modes();
    const int n = spec.n;

    XEstimate est;
    est.xi = Eigen::VectorXd::Zero(n);
    est.edge_flags.assign(k, false);

    if (rho_x.is_symmetric()) {
        // G_{rho_X} is odd, so the paired Stieltjes terms cancel identically.
        est.params_per_mode.resize(0);
        return est;
    }

    const double pref = alpha <= 1.0 ? 1.0 : alpha;
    auto mode_value = [&](const XParams& params, double pi_weight) {
        const cplx u = (params.z - params.zeta1) / (kappa * params.zeta3);
        const cplx root = std::sqrt(u);
        const cplx sum = rho_x.stieltjes(root) + rho_x.stieltjes(-root);
        return (sum / params.zeta3).imag() / (2.0 * kappa * pi_weight);
    };

    est.params_per_mode.reserve(k);
    for (int i = 0; i < k; ++i) {
        const auto ctx = detail::x_mode_context(ev, spec.gammas(i));
        XParams params = solve_x_params(ctx.gs, ctx.z, mu_y, mu_w, alpha, force_general);
        est.max_residual = std::max(est.max_residual, params.residual);
        est.edge_flags[i] = ctx.edge;
        est.xi(i) = pref * mode_value(params, ctx.pi_mu);
        est.params_per_mode.push_back(params);
    }
    detail::substitute_edges(est.xi, est.edge_flags, k);

    if (n > k) {
        // Null modes sit on the delta mass of the hermitized spectrum at 0:
        // the z -> -i0+ limit carries the Poisson weight 1/eta instead of
        // pi mu_S(gamma), so the bracket is rescaled by eta.
        const double eta0 = std::min(ev.eta(), std::sqrt(1.0 / (2.0 * n)));
        const cplx z0(0.0, -eta0);
        XParams params = solve_x_params(ev.stieltjes(z0), z0, mu_y, mu_w, alpha, force_general);
        const double value = alpha / (alpha - 1.0) * mode_value(params, 1.0 / eta0);
        for (int i = k; i < n; ++i) est.xi(i) = value;
    }
    return est;
}

/// RIE for X^2; needs mu_Y and mu_W but not rho_X.
inline XEstimate estimate_x2(const SpectralEvaluator& ev, const Measure& mu_y, const Measure& mu_w,
                             double kappa, double alpha, bool force_general = false) {
    if (!(kappa > 0.0)) throw std::invalid_argument("estimate_x2: kappa must be positive");
    const auto& spec = ev.spectrum();
    const int k = spec.modes();
    const int n = spec.n;

    XEstimate est;
    est.xi = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd xi2 = Eigen::VectorXd::Zero(n);
    est.edge_flags.assign(k, false);
    est.params_per_mode.reserve(k);

    const double pref = alpha <= 1.0 ? 1.0 : alpha;
    for (int i = 0; i < k; ++i) {
        const auto ctx = detail::x_mode_context(ev, spec.gammas(i));
        XParams params = solve_x_params(ctx.gs, ctx.z, mu_y, mu_w, alpha, force_general);
        est.max_residual = std::max(est.max_residual, params.residual);
        est.edge_flags[i] = ctx.edge;
        xi2(i) = pref * params.p3.imag() / (kappa * ctx.pi_mu);
        est.params_per_mode.push_back(params);
    }
    detail::substitute_edges(xi2, est.edge_flags, k);

    if (n > k) {
        // Same delta-mass weighting as in estimate_x.
        const double eta0 = std::min(ev.eta(), std::sqrt(1.0 / (2.0 * n)));
        const cplx z0(0.0, -eta0);
        XParams params = solve_x_params(ev.stieltjes(z0), z0, mu_y, mu_w, alpha, force_general);
        const double value = alpha / (alpha - 1.0) * eta0 * params.p3.imag() / kappa;
        for (int i = k; i < n; ++i) xi2(i) = value;
    }
    est.xi2 = std::move(xi2);
    return est;
}

/// The z -> gamma - i0+ limit of the Gaussian X^2 eigenvalue formula,
/// expressed through the boundary density and Hilbert transform.
inline double x2_eigenvalue_gaussian_limit(double gamma, double pi_mu, double pi_h, double kappa,
                                           double alpha) {
    const double shifted = pi_h + (1.0 - alpha) / (alpha * gamma);
    return (1.0 / kappa) * (-1.0 + 1.0 / (alpha * (pi_mu * pi_mu + shifted * shifted)));
}

/// Sub-optimal PSD estimator: element-wise sqrt of the X^2 estimate,
/// clamping (and counting) negative inputs.
inline XEstimate sqrt_psd_estimate(const XEstimate& est) {
    if (!est.xi2) throw std::invalid_argument("sqrt_psd_estimate: xi2 missing");
    XEstimate out = est;
    out.clamped_negative = 0;
    out.xi.resize(est.xi2->size());
    for (Eigen::Index i = 0; i < est.xi2->size(); ++i) {
        const double v = (*est.xi2)(i);
        if (v < 0.0) ++out.clamped_negative;
        out.xi(i) = std::sqrt(std::max(0.0, v));
    }
    return out;
}

/// U diag(xi) U^T.
inline Eigen::MatrixXd assemble_x(const Eigen::MatrixXd& u, const Eigen::VectorXd& xi) {
    if (u.cols() != xi.size()) throw std::invalid_argument("assemble_x: size mismatch");
    return u * xi.asDiagonal() * u.transpose();
}

} // namespace rie

#pragma once

#include <array>
#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "rie/measure.hpp"
#include "rie/rie_x.hpp"
#include "rie/spectrum.hpp"
#include "rie/transforms.hpp"
#include "rie/types.hpp"

namespace rie {

/// Saddle-point parameters of the Y channel at one spectral point.
struct YParams {
    cplx z{};
    cplx beta1{}, beta2{}, beta3{}, beta4{};
    cplx q1{}, q2{}, q3{}, q4{};
    cplx Z1{}, Z2{};
    double alpha = 1.0;
    double residual = 0.0;
    int iterations = 0;
    bool cubic_path = false;
    bool symmetric_zero = false;
};

struct YEstimate {
    Eigen::VectorXd xi;  // length min(N, M)
    std::vector<bool> edge_flags;
    std::vector<YParams> params_per_mode;
    double max_residual = 0.0;
    int negative_count = 0;  // nonnegativity is not guaranteed; counted, not clamped
};

namespace detail {

inline std::pair<cplx, cplx> y_data_params(cplx gs, cplx z, double alpha) {
    if (alpha <= 1.0) return {gs, alpha * gs + (1.0 - alpha) / z};
    return {gs / alpha + (1.0 - 1.0 / alpha) / z, gs};
}

inline cplx cubic_eval(cplx x, double c, cplx e) {
    return 2.0 * x * x * x + 3.0 * c * x * x + (c * c + 2.0 - e) * x - c * (e - 1.0);
}

} // namespace detail

/// Closed-form q4 for shifted-Wigner X (R(z) = z + c) and Gaussian W: the
/// selected Cardano root of 2x^3 + 3cx^2 + (c^2+2-E)x - c(E-1) = 0 with
/// E = (z - q2/alpha) q1. All three cube-root branches are checked against
/// the cubic; the principal one is kept unless it lands on Im q4 < 0.
inline cplx q4_cubic(cplx gs, cplx z, double c, double alpha) {
    const auto [q1, q2] = detail::y_data_params(gs, z, alpha);
    const cplx e = (z - q2 / alpha) * q1;
    const cplx a = -e;
    const cplx t = 12.0 - 3.0 * c * c + 6.0 * a;
    const cplx b = -216.0 * c * a + 4.0 * std::sqrt(4.0 * t * t * t + 54.0 * 54.0 * c * c * a * a);

    std::array<cplx, 3> roots;
    int n_roots = 0;
    if (std::abs(b) > 1e-300) {
        const cplx r0 = std::exp(std::log(b) / 3.0);
        const cplx omega(-0.5, std::sqrt(3.0) / 2.0);
        cplx r = r0;
        for (int k = 0; k < 3; ++k, r *= omega) roots[n_roots++] = -c / 2.0 - t / (3.0 * r) + r / 12.0;
    } else {
        roots[n_roots++] = -c / 2.0;  // degenerate: triple-root configuration
    }

    const double tol = 1e-8;
    int best = -1;
    double best_resid = 1e300;
    for (int k = 0; k < n_roots; ++k) {
        const double resid = std::abs(detail::cubic_eval(roots[k], c, e));
        if (resid < best_resid) {
            best_resid = resid;
            if (resid < tol) best = best < 0 ? k : best;
        }
    }
    if (best_resid >= tol && best < 0)
        throw SolverError("q4_cubic: no cube-root branch satisfies the cubic", best_resid);
    // Principal branch is the selected root; when it lands on the wrong side
    // of the axis, fall back to the passing branch with the largest Im q4
    // (mirrored for Re z < 0, where the odd extension flips the sign).
    const double side = z.real() >= 0.0 ? 1.0 : -1.0;
    cplx chosen = roots[0];
    if (std::abs(detail::cubic_eval(chosen, c, e)) >= tol || side * chosen.imag() < -1e-9) {
        double best_im = -1e300;
        bool found = false;
        for (int k = 0; k < n_roots; ++k) {
            if (std::abs(detail::cubic_eval(roots[k], c, e)) >= tol) continue;
            if (side * roots[k].imag() > best_im) {
                best_im = side * roots[k].imag();
                chosen = roots[k];
                found = true;
            }
        }
        if (!found) throw SolverError("q4_cubic: no admissible root", best_resid);
    }
    return chosen;
}

/// Solves the Y saddle-point system at z given gs = G_{mu_S}(z). Symmetric
/// rho_X short-circuits to beta4 = q4 = 0; shifted-Wigner X with Gaussian W
/// delegates to the cubic; anything else runs a damped fixed point on
/// (q3, q4) seeded from the X = I solution.
inline YParams solve_y_params(cplx gs, cplx z, const Measure& rho_x, const Measure& mu_w,
                              double alpha, bool force_general = false,
                              const std::optional<std::pair<cplx, cplx>>& init = std::nullopt) {
    YParams out;
    out.z = z;
    out.alpha = alpha;
    const bool below = alpha <= 1.0;
    const double ratio = below ? alpha : 1.0 / alpha;
    const double pref = below ? 1.0 : 1.0 / alpha;
    std::tie(out.q1, out.q2) = detail::y_data_params(gs, z, alpha);

    const cplx cw = pref * rect_c_transform(mu_w, ratio, out.q1 * out.q2);
    const cplx beta1_noise = cw / out.q1;
    out.beta2 = (below ? alpha : 1.0) * cw / (pref * out.q2);

    if (rho_x.is_symmetric()) {
        out.symmetric_zero = true;
        out.beta1 = beta1_noise;
        out.beta3 = 0.0;
        out.beta4 = 0.0;
        out.q3 = 0.0;
        out.q4 = 0.0;
        out.Z1 = (z - out.beta1) * (z - out.beta2);
        out.Z2 = 0.0;
        return out;
    }

    const bool cubic_ok = rho_x.kind() == Measure::Kind::ShiftedWignerEig &&
                          detail::matches_gaussian_shortcut(mu_w, alpha) && !force_general;
    if (cubic_ok) {
        const double c = rho_x.shift();
        out.q4 = q4_cubic(gs, z, c, alpha);
        const cplx w = z - out.q2 / alpha;
        out.q3 = w * out.q4 / (2.0 * out.q4 + c);
        out.beta4 = out.q4 + c;
        out.beta1 = out.q2 / alpha + out.q3;
        out.beta3 = out.q1;
        out.cubic_path = true;
        const cplx e = w * out.q1;
        out.residual = std::abs(detail::cubic_eval(out.q4, c, e));
    } else {
        // F maps (q3, q4) through (beta1, beta4) back to (q3, q4).
        auto apply = [&](cplx q3, cplx q4) {
            const cplx s = std::sqrt(out.q1 * q3);
            const cplx r_plus = r_transform(rho_x, q4 + s);
            const cplx r_minus = r_transform(rho_x, q4 - s);
            const cplx beta4 = 0.5 * (r_plus + r_minus);
            const cplx half_diff = 0.5 * (r_plus - r_minus);
            const cplx beta1 = beta1_noise + (s / out.q1) * half_diff;
            const cplx q3_next = ((z - beta1) * (z - beta1) * out.q1 - (z - beta1)) / (beta4 * beta4);
            const cplx q4_next = ((z - beta1) * out.q1 - 1.0) / beta4;
            return std::array<cplx, 4>{q3_next, q4_next, beta1, beta4};
        };
        auto gap = [](const std::array<cplx, 4>& f, cplx q3, cplx q4) {
            return (std::abs(f[0] - q3) + std::abs(f[1] - q4)) /
                   std::max(1.0, std::abs(q3) + std::abs(q4));
        };

        cplx q3 = (z - beta1_noise) * (z - beta1_noise) * out.q1 - (z - beta1_noise);
        cplx q4 = (z - beta1_noise) * out.q1 - 1.0;
        if (init) {
            q3 = init->first;
            q4 = init->second;
        }
        const double tol = 1e-10;
        const int max_iter = 500;
        double step = 0.5;
        auto f = apply(q3, q4);
        double resid = gap(f, q3, q4);
        int it = 0;
        for (; it < max_iter && resid >= tol; ++it) {
            const cplx q3_try = (1.0 - step) * q3 + step * f[0];
            const cplx q4_try = (1.0 - step) * q4 + step * f[1];
            const auto f_try = apply(q3_try, q4_try);
            const double resid_try = gap(f_try, q3_try, q4_try);
            if (resid_try <= resid || step <= 0.05) {
                q3 = q3_try;
                q4 = q4_try;
                f = f_try;
                resid = resid_try;
                step = std::min(0.5, step * 1.3);
            } else {
                step *= 0.5;  // overshoot: damp harder and retry
            }
            // Newton endgame on g(q3,q4) = F(q3,q4) - (q3,q4).
            if (resid < 1e-3 && resid >= tol) {
                const double h = 1e-7 * std::max(1.0, std::abs(q3) + std::abs(q4));
                const cplx g0 = f[0] - q3, g1 = f[1] - q4;
                const auto fa = apply(q3 + h, q4);
                const auto fb = apply(q3, q4 + h);
                const cplx j00 = (fa[0] - q3 - h - g0) / h, j10 = (fa[1] - q4 - g1) / h;
                const cplx j01 = (fb[0] - q3 - g0) / h, j11 = (fb[1] - q4 - h - g1) / h;
                const cplx det = j00 * j11 - j01 * j10;
                if (std::abs(det) > 1e-14) {
                    const cplx dq3 = (g0 * j11 - g1 * j01) / det;
                    const cplx dq4 = (j00 * g1 - j10 * g0) / det;
                    const cplx q3_n = q3 - dq3, q4_n = q4 - dq4;
                    const auto f_n = apply(q3_n, q4_n);
                    const double resid_n = gap(f_n, q3_n, q4_n);
                    if (resid_n < resid) {
                        q3 = q3_n;
                        q4 = q4_n;
                        f = f_n;
                        resid = resid_n;
                    }
                }
            }
        }
        out.iterations = it;
        out.residual = resid;
        if (resid >= tol)
            throw SolverError("solve_y_params: fixed point did not converge", resid);
        out.q3 = q3;
        out.q4 = q4;
        out.beta1 = f[2];
        out.beta4 = f[3];
        const cplx s = std::sqrt(out.q1 * q3);
        const cplx half_diff =
            0.5 * (r_transform(rho_x, q4 + s) - r_transform(rho_x, q4 - s));
        out.beta3 = (out.q1 / s) * half_diff;
    }
    out.Z1 = (z - out.beta1) * (z - out.beta2);
    out.Z2 = out.beta4 * out.beta4 + out.beta3 * (z - out.beta1);
    return out;
}

inline YParams solve_y_params(const SpectralEvaluator& ev, const Measure& rho_x,
                              const Measure& mu_w, cplx z, double alpha,
                              bool force_general = false) {
    return solve_y_params(ev.stieltjes(z), z, rho_x, mu_w, alpha, force_general);
}

/// Rescaled mean overlap N E[(u^T y_l)(v^T y_r)] between the singular pairs
/// of S (at gamma, density mu_bar) and of Y (at sigma).
inline double overlap_y_theory(const YParams& params, double sigma, double mu_bar_density) {
    if (params.symmetric_zero) return 0.0;
    const double pref = params.alpha <= 1.0 ? 1.0 : params.alpha;
    const cplx val = params.beta4 * sigma / (params.Z1 - params.Z2 * sigma * sigma);
    return pref / (kPi * mu_bar_density) * val.imag();
}

/// Explicit RIE for Y; mu_Y is never needed.
inline YEstimate estimate_y(const SpectralEvaluator& ev, const Measure& rho_x,
                            const Measure& mu_w, double kappa, double alpha,
                            bool force_general = false) {
    const auto& spec = ev.spectrum();
    const int k = spec.modes();
    YEstimate est;
    est.xi = Eigen::VectorXd::Zero(k);
    est.edge_flags.assign(k, false);
    if (rho_x.is_symmetric()) return est;  // all optimal singular values vanish
    if (!(kappa > 0.0)) throw std::invalid_argument("estimate_y: kappa must be positive");

    const double pref = alpha <= 1.0 ? 1.0 : alpha;
    est.params_per_mode.reserve(k);
    std::optional<std::pair<cplx, cplx>> warm;  // previous mode seeds the next
    for (int i = 0; i < k; ++i) {
        const auto ctx = detail::x_mode_context(ev, spec.gammas(i));
        YParams params = solve_y_params(ctx.gs, ctx.z, rho_x, mu_w, alpha, force_general, warm);
        if (!params.cubic_path && !params.symmetric_zero) warm = {{params.q3, params.q4}};
        est.max_residual = std::max(est.max_residual, params.residual);
        est.edge_flags[i] = ctx.edge;
        est.xi(i) = pref * params.q4.imag() / (std::sqrt(kappa) * ctx.pi_mu);
        est.params_per_mode.push_back(params);
    }
    detail::substitute_edges(est.xi, est.edge_flags, k);
    for (int i = 0; i < k; ++i) est.negative_count += est.xi(i) < 0.0;
    return est;
}

/// Denoising RIE for the product X Y as a whole: the X = I reduction of the
/// Y system, requiring only mu_W.
inline YEstimate denoise_xy(const SpectralEvaluator& ev, const Measure& mu_w, double kappa,
                            double alpha) {
    if (!(kappa > 0.0)) throw std::invalid_argument("denoise_xy: kappa must be positive");
    const auto& spec = ev.spectrum();
    const int k = spec.modes();
    const bool below = alpha <= 1.0;
    const double ratio = below ? alpha : 1.0 / alpha;
    const double pref_c = below ? 1.0 : 1.0 / alpha;
    const double pref = below ? 1.0 : alpha;

    YEstimate est;
    est.xi = Eigen::VectorXd::Zero(k);
    est.edge_flags.assign(k, false);
    est.params_per_mode.reserve(k);
    for (int i = 0; i < k; ++i) {
        const auto ctx = detail::x_mode_context(ev, spec.gammas(i));
        YParams params;
        params.z = ctx.z;
        params.alpha = alpha;
        std::tie(params.q1, params.q2) = detail::y_data_params(ctx.gs, ctx.z, alpha);
        const cplx cw = pref_c * rect_c_transform(mu_w, ratio, params.q1 * params.q2);
        params.beta1 = cw / params.q1;
        params.beta2 = (below ? alpha : 1.0) * cw / (pref_c * params.q2);
        params.beta3 = 0.0;
        params.beta4 = 1.0;
        params.q4 = (ctx.z - params.beta1) * params.q1 - 1.0;
        params.q3 = (ctx.z - params.beta1) * params.q4;
        params.Z1 = (ctx.z - params.beta1) * (ctx.z - params.beta2);
        params.Z2 = 1.0;
        est.edge_flags[i] = ctx.edge;
        est.xi(i) = pref * params.q4.imag() / (std::sqrt(kappa) * ctx.pi_mu);
        est.params_per_mode.push_back(params);
    }
    detail::substitute_edges(est.xi, est.edge_flags, k);
    return est;
}

/// Entrywise three-level cutoff used after the RIE on sparse priors: maps to
/// {-1/sqrt(n), 0, +1/sqrt(n)} with thresholds at +-h/sqrt(n).
inline Eigen::MatrixXd threshold_sparse(const Eigen::MatrixXd& est, double h, int n) {
    if (!(h >= 0.0 && h <= 1.0)) throw std::invalid_argument("threshold_sparse: h must be in [0,1]");
    if (n < 1) throw std::invalid_argument("threshold_sparse: bad n");
    const double level = 1.0 / std::sqrt(static_cast<double>(n));
    const double cut = h * level;
    Eigen::MatrixXd out(est.rows(), est.cols());
    for (Eigen::Index j = 0; j < est.cols(); ++j)
        for (Eigen::Index i = 0; i < est.rows(); ++i) {
            const double v = est(i, j);
            out(i, j) = v > cut ? level : (v < -cut ? -level : 0.0);
        }
    return out;
}

/// U [diag(xi) | 0] V^T with the singular vectors of S.
inline Eigen::MatrixXd assemble_y(const Eigen::MatrixXd& u, const Eigen::MatrixXd& v,
                                  const Eigen::VectorXd& xi) {
    const Eigen::Index k = xi.size();
    if (u.cols() < k || v.cols() < k) throw std::invalid_argument("assemble_y: size mismatch");
    return u.leftCols(k) * xi.asDiagonal() * v.leftCols(k).transpose();
}

} // namespace rie

#pragma once

#include <cmath>

#include "rie/measure.hpp"
#include "rie/newton.hpp"
#include "rie/types.hpp"

namespace rie {

inline cplx stieltjes(const Measure& m, cplx z) { return m.stieltjes(z); }

struct PlemeljValues {
    double hilbert = 0.0;  // Re G(x - i eta) / pi
    double density = 0.0;  // Im G(x - i eta) / pi
};

/// Boundary values of the Stieltjes transform at x - i.eta.
inline PlemeljValues plemelj_split(const Measure& m, double x, double eta) {
    if (!(eta > 0.0)) throw std::invalid_argument("plemelj_split: eta must be positive");
    const cplx g = m.stieltjes(cplx(x, -eta));
    return {g.real() / kPi, g.imag() / kPi};
}

/// Numeric R-transform: G is inverted by damped complex Newton seeded at 1/w.
/// A converged root still has to land on the physical sheet (Im zeta opposite
/// to Im w); other preimages are rejected and the solve reseeded.
inline cplx r_transform_numeric(const Measure& m, cplx w) {
    auto f = [&m, w](cplx zeta) { return m.stieltjes(zeta) - w; };
    auto physical = [w](const NewtonResult& res) {
        if (!res.converged) return false;
        if (std::abs(w.imag()) < 1e-12) return true;
        return res.root.imag() * w.imag() < 0.0;
    };
    const cplx nudge(0.0, w.imag() > 0.0 ? -0.5 : 0.5);
    const cplx seeds[] = {1.0 / w, 1.0 / w + m.mean(), 1.0 / w + m.mean() + nudge};
    NewtonResult res;
    for (const cplx& seed : seeds) {
        res = complex_newton(f, seed);
        if (physical(res)) return res.root - 1.0 / w;
    }
    throw SolverError("r_transform: inversion of the Stieltjes transform failed", res.residual);
}

/// R-transform R(w) = G^{-1}(w) - 1/w, preferring closed forms.
inline cplx r_transform(const Measure& m, cplx w) {
    if (m.has_closed_r()) return m.r_closed(w);
    return r_transform_numeric(m, w);
}

namespace detail {

/// Even-moment generating function M(u) = int 1/(1 - t^2 u) d mu - 1,
/// written through the Stieltjes transform of the squared law.
inline cplx rect_moment_gen(const Measure& m, cplx u) {
    if (u == cplx(0.0)) return 0.0;
    return m.squared_stieltjes(1.0 / u) / u - 1.0;
}

inline cplx rect_T(double lambda, cplx v) { return (lambda * v + 1.0) * (v + 1.0); }

inline cplx rect_H(const Measure& m, double lambda, cplx u) {
    return u * rect_T(lambda, rect_moment_gen(m, u));
}

/// Functional inverse of H on the principal sheet (H(u) ~ u near 0),
/// with continuation along the ray t.z when the direct solve stalls.
inline cplx rect_H_inv(const Measure& m, double lambda, cplx z) {
    auto solve_from = [&](cplx target, cplx seed, NewtonResult& res) {
        res = complex_newton([&](cplx u) { return rect_H(m, lambda, u) - target; }, seed);
        return res.converged;
    };
    NewtonResult res;
    if (solve_from(z, z, res)) return res.root;
    cplx u = 0.125 * z;
    for (int k = 1; k <= 8; ++k) {
        const cplx target = (k / 8.0) * z;
        if (!solve_from(target, u, res))
            throw SolverError("rect_c_transform: inversion of H failed", res.residual);
        u = res.root;
    }
    return u;
}

/// Inverse of the quadratic T on the branch through T(0) = 1.
inline cplx rect_T_inv(double lambda, cplx y, cplx anchor) {
    const cplx disc = std::sqrt((lambda + 1.0) * (lambda + 1.0) - 4.0 * lambda * (1.0 - y));
    const cplx v1 = (-(lambda + 1.0) + disc) / (2.0 * lambda);
    const cplx v2 = (-(lambda + 1.0) - disc) / (2.0 * lambda);
    return std::abs(v1 - anchor) <= std::abs(v2 - anchor) ? v1 : v2;
}

} // namespace detail

/// Inverse of the even-moment generating function: solves M(u) = d on the
/// sheet reached from u = 0. Solved as w G_{mu^2}(w) = 1 + d in w = 1/u,
/// which is a resolvent-type inversion seeded from the 1/w asymptotics.
inline cplx rect_moment_inverse(const Measure& m, cplx d) {
    if (d == cplx(0.0)) return 0.0;
    auto f = [&m, d](cplx w) { return w * m.squared_stieltjes(w) - 1.0 - d; };
    const cplx seed = m.second_moment() / d;
    NewtonResult res = complex_newton(f, seed);
    if (!res.converged) {
        // Continue along the ray t.d from the asymptotic regime.
        cplx w = m.second_moment() / (0.0625 * d);
        for (int k = 1; k <= 16; ++k) {
            const cplx target = (k / 16.0) * d;
            res = complex_newton([&m, target](cplx ww) {
                return ww * m.squared_stieltjes(ww) - 1.0 - target;
            }, w);
            if (!res.converged)
                throw SolverError("rect_moment_inverse: inversion of M failed", res.residual);
            w = res.root;
        }
    }
    return 1.0 / res.root;
}

/// Generic rectangular R-transform C^{(lambda)}(z) = T^{-1}(z / H^{-1}(z)).
inline cplx rect_c_generic(const Measure& m, double lambda, cplx z) {
    if (!(lambda > 0.0 && lambda <= 1.0))
        throw std::invalid_argument("rect_c_transform: lambda must be in (0,1]");
    if (z == cplx(0.0)) return 0.0;
    const cplx u = detail::rect_H_inv(m, lambda, z);
    const cplx anchor = detail::rect_moment_gen(m, u);
    const cplx c = detail::rect_T_inv(lambda, z / u, anchor);
    const double resid = std::abs(detail::rect_T(lambda, c) - z / u);
    if (resid > 1e-8 * std::max(1.0, std::abs(z / u)))
        throw SolverError("rect_c_transform: branch selection failed", resid);
    return c;
}

/// Rectangular R-transform with aspect ratio lambda. Gaussian singular laws
/// short-circuit to their linear form m2 * z.
inline cplx rect_c_transform(const Measure& m, double lambda, cplx z) {
    if (!(lambda > 0.0 && lambda <= 1.0))
        throw std::invalid_argument("rect_c_transform: lambda must be in (0,1]");
    if (m.kind() == Measure::Kind::GaussianIIDSingular) {
        const double own = std::min(m.aspect(), 1.0 / m.aspect());
        if (std::abs(own - lambda) > 1e-9)
            throw std::invalid_argument("rect_c_transform: ratio does not match the Gaussian law");
        return m.second_moment() * z;
    }
    return rect_c_generic(m, lambda, z);
}

/// Stieltjes transform of the symmetrized singular law: z G_{mu^2}(z^2).
inline cplx symmetrized_stieltjes_of(const Measure& singular_law, cplx z) {
    return z * singular_law.squared_stieltjes(z * z);
}

} // namespace rie

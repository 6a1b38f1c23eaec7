#pragma once

#include <cmath>
#include <utility>

#include "rie/types.hpp"

namespace rie {

struct NewtonResult {
    cplx root{};
    double residual = 0.0;
    int iterations = 0;
    bool converged = false;
};

/// Damped Newton iteration for a holomorphic scalar equation f(z) = 0.
/// The derivative is taken by central differences; the step is halved
/// until |f| decreases (overshoot control).
template <class F>
NewtonResult complex_newton(F&& f, cplx z0, double tol = 1e-12, int max_iter = 200) {
    NewtonResult out;
    cplx z = z0;
    cplx fz = f(z);
    for (int it = 0; it < max_iter; ++it) {
        out.iterations = it;
        if (std::abs(fz) < tol) {
            out.root = z;
            out.residual = std::abs(fz);
            out.converged = true;
            return out;
        }
        const double h = 1e-7 * std::max(1.0, std::abs(z));
        const cplx df = (f(z + h) - f(z - h)) / (2.0 * h);
        if (!is_finite(df) || std::abs(df) == 0.0) break;
        cplx step = fz / df;
        cplx z_next = z - step;
        cplx f_next = f(z_next);
        int halvings = 0;
        while ((!is_finite(f_next) || std::abs(f_next) > std::abs(fz)) && halvings < 40) {
            step *= 0.5;
            z_next = z - step;
            f_next = f(z_next);
            ++halvings;
        }
        z = z_next;
        fz = f_next;
        if (!is_finite(fz)) break;
    }
    out.root = z;
    out.residual = std::abs(fz);
    out.converged = out.residual < tol;
    return out;
}

} // namespace rie

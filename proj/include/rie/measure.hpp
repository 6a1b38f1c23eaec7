#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <utility>
#include <vector>

#include "rie/types.hpp"

namespace rie {

namespace detail {

/// Nodes/weights of 256-point Gauss-Legendre on [-1,1], computed once.
inline const std::vector<std::pair<double, double>>& gauss_legendre_256() {
    static const std::vector<std::pair<double, double>> table = [] {
        const int n = 256;
        std::vector<std::pair<double, double>> t(n);
        for (int i = 0; i < n; ++i) {
            // Newton refinement of the Chebyshev-based initial guess.
            double x = std::cos(kPi * (i + 0.75) / (n + 0.5));
            double pp = 0.0;
            for (int it = 0; it < 100; ++it) {
                double p0 = 1.0, p1 = 0.0;
                for (int j = 0; j < n; ++j) {
                    double p2 = p1;
                    p1 = p0;
                    p0 = ((2.0 * j + 1.0) * x * p1 - j * p2) / (j + 1.0);
                }
                pp = n * (x * p0 - p1) / (x * x - 1.0);
                double dx = p0 / pp;
                x -= dx;
                if (std::abs(dx) < 1e-15) break;
            }
            t[i] = {x, 2.0 / ((1.0 - x * x) * pp * pp)};
        }
        return t;
    }();
    return table;
}

/// Picks the Nevanlinna branch: Im G opposite in sign to Im z; for real z
/// outside the support the decaying branch (smaller |G|) is the transform.
inline cplx pick_branch(cplx z, cplx g_plus, cplx g_minus) {
    if (std::abs(z.imag()) > 1e-14) {
        const bool plus_ok = g_plus.imag() * z.imag() < 0.0;
        const bool minus_ok = g_minus.imag() * z.imag() < 0.0;
        if (plus_ok && !minus_ok) return g_plus;
        if (minus_ok && !plus_ok) return g_minus;
    }
    return std::abs(g_plus) <= std::abs(g_minus) ? g_plus : g_minus;
}

} // namespace detail

/// A probability law on the real line together with the closed forms used by
/// the random-matrix transforms. Analytic kinds carry densities with bounded
/// support; EmpiricalSamples is defined through kernel sums only.
class Measure {
  public:
    enum class Kind {
        SemicircleEig,       // semicircle on [-2,2]
        ShiftedWignerEig,    // semicircle shifted by c
        MarchenkoPasturEig,  // eigenvalues of H H^T, H n-by-(n/a) Gaussian var 1/n
        SquaredOf,           // push-forward x -> x^2 of a base law
        SqrtOf,              // push-forward x -> sqrt(x) of a nonnegative base law
        BernoulliSpectral,   // p.delta_0 + (1-p).delta_1
        GaussianIIDSingular, // singular values of an n-by-m Gaussian matrix, var 1/n
        UniformSingular,     // uniform on [a,b], 0 <= a < b
        EmpiricalSamples,    // finite sample set
    };

    static Measure semicircle() { return Measure(Kind::SemicircleEig); }

    static Measure shifted_wigner(double c) {
        Measure m(Kind::ShiftedWignerEig);
        m.a_ = c;
        return m;
    }

    static Measure marchenko_pastur(double aspect) {
        if (!(aspect > 0.0 && aspect <= 1.0))
            throw std::invalid_argument("marchenko_pastur: aspect must be in (0,1]");
        Measure m(Kind::MarchenkoPasturEig);
        m.a_ = aspect;
        return m;
    }

    static Measure squared_of(Measure base) {
        Measure m(Kind::SquaredOf);
        m.base_ = std::make_shared<Measure>(std::move(base));
        return m;
    }

    static Measure sqrt_of(Measure base) {
        if (base.support().first < -1e-12)
            throw std::invalid_argument("sqrt_of: base law must be nonnegative");
        Measure m(Kind::SqrtOf);
        m.base_ = std::make_shared<Measure>(std::move(base));
        return m;
    }

    static Measure bernoulli_spectral(double p) {
        if (!(p >= 0.0 && p < 1.0))
            throw std::invalid_argument("bernoulli_spectral: p must be in [0,1)");
        Measure m(Kind::BernoulliSpectral);
        m.a_ = p;
        return m;
    }

    /// Singular law of an n-by-m matrix with i.i.d. entries of variance
    /// entry_var/n; aspect = n/m.
    static Measure gaussian_singular(double aspect, double entry_var = 1.0) {
        if (!(aspect > 0.0)) throw std::invalid_argument("gaussian_singular: aspect must be positive");
        if (!(entry_var > 0.0)) throw std::invalid_argument("gaussian_singular: bad variance");
        Measure m(Kind::GaussianIIDSingular);
        m.a_ = aspect;
        m.b_ = entry_var;
        return m;
    }

    static Measure uniform_singular(double a, double b) {
        if (!(a >= 0.0 && a < b)) throw std::invalid_argument("uniform_singular: need 0 <= a < b");
        Measure m(Kind::UniformSingular);
        m.a_ = a;
        m.b_ = b;
        return m;
    }

    static Measure empirical(std::vector<double> values) {
        if (values.empty()) throw std::invalid_argument("empirical: no samples");
        std::sort(values.begin(), values.end());
        Measure m(Kind::EmpiricalSamples);
        m.samples_ = std::move(values);
        return m;
    }

    Kind kind() const { return kind_; }
    double shift() const { return a_; }           // ShiftedWignerEig
    double aspect() const { return a_; }          // MarchenkoPastur / GaussianIIDSingular
    double atom_weight() const { return a_; }     // BernoulliSpectral
    const Measure& base() const { return *base_; }
    const std::vector<double>& samples() const { return samples_; }

    bool is_symmetric() const {
        return kind_ == Kind::SemicircleEig ||
               (kind_ == Kind::ShiftedWignerEig && a_ == 0.0);
    }

    bool is_atomic() const { return kind_ == Kind::BernoulliSpectral; }
    bool has_density() const { return !is_atomic() && kind_ != Kind::EmpiricalSamples; }

    /// Support endpoints (atoms included).
    std::pair<double, double> support() const {
        switch (kind_) {
            case Kind::SemicircleEig: return {-2.0, 2.0};
            case Kind::ShiftedWignerEig: return {a_ - 2.0, a_ + 2.0};
            case Kind::MarchenkoPasturEig: {
                const double s = 1.0 / std::sqrt(a_);
                return {(s - 1.0) * (s - 1.0), (s + 1.0) * (s + 1.0)};
            }
            case Kind::SquaredOf: {
                auto [lo, hi] = base_->support();
                if (lo <= 0.0 && hi >= 0.0) return {0.0, std::max(lo * lo, hi * hi)};
                const double l2 = lo * lo, h2 = hi * hi;
                return {std::min(l2, h2), std::max(l2, h2)};
            }
            case Kind::SqrtOf: {
                auto [lo, hi] = base_->support();
                return {std::sqrt(std::max(0.0, lo)), std::sqrt(std::max(0.0, hi))};
            }
            case Kind::BernoulliSpectral: return {0.0, 1.0};
            case Kind::GaussianIIDSingular: {
                auto [lo, hi] = squared_law_support();
                return {std::sqrt(lo), std::sqrt(hi)};
            }
            case Kind::UniformSingular: return {a_, b_};
            case Kind::EmpiricalSamples: return {samples_.front(), samples_.back()};
        }
        throw std::logic_error("unreachable");
    }

    double density(double x) const {
        switch (kind_) {
            case Kind::SemicircleEig: return semicircle_density(x);
            case Kind::ShiftedWignerEig: return semicircle_density(x - a_);
            case Kind::MarchenkoPasturEig: return mp_density(x, a_, 1.0);
            case Kind::SquaredOf: {
                if (x <= 0.0) {
                    // An interior mass point of the base at 0 would need an atom here.
                    return 0.0;
                }
                const double r = std::sqrt(x);
                return (base_->density(r) + base_->density(-r)) / (2.0 * r);
            }
            case Kind::SqrtOf:
                return x <= 0.0 ? 0.0 : 2.0 * x * base_->density(x * x);
            case Kind::GaussianIIDSingular: {
                if (x <= 0.0) return 0.0;
                const double lam = std::min(a_, 1.0 / a_);
                const double s = b_ * (a_ > 1.0 ? 1.0 / a_ : 1.0);
                return 2.0 * x * mp_density(x * x, lam, s);
            }
            case Kind::UniformSingular:
                return (x >= a_ && x <= b_) ? 1.0 / (b_ - a_) : 0.0;
            case Kind::BernoulliSpectral:
            case Kind::EmpiricalSamples:
                throw std::domain_error("Measure::density: law has no density");
        }
        throw std::logic_error("unreachable");
    }

    /// Stieltjes transform G(z) = int rho(x)/(z-x) dx.
    cplx stieltjes(cplx z) const {
        check_off_support(z);
        switch (kind_) {
            case Kind::SemicircleEig: return semicircle_stieltjes(z);
            case Kind::ShiftedWignerEig: return semicircle_stieltjes(z - a_);
            case Kind::MarchenkoPasturEig: return mp_stieltjes(z, a_, 1.0);
            case Kind::SquaredOf: return base_->squared_stieltjes(z);
            case Kind::BernoulliSpectral:
                return a_ / z + (1.0 - a_) / (z - 1.0);
            case Kind::UniformSingular:
                return (std::log(z - a_) - std::log(z - b_)) / (b_ - a_);
            case Kind::EmpiricalSamples: {
                cplx acc = 0.0;
                for (double x : samples_) acc += 1.0 / (z - x);
                return acc / static_cast<double>(samples_.size());
            }
            case Kind::SqrtOf:
            case Kind::GaussianIIDSingular:
                return quadrature_stieltjes(z);
        }
        throw std::logic_error("unreachable");
    }

    /// Stieltjes transform of the push-forward x -> x^2 of this law.
    cplx squared_stieltjes(cplx w) const {
        switch (kind_) {
            case Kind::GaussianIIDSingular: {
                const double lam = std::min(a_, 1.0 / a_);
                const double s = b_ * (a_ > 1.0 ? 1.0 / a_ : 1.0);
                return mp_stieltjes(w / s, lam, 1.0) / s;
            }
            case Kind::SqrtOf: return base_->stieltjes(w);
            case Kind::EmpiricalSamples: {
                cplx acc = 0.0;
                for (double x : samples_) acc += 1.0 / (w - x * x);
                return acc / static_cast<double>(samples_.size());
            }
            default: {
                const cplx r = std::sqrt(w);  // branch-invariant combination
                return (stieltjes(r) - stieltjes(-r)) / (2.0 * r);
            }
        }
    }

    bool has_closed_r() const {
        switch (kind_) {
            case Kind::SemicircleEig:
            case Kind::ShiftedWignerEig:
            case Kind::MarchenkoPasturEig:
            case Kind::BernoulliSpectral:
                return true;
            case Kind::SquaredOf:
                return base_->kind_ == Kind::SemicircleEig;
            default:
                return false;
        }
    }

    /// Closed-form R-transform where one exists.
    cplx r_closed(cplx w) const {
        switch (kind_) {
            case Kind::SemicircleEig: return w;
            case Kind::ShiftedWignerEig: return w + a_;
            case Kind::MarchenkoPasturEig: return (1.0 / a_) / (1.0 - w);
            case Kind::SquaredOf:
                if (base_->kind_ == Kind::SemicircleEig) return 1.0 / (1.0 - w);
                break;
            case Kind::BernoulliSpectral: {
                // Both quadratic roots are exact preimages of w; the physical
                // sheet has Im z opposite to Im w, and lies outside the atom
                // gap (0,1) when w is real.
                const double p = a_;
                const cplx disc = std::sqrt((w + 1.0) * (w + 1.0) - 4.0 * w * p);
                const cplx z1 = (w + 1.0 + disc) / (2.0 * w);
                const cplx z2 = (w + 1.0 - disc) / (2.0 * w);
                cplx z;
                if (std::abs(w.imag()) > 1e-14) {
                    z = z1.imag() * w.imag() < 0.0 ? z1 : z2;
                } else {
                    const bool z1_gap = z1.real() > 0.0 && z1.real() < 1.0;
                    z = z1_gap ? z2 : z1;
                }
                return z - 1.0 / w;
            }
            default: break;
        }
        throw std::domain_error("Measure::r_closed: no closed-form R-transform");
    }

    double mean() const {
        switch (kind_) {
            case Kind::SemicircleEig: return 0.0;
            case Kind::ShiftedWignerEig: return a_;
            case Kind::MarchenkoPasturEig: return 1.0 / a_;
            case Kind::BernoulliSpectral: return 1.0 - a_;
            case Kind::UniformSingular: return 0.5 * (a_ + b_);
            case Kind::EmpiricalSamples: {
                double acc = 0.0;
                for (double x : samples_) acc += x;
                return acc / static_cast<double>(samples_.size());
            }
            default: return quadrature_moment(1);
        }
    }

    /// Second moment; for Gaussian singular laws this is the coefficient of
    /// the linear rectangular R-transform.
    double second_moment() const {
        switch (kind_) {
            case Kind::GaussianIIDSingular: return b_ * (a_ <= 1.0 ? 1.0 / a_ : 1.0);
            case Kind::BernoulliSpectral: return 1.0 - a_;
            case Kind::UniformSingular: return (b_ * b_ * b_ - a_ * a_ * a_) / (3.0 * (b_ - a_));
            case Kind::EmpiricalSamples: {
                double acc = 0.0;
                for (double x : samples_) acc += x * x;
                return acc / static_cast<double>(samples_.size());
            }
            default: return quadrature_moment(2);
        }
    }

    /// Quadrature of f(x) rho(x) dx over the support, with the sin^2 map
    /// absorbing square-root edge singularities.
    template <class F>
    auto integrate_density(F&& f) const -> decltype(f(0.0)) {
        if (!has_density()) throw std::domain_error("integrate_density: no density");
        auto [lo, hi] = support();
        const double width = hi - lo;
        using R = decltype(f(0.0));
        R acc{};
        for (const auto& [node, weight] : detail::gauss_legendre_256()) {
            const double theta = 0.25 * kPi * (node + 1.0);
            const double s = std::sin(theta), c = std::cos(theta);
            const double x = lo + width * s * s;
            const double jac = 0.25 * kPi * width * 2.0 * s * c;
            acc += weight * jac * density(x) * f(x);
        }
        return acc;
    }

  private:
    explicit Measure(Kind k) : kind_(k) {}

    void check_off_support(cplx z) const {
        if (z.imag() != 0.0) return;
        auto [lo, hi] = support();
        if (kind_ == Kind::BernoulliSpectral) {
            if (z.real() == 0.0 || z.real() == 1.0)
                throw std::domain_error("Measure::stieltjes: z on an atom");
            return;
        }
        if (z.real() >= lo - 1e-12 && z.real() <= hi + 1e-12)
            throw std::domain_error("Measure::stieltjes: real z inside the support");
    }

    std::pair<double, double> squared_law_support() const {
        const double lam = std::min(a_, 1.0 / a_);
        const double s = b_ * (a_ > 1.0 ? 1.0 / a_ : 1.0);
        const double q = 1.0 / std::sqrt(lam);
        return {s * (q - 1.0) * (q - 1.0), s * (q + 1.0) * (q + 1.0)};
    }

    static double semicircle_density(double x) {
        return std::abs(x) >= 2.0 ? 0.0 : std::sqrt(4.0 - x * x) / (2.0 * kPi);
    }

    static cplx semicircle_stieltjes(cplx z) {
        const cplx root = std::sqrt(z * z - 4.0);
        return detail::pick_branch(z, 0.5 * (z - root), 0.5 * (z + root));
    }

    /// MP family: eigenvalue law of s * (H H^T) with H n-by-(n/lam), entries
    /// of variance 1/n. Mean is s/lam.
    static double mp_density(double x, double lam, double s) {
        const double q = 1.0 / std::sqrt(lam);
        const double lo = s * (q - 1.0) * (q - 1.0);
        const double hi = s * (q + 1.0) * (q + 1.0);
        if (x <= lo || x >= hi) return 0.0;
        return std::sqrt((x - lo) * (hi - x)) / (2.0 * kPi * x * s);
    }

    static cplx mp_stieltjes(cplx z, double lam, double s) {
        const cplx zs = z / s;
        const double q = 1.0 / std::sqrt(lam);
        const double lo = (q - 1.0) * (q - 1.0);
        const double hi = (q + 1.0) * (q + 1.0);
        const cplx root = std::sqrt((zs - lo) * (zs - hi));
        const cplx num_m = zs - (1.0 / lam - 1.0) - root;
        const cplx num_p = zs - (1.0 / lam - 1.0) + root;
        return detail::pick_branch(z, num_m / (2.0 * zs * s), num_p / (2.0 * zs * s));
    }

    cplx quadrature_stieltjes(cplx z) const {
        return integrate_density([z](double x) { return 1.0 / (z - x); });
    }

    double quadrature_moment(int k) const {
        return integrate_density([k](double x) {
            double p = 1.0;
            for (int i = 0; i < k; ++i) p *= x;
            return p;
        });
    }

    Kind kind_;
    double a_ = 0.0;
    double b_ = 0.0;
    std::shared_ptr<const Measure> base_;
    std::vector<double> samples_;
};

} // namespace rie

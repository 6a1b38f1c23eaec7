#pragma once

#include <fstream>
#include <string>
#include <variant>

#include <Eigen/Dense>

#include "rie/measure.hpp"
#include "rie/rng.hpp"
#include "rie/types.hpp"

namespace rie {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// ---- priors --------------------------------------------------------------

struct ShiftedWignerPrior { double c = 0.0; };
struct WishartPrior { double aspect = 0.25; };
struct SqrtWishartPrior { double aspect = 0.25; };
struct BernoulliSpectralHaarPrior { double p = 0.5; };
struct WignerSymPrior {};
using XPrior = std::variant<ShiftedWignerPrior, WishartPrior, SqrtWishartPrior,
                            BernoulliSpectralHaarPrior, WignerSymPrior>;

struct GaussianIIDPrior {};
struct HaarWithSingularsPrior { Measure law = Measure::uniform_singular(1.0, 3.0); };
struct BernoulliRademacherPrior { double p = 0.5; };
using YPrior = std::variant<GaussianIIDPrior, HaarWithSingularsPrior, BernoulliRademacherPrior>;

struct EnsembleSpec {
    XPrior x_prior = WignerSymPrior{};
    YPrior y_prior = GaussianIIDPrior{};
    int n = 0;
    int m = 0;
    double kappa = 1.0;
    uint64_t seed = 0;

    double alpha() const { return static_cast<double>(n) / m; }

    void validate() const {
        if (n <= 0 || m <= 0) throw std::invalid_argument("EnsembleSpec: bad dimensions");
        if (!(kappa >= 0.0)) throw std::invalid_argument("EnsembleSpec: kappa must be >= 0");
    }
};

struct ObservationInstance {
    MatrixXd x;  // N x N symmetric
    MatrixXd y;  // N x M
    MatrixXd w;  // N x M
    MatrixXd s;  // sqrt(kappa) x y + w
    EnsembleSpec spec;
};

// ---- prior -> limiting law -----------------------------------------------

inline Measure x_prior_measure(const XPrior& prior) {
    return std::visit(
        [](const auto& p) -> Measure {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, ShiftedWignerPrior>) return Measure::shifted_wigner(p.c);
            else if constexpr (std::is_same_v<T, WishartPrior>) return Measure::marchenko_pastur(p.aspect);
            else if constexpr (std::is_same_v<T, SqrtWishartPrior>)
                return Measure::sqrt_of(Measure::marchenko_pastur(p.aspect));
            else if constexpr (std::is_same_v<T, BernoulliSpectralHaarPrior>)
                return Measure::bernoulli_spectral(p.p);
            else return Measure::semicircle();
        },
        prior);
}

inline Measure y_prior_measure(const YPrior& prior, double alpha) {
    return std::visit(
        [alpha](const auto& p) -> Measure {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, GaussianIIDPrior>) return Measure::gaussian_singular(alpha);
            else if constexpr (std::is_same_v<T, HaarWithSingularsPrior>) return p.law;
            else {
                // i.i.d. entries of variance (1-p)/N; same singular law as a
                // Gaussian matrix with that variance.
                return Measure::gaussian_singular(alpha, 1.0 - p.p);
            }
        },
        prior);
}

inline Measure w_prior_measure(double alpha) { return Measure::gaussian_singular(alpha); }

// ---- samplers --------------------------------------------------------------

inline MatrixXd gaussian_matrix(int rows, int cols, double stddev, Rng& rng) {
    MatrixXd a(rows, cols);
    for (int j = 0; j < cols; ++j)
        for (int i = 0; i < rows; ++i) a(i, j) = stddev * rng.next_gaussian();
    return a;
}

/// Haar-distributed orthonormal frame: QR of a Gaussian matrix with the
/// R-diagonal signs folded into Q.
inline MatrixXd haar_stiefel(int rows, int cols, Rng& rng) {
    if (rows < 1 || cols < 1 || cols > rows) throw std::invalid_argument("haar_stiefel: bad shape");
    MatrixXd a = gaussian_matrix(rows, cols, 1.0, rng);
    Eigen::HouseholderQR<MatrixXd> qr(a);
    MatrixXd q = qr.householderQ() * MatrixXd::Identity(rows, cols);
    const MatrixXd r = qr.matrixQR().topRows(cols).triangularView<Eigen::Upper>();
    for (int j = 0; j < cols; ++j)
        if (r(j, j) < 0.0) q.col(j) = -q.col(j);
    return q;
}

inline MatrixXd haar_orthogonal(int dim, Rng& rng) { return haar_stiefel(dim, dim, rng); }

inline MatrixXd haar_orthogonal(int dim, uint64_t seed) {
    Rng rng = stream_for(seed, StreamTag::Aux);
    return haar_orthogonal(dim, rng);
}

inline MatrixXd sample_x(const XPrior& prior, int n, uint64_t seed) {
    Rng rng = stream_for(seed, StreamTag::X);
    const double sd = 1.0 / std::sqrt(n);
    return std::visit(
        [&](const auto& p) -> MatrixXd {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, ShiftedWignerPrior> || std::is_same_v<T, WignerSymPrior>) {
                double c = 0.0;
                if constexpr (std::is_same_v<T, ShiftedWignerPrior>) c = p.c;
                MatrixXd f(n, n);
                for (int i = 0; i < n; ++i) {
                    f(i, i) = sd * rng.next_gaussian() + c;
                    for (int j = i + 1; j < n; ++j) f(i, j) = f(j, i) = sd * rng.next_gaussian();
                }
                return f;
            } else if constexpr (std::is_same_v<T, WishartPrior> || std::is_same_v<T, SqrtWishartPrior>) {
                const int cols = std::max(1, static_cast<int>(std::lround(n / p.aspect)));
                MatrixXd h = gaussian_matrix(n, cols, sd, rng);
                MatrixXd wish = h * h.transpose();
                if constexpr (std::is_same_v<T, WishartPrior>) return wish;
                Eigen::SelfAdjointEigenSolver<MatrixXd> eig(wish);
                const VectorXd roots = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
                return eig.eigenvectors() * roots.asDiagonal() * eig.eigenvectors().transpose();
            } else {
                MatrixXd u = haar_orthogonal(n, rng);
                VectorXd lam(n);
                for (int i = 0; i < n; ++i) lam(i) = rng.next_double() < p.p ? 0.0 : 1.0;
                return u * lam.asDiagonal() * u.transpose();
            }
        },
        prior);
}

inline MatrixXd sample_y(const YPrior& prior, int n, int m, uint64_t seed) {
    Rng rng = stream_for(seed, StreamTag::Y);
    return std::visit(
        [&](const auto& p) -> MatrixXd {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, GaussianIIDPrior>) {
                return gaussian_matrix(n, m, 1.0 / std::sqrt(n), rng);
            } else if constexpr (std::is_same_v<T, HaarWithSingularsPrior>) {
                const int k = std::min(n, m);
                VectorXd sig(k);
                auto [lo, hi] = p.law.support();
                if (p.law.kind() != Measure::Kind::UniformSingular)
                    throw std::invalid_argument("sample_y: only uniform singular laws are sampled");
                for (int i = 0; i < k; ++i) sig(i) = lo + (hi - lo) * rng.next_double();
                MatrixXd u = haar_stiefel(n, k, rng);
                MatrixXd v = haar_stiefel(m, k, rng);
                return u * sig.asDiagonal() * v.transpose();
            } else {
                const double v = 1.0 / std::sqrt(n);
                MatrixXd y(n, m);
                for (int j = 0; j < m; ++j)
                    for (int i = 0; i < n; ++i) {
                        const double u = rng.next_double();
                        y(i, j) = u < p.p ? 0.0 : (u < p.p + 0.5 * (1.0 - p.p) ? v : -v);
                    }
                return y;
            }
        },
        prior);
}

inline MatrixXd sample_w(int n, int m, uint64_t seed) {
    Rng rng = stream_for(seed, StreamTag::W);
    return gaussian_matrix(n, m, 1.0 / std::sqrt(n), rng);
}

inline ObservationInstance synthesize(const EnsembleSpec& spec) {
    spec.validate();
    ObservationInstance inst;
    inst.spec = spec;
    inst.x = sample_x(spec.x_prior, spec.n, spec.seed);
    inst.y = sample_y(spec.y_prior, spec.n, spec.m, spec.seed);
    inst.w = sample_w(spec.n, spec.m, spec.seed);
    inst.s = std::sqrt(spec.kappa) * inst.x * inst.y + inst.w;
    return inst;
}

// ---- binary container -----------------------------------------------------
// Layout: "RIEM"  u64 count  { u64 rows  u64 cols  f64 row-major data }*

inline void write_matrix_block(std::ostream& out, const MatrixXd& m) {
    const uint64_t rows = m.rows(), cols = m.cols();
    out.write(reinterpret_cast<const char*>(&rows), 8);
    out.write(reinterpret_cast<const char*>(&cols), 8);
    for (uint64_t i = 0; i < rows; ++i)
        for (uint64_t j = 0; j < cols; ++j) {
            const double v = m(i, j);
            out.write(reinterpret_cast<const char*>(&v), 8);
        }
}

inline MatrixXd read_matrix_block(std::istream& in) {
    uint64_t rows = 0, cols = 0;
    in.read(reinterpret_cast<char*>(&rows), 8);
    in.read(reinterpret_cast<char*>(&cols), 8);
    if (!in || rows == 0 || cols == 0 || rows > (1u << 20) || cols > (1u << 20))
        throw std::runtime_error("read_matrix_block: corrupt header");
    MatrixXd m(rows, cols);
    for (uint64_t i = 0; i < rows; ++i)
        for (uint64_t j = 0; j < cols; ++j) {
            double v;
            in.read(reinterpret_cast<char*>(&v), 8);
            m(i, j) = v;
        }
    if (!in) throw std::runtime_error("read_matrix_block: truncated data");
    return m;
}

/// Dumps (X, Y, W, S) for cross-run reuse.
inline void save_instance(const ObservationInstance& inst, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_instance: cannot open " + path);
    out.write("RIEM", 4);
    const uint64_t count = 4;
    out.write(reinterpret_cast<const char*>(&count), 8);
    write_matrix_block(out, inst.x);
    write_matrix_block(out, inst.y);
    write_matrix_block(out, inst.w);
    write_matrix_block(out, inst.s);
}

inline ObservationInstance load_instance(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_instance: cannot open " + path);
    char magic[4];
    in.read(magic, 4);
    uint64_t count = 0;
    in.read(reinterpret_cast<char*>(&count), 8);
    if (!in || std::string(magic, 4) != "RIEM" || count != 4)
        throw std::runtime_error("load_instance: not an instance container");
    ObservationInstance inst;
    inst.x = read_matrix_block(in);
    inst.y = read_matrix_block(in);
    inst.w = read_matrix_block(in);
    inst.s = read_matrix_block(in);
    inst.spec.n = static_cast<int>(inst.s.rows());
    inst.spec.m = static_cast<int>(inst.s.cols());
    return inst;
}

} // namespace rie

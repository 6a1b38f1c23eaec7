#pragma once

#include <string>

#include <Eigen/Dense>

#include "rie/rie_x.hpp"
#include "rie/rie_y.hpp"
#include "rie/spectrum.hpp"
#include "rie/types.hpp"

namespace rie {

using Eigen::MatrixXcd;
using Eigen::MatrixXd;
using Eigen::VectorXd;

/// SVD of the observation with a deterministic sign convention: the first
/// entry of each u_i exceeding 1e-8 in magnitude is made positive and v_i is
/// flipped along with it, preserving S.
struct ObservationSVD {
    MatrixXd u;       // N x N (left null modes included when N > M)
    MatrixXd v;       // M x min(N,M)
    VectorXd gammas;  // nonincreasing
    int n = 0;
    int m = 0;

    int modes() const { return static_cast<int>(gammas.size()); }

    SingularSpectrum spectrum() const { return SingularSpectrum(gammas, n, m); }

    MatrixXd reconstruct() const {
        return u.leftCols(modes()) * gammas.asDiagonal() * v.transpose();
    }
};

inline ObservationSVD observation_svd(const MatrixXd& s) {
    ObservationSVD out;
    out.n = static_cast<int>(s.rows());
    out.m = static_cast<int>(s.cols());
    Eigen::BDCSVD<MatrixXd> svd(s, Eigen::ComputeFullU | Eigen::ComputeThinV);
    out.u = svd.matrixU();
    out.v = svd.matrixV();
    out.gammas = svd.singularValues();
    const int k = out.modes();
    for (int i = 0; i < out.u.cols(); ++i) {
        int lead = 0;
        while (lead < out.n - 1 && std::abs(out.u(lead, i)) <= 1e-8) ++lead;
        if (out.u(lead, i) < 0.0) {
            out.u.col(i) = -out.u.col(i);
            if (i < k) out.v.col(i) = -out.v.col(i);
        }
    }
    return out;
}

// ---- Oracle estimators ------------------------------------------------------

/// xi*_i = u_i^T X u_i, the per-instance optimum over the RIE class.
inline XEstimate oracle_x(const ObservationSVD& svd, const MatrixXd& x_true) {
    if (x_true.rows() != svd.n || x_true.cols() != svd.n)
        throw std::invalid_argument("oracle_x: dimension mismatch");
    XEstimate est;
    est.xi = ((x_true * svd.u).cwiseProduct(svd.u)).colwise().sum().transpose();
    est.edge_flags.assign(svd.modes(), false);
    return est;
}

/// xi*_i = u_i^T Y v_i.
inline YEstimate oracle_y(const ObservationSVD& svd, const MatrixXd& y_true) {
    if (y_true.rows() != svd.n || y_true.cols() != svd.m)
        throw std::invalid_argument("oracle_y: dimension mismatch");
    const int k = svd.modes();
    YEstimate est;
    est.xi = ((y_true * svd.v).cwiseProduct(svd.u.leftCols(k))).colwise().sum().transpose();
    est.edge_flags.assign(k, false);
    return est;
}

/// xi*_i = u_i^T (X Y) v_i for the denoising problem.
inline YEstimate oracle_xy(const ObservationSVD& svd, const MatrixXd& x_true,
                           const MatrixXd& y_true) {
    return oracle_y(svd, x_true * y_true);
}

// ---- empirical overlaps -----------------------------------------------------

/// N (u_i . x_j)^2 for one instance.
inline double empirical_overlap_x(const ObservationSVD& svd, const MatrixXd& x_eigvecs, int i,
                                  int j) {
    const double dot = svd.u.col(i).dot(x_eigvecs.col(j));
    return svd.n * dot * dot;
}

/// N (u_i . y^l_j)(v_i . y^r_j) for one instance.
inline double empirical_overlap_y(const ObservationSVD& svd, const MatrixXd& y_left,
                                  const MatrixXd& y_right, int i, int j) {
    return svd.n * svd.u.col(i).dot(y_left.col(j)) * svd.v.col(i).dot(y_right.col(j));
}

// ---- hermitization ----------------------------------------------------------

/// Blocks of (zI - [[0, S], [S^T, 0]])^{-1} via the Schur reduction through
/// G = (z^2 I - S^T S)^{-1}.
struct HermitizedResolvent {
    MatrixXcd top_left;      // (1/z)(I + S G S^T)
    MatrixXcd top_right;     // S G
    MatrixXcd bottom_left;   // G S^T
    MatrixXcd bottom_right;  // z G
};

inline HermitizedResolvent hermitize_resolvent(const MatrixXd& s, cplx z) {
    if (z.imag() == 0.0) throw std::domain_error("hermitize_resolvent: need Im(z) != 0");
    const Eigen::Index m = s.cols();
    MatrixXcd shifted = -(s.transpose() * s).cast<cplx>();
    shifted.diagonal().array() += z * z;
    Eigen::PartialPivLU<MatrixXcd> lu(shifted);
    const MatrixXcd g = lu.solve(MatrixXcd::Identity(m, m));
    HermitizedResolvent out;
    const MatrixXcd sg = s.cast<cplx>() * g;
    out.top_left = (MatrixXcd::Identity(s.rows(), s.rows()) + sg * s.transpose().cast<cplx>()) / z;
    out.top_right = sg;
    out.bottom_left = g * s.transpose().cast<cplx>();
    out.bottom_right = z * g;
    return out;
}

/// Nonzero eigenvalues of x y^T + y x^T.
inline std::pair<double, double> rank_two_eigs(const VectorXd& x, const VectorXd& y) {
    if (x.size() != y.size()) throw std::invalid_argument("rank_two_eigs: length mismatch");
    const double dot = x.dot(y);
    const double prod = x.norm() * y.norm();
    return {dot + prod, dot - prod};
}

// ---- error metrics ----------------------------------------------------------

struct MseReport {
    double raw_mse = 0.0;         // squared Frobenius error
    double normalized_mse = 0.0;  // divided by ||truth||_F^2
    double kappa = 0.0;
    uint64_t seed = 0;
    std::string estimator_name;
};

inline MseReport normalized_mse(const MatrixXd& estimate, const MatrixXd& truth,
                                double kappa = 0.0, uint64_t seed = 0,
                                std::string estimator_name = {}) {
    if (estimate.rows() != truth.rows() || estimate.cols() != truth.cols())
        throw std::invalid_argument("normalized_mse: dimension mismatch");
    const double truth_norm2 = truth.squaredNorm();
    if (truth_norm2 == 0.0) throw std::invalid_argument("normalized_mse: zero-norm truth");
    MseReport rep;
    rep.raw_mse = (estimate - truth).squaredNorm();
    rep.normalized_mse = rep.raw_mse / truth_norm2;
    rep.kappa = kappa;
    rep.seed = seed;
    rep.estimator_name = std::move(estimator_name);
    return rep;
}

/// MSE of a same-class RIE without forming the matrix: ||T||^2 - 2 xi.t + xi.xi,
/// where t_i are the oracle values of the truth in that class.
inline double mse_from_modes(const VectorXd& xi, const VectorXd& oracle_values,
                             double truth_norm2) {
    if (xi.size() != oracle_values.size()) throw std::invalid_argument("mse_from_modes: size mismatch");
    return truth_norm2 - 2.0 * xi.dot(oracle_values) + xi.squaredNorm();
}

} // namespace rie

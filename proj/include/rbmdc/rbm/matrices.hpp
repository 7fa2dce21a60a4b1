#pragma once

#include "rbmdc/core/types.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace rbmdc {

class ReflectionMatrix;
inline ReflectionMatrix validate_reflection_matrix(const Matrix& raw);

/// Reflection matrix R = I - Q of a reflected Brownian motion on the orthant,
/// with Q >= 0 entrywise and spectral radius rho(Q) < 1. Column i is the
/// direction of push on the face {z_i = 0}.
class ReflectionMatrix {
public:
    [[nodiscard]] Eigen::Index dim() const { return r_.rows(); }
    [[nodiscard]] const Matrix& matrix() const { return r_; }
    [[nodiscard]] const Matrix& inverse() const { return r_inv_; }
    [[nodiscard]] double spectral_radius_q() const { return rho_q_; }
    [[nodiscard]] bool is_identity() const { return identity_; }

    friend ReflectionMatrix validate_reflection_matrix(const Matrix& raw);

private:
    Matrix r_;
    Matrix r_inv_;
    double rho_q_ = 0.0;
    bool identity_ = false;
};

/// Spectral radius of a nonnegative matrix by power iteration from the ones
/// vector. The estimate is the geometric mean of the one-norm growth ratios
/// over the second half of the iterations, which also converges for periodic
/// and nilpotent matrices where the plain ratio oscillates or vanishes.
inline double nonnegative_spectral_radius(const Matrix& q, int min_iterations = 100,
                                          double tolerance = 1e-10, int max_iterations = 20000) {
    const Eigen::Index d = q.rows();
    if (d == 0) return 0.0;
    Vector x = Vector::Ones(d) / static_cast<double>(d);
    std::vector<double> log_ratios;
    log_ratios.reserve(static_cast<std::size_t>(max_iterations));
    double previous = -1.0;
    for (int k = 0; k < max_iterations; ++k) {
        Vector y = q * x;
        const double norm = y.lpNorm<1>();
        if (norm == 0.0) return 0.0;
        log_ratios.push_back(std::log(norm / x.lpNorm<1>()));
        x = y / norm;
        if (k + 1 < min_iterations) continue;
        const std::size_t half = log_ratios.size() / 2;
        double sum = 0.0;
        for (std::size_t i = half; i < log_ratios.size(); ++i) sum += log_ratios[i];
        const double estimate = std::exp(sum / static_cast<double>(log_ratios.size() - half));
        if (previous >= 0.0 && std::abs(estimate - previous) < tolerance) return estimate;
        previous = estimate;
    }
    return previous;
}

inline ReflectionMatrix validate_reflection_matrix(const Matrix& raw) {
    require(raw.rows() == raw.cols() && raw.rows() > 0, "reflection matrix must be square and nonempty");
    const Eigen::Index d = raw.rows();
    if (!raw.allFinite()) throw ConfigError("reflection matrix has non-finite entries");
    for (Eigen::Index i = 0; i < d; ++i) {
        if (std::abs(raw(i, i) - 1.0) > 1e-12) {
            std::ostringstream msg;
            msg << "reflection matrix must have unit diagonal; R(" << i << "," << i << ") = " << raw(i, i);
            throw ConfigError(msg.str());
        }
    }
    Matrix q = Matrix::Identity(d, d) - raw;
    q.diagonal().setZero();
    if (q.minCoeff() < 0.0) {
        throw ConfigError("reflection matrix R = I - Q requires Q >= 0 (off-diagonal entries of R must be <= 0)");
    }
    const double rho = nonnegative_spectral_radius(q);
    if (!(rho < 1.0 - 1e-9)) {
        std::ostringstream msg;
        msg << "reflection matrix R = I - Q requires spectral radius rho(Q) < 1; estimated rho(Q) = " << rho;
        throw ConfigError(msg.str());
    }
    ReflectionMatrix out;
    out.r_ = raw;
    out.rho_q_ = rho;
    out.r_inv_ = raw.partialPivLu().inverse();
    if (out.r_inv_.minCoeff() < -1e-10) {
        throw ConfigError("reflection matrix inverse has negative entries (not an M-matrix)");
    }
    out.identity_ = raw.isIdentity(0.0);
    return out;
}

/// Symmetric positive-definite covariance with its lower Cholesky factor.
class CovarianceMatrix {
public:
    explicit CovarianceMatrix(const Matrix& a) {
        require(a.rows() == a.cols() && a.rows() > 0, "covariance matrix must be square and nonempty");
        if (!a.allFinite()) throw ConfigError("covariance matrix has non-finite entries");
        const double scale = std::max(a.cwiseAbs().maxCoeff(), 1e-300);
        if ((a - a.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
            throw ConfigError("covariance matrix must be symmetric");
        }
        a_ = 0.5 * (a + a.transpose());
        Eigen::LLT<Matrix> llt(a_);
        if (llt.info() != Eigen::Success) throw ConfigError("covariance matrix must be positive definite");
        chol_ = llt.matrixL();
        const double err = (chol_ * chol_.transpose() - a_).cwiseAbs().maxCoeff();
        if (err > 1e-12 * scale) throw ConfigError("covariance Cholesky factor is inaccurate");
        diagonal_ = a_.isDiagonal(0.0);
    }

    [[nodiscard]] Eigen::Index dim() const { return a_.rows(); }
    [[nodiscard]] const Matrix& matrix() const { return a_; }
    /// Lower-triangular L with L L^T = A.
    [[nodiscard]] const Matrix& cholesky() const { return chol_; }
    [[nodiscard]] bool is_diagonal() const { return diagonal_; }

private:
    Matrix a_;
    Matrix chol_;
    bool diagonal_ = false;
};

}  // namespace rbmdc

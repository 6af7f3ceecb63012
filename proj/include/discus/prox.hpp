#pragma once

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "discus/core.hpp"

namespace discus::prox {

// Magnitude soft threshold, the prox of tau*||.||_1 for complex values:
// v * max(0, 1 - tau/|v|), with 0 staying 0.
inline cd soft_threshold(cd v, double tau) {
    if (tau < 0) throw ConfigError("soft_threshold: tau must be >= 0");
    const double mag = std::abs(v);
    if (mag <= tau) return cd(0.0, 0.0);
    return v * ((mag - tau) / mag);
}

inline void soft_threshold(std::span<const cd> v, double tau, std::span<cd> out) {
    if (tau < 0) throw ConfigError("soft_threshold: tau must be >= 0");
    for (std::size_t i = 0; i < v.size(); ++i) {
        const double mag = std::abs(v[i]);
        out[i] = mag <= tau ? cd(0.0, 0.0) : v[i] * ((mag - tau) / mag);
    }
}

// Singular-value thresholding, the prox of tau*||.||_* :
// U soft(Sigma, tau) V^H from the SVD of m.
inline Eigen::MatrixXcd svt(const Eigen::MatrixXcd& m, double tau) {
    if (tau < 0) throw ConfigError("svt: tau must be >= 0");
    Eigen::JacobiSVD<Eigen::MatrixXcd> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
    Eigen::VectorXd s = svd.singularValues();
    for (Eigen::Index i = 0; i < s.size(); ++i) s[i] = std::max(0.0, s[i] - tau);
    return svd.matrixU() * s.asDiagonal() * svd.matrixV().adjoint();
}

// Group l2,1 norm of dynamic codes: sum over positions of the l2 norm taken
// across the time dimension. z_dyn is (T, N) row-major.
template <typename Real>
double group_l21(std::span<const Real> z_dyn, int t, std::size_t n) {
    if (z_dyn.size() != static_cast<std::size_t>(t) * n)
        throw ConfigError("group_l21: size mismatch");
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        double col = 0.0;
        for (int i = 0; i < t; ++i) col += sq(static_cast<double>(z_dyn[i * n + j]));
        total += std::sqrt(col);
    }
    return total;
}

// Prox of tau * group_l21: scales each across-time column by
// max(0, 1 - tau/||column||). Columns at or below tau become exact zeros.
template <typename Real>
void group_soft_threshold(std::span<Real> z_dyn, int t, std::size_t n, double tau) {
    if (tau < 0) throw ConfigError("group_soft_threshold: tau must be >= 0");
    if (z_dyn.size() != static_cast<std::size_t>(t) * n)
        throw ConfigError("group_soft_threshold: size mismatch");
    for (std::size_t j = 0; j < n; ++j) {
        double col = 0.0;
        for (int i = 0; i < t; ++i) col += sq(static_cast<double>(z_dyn[i * n + j]));
        col = std::sqrt(col);
        if (col <= tau) {
            for (int i = 0; i < t; ++i) z_dyn[i * n + j] = Real(0);
        } else {
            const Real scale = static_cast<Real>((col - tau) / col);
            for (int i = 0; i < t; ++i) z_dyn[i * n + j] *= scale;
        }
    }
}

// Smoothed group penalty lambda * sum_n sqrt(sum_t z^2 + eps) and its
// gradient, the differentiable alternative to the prox path.
template <typename Real>
double smoothed_group_penalty(std::span<const Real> z_dyn, int t, std::size_t n,
                              double lambda, double eps) {
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        double col = eps;
        for (int i = 0; i < t; ++i) col += sq(static_cast<double>(z_dyn[i * n + j]));
        total += std::sqrt(col);
    }
    return lambda * total;
}

template <typename Real>
void smoothed_group_penalty_grad(std::span<const Real> z_dyn, int t, std::size_t n,
                                 double lambda, double eps, std::span<Real> grad) {
    if (grad.size() != z_dyn.size())
        throw ConfigError("smoothed_group_penalty_grad: size mismatch");
    for (std::size_t j = 0; j < n; ++j) {
        double col = eps;
        for (int i = 0; i < t; ++i) col += sq(static_cast<double>(z_dyn[i * n + j]));
        const double inv = lambda / std::sqrt(col);
        for (int i = 0; i < t; ++i)
            grad[i * n + j] = static_cast<Real>(static_cast<double>(z_dyn[i * n + j]) * inv);
    }
}

}  // namespace discus::prox

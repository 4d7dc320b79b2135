#pragma once

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <utility>

#include <Eigen/Dense>

#include "tthjb/errors.hpp"

namespace tthjb {

/// Gauss-Legendre nodes and weights on [-1, 1], exact for polynomials of degree 2n-1.
template <typename Scalar>
std::pair<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>, Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>
gauss_legendre(Eigen::Index n) {
    using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
    if (n < 1) throw std::invalid_argument("gauss_legendre: need at least one node");
    Vector nodes(n), weights(n);
    const Scalar pi = std::numbers::pi_v<Scalar>;
    for (Eigen::Index i = 0; i < (n + 1) / 2; ++i) {
        Scalar z = std::cos(pi * (Scalar(i) + Scalar(0.75)) / (Scalar(n) + Scalar(0.5)));
        Scalar dp = 0;
        for (int it = 0; it < 100; ++it) {
            Scalar p0 = 1, p1 = z;
            for (Eigen::Index k = 2; k <= n; ++k) {
                Scalar pk = ((2 * Scalar(k) - 1) * z * p1 - (Scalar(k) - 1) * p0) / Scalar(k);
                p0 = p1;
                p1 = pk;
            }
            // p1 = P_n(z), p0 = P_{n-1}(z)
            dp = Scalar(n) * (z * p1 - p0) / (z * z - 1);
            const Scalar step = p1 / dp;
            z -= step;
            if (std::abs(step) < 4 * std::numeric_limits<Scalar>::epsilon()) break;
        }
        nodes(i) = -z;
        nodes(n - 1 - i) = z;
        weights(i) = weights(n - 1 - i) = 2 / ((1 - z * z) * dp * dp);
    }
    if (n % 2 == 1) nodes(n / 2) = 0;
    return {nodes, weights};
}

/// One-dimensional polynomials phi_1..phi_m on [a, b], orthonormal in H^2(a, b).
///
/// Row i of the coefficient matrix holds the monomial coefficients of phi_{i+1}
/// with respect to 1, x, ..., x^{m-1}; the matrix is lower triangular with a
/// positive diagonal. Evaluation outside [a, b] uses the polynomial as is.
template <typename Scalar>
class BasisSet {
public:
    using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

    BasisSet() = default;

    BasisSet(Scalar a, Scalar b, Matrix coeffs) : a_(a), b_(b), coeffs_(std::move(coeffs)) {
        if (!(a_ < b_)) throw std::invalid_argument("BasisSet: need a < b");
        if (coeffs_.rows() != coeffs_.cols() || coeffs_.rows() < 1)
            throw DimensionError("BasisSet: coefficient matrix must be square and non-empty");
    }

    Scalar lower() const { return a_; }
    Scalar upper() const { return b_; }
    Eigen::Index size() const { return coeffs_.rows(); }
    const Matrix& coefficients() const { return coeffs_; }

    /// Writes phi(x) into out[0..m).
    template <typename Out>
    void values_into(Scalar x, Out&& out) const {
        const Eigen::Index m = size();
        for (Eigen::Index i = 0; i < m; ++i) {
            // Horner on the row's coefficients (degree i)
            Scalar acc = coeffs_(i, i);
            for (Eigen::Index k = i - 1; k >= 0; --k) acc = acc * x + coeffs_(i, k);
            out[i] = acc;
        }
    }

    template <typename Out>
    void derivatives_into(Scalar x, Out&& out) const {
        const Eigen::Index m = size();
        for (Eigen::Index i = 0; i < m; ++i) {
            Scalar acc = 0;
            for (Eigen::Index k = i; k >= 1; --k) acc = acc * x + Scalar(k) * coeffs_(i, k);
            out[i] = acc;
        }
    }

    template <typename Out>
    void second_derivatives_into(Scalar x, Out&& out) const {
        const Eigen::Index m = size();
        for (Eigen::Index i = 0; i < m; ++i) {
            Scalar acc = 0;
            for (Eigen::Index k = i; k >= 2; --k) acc = acc * x + Scalar(k * (k - 1)) * coeffs_(i, k);
            out[i] = acc;
        }
    }

    Vector values(Scalar x) const {
        Vector out(size());
        values_into(x, out);
        return out;
    }
    Vector derivatives(Scalar x) const {
        Vector out(size());
        derivatives_into(x, out);
        return out;
    }
    Vector second_derivatives(Scalar x) const {
        Vector out(size());
        second_derivatives_into(x, out);
        return out;
    }

private:
    Scalar a_{-1};
    Scalar b_{1};
    Matrix coeffs_;
};

namespace detail {

// H^2(a,b) Gram matrix of the monomials 1, x, ..., x^{m-1}, exact by Gauss-Legendre.
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> monomial_h2_gram(Scalar a, Scalar b, Eigen::Index m) {
    using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    auto [nodes, weights] = gauss_legendre<Scalar>(m + 1);
    const Scalar half = (b - a) / 2, mid = (b + a) / 2;
    Matrix gram = Matrix::Zero(m, m);
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> p(m), dp(m), ddp(m);
    for (Eigen::Index q = 0; q < nodes.size(); ++q) {
        const Scalar x = mid + half * nodes(q);
        const Scalar w = half * weights(q);
        for (Eigen::Index k = 0; k < m; ++k) {
            p(k) = std::pow(x, Scalar(k));
            dp(k) = k >= 1 ? Scalar(k) * std::pow(x, Scalar(k - 1)) : Scalar(0);
            ddp(k) = k >= 2 ? Scalar(k * (k - 1)) * std::pow(x, Scalar(k - 2)) : Scalar(0);
        }
        gram.noalias() += w * (p * p.transpose() + dp * dp.transpose() + ddp * ddp.transpose());
    }
    return gram;
}

}  // namespace detail

/// Largest admissible condition estimate of the monomial Gram matrix.
inline constexpr double kMaxBasisCondition = 1e14;

/// H^2(a,b) Gram matrix of an arbitrary coefficient matrix (rows = polynomials in monomials).
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> h2_gram(const BasisSet<Scalar>& basis) {
    const auto& c = basis.coefficients();
    return c * detail::monomial_h2_gram(basis.lower(), basis.upper(), basis.size()) * c.transpose();
}

/// Gram-Schmidt of 1, x, ..., x^{m-1} in H^2(a,b), realised as two passes of
/// Cholesky orthogonalisation (the second pass removes the rounding left by the first).
template <typename Scalar>
BasisSet<Scalar> build_basis(Scalar a, Scalar b, Eigen::Index m) {
    using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    if (!(a < b)) throw std::invalid_argument("build_basis: need a < b");
    if (m < 1) throw std::invalid_argument("build_basis: need m >= 1");

    const Matrix gram = detail::monomial_h2_gram(a, b, m);
    Eigen::LLT<Matrix> llt(gram);
    if (llt.info() != Eigen::Success) throw NumericalError("build_basis: monomial Gram matrix not positive definite");
    const Matrix lower = llt.matrixL();
    const auto diag = lower.diagonal().cwiseAbs();
    const Scalar cond = (diag.maxCoeff() / diag.minCoeff()) * (diag.maxCoeff() / diag.minCoeff());
    if (!(cond < Scalar(kMaxBasisCondition)))
        throw NumericalError("build_basis: basis size too large for stable orthogonalization");

    Matrix coeffs = lower.template triangularView<Eigen::Lower>().solve(Matrix::Identity(m, m));
    const Matrix second = coeffs * gram * coeffs.transpose();
    Eigen::LLT<Matrix> refine(second);
    if (refine.info() == Eigen::Success) {
        const Matrix l2 = refine.matrixL();
        coeffs = l2.template triangularView<Eigen::Lower>().solve(coeffs);
    }
    coeffs.template triangularView<Eigen::StrictlyUpper>().setZero();
    return BasisSet<Scalar>(a, b, std::move(coeffs));
}

template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> eval_basis(const BasisSet<Scalar>& basis, Scalar x) {
    return basis.values(x);
}

template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> eval_basis_derivative(const BasisSet<Scalar>& basis, Scalar x) {
    return basis.derivatives(x);
}

using Basis = BasisSet<double>;

}  // namespace tthjb

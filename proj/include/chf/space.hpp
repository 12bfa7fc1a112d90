#pragma once

// Euclidean embedding of a finite set of states from their pairwise squared
// edit distances: double centering, eigenvalue correction of the resulting
// Gram matrix, out-of-sample extension for query states, and distances
// between affine combinations of embedded states.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace chf {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Eigensolver or linear-solver failure.
class NumericalError : public std::runtime_error {
public:
    NumericalError(const std::string& what, double residual = 0.0)
        : std::runtime_error(what), residual_(residual) {}
    double residual_norm() const { return residual_; }

private:
    double residual_;
};

enum class Correction { clip, flip, shift };

inline std::string to_string(Correction c) {
    switch (c) {
        case Correction::clip: return "clip";
        case Correction::flip: return "flip";
        case Correction::shift: return "shift";
    }
    return "clip";
}

inline Correction correction_from_string(const std::string& s) {
    if (s == "clip") return Correction::clip;
    if (s == "flip") return Correction::flip;
    if (s == "shift") return Correction::shift;
    throw std::invalid_argument("unknown eigenvalue correction '" + s + "'");
}

/// G = -1/2 J D2 J with J = I - 11^T / M.
template <typename Derived>
MatrixX<typename Derived::Scalar> center(const Eigen::MatrixBase<Derived>& d2) {
    using Scalar = typename Derived::Scalar;
    const auto n = d2.rows();
    if (n == 0) return MatrixX<Scalar>();
    const VectorX<Scalar> col_means = d2.colwise().mean().transpose();
    const VectorX<Scalar> row_means = d2.rowwise().mean();
    const Scalar grand = d2.mean();
    MatrixX<Scalar> g(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j)
            g(i, j) = Scalar(-0.5) * (d2(i, j) - row_means(i) - col_means(j) + grand);
    return Scalar(0.5) * (g + g.transpose());
}

/// Eigendecomposition of a symmetric Gram matrix together with its corrected
/// spectrum. Eigenvalues are sorted in descending order.
template <typename Scalar>
struct Spectrum {
    VectorX<Scalar> eigenvalues;
    MatrixX<Scalar> eigenvectors;  // orthonormal columns
    VectorX<Scalar> corrected;     // eigenvalues after correction
    MatrixX<Scalar> gram;          // U diag(corrected) U^T
    Correction mode = Correction::clip;
    Scalar shift = 0;              // amount added by shift correction

    /// Rank threshold: 1e-10 times the largest corrected eigenvalue.
    Scalar epsilon() const {
        if (corrected.size() == 0) return Scalar(0);
        return Scalar(1e-10) * std::max(corrected.maxCoeff(), Scalar(0));
    }
};

template <typename Scalar>
VectorX<Scalar> correct_eigenvalues(const VectorX<Scalar>& lambda, Correction mode, Scalar* shift_out = nullptr) {
    VectorX<Scalar> out = lambda;
    Scalar shift = 0;
    switch (mode) {
        case Correction::clip: out = lambda.cwiseMax(Scalar(0)); break;
        case Correction::flip: out = lambda.cwiseAbs(); break;
        case Correction::shift: {
            const Scalar lo = lambda.size() ? lambda.minCoeff() : Scalar(0);
            if (lo < 0) shift = -lo;
            out = lambda.array() + shift;
            break;
        }
    }
    if (shift_out) *shift_out = shift;
    return out;
}

template <typename Derived>
Spectrum<typename Derived::Scalar> eig_correct(const Eigen::MatrixBase<Derived>& gram, Correction mode) {
    using Scalar = typename Derived::Scalar;
    const MatrixX<Scalar> g = gram;
    Spectrum<Scalar> sp;
    sp.mode = mode;
    if (g.rows() == 0) return sp;
    Eigen::SelfAdjointEigenSolver<MatrixX<Scalar>> es(g);
    if (es.info() != Eigen::Success) {
        const MatrixX<Scalar> u = es.eigenvectors();
        const double residual =
            static_cast<double>((g * u - u * es.eigenvalues().asDiagonal()).norm());
        throw NumericalError("eigendecomposition did not converge (residual " + std::to_string(residual) + ")",
                             residual);
    }
    sp.eigenvalues = es.eigenvalues().reverse();
    sp.eigenvectors = es.eigenvectors().rowwise().reverse();
    sp.corrected = correct_eigenvalues<Scalar>(sp.eigenvalues, mode, &sp.shift);
    sp.gram = sp.eigenvectors * sp.corrected.asDiagonal() * sp.eigenvectors.transpose();
    sp.gram = Scalar(0.5) * (sp.gram + sp.gram.transpose());
    return sp;
}

/// Cross Gram entries and self inner product of an out-of-sample state in a
/// corrected space.
template <typename Scalar>
struct QueryEmbedding {
    VectorX<Scalar> cross_gram;
    Scalar self_inner = 0;
};

template <typename Scalar>
class CorrectedSpace {
public:
    CorrectedSpace() = default;

    CorrectedSpace(const MatrixX<Scalar>& d2, Correction mode)
        : d2_(d2), spectrum_(eig_correct(center(d2), mode)) {
        if (d2.rows() != d2.cols()) throw std::invalid_argument("distance matrix must be square");
        summarize();
    }

    /// Rebuilds a space from a stored decomposition without the raw distances.
    static CorrectedSpace from_parts(Spectrum<Scalar> sp, VectorX<Scalar> column_means, Scalar grand_mean) {
        CorrectedSpace cs;
        cs.spectrum_ = std::move(sp);
        cs.col_means_ = std::move(column_means);
        cs.grand_mean_ = grand_mean;
        return cs;
    }

    Eigen::Index size() const { return spectrum_.gram.rows(); }
    Correction mode() const { return spectrum_.mode; }
    const Spectrum<Scalar>& spectrum() const { return spectrum_; }
    const MatrixX<Scalar>& gram() const { return spectrum_.gram; }
    const VectorX<Scalar>& column_means() const { return col_means_; }
    Scalar grand_mean() const { return grand_mean_; }
    /// Raw squared distances; empty when rebuilt with from_parts.
    const MatrixX<Scalar>& raw_sqdist() const { return d2_; }

    Scalar sqdist(Eigen::Index i, Eigen::Index j) const {
        const auto& g = spectrum_.gram;
        return g(i, i) + g(j, j) - Scalar(2) * g(i, j);
    }

    MatrixX<Scalar> corrected_sqdist() const {
        const auto n = size();
        MatrixX<Scalar> out = MatrixX<Scalar>::Zero(n, n);
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index j = i + 1; j < n; ++j) out(i, j) = out(j, i) = sqdist(i, j);
        return out;
    }

    /// Out-of-sample extension from the query's squared distances to every
    /// training state.
    ///
    /// The query is double-centered against the training column and grand
    /// means. Its component inside the span of the nonzero eigenvectors is
    /// mapped through the corrected spectrum; the remaining orthogonal part of
    /// its squared norm is carried over unchanged. A query at distance zero
    /// from training state j is identified with j. Shift correction gives
    /// every state a private orthogonal offset, so the query keeps its raw
    /// cross products and gains the shift in its norm.
    QueryEmbedding<Scalar> extend(const VectorX<Scalar>& d2_query) const {
        const auto n = size();
        if (d2_query.size() != n) throw std::invalid_argument("query distance vector has the wrong length");
        QueryEmbedding<Scalar> q;
        for (Eigen::Index j = 0; j < n; ++j)
            if (d2_query(j) == Scalar(0)) {
                q.cross_gram = spectrum_.gram.col(j);
                q.self_inner = spectrum_.gram(j, j);
                return q;
            }
        const Scalar qmean = d2_query.mean();
        const VectorX<Scalar> raw_cross =
            Scalar(-0.5) * (d2_query.array() - qmean - col_means_.array() + grand_mean_).matrix();
        const Scalar raw_self = qmean - Scalar(0.5) * grand_mean_;

        if (spectrum_.mode == Correction::shift) {
            q.cross_gram = raw_cross;
            q.self_inner = raw_self + spectrum_.shift;
            return q;
        }

        const auto& lambda = spectrum_.eigenvalues;
        const auto& corrected = spectrum_.corrected;
        const Scalar eps = spectrum_.epsilon();
        const VectorX<Scalar> proj = spectrum_.eigenvectors.transpose() * raw_cross;
        VectorX<Scalar> coef = VectorX<Scalar>::Zero(n);
        Scalar in_span_raw = 0, in_span = 0;
        for (Eigen::Index i = 0; i < n; ++i) {
            if (std::abs(lambda(i)) <= eps) continue;
            coef(i) = proj(i) / lambda(i);
            in_span_raw += lambda(i) * coef(i) * coef(i);
            in_span += corrected(i) * coef(i) * coef(i);
        }
        q.cross_gram = spectrum_.eigenvectors * (corrected.array() * coef.array()).matrix();
        q.self_inner = in_span + std::max(raw_self - in_span_raw, Scalar(0));
        return q;
    }

    /// Corrected squared distances from the query to every training state.
    VectorX<Scalar> query_sqdist(const QueryEmbedding<Scalar>& q) const {
        return (q.self_inner + spectrum_.gram.diagonal().array() - Scalar(2) * q.cross_gram.array()).matrix();
    }

    /// Gram matrix over the training states followed by the query.
    MatrixX<Scalar> extended_gram(const QueryEmbedding<Scalar>& q) const {
        const auto n = size();
        MatrixX<Scalar> b(n + 1, n + 1);
        b.topLeftCorner(n, n) = spectrum_.gram;
        b.topRightCorner(n, 1) = q.cross_gram;
        b.bottomLeftCorner(1, n) = q.cross_gram.transpose();
        b(n, n) = q.self_inner;
        return b;
    }

    /// Coordinates along the `dims` largest corrected eigenvalues.
    MatrixX<Scalar> coordinates(Eigen::Index dims) const {
        const auto n = size();
        std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
        std::iota(order.begin(), order.end(), Eigen::Index(0));
        std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) {
            return spectrum_.corrected(a) > spectrum_.corrected(b);
        });
        MatrixX<Scalar> out = MatrixX<Scalar>::Zero(n, dims);
        for (Eigen::Index k = 0; k < std::min(dims, n); ++k) {
            const auto idx = order[static_cast<std::size_t>(k)];
            const Scalar s = std::sqrt(std::max(spectrum_.corrected(idx), Scalar(0)));
            out.col(k) = spectrum_.eigenvectors.col(idx) * s;
        }
        return out;
    }

private:
    void summarize() {
        if (d2_.size() == 0) {
            col_means_.resize(0);
            grand_mean_ = 0;
            return;
        }
        col_means_ = d2_.colwise().mean().transpose();
        grand_mean_ = d2_.mean();
    }

    MatrixX<Scalar> d2_;
    Spectrum<Scalar> spectrum_;
    VectorX<Scalar> col_means_;
    Scalar grand_mean_ = 0;
};

/// Squared distance between two affine combinations of embedded states,
/// (a - b)^T G (a - b), coefficients indexed like the Gram matrix.
template <typename DerivedG, typename DerivedA, typename DerivedB>
typename DerivedG::Scalar combo_sqdist(const Eigen::MatrixBase<DerivedG>& gram, const Eigen::MatrixBase<DerivedA>& a,
                                       const Eigen::MatrixBase<DerivedB>& b) {
    const VectorX<typename DerivedG::Scalar> c = a - b;
    return c.dot(gram * c);
}

/// Coefficients over the training states only.
template <typename Scalar, typename DerivedA, typename DerivedB>
Scalar combo_sqdist(const CorrectedSpace<Scalar>& cs, const Eigen::MatrixBase<DerivedA>& a,
                    const Eigen::MatrixBase<DerivedB>& b) {
    return combo_sqdist(cs.gram(), a, b);
}

/// Coefficients over the training states followed by the query.
template <typename Scalar, typename DerivedA, typename DerivedB>
Scalar combo_sqdist(const CorrectedSpace<Scalar>& cs, const QueryEmbedding<Scalar>& q,
                    const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b) {
    return combo_sqdist(cs.extended_gram(q), a, b);
}

using Spaced = CorrectedSpace<double>;

}  // namespace chf

/**
 * @file core.hpp
 * @brief Shared types, vectorization, matrix norms and error classes.
 *
 * Index convention: documentation and the file formats use the 1-based
 * (l1, l2) notation of matrix-variate covariance work, storage is 0-based.
 * The single conversion rule is
 *
 *     vec(X)[l2 * p + l1] == X(l1, l2)          (0-based l1 < p, l2 < q)
 *
 * so entry ((l1, m1), (l2, m2)) of a pq x pq covariance lives at row
 * l2 * p + l1 and column m2 * p + m1.
 */
#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace kronband
{

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

class Error : public std::runtime_error
{
  public:
    using std::runtime_error::runtime_error;
};

/// Bad user input: shapes, parameter ranges, config values.
class ValidationError : public Error
{
  public:
    using Error::Error;
};

class DimensionError : public ValidationError
{
  public:
    using ValidationError::ValidationError;
};

class ParameterError : public ValidationError
{
  public:
    using ValidationError::ValidationError;
};

/// Numerical failure: non-convergence, factorization breakdown.
class NumericalError : public Error
{
  public:
    using Error::Error;
};

class NotPositiveDefiniteError : public NumericalError
{
  public:
    using NumericalError::NumericalError;
};

class ConvergenceError : public NumericalError
{
  public:
    ConvergenceError(const std::string& what, int iterations, double gap)
        : NumericalError(what + " (iterations=" + std::to_string(iterations) +
                         ", last gap=" + std::to_string(gap) + ")"),
          iterations_(iterations),
          gap_(gap)
    {
    }

    int iterations() const noexcept { return iterations_; }
    double gap() const noexcept { return gap_; }

  private:
    int iterations_;
    double gap_;
};

class IoError : public Error
{
  public:
    using Error::Error;
};

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

inline bool all_finite(const Eigen::Ref<const Matrix>& a)
{
    return a.allFinite();
}

/**
 * n samples of p x q real matrices.
 *
 * Stored as a pq x n matrix whose column i is vec(X_i); this is the layout of
 * the binary container and makes Gram-form covariances a single product.
 */
class MatrixDataset
{
  public:
    MatrixDataset() = default;

    MatrixDataset(Index p, Index q, Matrix columns) : p_(p), q_(q), data_(std::move(columns))
    {
        if (p < 1 || q < 1)
            throw DimensionError("MatrixDataset: p and q must be >= 1");
        if (data_.rows() != p * q)
            throw DimensionError("MatrixDataset: column length " + std::to_string(data_.rows()) +
                                 " != p*q = " + std::to_string(p * q));
        if (data_.cols() < 1)
            throw DimensionError("MatrixDataset: need at least one sample");
        if (!data_.allFinite())
            throw ValidationError("MatrixDataset: non-finite entry");
    }

    static MatrixDataset from_samples(const std::vector<Matrix>& samples)
    {
        if (samples.empty())
            throw DimensionError("MatrixDataset: need at least one sample");
        const Index p = samples.front().rows();
        const Index q = samples.front().cols();
        Matrix cols(p * q, static_cast<Index>(samples.size()));
        for (std::size_t i = 0; i < samples.size(); ++i)
        {
            if (samples[i].rows() != p || samples[i].cols() != q)
                throw DimensionError("MatrixDataset: sample " + std::to_string(i) + " has shape " +
                                     std::to_string(samples[i].rows()) + "x" +
                                     std::to_string(samples[i].cols()));
            cols.col(static_cast<Index>(i)) = Eigen::Map<const Vector>(samples[i].data(), p * q);
        }
        return MatrixDataset(p, q, std::move(cols));
    }

    Index n() const noexcept { return data_.cols(); }
    Index p() const noexcept { return p_; }
    Index q() const noexcept { return q_; }
    Index dim() const noexcept { return p_ * q_; }

    /// pq x n, column i = vec(X_i).
    const Matrix& columns() const noexcept { return data_; }

    Eigen::Map<const Matrix> sample(Index i) const
    {
        return Eigen::Map<const Matrix>(data_.col(i).data(), p_, q_);
    }

    MatrixDataset subset(const std::vector<Index>& idx) const
    {
        Matrix cols(dim(), static_cast<Index>(idx.size()));
        for (std::size_t j = 0; j < idx.size(); ++j)
            cols.col(static_cast<Index>(j)) = data_.col(idx[j]);
        return MatrixDataset(p_, q_, std::move(cols));
    }

  private:
    Index p_ = 0;
    Index q_ = 0;
    Matrix data_;
};

/// Symmetric d x d matrix. Construction symmetrizes via (A + A^T) / 2.
class DenseSymMatrix
{
  public:
    DenseSymMatrix() = default;

    explicit DenseSymMatrix(const Eigen::Ref<const Matrix>& a)
    {
        if (a.rows() != a.cols())
            throw DimensionError("DenseSymMatrix: matrix is " + std::to_string(a.rows()) + "x" +
                                 std::to_string(a.cols()));
        if (!a.allFinite())
            throw ValidationError("DenseSymMatrix: non-finite entry");
        m_ = 0.5 * (a + a.transpose());
    }

    static DenseSymMatrix identity(Index d) { return DenseSymMatrix(Matrix::Identity(d, d)); }

    Index dim() const noexcept { return m_.rows(); }
    const Matrix& matrix() const noexcept { return m_; }
    double operator()(Index i, Index j) const { return m_(i, j); }

  private:
    Matrix m_;
};

enum class ScaleConvention
{
    none,            ///< factors exactly as supplied
    unit_trace,      ///< trace(sigma2) == q
    unit_frobenius,  ///< ||sigma2||_F == sqrt(q), used when the trace is ~0
};

inline const char* to_string(ScaleConvention c)
{
    switch (c)
    {
        case ScaleConvention::none:
            return "none";
        case ScaleConvention::unit_trace:
            return "trace_sigma2_eq_q";
        case ScaleConvention::unit_frobenius:
            return "frobenius_sigma2_eq_sqrt_q";
    }
    return "unknown";
}

/**
 * sigma2 (q x q) (x) sigma1 (p x p) without forming the pq x pq product.
 *
 * Entry (l2 * p + l1, m2 * p + m1) of the represented matrix is
 * sigma2(l2, m2) * sigma1(l1, m1).
 */
struct SeparableCovariance
{
    DenseSymMatrix sigma2;
    DenseSymMatrix sigma1;
    ScaleConvention convention = ScaleConvention::none;

    Index p() const noexcept { return sigma1.dim(); }
    Index q() const noexcept { return sigma2.dim(); }
    Index dim() const noexcept { return p() * q(); }

    double entry(Index row, Index col) const
    {
        const Index pp = p();
        return sigma2(row / pp, col / pp) * sigma1(row % pp, col % pp);
    }
};

// ---------------------------------------------------------------------------
// vec / unvec / kron
// ---------------------------------------------------------------------------

inline Vector vec(const Eigen::Ref<const Matrix>& x)
{
    Vector v(x.size());
    for (Index c = 0; c < x.cols(); ++c)
        v.segment(c * x.rows(), x.rows()) = x.col(c);
    return v;
}

inline Matrix unvec(const Eigen::Ref<const Vector>& v, Index p, Index q)
{
    if (p < 0 || q < 0 || v.size() != p * q)
        throw DimensionError("unvec: length " + std::to_string(v.size()) + " != " +
                             std::to_string(p) + "*" + std::to_string(q));
    Matrix x(p, q);
    for (Index c = 0; c < q; ++c)
        x.col(c) = v.segment(c * p, p);
    return x;
}

/// Dense Kronecker product a (x) b.
inline Matrix kron(const Eigen::Ref<const Matrix>& a, const Eigen::Ref<const Matrix>& b)
{
    Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Index j = 0; j < a.cols(); ++j)
        for (Index i = 0; i < a.rows(); ++i)
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    return out;
}

inline Matrix materialize(const SeparableCovariance& s)
{
    return kron(s.sigma2.matrix(), s.sigma1.matrix());
}

// ---------------------------------------------------------------------------
// Norms
// ---------------------------------------------------------------------------

inline double norm_frobenius(const Eigen::Ref<const Matrix>& a) { return a.norm(); }

/// Maximum absolute column sum.
inline double norm_l1(const Eigen::Ref<const Matrix>& a)
{
    if (a.size() == 0)
        return 0.0;
    return a.cwiseAbs().colwise().sum().maxCoeff();
}

/// Maximum absolute row sum.
inline double norm_linf(const Eigen::Ref<const Matrix>& a)
{
    if (a.size() == 0)
        return 0.0;
    return a.cwiseAbs().rowwise().sum().maxCoeff();
}

inline double norm_max(const Eigen::Ref<const Matrix>& a)
{
    if (a.size() == 0)
        return 0.0;
    return a.cwiseAbs().maxCoeff();
}

struct OperatorNormOptions
{
    double tol = 1e-8;
    int max_iter = 10000;
    Index dense_threshold = 512;
};

namespace detail
{

/// Largest |eigenvalue| of a symmetric operator by power iteration.
inline double symmetric_power_norm(const std::function<void(const Vector&, Vector&)>& apply, Index d,
                                   const OperatorNormOptions& opt)
{
    if (d == 0)
        return 0.0;
    Vector x = Vector::Ones(d) / std::sqrt(static_cast<double>(d));
    Vector y(d);
    apply(x, y);
    double est = y.norm();
    if (est == 0.0)
    {
        // all-ones start may be orthogonal to the range; fixed perturbation
        for (Index i = 0; i < d; ++i)
            x[i] = 1.0 + 0.5 * std::sin(1.0 + static_cast<double>(i));
        x.normalize();
        apply(x, y);
        est = y.norm();
        if (est == 0.0)
        {
            // still zero: probe the canonical basis before declaring A == 0
            for (Index i = 0; i < d && est == 0.0; ++i)
            {
                x.setZero();
                x[i] = 1.0;
                apply(x, y);
                est = y.norm();
            }
            if (est == 0.0)
                return 0.0;
        }
    }
    double gap = 0.0;
    for (int it = 1; it <= opt.max_iter; ++it)
    {
        x = y / est;
        apply(x, y);
        const double next = y.norm();
        gap = std::abs(next - est) / std::max(next, std::numeric_limits<double>::min());
        est = next;
        if (gap <= opt.tol)
            return est;
    }
    throw ConvergenceError("norm_operator: power iteration did not converge", opt.max_iter, gap);
}

}  // namespace detail

/// Largest |eigenvalue| of a symmetric matrix; dense eigensolve for small d.
inline double norm_operator(const Eigen::Ref<const Matrix>& a, const OperatorNormOptions& opt = {})
{
    if (a.rows() != a.cols())
        throw DimensionError("norm_operator: matrix not square");
    if (!a.allFinite())
        throw ValidationError("norm_operator: non-finite entry");
    const Index d = a.rows();
    if (d == 0)
        return 0.0;
    if (d <= opt.dense_threshold)
    {
        Eigen::SelfAdjointEigenSolver<Matrix> es(a, Eigen::EigenvaluesOnly);
        return es.eigenvalues().cwiseAbs().maxCoeff();
    }
    return detail::symmetric_power_norm([&](const Vector& x, Vector& y) { y.noalias() = a * x; }, d,
                                        opt);
}

enum class NormKind
{
    frob,
    l1,
    op,
    max
};

inline const char* to_string(NormKind k)
{
    switch (k)
    {
        case NormKind::frob:
            return "frob";
        case NormKind::l1:
            return "l1";
        case NormKind::op:
            return "op";
        case NormKind::max:
            return "max";
    }
    return "?";
}

inline double norm(const Eigen::Ref<const Matrix>& a, NormKind kind, const OperatorNormOptions& opt = {})
{
    switch (kind)
    {
        case NormKind::frob:
            return norm_frobenius(a);
        case NormKind::l1:
            return norm_l1(a);
        case NormKind::op:
            return norm_operator(a, opt);
        case NormKind::max:
            return norm_max(a);
    }
    return 0.0;
}

/**
 * ||sigma2 (x) sigma1 - D|| without materializing the Kronecker product.
 *
 * frob / l1 / max stream over the columns of D. op uses the dense
 * eigensolver for pq <= dense_threshold and otherwise a matrix-free power
 * iteration where (sigma2 (x) sigma1) x = vec(sigma1 X sigma2^T).
 */
inline double norm_diff_separable_vs_dense(const SeparableCovariance& s, const Eigen::Ref<const Matrix>& d,
                                           NormKind which, const OperatorNormOptions& opt = {})
{
    const Index p = s.p();
    const Index q = s.q();
    const Index pq = p * q;
    if (d.rows() != pq || d.cols() != pq)
        throw DimensionError("norm_diff_separable_vs_dense: dense matrix is " + std::to_string(d.rows()) +
                             "x" + std::to_string(d.cols()) + ", expected " + std::to_string(pq));
    const Matrix& s1 = s.sigma1.matrix();
    const Matrix& s2 = s.sigma2.matrix();

    switch (which)
    {
        case NormKind::frob:
        {
            double acc = 0.0;
            for (Index m2 = 0; m2 < q; ++m2)
                for (Index m1 = 0; m1 < p; ++m1)
                {
                    const Index col = m2 * p + m1;
                    for (Index l2 = 0; l2 < q; ++l2)
                        acc += (s2(l2, m2) * s1.col(m1) - d.col(col).segment(l2 * p, p)).squaredNorm();
                }
            return std::sqrt(acc);
        }
        case NormKind::l1:
        {
            double best = 0.0;
            for (Index m2 = 0; m2 < q; ++m2)
                for (Index m1 = 0; m1 < p; ++m1)
                {
                    const Index col = m2 * p + m1;
                    double sum = 0.0;
                    for (Index l2 = 0; l2 < q; ++l2)
                        sum += (s2(l2, m2) * s1.col(m1) - d.col(col).segment(l2 * p, p)).cwiseAbs().sum();
                    best = std::max(best, sum);
                }
            return best;
        }
        case NormKind::max:
        {
            double best = 0.0;
            for (Index m2 = 0; m2 < q; ++m2)
                for (Index m1 = 0; m1 < p; ++m1)
                {
                    const Index col = m2 * p + m1;
                    for (Index l2 = 0; l2 < q; ++l2)
                        best = std::max(
                            best, (s2(l2, m2) * s1.col(m1) - d.col(col).segment(l2 * p, p)).cwiseAbs().maxCoeff());
                }
            return best;
        }
        case NormKind::op:
        {
            if (pq <= opt.dense_threshold)
                return norm_operator(materialize(s) - d, opt);
            Matrix xm(p, q);
            auto apply = [&](const Vector& x, Vector& y) {
                xm = Eigen::Map<const Matrix>(x.data(), p, q);
                Matrix t = s1 * xm * s2.transpose();
                y = Eigen::Map<const Vector>(t.data(), pq);
                y.noalias() -= d * x;
            };
            return detail::symmetric_power_norm(apply, pq, opt);
        }
    }
    return 0.0;
}

/// ||a2 (x) a1 - b2 (x) b1|| without forming either product.
inline double norm_diff_separable(const SeparableCovariance& a, const SeparableCovariance& b, NormKind which,
                                  const OperatorNormOptions& opt = {})
{
    const Index p = a.p();
    const Index q = a.q();
    const Index pq = p * q;
    if (b.p() != p || b.q() != q)
        throw DimensionError("norm_diff_separable: factor dimensions differ");
    const Matrix& a1 = a.sigma1.matrix();
    const Matrix& a2 = a.sigma2.matrix();
    const Matrix& b1 = b.sigma1.matrix();
    const Matrix& b2 = b.sigma2.matrix();

    if (which == NormKind::op)
    {
        if (pq <= opt.dense_threshold)
            return norm_operator(materialize(a) - materialize(b), opt);
        auto apply = [&](const Vector& x, Vector& y) {
            const Eigen::Map<const Matrix> xm(x.data(), p, q);
            Matrix t = a1 * xm * a2.transpose() - b1 * xm * b2.transpose();
            y = Eigen::Map<const Vector>(t.data(), pq);
        };
        return detail::symmetric_power_norm(apply, pq, opt);
    }

    double acc = 0.0;
    Vector col(p);
    for (Index m2 = 0; m2 < q; ++m2)
        for (Index m1 = 0; m1 < p; ++m1)
        {
            double colsum = 0.0;
            for (Index l2 = 0; l2 < q; ++l2)
            {
                col = a2(l2, m2) * a1.col(m1) - b2(l2, m2) * b1.col(m1);
                if (which == NormKind::frob)
                    acc += col.squaredNorm();
                else if (which == NormKind::l1)
                    colsum += col.cwiseAbs().sum();
                else
                    acc = std::max(acc, col.cwiseAbs().maxCoeff());
            }
            if (which == NormKind::l1)
                acc = std::max(acc, colsum);
        }
    return which == NormKind::frob ? std::sqrt(acc) : acc;
}

}  // namespace kronband

/**
 * @file nkp.hpp
 * @brief Rearrangement operator and nearest Kronecker product factorization.
 *
 * For a pq x pq matrix M made of q x q blocks A_{l2,m2} (each p x p), the
 * rearrangement xi(M) is the q^2 x p^2 matrix whose row (m2 * q + l2) is
 * vec(A_{l2,m2})^T. It is a linear isometry in the Frobenius norm and maps
 * B (x) C onto vec(B) vec(C)^T, so the best Frobenius approximation
 * M ~ S2 (x) S1 is read off the leading singular triple of xi(M):
 *
 *     S2 ~ unvec_q(sigma * u),  S1 ~ unvec_p(v).
 *
 * The scale of the pair is fixed so that trace(S2) == q (falling back to
 * ||S2||_F == sqrt(q) when that trace is ~0), and the joint sign of (u, v)
 * so that trace(unvec(u)) >= 0.
 */
#pragma once

#include "kronband/core.hpp"
#include "kronband/regularize.hpp"
#include "kronband/rng.hpp"

#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <variant>

namespace kronband
{

/// Materialize when q^2 * p^2 is at most this many entries.
inline constexpr Index kMaterializeLimit = Index{1} << 26;

/**
 * xi(M) as a linear operator, either stored densely or applied on the fly
 * from a dense or masked source.
 */
class RearrangedView
{
  public:
    enum class Access
    {
        materialized,
        implicit
    };

    Index rows() const noexcept { return q_ * q_; }
    Index cols() const noexcept { return p_ * p_; }
    Index p() const noexcept { return p_; }
    Index q() const noexcept { return q_; }
    Access access() const noexcept { return dense_ ? Access::materialized : Access::implicit; }

    /// Stored q^2 x p^2 matrix, or nullptr for implicit views.
    const Matrix* dense() const noexcept { return dense_ ? &*dense_ : nullptr; }

    /// y = xi(M) x
    void apply(const Vector& x, Vector& y) const
    {
        if (dense_)
            y.noalias() = *dense_ * x;
        else
            apply_(x, y);
    }

    /// x = xi(M)^T y
    void apply_transpose(const Vector& y, Vector& x) const
    {
        if (dense_)
            x.noalias() = dense_->transpose() * y;
        else
            apply_t_(y, x);
    }

    double frobenius_norm() const { return frob_; }

    /// Entry (r, c) of xi(M); r = m2 * q + l2, c = m1 * p + l1.
    double operator()(Index r, Index c) const
    {
        if (dense_)
            return (*dense_)(r, c);
        return entry_(r, c);
    }

    Matrix to_dense() const
    {
        if (dense_)
            return *dense_;
        Matrix out(rows(), cols());
        for (Index c = 0; c < cols(); ++c)
            for (Index r = 0; r < rows(); ++r)
                out(r, c) = entry_(r, c);
        return out;
    }

    static RearrangedView from_dense(const Eigen::Ref<const Matrix>& m, Index p, Index q,
                                     std::optional<Access> force = std::nullopt)
    {
        if (p < 1 || q < 1 || m.rows() != p * q || m.cols() != p * q)
            throw DimensionError("rearrange: matrix " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                                 " is not square of dimension p*q = " + std::to_string(p) + "*" + std::to_string(q));
        RearrangedView view(p, q);
        view.frob_ = m.norm();
        const Access access = force.value_or(q * q * p * p <= kMaterializeLimit ? Access::materialized : Access::implicit);
        if (access == Access::materialized)
        {
            Matrix xi(q * q, p * p);
            for (Index m2 = 0; m2 < q; ++m2)
                for (Index l2 = 0; l2 < q; ++l2)
                {
                    const Index r = m2 * q + l2;
                    for (Index m1 = 0; m1 < p; ++m1)
                        for (Index l1 = 0; l1 < p; ++l1)
                            xi(r, m1 * p + l1) = m(l2 * p + l1, m2 * p + m1);
                }
            view.dense_ = std::move(xi);
            return view;
        }
        // Implicit access keeps its own copy of the source.
        auto src = std::make_shared<Matrix>(m);
        view.apply_ = [src, p, q](const Vector& x, Vector& y) {
            y.resize(q * q);
            const Eigen::Map<const Matrix> xm(x.data(), p, p);
            for (Index m2 = 0; m2 < q; ++m2)
                for (Index l2 = 0; l2 < q; ++l2)
                    y[m2 * q + l2] = src->block(l2 * p, m2 * p, p, p).cwiseProduct(xm).sum();
        };
        view.apply_t_ = [src, p, q](const Vector& y, Vector& x) {
            x.setZero(p * p);
            Eigen::Map<Matrix> xm(x.data(), p, p);
            for (Index m2 = 0; m2 < q; ++m2)
                for (Index l2 = 0; l2 < q; ++l2)
                    xm += y[m2 * q + l2] * src->block(l2 * p, m2 * p, p, p);
        };
        view.entry_ = [src, p, q](Index r, Index c) {
            return (*src)((r % q) * p + (c % p), (r / q) * p + (c / p));
        };
        return view;
    }

    static RearrangedView from_masked(const MaskedCovariance& mc, std::optional<Access> force = std::nullopt)
    {
        const Index p = mc.p();
        const Index q = mc.q();
        RearrangedView view(p, q);
        double acc = 0.0;
        mc.for_each([&](Index, Index, Index, Index, double v) { acc += v * v; });
        view.frob_ = std::sqrt(acc);
        const Access access = force.value_or(q * q * p * p <= kMaterializeLimit ? Access::materialized : Access::implicit);
        if (access == Access::materialized)
        {
            Matrix xi = Matrix::Zero(q * q, p * p);
            mc.for_each([&](Index l1, Index m1, Index l2, Index m2, double v) { xi(m2 * q + l2, m1 * p + l1) = v; });
            view.dense_ = std::move(xi);
            return view;
        }
        auto src = std::make_shared<MaskedCovariance>(mc);
        view.apply_ = [src, p, q](const Vector& x, Vector& y) {
            y.setZero(q * q);
            src->for_each([&](Index l1, Index m1, Index l2, Index m2, double v) { y[m2 * q + l2] += v * x[m1 * p + l1]; });
        };
        view.apply_t_ = [src, p, q](const Vector& y, Vector& x) {
            x.setZero(p * p);
            src->for_each([&](Index l1, Index m1, Index l2, Index m2, double v) { x[m1 * p + l1] += v * y[m2 * q + l2]; });
        };
        view.entry_ = [src, p, q](Index r, Index c) { return src->at(c % p, c / p, r % q, r / q); };
        return view;
    }

  private:
    RearrangedView(Index p, Index q) : p_(p), q_(q) {}

    Index p_, q_;
    double frob_ = 0.0;
    std::optional<Matrix> dense_;
    std::function<void(const Vector&, Vector&)> apply_;
    std::function<void(const Vector&, Vector&)> apply_t_;
    std::function<double(Index, Index)> entry_;
};

inline RearrangedView rearrange(const DenseSymMatrix& m, Index p, Index q)
{
    return RearrangedView::from_dense(m.matrix(), p, q);
}

inline RearrangedView rearrange(const MaskedCovariance& m) { return RearrangedView::from_masked(m); }

struct Rank1Factor
{
    double sigma = 0.0;
    Vector u;  ///< unit, length q^2
    Vector v;  ///< unit, length p^2
    int iterations = 0;
    double residual = 0.0;  ///< ||xi^T u - sigma v|| / sigma at exit
    bool used_dense_fallback = false;
};

struct SvdOptions
{
    double tol = 1e-10;
    int max_iter = 5000;
    /// Iterations without halving the best residual before the perturbed restart.
    int stagnation_window = 200;
    bool dense_fallback = true;
    Index dense_fallback_limit = 1024;
};

namespace detail
{

/// Deterministic perturbation used to escape a bad start.
inline Vector perturbation(Index n)
{
    Vector w(n);
    for (Index i = 0; i < n; ++i)
        w[i] = 1.0 + 0.5 * std::sin(1.0 + static_cast<double>(i));
    return w.normalized();
}

inline Rank1Factor dense_leading_triple(const Matrix& a)
{
    Eigen::BDCSVD<Matrix> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
    Rank1Factor f;
    f.sigma = svd.singularValues()[0];
    f.u = svd.matrixU().col(0);
    f.v = svd.matrixV().col(0);
    f.residual = 0.0;
    f.used_dense_fallback = true;
    return f;
}

}  // namespace detail

/**
 * Leading singular triple by alternating power iteration.
 *
 * Op needs rows(), cols(), apply(x, y) for y = A x, apply_transpose(y, x)
 * for x = A^T y, and dense() returning const Matrix* (nullptr if none).
 * Each step takes a unit v, sets u = A v / ||A v||, sigma = ||A v|| and stops
 * once ||A^T u - sigma v|| <= tol * sigma; at that point A v = sigma u holds
 * exactly, so both residual conditions are met. Start vector is `init` when
 * given and nonzero, otherwise normalized vec(I_p) placed by the caller.
 */
template <class Op>
Rank1Factor power_leading_triple(const Op& op, const Vector& start, const SvdOptions& opt = {})
{
    const Index nr = op.rows();
    const Index nc = op.cols();
    Vector v = start;
    if (v.size() != nc)
        throw DimensionError("leading_singular_triple: start vector has wrong length");
    if (!(v.norm() > 0.0))
        v = detail::perturbation(nc);
    v.normalize();
    Vector u(nr), w(nc);
    bool restarted = false;
    double best = std::numeric_limits<double>::infinity();
    int best_at = 0;
    double residual = std::numeric_limits<double>::infinity();

    for (int it = 1; it <= opt.max_iter; ++it)
    {
        op.apply(v, u);
        double alpha = u.norm();
        if (!(alpha > 0.0))
        {
            if (restarted)
                break;
            // v is in the null space; restart once from the fixed perturbation
            restarted = true;
            v = detail::perturbation(nc);
            op.apply(v, u);
            alpha = u.norm();
            if (!(alpha > 0.0))
                break;
        }
        u /= alpha;
        op.apply_transpose(u, w);
        residual = (w - alpha * v).norm() / alpha;
        if (residual <= opt.tol)
        {
            Rank1Factor f;
            f.sigma = alpha;
            f.u = std::move(u);
            f.v = std::move(v);
            f.iterations = it;
            f.residual = residual;
            return f;
        }
        if (residual < 0.5 * best)
        {
            best = residual;
            best_at = it;
        }
        else if (!restarted && it - best_at > opt.stagnation_window)
        {
            restarted = true;
            best_at = it;
            w = w.normalized() + 0.1 * detail::perturbation(nc);
        }
        v = w / w.norm();
    }

    if (opt.dense_fallback)
    {
        const Matrix* a = op.dense();
        if (a && a->rows() <= opt.dense_fallback_limit && a->cols() <= opt.dense_fallback_limit)
        {
            if (!(a->norm() > 0.0))
                throw NumericalError("leading_singular_triple: zero input");
            Rank1Factor f = detail::dense_leading_triple(*a);
            f.iterations = opt.max_iter;
            return f;
        }
    }
    if (!std::isfinite(residual))
        throw NumericalError("leading_singular_triple: zero input (no nonzero image found)");
    throw ConvergenceError("leading_singular_triple: power iteration did not converge", opt.max_iter, residual);
}

/// vec(I_p) / sqrt(p): the deterministic start for covariance-like inputs.
inline Vector identity_start(Index p)
{
    Vector v = Vector::Zero(p * p);
    for (Index i = 0; i < p; ++i)
        v[i * p + i] = 1.0;
    return v / std::sqrt(static_cast<double>(p));
}

inline Rank1Factor leading_singular_triple(const RearrangedView& view, const SvdOptions& opt = {},
                                           const Vector* init = nullptr)
{
    if (!(view.frobenius_norm() > 0.0))
        throw NumericalError("leading_singular_triple: zero input");
    return power_leading_triple(view, init ? *init : identity_start(view.p()), opt);
}

/// Factors plus diagnostics of a single fit.
struct KronFit
{
    SeparableCovariance cov;
    Rank1Factor factor;
    double xi_frobenius = 0.0;  ///< ||M||_F == ||xi(M)||_F

    /// Eckart-Young: ||M - S2 (x) S1||_F = sqrt(||M||_F^2 - sigma^2).
    double residual_frobenius() const
    {
        return std::sqrt(std::max(0.0, xi_frobenius * xi_frobenius - factor.sigma * factor.sigma));
    }
};

/**
 * Turns the leading triple into (S2, S1) with the sign and trace
 * conventions above. Both factors are symmetrized.
 */
inline SeparableCovariance factors_from_triple(const Rank1Factor& f, Index p, Index q)
{
    Matrix u = unvec(f.u, q, q);
    Matrix v = unvec(f.v, p, p);
    if (u.trace() < 0.0)
    {
        u = -u;
        v = -v;
    }
    Matrix s2 = f.sigma * u;
    const double tr = s2.trace();
    ScaleConvention conv = ScaleConvention::unit_trace;
    double c;
    if (tr > 1e-12)
        c = static_cast<double>(q) / tr;
    else
    {
        conv = ScaleConvention::unit_frobenius;
        const double fn = s2.norm();
        if (!(fn > 0.0))
            throw NumericalError("kron_factorize: degenerate leading factor");
        c = std::sqrt(static_cast<double>(q)) / fn;
    }
    return SeparableCovariance{DenseSymMatrix(c * s2), DenseSymMatrix(v / c), conv};
}

namespace detail
{

inline void check_banded(const Matrix& f, Index width, const char* which)
{
    for (Index j = 0; j < f.cols(); ++j)
        for (Index i = 0; i < f.rows(); ++i)
            if (std::abs(i - j) > width && std::abs(f(i, j)) > 1e-12)
                throw NumericalError(std::string("kron_factorize: ") + which + " not banded at (" +
                                     std::to_string(i) + "," + std::to_string(j) + ")");
}

}  // namespace detail

inline KronFit kron_factorize(const RearrangedView& view, const SvdOptions& opt = {}, const Vector* init = nullptr)
{
    KronFit fit;
    fit.factor = leading_singular_triple(view, opt, init);
    fit.cov = factors_from_triple(fit.factor, view.p(), view.q());
    fit.xi_frobenius = view.frobenius_norm();
    return fit;
}

inline KronFit kron_factorize(const DenseSymMatrix& m, Index p, Index q, const SvdOptions& opt = {})
{
    return kron_factorize(rearrange(m, p, q), opt);
}

/// Masked input: the factors are additionally checked to share the mask's support.
inline KronFit kron_factorize(const MaskedCovariance& m, const SvdOptions& opt = {})
{
    KronFit fit = kron_factorize(rearrange(m), opt);
    detail::check_banded(fit.cov.sigma1.matrix(), m.inner_width(), "sigma1");
    detail::check_banded(fit.cov.sigma2.matrix(), m.outer_width(), "sigma2");
    return fit;
}

// ---------------------------------------------------------------------------
// Repeated masked fits of one covariance
// ---------------------------------------------------------------------------

/**
 * xi(C) for one covariance C, reused across many (mode, k1, k2) masks.
 *
 * Masking is separable in the rearranged coordinates:
 *
 *     xi(C o (W2 (x) W1)) = diag(vec W2) xi(C) diag(vec W1)
 *
 * Rows are stored sorted by |l2 - m2| and columns by |l1 - m1|. Mask weights
 * are nonincreasing in the lag, so every mask's support is a leading block
 * and a fit never copies the matrix: it runs the power iteration on
 * D2 * xi(C).topLeftCorner(R, C) * D1.
 */
class MaskedFitter
{
  public:
    MaskedFitter(const Eigen::Ref<const Matrix>& cov, Index p, Index q) : p_(p), q_(q)
    {
        if (cov.rows() != p * q || cov.cols() != p * q)
            throw DimensionError("MaskedFitter: covariance dimension mismatch");
        row_of_ = lag_order(q);
        col_of_ = lag_order(p);
        xi_.resize(q * q, p * p);
        for (Index j = 0; j < p * p; ++j)
        {
            const Index c = col_of_[static_cast<std::size_t>(j)];
            const Index l1 = c % p, m1 = c / p;
            for (Index i = 0; i < q * q; ++i)
            {
                const Index r = row_of_[static_cast<std::size_t>(i)];
                const Index l2 = r % q, m2 = r / q;
                xi_(i, j) = cov(l2 * p + l1, m2 * p + m1);
            }
        }
    }

    Index p() const noexcept { return p_; }
    Index q() const noexcept { return q_; }

    struct Fit
    {
        SeparableCovariance cov;
        Rank1Factor factor;  ///< u, v in the original (unsorted) ordering
        Vector warm;         ///< v in sorted column order, reusable as a start
    };

    /// NKP of C o (W_{k2}(1_q) (x) W_{k1}(1_p)); `warm` is a previous Fit::warm.
    Fit fit(Mode mode, int k1, int k2, const SvdOptions& opt = {}, const Vector* warm = nullptr) const
    {
        check_bandwidth(mode, k1, p_, "MaskedFitter k1");
        check_bandwidth(mode, k2, q_, "MaskedFitter k2");
        Op op{*this, weights(mode, k2, row_of_, q_), weights(mode, k1, col_of_, p_)};
        op.nr = support(op.w2);
        op.nc = support(op.w1);
        op.unit = mode == Mode::band;

        Vector start = Vector::Zero(op.nc);
        if (warm && warm->size() > 0)
        {
            const Index m = std::min<Index>(op.nc, warm->size());
            start.head(m) = warm->head(m);
        }
        if (!(start.norm() > 0.0))
            start.head(p_).setConstant(1.0 / std::sqrt(static_cast<double>(p_)));  // sorted vec(I_p)

        Fit out;
        Rank1Factor f = power_leading_triple(op, start, opt);
        out.warm = f.v;
        Vector u = Vector::Zero(q_ * q_), v = Vector::Zero(p_ * p_);
        for (Index i = 0; i < op.nr; ++i)
            u[row_of_[static_cast<std::size_t>(i)]] = f.u[i];
        for (Index j = 0; j < op.nc; ++j)
            v[col_of_[static_cast<std::size_t>(j)]] = f.v[j];
        f.u = std::move(u);
        f.v = std::move(v);
        out.cov = factors_from_triple(f, p_, q_);
        out.factor = std::move(f);
        return out;
    }

  private:
    struct Op
    {
        const MaskedFitter& self;
        Vector w2, w1;
        Index nr = 0, nc = 0;
        bool unit = true;
        mutable std::optional<Matrix> dense_cache;

        Index rows() const { return nr; }
        Index cols() const { return nc; }

        void apply(const Vector& x, Vector& y) const
        {
            const auto blk = self.xi_.topLeftCorner(nr, nc);
            if (unit)
                y.noalias() = blk * x;
            else
            {
                y.noalias() = blk * x.cwiseProduct(w1.head(nc));
                y.array() *= w2.head(nr).array();
            }
        }

        void apply_transpose(const Vector& y, Vector& x) const
        {
            const auto blk = self.xi_.topLeftCorner(nr, nc);
            if (unit)
                x.noalias() = blk.transpose() * y;
            else
            {
                x.noalias() = blk.transpose() * y.cwiseProduct(w2.head(nr));
                x.array() *= w1.head(nc).array();
            }
        }

        const Matrix* dense() const
        {
            if (!dense_cache)
                dense_cache = w2.head(nr).asDiagonal() * self.xi_.topLeftCorner(nr, nc) * w1.head(nc).asDiagonal();
            return &*dense_cache;
        }
    };

    /// Pair indices (m * d + l) sorted by |l - m|, ties by index.
    static std::vector<Index> lag_order(Index d)
    {
        std::vector<Index> idx(static_cast<std::size_t>(d * d));
        std::iota(idx.begin(), idx.end(), Index{0});
        std::stable_sort(idx.begin(), idx.end(), [d](Index a, Index b) {
            return std::abs(a % d - a / d) < std::abs(b % d - b / d);
        });
        return idx;
    }

    static Vector weights(Mode mode, int k, const std::vector<Index>& order, Index d)
    {
        Vector w(static_cast<Index>(order.size()));
        for (std::size_t i = 0; i < order.size(); ++i)
            w[static_cast<Index>(i)] = mask_weight(mode, k, order[i] % d, order[i] / d);
        return w;
    }

    static Index support(const Vector& w)
    {
        Index n = w.size();
        while (n > 0 && w[n - 1] == 0.0)
            --n;
        return n;
    }

    Index p_, q_;
    std::vector<Index> row_of_, col_of_;
    Matrix xi_;
};

// ---------------------------------------------------------------------------
// Banded-objective cross-check
// ---------------------------------------------------------------------------

struct BandEquivalenceReport
{
    double nkp_objective = 0.0;     ///< ||S - S2 (x) S1||_F^2 at the NKP-of-doubly-banded factors
    double search_objective = 0.0;  ///< best objective from restarted coordinate descent
    int restarts = 0;
    bool passed = false;
};

/**
 * Compares NKP of the doubly banded covariance against a direct search of
 * min ||S - S2 (x) S1||_F^2 over banded S1, S2.
 *
 * The search is exact block coordinate descent: for fixed banded S1 the
 * optimal banded S2 has entries <A_{l2,m2}, S1> / ||S1||_F^2 on the band and
 * zero elsewhere, and symmetrically for S1. Random banded starts come from
 * `seed`. Intended for small pq.
 */
inline BandEquivalenceReport band_equivalence_check(const Eigen::Ref<const Matrix>& cov, Index p, Index q, int k1, int k2,
                                                    int restarts = 20, std::uint64_t seed = 0, double slack = 1e-9)
{
    if (p * q > 64)
        throw DimensionError("band_equivalence_check: intended for pq <= 64");
    check_bandwidth(Mode::band, k1, p, "band_equivalence_check k1");
    check_bandwidth(Mode::band, k2, q, "band_equivalence_check k2");
    if (cov.rows() != p * q || cov.cols() != p * q)
        throw DimensionError("band_equivalence_check: covariance dimension mismatch");

    const auto objective = [&](const Matrix& s2, const Matrix& s1) { return (cov - kron(s2, s1)).squaredNorm(); };

    BandEquivalenceReport rep;
    rep.restarts = restarts;
    {
        const MaskedCovariance masked = mask_separable(cov, p, q, k1, k2, Mode::band);
        if (RearrangedView::from_masked(masked).frobenius_norm() > 0.0)
        {
            const KronFit fit = kron_factorize(masked);
            rep.nkp_objective = objective(fit.cov.sigma2.matrix(), fit.cov.sigma1.matrix());
        }
        else
        {
            rep.nkp_objective = cov.squaredNorm();
        }
    }

    const auto block = [&](Index l2, Index m2) { return cov.block(l2 * p, m2 * p, p, p); };
    Rng rng(seed, 0x5ea4c4);
    double best = std::numeric_limits<double>::infinity();
    for (int r = 0; r < restarts; ++r)
    {
        Matrix s1 = Matrix::Zero(p, p);
        for (Index j = 0; j < p; ++j)
            for (Index i = j; i < p && i - j <= k1; ++i)
                s1(i, j) = s1(j, i) = rng.normal();
        Matrix s2 = Matrix::Zero(q, q);
        double prev = std::numeric_limits<double>::infinity();
        double obj = prev;
        for (int sweep = 0; sweep < 5000; ++sweep)
        {
            const double n1 = s1.squaredNorm();
            if (!(n1 > 0.0))
                break;
            for (Index m2 = 0; m2 < q; ++m2)
                for (Index l2 = 0; l2 < q; ++l2)
                    s2(l2, m2) = std::abs(l2 - m2) <= k2 ? block(l2, m2).cwiseProduct(s1).sum() / n1 : 0.0;
            const double n2 = s2.squaredNorm();
            if (!(n2 > 0.0))
                break;
            Matrix acc = Matrix::Zero(p, p);
            for (Index m2 = 0; m2 < q; ++m2)
                for (Index l2 = 0; l2 < q; ++l2)
                    if (s2(l2, m2) != 0.0)
                        acc += s2(l2, m2) * block(l2, m2);
            for (Index m1 = 0; m1 < p; ++m1)
                for (Index l1 = 0; l1 < p; ++l1)
                    s1(l1, m1) = std::abs(l1 - m1) <= k1 ? acc(l1, m1) / n2 : 0.0;
            obj = objective(s2, s1);
            if (prev - obj <= 1e-15 * std::max(1.0, obj))
                break;
            prev = obj;
        }
        if (!std::isfinite(obj))
            obj = cov.squaredNorm();
        best = std::min(best, obj);
    }
    rep.search_objective = best;
    rep.passed = rep.nkp_objective <= rep.search_objective + slack;
    return rep;
}

}  // namespace kronband

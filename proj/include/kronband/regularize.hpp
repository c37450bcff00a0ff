/**
 * @file regularize.hpp
 * @brief Banding / tapering weights, doubly masked pq x pq covariances and
 *        the full-vector baseline estimators.
 *
 * Taper weights for bandwidth k with h = floor(k / 2):
 *
 *     w = 1                      |l - m| <= h
 *     w = max(0, 2 - |l - m|/h)  h < |l - m| <= k
 *     w = 0                      otherwise
 *
 * For k in {0, 1} (h == 0) the middle branch is empty and w = I(l == m).
 * The max(0, .) clamp only matters for odd k >= 3, where the linear ramp
 * would otherwise go negative at |l - m| = k.
 */
#pragma once

#include "kronband/core.hpp"
#include "kronband/covariance.hpp"

#include <cstdlib>
#include <string>
#include <vector>

namespace kronband
{

enum class Mode
{
    band,
    taper
};

inline const char* to_string(Mode m) { return m == Mode::band ? "band" : "taper"; }

struct MaskMode
{
    Mode mode = Mode::band;
    int k = 0;
};

inline double band_weight(long k, long l, long m) { return std::labs(l - m) <= k ? 1.0 : 0.0; }

inline double taper_weight(long k, long l, long m)
{
    const long d = std::labs(l - m);
    const long h = k / 2;
    if (h == 0)
        return d == 0 ? 1.0 : 0.0;
    if (d <= h)
        return 1.0;
    if (d <= k)
        return std::max(0.0, 2.0 - static_cast<double>(d) / static_cast<double>(h));
    return 0.0;
}

inline double mask_weight(Mode mode, long k, long l, long m)
{
    return mode == Mode::band ? band_weight(k, l, m) : taper_weight(k, l, m);
}

/// d x d weight matrix, i.e. B_k(1_d) or T_k(1_d).
inline Matrix weight_matrix(Mode mode, int k, Index d)
{
    Matrix w(d, d);
    for (Index m = 0; m < d; ++m)
        for (Index l = 0; l < d; ++l)
            w(l, m) = mask_weight(mode, k, l, m);
    return w;
}

/// Largest |l - m| with a nonzero weight in a d x d mask.
inline Index support_width(Mode mode, int k, Index d)
{
    Index b = 0;
    for (Index lag = 1; lag < d; ++lag)
        if (mask_weight(mode, k, lag, 0) != 0.0)
            b = lag;
    return b;
}

inline void check_bandwidth(Mode mode, long k, Index dim, const char* what)
{
    const long hi = mode == Mode::band ? static_cast<long>(dim) - 1 : 2 * static_cast<long>(dim);
    if (k < 0 || k > hi)
        throw ParameterError(std::string(what) + ": bandwidth " + std::to_string(k) + " outside [0, " +
                             std::to_string(hi) + "] for " + to_string(mode) + " on dimension " + std::to_string(dim));
}

/**
 * A pq x pq covariance multiplied entrywise by W2 (x) W1 and stored only on
 * the double band |l1 - m1| <= b1, |l2 - m2| <= b2 (b = support width).
 *
 * Layout: outer diagonal d2 = l2 - m2 + b2 and column m2 select a block,
 * inside it d1 = l1 - m1 + b1 and m1 select the value. Slots whose row
 * index falls outside the matrix are kept at zero.
 */
class MaskedCovariance
{
  public:
    MaskedCovariance(Index p, Index q, int k1, int k2, Mode mode)
        : p_(p), q_(q), k1_(k1), k2_(k2), mode_(mode), b1_(support_width(mode, k1, p)), b2_(support_width(mode, k2, q)),
          values_(static_cast<std::size_t>((2 * b2_ + 1) * q_ * (2 * b1_ + 1) * p_), 0.0)
    {
    }

    Index p() const noexcept { return p_; }
    Index q() const noexcept { return q_; }
    Index dim() const noexcept { return p_ * q_; }
    int k1() const noexcept { return k1_; }
    int k2() const noexcept { return k2_; }
    Mode mode() const noexcept { return mode_; }
    Index inner_width() const noexcept { return b1_; }
    Index outer_width() const noexcept { return b2_; }

    bool in_band(Index l1, Index m1, Index l2, Index m2) const
    {
        return std::abs(l1 - m1) <= b1_ && std::abs(l2 - m2) <= b2_;
    }

    /// Entry ((l1, m1), (l2, m2)), zero off the stored band.
    double at(Index l1, Index m1, Index l2, Index m2) const
    {
        if (!in_band(l1, m1, l2, m2))
            return 0.0;
        return values_[slot(l1, m1, l2, m2)];
    }

    double& ref(Index l1, Index m1, Index l2, Index m2) { return values_[slot(l1, m1, l2, m2)]; }

    /// Entry at global (row, col) of the pq x pq matrix.
    double entry(Index row, Index col) const { return at(row % p_, col % p_, row / p_, col / p_); }

    /// Number of in-range index pairs inside the stored double band.
    Index nnz() const { return band_count(b1_, p_) * band_count(b2_, q_); }

    Matrix to_dense() const
    {
        if (dim() > 4096)
            throw DimensionError("MaskedCovariance::to_dense: pq = " + std::to_string(dim()) + " exceeds 4096");
        Matrix out = Matrix::Zero(dim(), dim());
        for_each([&](Index l1, Index m1, Index l2, Index m2, double v) { out(l2 * p_ + l1, m2 * p_ + m1) = v; });
        return out;
    }

    /// Visits every stored in-range entry as f(l1, m1, l2, m2, value).
    template <class F>
    void for_each(F&& f) const
    {
        for (Index m2 = 0; m2 < q_; ++m2)
            for (Index l2 = std::max<Index>(0, m2 - b2_); l2 <= std::min(q_ - 1, m2 + b2_); ++l2)
                for (Index m1 = 0; m1 < p_; ++m1)
                    for (Index l1 = std::max<Index>(0, m1 - b1_); l1 <= std::min(p_ - 1, m1 + b1_); ++l1)
                        f(l1, m1, l2, m2, values_[slot(l1, m1, l2, m2)]);
    }

    static Index band_count(Index b, Index d)
    {
        Index c = d;
        for (Index h = 1; h <= std::min(b, d - 1); ++h)
            c += 2 * (d - h);
        return c;
    }

  private:
    std::size_t slot(Index l1, Index m1, Index l2, Index m2) const
    {
        const Index d2 = l2 - m2 + b2_;
        const Index d1 = l1 - m1 + b1_;
        return static_cast<std::size_t>(((d2 * q_ + m2) * (2 * b1_ + 1) + d1) * p_ + m1);
    }

    Index p_, q_;
    int k1_, k2_;
    Mode mode_;
    Index b1_, b2_;
    std::vector<double> values_;
};

/// cov o (W_{k2}(1_q) (x) W_{k1}(1_p)), kept in block-banded storage.
inline MaskedCovariance mask_separable(const Eigen::Ref<const Matrix>& cov, Index p, Index q, int k1, int k2, Mode mode)
{
    if (cov.rows() != p * q || cov.cols() != p * q)
        throw DimensionError("mask_separable: covariance is " + std::to_string(cov.rows()) + "x" +
                             std::to_string(cov.cols()) + ", expected pq = " + std::to_string(p * q));
    check_bandwidth(mode, k1, p, "mask_separable k1");
    check_bandwidth(mode, k2, q, "mask_separable k2");
    MaskedCovariance out(p, q, k1, k2, mode);
    std::vector<double> w1(static_cast<std::size_t>(2 * p - 1)), w2(static_cast<std::size_t>(2 * q - 1));
    for (Index d = -(p - 1); d <= p - 1; ++d)
        w1[static_cast<std::size_t>(d + p - 1)] = mask_weight(mode, k1, d, 0);
    for (Index d = -(q - 1); d <= q - 1; ++d)
        w2[static_cast<std::size_t>(d + q - 1)] = mask_weight(mode, k2, d, 0);
    const Index b1 = out.inner_width();
    const Index b2 = out.outer_width();
    for (Index m2 = 0; m2 < q; ++m2)
        for (Index l2 = std::max<Index>(0, m2 - b2); l2 <= std::min(q - 1, m2 + b2); ++l2)
        {
            const double a = w2[static_cast<std::size_t>(l2 - m2 + q - 1)];
            for (Index m1 = 0; m1 < p; ++m1)
                for (Index l1 = std::max<Index>(0, m1 - b1); l1 <= std::min(p - 1, m1 + b1); ++l1)
                    out.ref(l1, m1, l2, m2) =
                        a * w1[static_cast<std::size_t>(l1 - m1 + p - 1)] * cov(l2 * p + l1, m2 * p + m1);
        }
    return out;
}

inline MaskedCovariance mask_separable(const CovEstimate& cov, int k1, int k2, Mode mode)
{
    return mask_separable(cov.matrix.matrix(), cov.p, cov.q, k1, k2, mode);
}

/// B_k or T_k applied to the full pq x pq covariance.
inline DenseSymMatrix baseline_regularize(const Eigen::Ref<const Matrix>& cov, int k, Mode mode)
{
    if (cov.rows() != cov.cols())
        throw DimensionError("baseline_regularize: covariance not square");
    const Index d = cov.rows();
    check_bandwidth(mode, k, d, "baseline_regularize k");
    Matrix out(d, d);
    for (Index m = 0; m < d; ++m)
        for (Index l = 0; l < d; ++l)
            out(l, m) = mask_weight(mode, k, l, m) * cov(l, m);
    return DenseSymMatrix(out);
}

inline DenseSymMatrix baseline_regularize(const CovEstimate& cov, int k, Mode mode)
{
    return baseline_regularize(cov.matrix.matrix(), k, mode);
}

}  // namespace kronband

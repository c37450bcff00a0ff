/**
 * @file covariance.hpp
 * @brief Sample, uncentered and truncated (robust) covariances of vec(X_i).
 *
 * All divisors are n, not n - 1.
 */
#pragma once

#include "kronband/core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace kronband
{

enum class CovKindTag
{
    sample,
    uncentered,
    robust_truncated,
};

struct CovEstimate
{
    DenseSymMatrix matrix;
    bool centered = false;
    CovKindTag kind = CovKindTag::sample;
    double tau = std::numeric_limits<double>::infinity();  ///< only for robust_truncated
    Index p = 0;
    Index q = 0;

    Index dim() const noexcept { return matrix.dim(); }
};

inline Matrix sample_mean(const MatrixDataset& ds)
{
    const Vector m = ds.columns().rowwise().mean();
    return unvec(m, ds.p(), ds.q());
}

namespace detail
{

/// (1/n) V V^T with a fixed summation order.
inline Matrix gram(const Matrix& v)
{
    Matrix g = Matrix::Zero(v.rows(), v.rows());
    g.selfadjointView<Eigen::Lower>().rankUpdate(v, 1.0 / static_cast<double>(v.cols()));
    return g.selfadjointView<Eigen::Lower>();
}

}  // namespace detail

inline CovEstimate sample_cov(const MatrixDataset& ds, bool centered)
{
    if (centered && ds.n() < 2)
        throw ParameterError("sample_cov: centered covariance needs n >= 2, got n=" + std::to_string(ds.n()));
    Matrix g;
    if (centered)
    {
        const Vector mean = ds.columns().rowwise().mean();
        g = detail::gram(ds.columns().colwise() - mean);
    }
    else
    {
        g = detail::gram(ds.columns());
    }
    return CovEstimate{DenseSymMatrix(g), centered, centered ? CovKindTag::sample : CovKindTag::uncentered,
                       std::numeric_limits<double>::infinity(), ds.p(), ds.q()};
}

/// sgn(e) * min(|e|, tau) entrywise.
inline MatrixDataset truncate_dataset(const MatrixDataset& ds, double tau)
{
    if (!(tau > 0.0))
        throw ParameterError("truncate_dataset: tau must be > 0, got " + std::to_string(tau));
    Matrix cols = ds.columns().cwiseMax(-tau).cwiseMin(tau);
    return MatrixDataset(ds.p(), ds.q(), std::move(cols));
}

/// Uncentered Gram covariance of the truncated data. Caller centers first if needed.
inline CovEstimate robust_cov(const MatrixDataset& ds, double tau)
{
    const MatrixDataset t = truncate_dataset(ds, tau);
    CovEstimate c = sample_cov(t, false);
    c.kind = CovKindTag::robust_truncated;
    c.tau = tau;
    return c;
}

/// X_i -> n/(n-1) (X_i - mean).
inline MatrixDataset center_transform(const MatrixDataset& ds)
{
    if (ds.n() < 2)
        throw ParameterError("center_transform: needs n >= 2, got n=" + std::to_string(ds.n()));
    const double n = static_cast<double>(ds.n());
    const Vector mean = ds.columns().rowwise().mean();
    Matrix cols = (n / (n - 1.0)) * (ds.columns().colwise() - mean);
    return MatrixDataset(ds.p(), ds.q(), std::move(cols));
}

/// Nearest-rank percentile (0 < pct <= 100) of an ascending sample.
inline double nearest_rank(const std::vector<double>& sorted, double pct)
{
    const auto n = static_cast<double>(sorted.size());
    auto rank = static_cast<std::size_t>(std::ceil(pct / 100.0 * n));
    rank = std::clamp<std::size_t>(rank, 1, sorted.size());
    return sorted[rank - 1];
}

/**
 * Truncation thresholds: the nearest-rank percentile of all |x^i_{l1,l2}|
 * for each requested percentile, de-duplicated, in descending order.
 */
inline std::vector<double> tau_candidates(const MatrixDataset& ds, const std::vector<double>& percentiles)
{
    if (percentiles.empty())
        throw ParameterError("tau_candidates: empty percentile list");
    for (double pct : percentiles)
        if (!(pct > 0.0 && pct <= 100.0))
            throw ParameterError("tau_candidates: percentile " + std::to_string(pct) + " outside (0, 100]");
    std::vector<double> pooled(static_cast<std::size_t>(ds.columns().size()));
    for (std::size_t i = 0; i < pooled.size(); ++i)
        pooled[i] = std::abs(ds.columns().data()[i]);
    std::sort(pooled.begin(), pooled.end());
    std::vector<double> taus;
    for (double pct : percentiles)
        taus.push_back(nearest_rank(pooled, pct));
    std::sort(taus.begin(), taus.end(), std::greater<>());
    taus.erase(std::unique(taus.begin(), taus.end()), taus.end());
    return taus;
}

/// The rate (log max(p, q) / n)^(-1/4) with unit constant. Theoretical only.
inline double theoretical_tau(Index n, Index p, Index q)
{
    const double l = std::log(static_cast<double>(std::max<Index>({p, q, 2})));
    return std::pow(l / static_cast<double>(n), -0.25);
}

}  // namespace kronband

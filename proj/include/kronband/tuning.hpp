/**
 * @file tuning.hpp
 * @brief Random-split selection of bandwidths (and truncation level).
 *
 * For N random splits into n1 training and n - n1 test samples the score of
 * a candidate is
 *
 *     R(k1, k2[, tau]) = N^-1 sum_nu || fit_nu(k1, k2[, tau]) - S_test_nu ||_1
 *
 * where S_test_nu is the centered sample covariance (divisor n - n1) of the
 * test part and ||.||_1 is the maximum absolute column sum. Robust
 * estimators truncate the training part only.
 */
#pragma once

#include "kronband/config.hpp"
#include "kronband/core.hpp"
#include "kronband/covariance.hpp"
#include "kronband/nkp.hpp"
#include "kronband/regularize.hpp"
#include "kronband/rng.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <functional>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace kronband
{

enum class Estimator
{
    band,
    taper,
    robust_band,
    robust_taper,
    baseline_band,
    baseline_taper,
};

inline const char* to_string(Estimator e)
{
    switch (e)
    {
        case Estimator::band:
            return "band";
        case Estimator::taper:
            return "taper";
        case Estimator::robust_band:
            return "robust-band";
        case Estimator::robust_taper:
            return "robust-taper";
        case Estimator::baseline_band:
            return "baseline-band";
        case Estimator::baseline_taper:
            return "baseline-taper";
    }
    return "?";
}

inline Estimator parse_estimator(std::string s)
{
    std::replace(s.begin(), s.end(), '_', '-');
    for (Estimator e : {Estimator::band, Estimator::taper, Estimator::robust_band, Estimator::robust_taper,
                        Estimator::baseline_band, Estimator::baseline_taper})
        if (s == to_string(e))
            return e;
    throw ParameterError("unknown estimator '" + s + "'");
}

inline Mode mode_of(Estimator e)
{
    return (e == Estimator::band || e == Estimator::robust_band || e == Estimator::baseline_band) ? Mode::band
                                                                                                 : Mode::taper;
}

inline bool is_robust(Estimator e) { return e == Estimator::robust_band || e == Estimator::robust_taper; }
inline bool is_baseline(Estimator e) { return e == Estimator::baseline_band || e == Estimator::baseline_taper; }

/// Default candidate bandwidths for one dimension.
inline std::vector<int> default_grid(Mode mode, Index dim, int band_cap = 20, int taper_cap = 40)
{
    std::vector<int> g;
    if (mode == Mode::band)
        for (int k = 0; k <= std::min<Index>(dim - 1, band_cap); ++k)
            g.push_back(k);
    else
        for (int k = 0; k <= std::min<Index>(2 * dim, taper_cap); k += 2)
            g.push_back(k);
    return g;
}

struct TuningConfig
{
    int splits = 10;
    std::optional<Index> n1;  ///< default floor(n / 3)
    std::vector<int> grid1;   ///< empty: default grid for the estimator
    std::vector<int> grid2;   ///< ignored by baselines
    std::vector<double> percentiles{99.9999, 99.999, 99.99, 99.9, 95, 90};
    std::vector<double> taus;  ///< explicit tau pool, overrides percentiles
    Estimator estimator = Estimator::band;
    std::uint64_t seed = 0;
    std::uint64_t stream = 0;
    bool center_robust = false;   ///< apply the n/(n-1) centering transform before truncation
    bool centered_train = true;   ///< non-robust fits use the centered covariance
    int band_cap = 20;
    int taper_cap = 40;
    SvdOptions svd{};
    int threads = 1;

    Index train_size(Index n) const { return n1.value_or(n / 3); }

    std::vector<int> grid_for(int which, Index p, Index q) const
    {
        const Mode mode = mode_of(estimator);
        if (is_baseline(estimator))
            return which == 1 ? (grid1.empty() ? default_grid(mode, p * q, band_cap, taper_cap) : grid1)
                              : std::vector<int>{0};
        const auto& g = which == 1 ? grid1 : grid2;
        return g.empty() ? default_grid(mode, which == 1 ? p : q, band_cap, taper_cap) : g;
    }

    void validate(Index n, Index p, Index q) const
    {
        if (splits < 1)
            throw ParameterError("tuning.splits: must be >= 1");
        const Index t = train_size(n);
        if (t < 1 || t >= n)
            throw ParameterError("tuning.n1: need 1 <= n1 < n, got n1=" + std::to_string(t) + " n=" + std::to_string(n));
        if (n - t < 2)
            throw ParameterError("tuning: test part has " + std::to_string(n - t) + " samples, need >= 2");
        if (!centered_train && is_robust(estimator))
            throw ParameterError("tuning: centered_train applies to non-robust estimators only");
        const Mode mode = mode_of(estimator);
        const auto g1 = grid_for(1, p, q);
        const auto g2 = grid_for(2, p, q);
        if (g1.empty() || g2.empty())
            throw ParameterError("tuning: empty bandwidth grid");
        const Index d1 = is_baseline(estimator) ? p * q : p;
        for (int k : g1)
            check_bandwidth(mode, k, d1, "tuning.grid1");
        if (!is_baseline(estimator))
            for (int k : g2)
                check_bandwidth(mode, k, q, "tuning.grid2");
        if (is_robust(estimator) && taus.empty() && percentiles.empty())
            throw ParameterError("tuning: robust estimator needs percentiles or taus");
        for (double t : taus)
            if (!(t > 0.0))
                throw ParameterError("tuning.taus: thresholds must be > 0");
    }

    /**
     * Section [tuning]:
     *   estimator    band | taper | robust-band | robust-taper | baseline-band | baseline-taper
     *   splits       N (default 10)
     *   n1           training size (default floor(n/3))
     *   grid1, grid2 integer lists, e.g. "0..5" or "0..40:2" or "0,2,4"
     *   percentiles  tau pool percentiles (default 99.9999,99.999,99.99,99.9,95,90)
     *   taus         explicit tau pool
     *   center       true | false  (centering transform for robust fits)
     *   band_cap, taper_cap   default-grid caps (20, 40)
     *   seed
     */
    static TuningConfig from_config(const Config& cfg, const std::string& section = "tuning")
    {
        cfg.require_known(section, {"estimator", "splits", "n1", "grid1", "grid2", "percentiles", "taus", "center",
                                    "band_cap", "taper_cap", "seed", "centered_train"});
        TuningConfig tc;
        if (cfg.has(section, "estimator"))
        {
            try
            {
                tc.estimator = parse_estimator(cfg.get_string(section, "estimator"));
            }
            catch (const ParameterError& e)
            {
                throw ParameterError(cfg.where(section, "estimator") + ": " + e.what());
            }
        }
        tc.splits = static_cast<int>(cfg.get_int(section, "splits", 10));
        if (cfg.has(section, "n1"))
            tc.n1 = cfg.get_int(section, "n1");
        if (cfg.has(section, "grid1"))
            tc.grid1 = cfg.get_int_list(section, "grid1");
        if (cfg.has(section, "grid2"))
            tc.grid2 = cfg.get_int_list(section, "grid2");
        if (cfg.has(section, "percentiles"))
            tc.percentiles = cfg.get_double_list(section, "percentiles");
        if (cfg.has(section, "taus"))
            tc.taus = cfg.get_double_list(section, "taus");
        tc.center_robust = parse_bool(cfg, section, "center", false);
        tc.centered_train = parse_bool(cfg, section, "centered_train", true);
        tc.band_cap = static_cast<int>(cfg.get_int(section, "band_cap", 20));
        tc.taper_cap = static_cast<int>(cfg.get_int(section, "taper_cap", 40));
        const long long seed = cfg.get_int(section, "seed", 0);
        if (seed < 0)
            throw ParameterError(cfg.where(section, "seed") + ": must be non-negative");
        tc.seed = static_cast<std::uint64_t>(seed);
        if (tc.splits < 1)
            throw ParameterError(cfg.where(section, "splits") + ": must be >= 1");
        return tc;
    }

    static bool parse_bool(const Config& cfg, const std::string& section, const std::string& key, bool fallback)
    {
        if (!cfg.has(section, key))
            return fallback;
        const std::string v = cfg.get_string(section, key);
        if (v == "true" || v == "1" || v == "yes")
            return true;
        if (v == "false" || v == "0" || v == "no")
            return false;
        throw ParameterError(cfg.where(section, key) + ": expected true or false, got '" + v + "'");
    }
};

struct ScoreEntry
{
    int k1 = 0;
    int k2 = 0;
    double tau = std::numeric_limits<double>::infinity();  ///< infinity: no truncation
    double score = 0.0;
};

struct SplitIndices
{
    std::vector<Index> train;
    std::vector<Index> test;
};

struct TuningResult
{
    int k1_hat = 0;
    int k2_hat = 0;
    std::optional<double> tau_hat;
    std::vector<ScoreEntry> score_grid;  ///< tau-major, then k1, then k2
    std::vector<SplitIndices> splits;

    double min_score() const
    {
        double m = std::numeric_limits<double>::infinity();
        for (const auto& e : score_grid)
            m = std::min(m, e.score);
        return m;
    }
};

/// Uniform random partition: n1 training indices, the rest for testing (both ascending).
inline SplitIndices random_split_indices(Index n, Index n1, Rng& rng)
{
    if (n1 < 1 || n1 >= n)
        throw ParameterError("split: need 1 <= n1 < n, got n1=" + std::to_string(n1) + " n=" + std::to_string(n));
    std::vector<Index> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), Index{0});
    rng.shuffle(perm);
    SplitIndices s;
    s.train.assign(perm.begin(), perm.begin() + n1);
    s.test.assign(perm.begin() + n1, perm.end());
    std::sort(s.train.begin(), s.train.end());
    std::sort(s.test.begin(), s.test.end());
    return s;
}

inline std::pair<MatrixDataset, MatrixDataset> split(const MatrixDataset& ds, Index n1, Rng& rng)
{
    const SplitIndices s = random_split_indices(ds.n(), n1, rng);
    return {ds.subset(s.train), ds.subset(s.test)};
}

/// Training covariance an estimator starts from.
inline Matrix training_covariance(const MatrixDataset& train, Estimator est, double tau, bool center_robust,
                                  bool centered_train = true)
{
    if (is_robust(est))
    {
        const MatrixDataset base = center_robust ? center_transform(train) : train;
        return robust_cov(base, tau).matrix.matrix();
    }
    return sample_cov(train, centered_train).matrix.matrix();
}

/// Structured estimate on a full dataset at fixed tuning parameters.
struct Estimate
{
    std::optional<KronFit> separable;     ///< proposed / robust estimators
    std::optional<DenseSymMatrix> dense;  ///< baselines
};

inline Estimate fit_estimator(const MatrixDataset& ds, Estimator est, int k1, int k2,
                              double tau = std::numeric_limits<double>::infinity(), bool center_robust = false,
                              const SvdOptions& svd = {}, bool centered = true)
{
    const Matrix c = training_covariance(ds, est, tau, center_robust, centered);
    Estimate out;
    if (is_baseline(est))
        out.dense = baseline_regularize(c, k1, mode_of(est));
    else
        out.separable = kron_factorize(mask_separable(c, ds.p(), ds.q(), k1, k2, mode_of(est)), svd);
    return out;
}

/// ||fit(train) - S_test||_1 for a single candidate.
inline double score(const MatrixDataset& train, const MatrixDataset& test, int k1, int k2, Estimator est,
                    std::optional<double> tau = std::nullopt, bool center_robust = false, const SvdOptions& svd = {},
                    bool centered_train = true)
{
    if (test.n() < 2)
        throw ParameterError("score: test part needs >= 2 samples");
    if (is_robust(est) && !tau)
        throw ParameterError("score: robust estimator needs tau");
    const Matrix te = sample_cov(test, true).matrix.matrix();
    const Estimate e = fit_estimator(train, est, k1, k2, tau.value_or(std::numeric_limits<double>::infinity()),
                                     center_robust, svd, centered_train);
    if (e.dense)
        return norm_l1(e.dense->matrix() - te);
    return norm_diff_separable_vs_dense(e.separable->cov, te, NormKind::l1);
}

namespace detail
{

/// For each grid entry, the first entry with the same d x d mask.
inline std::vector<std::size_t> canonical_bandwidths(Mode mode, const std::vector<int>& grid, Index d)
{
    std::vector<Matrix> masks;
    std::vector<std::size_t> out(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i)
    {
        masks.push_back(weight_matrix(mode, grid[i], d));
        out[i] = i;
        for (std::size_t j = 0; j < i; ++j)
            if (masks[j] == masks[i])
            {
                out[i] = out[j];
                break;
            }
    }
    return out;
}

/// Scores of every (tau, k1, k2) for one split, in grid order.
inline std::vector<double> score_split(const MatrixDataset& ds, const SplitIndices& s, const TuningConfig& cfg,
                                       const std::vector<double>& taus, const std::vector<int>& g1,
                                       const std::vector<int>& g2)
{
    const MatrixDataset train = ds.subset(s.train);
    const MatrixDataset test = ds.subset(s.test);
    const Matrix te = sample_cov(test, true).matrix.matrix();
    const Mode mode = mode_of(cfg.estimator);
    std::vector<double> out;
    out.reserve(taus.size() * g1.size() * g2.size());
    for (double tau : taus)
    {
        const Matrix c = training_covariance(train, cfg.estimator, tau, cfg.center_robust, cfg.centered_train);
        if (is_baseline(cfg.estimator))
        {
            for (int k : g1)
                out.push_back(norm_l1(baseline_regularize(c, k, mode).matrix() - te));
            continue;
        }
        const MaskedFitter fitter(c, ds.p(), ds.q());
        const auto c1 = canonical_bandwidths(mode, g1, ds.p());
        const auto c2 = canonical_bandwidths(mode, g2, ds.q());
        std::vector<double> block(g1.size() * g2.size());
        Vector warm;
        // Snake through the grid so each fit starts from a neighbouring solution.
        for (std::size_t a = 0; a < g1.size(); ++a)
            for (std::size_t t = 0; t < g2.size(); ++t)
            {
                const std::size_t b = (a % 2 == 0) ? t : g2.size() - 1 - t;
                if (c1[a] != a || c2[b] != b)
                    continue;
                const auto f = fitter.fit(mode, g1[a], g2[b], cfg.svd, warm.size() ? &warm : nullptr);
                warm = f.warm;
                block[a * g2.size() + b] = norm_diff_separable_vs_dense(f.cov, te, NormKind::l1);
            }
        // Bandwidths with identical masks share one fit, so their scores tie exactly.
        for (std::size_t a = 0; a < g1.size(); ++a)
            for (std::size_t b = 0; b < g2.size(); ++b)
                block[a * g2.size() + b] = block[c1[a] * g2.size() + c2[b]];
        out.insert(out.end(), block.begin(), block.end());
    }
    return out;
}

}  // namespace detail

/// Candidate truncation levels for a dataset under `cfg`.
inline std::vector<double> tau_pool(const MatrixDataset& ds, const TuningConfig& cfg)
{
    if (!is_robust(cfg.estimator))
        return {std::numeric_limits<double>::infinity()};
    std::vector<double> taus = cfg.taus;
    if (taus.empty())
        taus = tau_candidates(cfg.center_robust ? center_transform(ds) : ds, cfg.percentiles);
    std::sort(taus.begin(), taus.end(), std::greater<>());
    taus.erase(std::unique(taus.begin(), taus.end()), taus.end());
    taus.erase(std::remove_if(taus.begin(), taus.end(), [](double t) { return !(t > 0.0); }), taus.end());
    if (taus.empty())
        throw ParameterError("tuning: no positive truncation threshold in the candidate pool");
    return taus;
}

/**
 * Averages the split scores over cfg.splits random partitions and returns
 * the minimizer. Ties go to the smallest k1 + k2, then the smallest k1, then
 * the largest tau. Splits are drawn from Rng(cfg.seed, cfg.stream) up front,
 * so the result does not depend on cfg.threads.
 */
inline TuningResult select(const MatrixDataset& ds, const TuningConfig& cfg)
{
    cfg.validate(ds.n(), ds.p(), ds.q());
    const Index n1 = cfg.train_size(ds.n());
    const auto g1 = cfg.grid_for(1, ds.p(), ds.q());
    const auto g2 = cfg.grid_for(2, ds.p(), ds.q());
    const auto taus = tau_pool(ds, cfg);

    TuningResult res;
    Rng rng(cfg.seed, cfg.stream);
    for (int s = 0; s < cfg.splits; ++s)
        res.splits.push_back(random_split_indices(ds.n(), n1, rng));

    std::vector<std::vector<double>> per_split(res.splits.size());
    const int workers = std::max(1, std::min<int>(cfg.threads, static_cast<int>(res.splits.size())));
    if (workers == 1)
    {
        for (std::size_t s = 0; s < res.splits.size(); ++s)
            per_split[s] = detail::score_split(ds, res.splits[s], cfg, taus, g1, g2);
    }
    else
    {
        std::atomic<std::size_t> next{0};
        std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w)
            pool.emplace_back([&, w] {
                try
                {
                    for (std::size_t s; (s = next.fetch_add(1)) < res.splits.size();)
                        per_split[s] = detail::score_split(ds, res.splits[s], cfg, taus, g1, g2);
                }
                catch (...)
                {
                    errors[static_cast<std::size_t>(w)] = std::current_exception();
                }
            });
        for (auto& t : pool)
            t.join();
        for (const auto& e : errors)
            if (e)
                std::rethrow_exception(e);
    }

    const std::size_t cells = taus.size() * g1.size() * g2.size();
    std::vector<double> mean(cells, 0.0);
    for (const auto& v : per_split)
        for (std::size_t i = 0; i < cells; ++i)
            mean[i] += v[i];
    const double inv = 1.0 / static_cast<double>(res.splits.size());

    std::size_t best = 0;
    std::size_t i = 0;
    for (double tau : taus)
        for (int k1 : g1)
            for (int k2 : g2)
            {
                res.score_grid.push_back(ScoreEntry{k1, k2, tau, mean[i] * inv});
                ++i;
            }
    const auto better = [](const ScoreEntry& a, const ScoreEntry& b) {
        if (a.score != b.score)
            return a.score < b.score;
        if (a.k1 + a.k2 != b.k1 + b.k2)
            return a.k1 + a.k2 < b.k1 + b.k2;
        if (a.k1 != b.k1)
            return a.k1 < b.k1;
        return a.tau > b.tau;
    };
    for (std::size_t j = 1; j < res.score_grid.size(); ++j)
        if (better(res.score_grid[j], res.score_grid[best]))
            best = j;
    res.k1_hat = res.score_grid[best].k1;
    res.k2_hat = res.score_grid[best].k2;
    if (is_robust(cfg.estimator))
        res.tau_hat = res.score_grid[best].tau;
    return res;
}

}  // namespace kronband

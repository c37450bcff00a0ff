/**
 * @file bench.hpp
 * @brief Monte Carlo experiments: simulate, tune, fit, score against the truth.
 *
 * Replication r draws its dataset from Rng(seed, 2r) and its tuning splits
 * from Rng(seed, 2r + 1); all methods of a replication share both, so
 * per-replication comparisons between methods are paired.
 */
#pragma once

#include "kronband/config.hpp"
#include "kronband/core.hpp"
#include "kronband/covariance.hpp"
#include "kronband/nkp.hpp"
#include "kronband/regularize.hpp"
#include "kronband/rng.hpp"
#include "kronband/simulate.hpp"
#include "kronband/tuning.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

namespace kronband
{

enum class Method
{
    sample,
    baseline_band,
    baseline_taper,
    proposed_band,
    proposed_taper,
    robust_band,
    robust_taper,
};

inline constexpr Method kAllMethods[] = {Method::sample,         Method::baseline_band, Method::baseline_taper,
                                         Method::proposed_band,  Method::proposed_taper, Method::robust_band,
                                         Method::robust_taper};

inline const char* to_string(Method m)
{
    switch (m)
    {
        case Method::sample:
            return "sample";
        case Method::baseline_band:
            return "baseline_band";
        case Method::baseline_taper:
            return "baseline_taper";
        case Method::proposed_band:
            return "proposed_band";
        case Method::proposed_taper:
            return "proposed_taper";
        case Method::robust_band:
            return "robust_band";
        case Method::robust_taper:
            return "robust_taper";
    }
    return "?";
}

inline Method parse_method(std::string s)
{
    std::replace(s.begin(), s.end(), '-', '_');
    for (Method m : kAllMethods)
        if (s == to_string(m))
            return m;
    throw ParameterError("unknown method '" + s + "'");
}

inline NormKind parse_metric(const std::string& s)
{
    for (NormKind k : {NormKind::frob, NormKind::l1, NormKind::op})
        if (s == to_string(k))
            return k;
    throw ParameterError("unknown metric '" + s + "' (expected frob, l1 or op)");
}

/// Tuned estimator behind a method; sample has none.
inline std::optional<Estimator> estimator_of(Method m)
{
    switch (m)
    {
        case Method::sample:
            return std::nullopt;
        case Method::baseline_band:
            return Estimator::baseline_band;
        case Method::baseline_taper:
            return Estimator::baseline_taper;
        case Method::proposed_band:
            return Estimator::band;
        case Method::proposed_taper:
            return Estimator::taper;
        case Method::robust_band:
            return Estimator::robust_band;
        case Method::robust_taper:
            return Estimator::robust_taper;
    }
    return std::nullopt;
}

/// Bytes of one dense pq x pq double matrix.
inline double dense_bytes(Index p, Index q)
{
    const double d = static_cast<double>(p) * static_cast<double>(q);
    return 8.0 * d * d;
}

inline constexpr Index kLargeThreshold = 4096;  ///< pq above this needs ExperimentSpec::large

struct ExperimentSpec
{
    SimConfig sim;
    int reps = 100;
    std::vector<Method> methods{std::begin(kAllMethods), std::end(kAllMethods)};
    TuningConfig tuning;  ///< template; estimator, seed and stream are set per method and replication
    std::vector<NormKind> metrics{NormKind::frob, NormKind::l1, NormKind::op};
    std::uint64_t seed = 0;
    int threads = 1;
    bool large = false;

    void validate() const
    {
        sim.validate();
        if (reps < 1)
            throw ParameterError("experiment.reps: must be >= 1");
        if (methods.empty())
            throw ParameterError("experiment.methods: must not be empty");
        if (metrics.empty())
            throw ParameterError("experiment.metrics: must not be empty");
        for (NormKind k : metrics)
            if (k == NormKind::max)
                throw ParameterError("experiment.metrics: expected frob, l1 or op");
        if (threads < 1)
            throw ParameterError("experiment.threads: must be >= 1");
        const Index pq = sim.p * sim.q;
        if (pq > kLargeThreshold && !large)
        {
            char buf[160];
            std::snprintf(buf, sizeof buf,
                          "experiment: pq = %lld needs the large flag (about %.2f GB per dense pq x pq covariance)",
                          static_cast<long long>(pq), dense_bytes(sim.p, sim.q) / 1e9);
            throw ParameterError(buf);
        }
        for (Method m : methods)
            if (auto e = estimator_of(m))
            {
                TuningConfig t = tuning;
                t.estimator = *e;
                t.validate(sim.n, sim.p, sim.q);
            }
        if (sim.n < 2)
            throw ParameterError("sim.n: experiments need n >= 2");
    }

    /**
     * Sections [experiment], [sim], [tuning]. [experiment] keys:
     *   reps      replication count (default 100)
     *   methods   comma list, default all
     *   metrics   comma list of frob, l1, op (default all three)
     *   seed      default: sim.seed
     *   threads   worker count (default 1)
     *   large     true | false
     */
    static ExperimentSpec from_config(const Config& cfg)
    {
        ExperimentSpec spec;
        spec.sim = SimConfig::from_config(cfg, "sim");
        if (cfg.has_section("tuning"))
            spec.tuning = TuningConfig::from_config(cfg, "tuning");
        const std::string s = "experiment";
        cfg.require_known(s, {"reps", "methods", "metrics", "seed", "threads", "large"});
        spec.reps = static_cast<int>(cfg.get_int(s, "reps", 100));
        if (spec.reps < 1)
            throw ParameterError(cfg.where(s, "reps") + ": must be >= 1");
        if (cfg.has(s, "methods"))
        {
            spec.methods.clear();
            try
            {
                for (const auto& m : cfg.get_list(s, "methods"))
                    spec.methods.push_back(parse_method(m));
            }
            catch (const ParameterError& e)
            {
                throw ParameterError(cfg.where(s, "methods") + ": " + e.what());
            }
        }
        if (cfg.has(s, "metrics"))
        {
            spec.metrics.clear();
            try
            {
                for (const auto& m : cfg.get_list(s, "metrics"))
                    spec.metrics.push_back(parse_metric(m));
            }
            catch (const ParameterError& e)
            {
                throw ParameterError(cfg.where(s, "metrics") + ": " + e.what());
            }
        }
        const long long seed = cfg.get_int(s, "seed", static_cast<long long>(spec.sim.seed));
        if (seed < 0)
            throw ParameterError(cfg.where(s, "seed") + ": must be non-negative");
        spec.seed = static_cast<std::uint64_t>(seed);
        spec.threads = static_cast<int>(cfg.get_int(s, "threads", 1));
        spec.large = TuningConfig::parse_bool(cfg, s, "large", false);
        return spec;
    }
};

/// Error of one method in one replication.
struct MethodRecord
{
    Method method = Method::sample;
    std::map<NormKind, double> errors;
    std::optional<int> k1, k2;
    std::optional<double> tau;
};

struct ReplicationRecord
{
    int rep = 0;
    bool failed = false;
    std::string error;  ///< tagged diagnostic when failed
    std::vector<MethodRecord> methods;
    double seconds = 0.0;
};

/// Error norms of an estimate against a separable truth.
inline std::map<NormKind, double> evaluate(const SeparableCovariance& estimate, const SeparableCovariance& truth,
                                           const std::vector<NormKind>& metrics,
                                           const OperatorNormOptions& opt = {})
{
    std::map<NormKind, double> out;
    for (NormKind k : metrics)
        out[k] = norm_diff_separable(estimate, truth, k, opt);
    return out;
}

inline std::map<NormKind, double> evaluate(const Eigen::Ref<const Matrix>& estimate, const SeparableCovariance& truth,
                                           const std::vector<NormKind>& metrics,
                                           const OperatorNormOptions& opt = {})
{
    std::map<NormKind, double> out;
    for (NormKind k : metrics)
        out[k] = norm_diff_separable_vs_dense(truth, estimate, k, opt);
    return out;
}

namespace detail
{

inline OperatorNormOptions bench_norm_options()
{
    OperatorNormOptions o;
    o.dense_threshold = 2048;
    return o;
}

inline MethodRecord run_method(Method m, const MatrixDataset& ds, const SeparableCovariance& truth,
                               const ExperimentSpec& spec, int rep)
{
    MethodRecord rec;
    rec.method = m;
    const auto opt = bench_norm_options();
    const auto est = estimator_of(m);
    if (!est)
    {
        rec.errors = evaluate(sample_cov(ds, true).matrix.matrix(), truth, spec.metrics, opt);
        return rec;
    }
    TuningConfig tc = spec.tuning;
    tc.estimator = *est;
    tc.seed = spec.seed;
    tc.stream = 2 * static_cast<std::uint64_t>(rep) + 1;
    tc.threads = 1;
    const TuningResult tr = select(ds, tc);
    const double tau = tr.tau_hat.value_or(std::numeric_limits<double>::infinity());
    const Estimate e =
        fit_estimator(ds, *est, tr.k1_hat, tr.k2_hat, tau, tc.center_robust, tc.svd, tc.centered_train);
    rec.k1 = tr.k1_hat;
    if (!is_baseline(*est))
        rec.k2 = tr.k2_hat;
    rec.tau = tr.tau_hat;
    if (e.dense)
        rec.errors = evaluate(e.dense->matrix(), truth, spec.metrics, opt);
    else
        rec.errors = evaluate(e.separable->cov, truth, spec.metrics, opt);
    return rec;
}

}  // namespace detail

/// One replication; errors are caught and returned as a failed record.
inline ReplicationRecord run_replication(const ExperimentSpec& spec, int rep)
{
    ReplicationRecord out;
    out.rep = rep;
    const auto t0 = std::chrono::steady_clock::now();
    Method current = Method::sample;
    try
    {
        Rng rng(spec.seed, 2 * static_cast<std::uint64_t>(rep));
        const MatrixDataset ds = simulate(spec.sim, rng);
        const SeparableCovariance truth{spec.sim.sigma2(), spec.sim.sigma1(), ScaleConvention::none};
        for (Method m : spec.methods)
        {
            current = m;
            out.methods.push_back(detail::run_method(m, ds, truth, spec, rep));
        }
    }
    catch (const std::exception& e)
    {
        out.failed = true;
        out.methods.clear();
        out.error = std::string("rep ") + std::to_string(rep) + " [" + to_string(current) + "]: " + e.what();
    }
    out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return out;
}

struct ResultRow
{
    Method method = Method::sample;
    NormKind metric = NormKind::frob;
    double mean = 0.0;
    double std_error = 0.0;
};

struct MethodSummary
{
    Method method = Method::sample;
    std::optional<double> k1_mean, k2_mean, tau_mean;
};

struct ResultTable
{
    static constexpr int kSchemaVersion = 1;

    ExperimentSpec spec;
    std::vector<ResultRow> rows;  ///< method-major, metrics in spec order
    std::vector<MethodSummary> summaries;
    std::vector<ReplicationRecord> records;  ///< all replications, by index
    int used = 0;
    int failed = 0;

    const ResultRow& row(Method m, NormKind k) const
    {
        for (const auto& r : rows)
            if (r.method == m && r.metric == k)
                return r;
        throw ParameterError(std::string("result table has no row ") + to_string(m) + "/" + to_string(k));
    }

    const MethodSummary& summary(Method m) const
    {
        for (const auto& s : summaries)
            if (s.method == m)
                return s;
        throw ParameterError(std::string("result table has no method ") + to_string(m));
    }

    /// Per-replication values of one (method, metric) over successful replications.
    std::vector<double> values(Method m, NormKind k) const
    {
        std::vector<double> v;
        for (const auto& r : records)
            if (!r.failed)
                for (const auto& mr : r.methods)
                    if (mr.method == m)
                        v.push_back(mr.errors.at(k));
        return v;
    }
};

inline double mean_of(const std::vector<double>& v)
{
    double s = 0.0;
    for (double x : v)
        s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

/// Sample standard deviation / sqrt(count); 0 for a single value.
inline double std_error_of(const std::vector<double>& v)
{
    if (v.size() < 2)
        return 0.0;
    const double m = mean_of(v);
    double ss = 0.0;
    for (double x : v)
        ss += (x - m) * (x - m);
    const double n = static_cast<double>(v.size());
    return std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
}

/// Aggregates finished records (ordered by index) into a table.
inline ResultTable aggregate(const ExperimentSpec& spec, std::vector<ReplicationRecord> records)
{
    ResultTable t;
    t.spec = spec;
    t.records = std::move(records);
    for (const auto& r : t.records)
        (r.failed ? t.failed : t.used) += 1;
    if (t.failed * 10 > static_cast<int>(t.records.size()))
    {
        std::string msg = "experiment: " + std::to_string(t.failed) + " of " + std::to_string(t.records.size()) +
                          " replications failed";
        for (const auto& r : t.records)
            if (r.failed)
            {
                msg += "; first: " + r.error;
                break;
            }
        throw NumericalError(msg);
    }
    for (Method m : spec.methods)
    {
        for (NormKind k : spec.metrics)
        {
            const auto v = t.values(m, k);
            t.rows.push_back(ResultRow{m, k, mean_of(v), std_error_of(v)});
        }
        MethodSummary s;
        s.method = m;
        std::vector<double> k1, k2, tau;
        for (const auto& r : t.records)
            if (!r.failed)
                for (const auto& mr : r.methods)
                    if (mr.method == m)
                    {
                        if (mr.k1)
                            k1.push_back(*mr.k1);
                        if (mr.k2)
                            k2.push_back(*mr.k2);
                        if (mr.tau)
                            tau.push_back(*mr.tau);
                    }
        if (!k1.empty())
            s.k1_mean = mean_of(k1);
        if (!k2.empty())
            s.k2_mean = mean_of(k2);
        if (!tau.empty())
            s.tau_mean = mean_of(tau);
        t.summaries.push_back(s);
    }
    return t;
}

/**
 * Runs all replications on spec.threads workers. Records are stored by
 * replication index and aggregated in that order, so the table does not
 * depend on the worker count.
 */
inline ResultTable run_experiment(const ExperimentSpec& spec)
{
    spec.validate();
    std::vector<ReplicationRecord> records(static_cast<std::size_t>(spec.reps));
    const int workers = std::min(spec.threads, spec.reps);
    std::atomic<int> next{0};
    const auto work = [&] {
        for (int r; (r = next.fetch_add(1)) < spec.reps;)
            records[static_cast<std::size_t>(r)] = run_replication(spec, r);
    };
    if (workers <= 1)
        work();
    else
    {
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w)
            pool.emplace_back(work);
        for (auto& th : pool)
            th.join();
    }
    return aggregate(spec, std::move(records));
}

namespace detail
{

inline std::string fixed2(double x)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f", x);
    return buf;
}

inline std::string fixed2(const std::optional<double>& x) { return x ? fixed2(*x) : std::string(); }

}  // namespace detail

/**
 * CSV, one row per (method, metric):
 *   schema_version,method,metric,mean,std_error,k1_hat,k2_hat,tau_hat,reps,failed
 * Errors and bandwidth means use two decimals; empty cells where a method
 * has no such parameter. For baselines k1_hat is the single bandwidth.
 */
inline void write_csv(std::ostream& out, const ResultTable& t)
{
    out << "schema_version,method,metric,mean,std_error,k1_hat,k2_hat,tau_hat,reps,failed\n";
    for (const auto& r : t.rows)
    {
        const auto& s = t.summary(r.method);
        out << ResultTable::kSchemaVersion << ',' << to_string(r.method) << ',' << to_string(r.metric) << ','
            << detail::fixed2(r.mean) << ',' << detail::fixed2(r.std_error) << ',' << detail::fixed2(s.k1_mean)
            << ',' << detail::fixed2(s.k2_mean) << ',' << detail::fixed2(s.tau_mean) << ',' << t.used << ','
            << t.failed << '\n';
    }
}

/// Full-precision JSON with per-replication records; timings only on request.
inline nlohmann::ordered_json to_json(const ResultTable& t, bool include_timing = false)
{
    using nlohmann::ordered_json;
    ordered_json j;
    j["schema_version"] = ResultTable::kSchemaVersion;
    ordered_json sim;
    sim["n"] = t.spec.sim.n;
    sim["p"] = t.spec.sim.p;
    sim["q"] = t.spec.sim.q;
    sim["model1"] = to_string(t.spec.sim.model1.kind);
    sim["rho1"] = t.spec.sim.model1.rho;
    sim["model2"] = to_string(t.spec.sim.model2.kind);
    sim["rho2"] = t.spec.sim.model2.rho;
    sim["tail"] = t.spec.sim.tail == Tail::gaussian ? "gaussian" : "t";
    sim["df"] = t.spec.sim.df;
    sim["t_parameterization"] = to_string(t.spec.sim.t_param);
    j["sim"] = sim;
    j["seed"] = t.spec.seed;
    j["reps"] = t.spec.reps;
    j["used"] = t.used;
    j["failed"] = t.failed;

    ordered_json rows = ordered_json::array();
    for (const auto& r : t.rows)
        rows.push_back({{"method", to_string(r.method)},
                        {"metric", to_string(r.metric)},
                        {"mean", r.mean},
                        {"std_error", r.std_error}});
    j["rows"] = rows;

    ordered_json sums = ordered_json::array();
    for (const auto& s : t.summaries)
    {
        ordered_json o;
        o["method"] = to_string(s.method);
        o["k1_hat"] = s.k1_mean ? ordered_json(*s.k1_mean) : ordered_json(nullptr);
        o["k2_hat"] = s.k2_mean ? ordered_json(*s.k2_mean) : ordered_json(nullptr);
        o["tau_hat"] = s.tau_mean ? ordered_json(*s.tau_mean) : ordered_json(nullptr);
        sums.push_back(o);
    }
    j["methods"] = sums;

    ordered_json recs = ordered_json::array();
    for (const auto& r : t.records)
    {
        ordered_json o;
        o["rep"] = r.rep;
        o["failed"] = r.failed;
        if (r.failed)
            o["error"] = r.error;
        if (include_timing)
            o["seconds"] = r.seconds;
        ordered_json ms = ordered_json::array();
        for (const auto& m : r.methods)
        {
            ordered_json mo;
            mo["method"] = to_string(m.method);
            for (const auto& [k, v] : m.errors)
                mo[to_string(k)] = v;
            if (m.k1)
                mo["k1"] = *m.k1;
            if (m.k2)
                mo["k2"] = *m.k2;
            if (m.tau)
                mo["tau"] = *m.tau;
            ms.push_back(mo);
        }
        o["methods"] = ms;
        recs.push_back(o);
    }
    j["records"] = recs;
    return j;
}

}  // namespace kronband

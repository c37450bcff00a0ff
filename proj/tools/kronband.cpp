// kronband command-line front end.
//
// Exit codes: 0 success, 2 validation error, 3 numerical failure, 4 I/O error.

#include "kronband/kronband.hpp"
#include "png.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using namespace kronband;

namespace
{

constexpr int kSchemaVersion = 1;

int default_threads()
{
    const unsigned n = std::thread::hardware_concurrency();
    return n == 0 ? 1 : static_cast<int>(n);
}

void write_text(const std::string& path, const std::string& text)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw IoError(path + ": cannot open for writing");
    out << text;
    if (!out)
        throw IoError(path + ": write failed");
}

void write_json(const std::string& path, const ordered_json& j)
{
    const std::string text = j.dump(2) + "\n";
    if (path.empty() || path == "-")
        std::cout << text;
    else
        write_text(path, text);
}

void ensure_dir(const std::string& dir)
{
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec)
        throw IoError(dir + ": cannot create directory: " + ec.message());
}

Estimator method_estimator(const std::string& m)
{
    return parse_estimator(m);
}

std::vector<double> parse_percentiles(const std::string& s)
{
    std::vector<double> out;
    for (const auto& item : Config::split_list(s))
    {
        std::size_t used = 0;
        double v = 0.0;
        try
        {
            v = std::stod(item, &used);
        }
        catch (const std::exception&)
        {
            used = 0;
        }
        if (used != item.size() || !(v > 0.0 && v <= 100.0))
            throw ParameterError("--percentiles: bad entry '" + item + "' (expected numbers in (0, 100])");
        out.push_back(v);
    }
    if (out.empty())
        throw ParameterError("--percentiles: empty list");
    return out;
}

// ---------------------------------------------------------------------------
// simulate

struct SimulateArgs
{
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
};

int cmd_simulate(const SimulateArgs& a)
{
    const Config cfg = Config::load(a.config);
    SimConfig sc = SimConfig::from_config(cfg, "sim");
    if (a.seed)
        sc.seed = *a.seed;
    const MatrixDataset ds = simulate(sc);
    if (fs::path(a.out).extension() == ".csv")
        io::write_csv(a.out, ds);
    else
        io::write_container(a.out, ds);
    std::cerr << "wrote " << a.out << " (n=" << ds.n() << " p=" << ds.p() << " q=" << ds.q() << ")\n";
    return 0;
}

// ---------------------------------------------------------------------------
// estimate

struct EstimateArgs
{
    std::string dataset;
    std::string method = "band";
    std::optional<int> k1, k2;
    std::optional<double> tau;
    bool center = false;
    std::string out;
    bool heatmap = false;
    int cell = 8;
};

void emit_heatmap(const std::string& path, const Matrix& m, int cell)
{
    tools::write_png(path, tools::heatmap(m, cell));
}

int cmd_estimate(const EstimateArgs& a)
{
    const MatrixDataset ds = io::read_dataset(a.dataset);
    if (a.cell < 1)
        throw ParameterError("--cell: must be >= 1");
    ordered_json j;
    j["schema_version"] = kSchemaVersion;
    j["dataset"] = a.dataset;
    j["n"] = ds.n();
    j["p"] = ds.p();
    j["q"] = ds.q();
    j["method"] = a.method;

    if (a.method == "sample")
    {
        if (a.k1 || a.k2 || a.tau)
            throw ParameterError("--method sample takes no --k1/--k2/--tau");
        const Matrix c = sample_cov(ds, true).matrix.matrix();
        ensure_dir(a.out);
        io::write_matrix_csv((fs::path(a.out) / "covariance.csv").string(), c);
        if (a.heatmap)
            emit_heatmap((fs::path(a.out) / "covariance.png").string(), c, a.cell);
        write_json((fs::path(a.out) / "summary.json").string(), j);
        return 0;
    }

    const Estimator est = method_estimator(a.method);
    const Mode mode = mode_of(est);
    if (!a.k1)
        throw ParameterError("--k1 is required for --method " + a.method);
    if (is_baseline(est))
    {
        if (a.k2)
            throw ParameterError("--k2 does not apply to baseline methods (one bandwidth on the pq vector)");
        check_bandwidth(mode, *a.k1, ds.p() * ds.q(), "--k1");
    }
    else
    {
        if (!a.k2)
            throw ParameterError("--k2 is required for --method " + a.method);
        check_bandwidth(mode, *a.k1, ds.p(), "--k1");
        check_bandwidth(mode, *a.k2, ds.q(), "--k2");
    }
    if (is_robust(est) && !a.tau)
        throw ParameterError("--tau is required for robust methods (see 'inspect' for the percentile pool)");
    if (!is_robust(est) && a.tau)
        throw ParameterError("--tau applies to robust methods only");
    if (a.tau && !(*a.tau > 0.0))
        throw ParameterError("--tau: must be > 0");

    const double tau = a.tau.value_or(std::numeric_limits<double>::infinity());
    const Estimate e = fit_estimator(ds, est, *a.k1, a.k2.value_or(0), tau, a.center);
    j["k1"] = *a.k1;
    if (a.k2)
        j["k2"] = *a.k2;
    if (a.tau)
        j["tau"] = *a.tau;
    if (is_robust(est))
        j["centered"] = a.center;

    ensure_dir(a.out);
    if (e.dense)
    {
        io::write_matrix_csv((fs::path(a.out) / "covariance.csv").string(), e.dense->matrix());
        if (a.heatmap)
            emit_heatmap((fs::path(a.out) / "covariance.png").string(), e.dense->matrix(), a.cell);
    }
    else
    {
        const KronFit& f = *e.separable;
        io::write_matrix_csv((fs::path(a.out) / "sigma1.csv").string(), f.cov.sigma1.matrix());
        io::write_matrix_csv((fs::path(a.out) / "sigma2.csv").string(), f.cov.sigma2.matrix());
        if (a.heatmap)
        {
            emit_heatmap((fs::path(a.out) / "sigma1.png").string(), f.cov.sigma1.matrix(), a.cell);
            emit_heatmap((fs::path(a.out) / "sigma2.png").string(), f.cov.sigma2.matrix(), a.cell);
        }
        j["sigma"] = f.factor.sigma;
        j["convention"] = to_string(f.cov.convention);
        j["residual_frobenius"] = f.residual_frobenius();
        j["iterations"] = f.factor.iterations;
        j["dense_fallback"] = f.factor.used_dense_fallback;
    }
    write_json((fs::path(a.out) / "summary.json").string(), j);
    return 0;
}

// ---------------------------------------------------------------------------
// select

struct SelectArgs
{
    std::string dataset;
    std::string config;
    std::optional<std::string> method;
    std::optional<std::string> percentiles;
    std::optional<std::uint64_t> seed;
    std::optional<bool> center;
    int threads = 1;
    std::string out;
};

int cmd_select(const SelectArgs& a)
{
    TuningConfig tc;
    if (!a.config.empty())
        tc = TuningConfig::from_config(Config::load(a.config), "tuning");
    if (a.method)
    {
        if (*a.method == "sample")
            throw ParameterError("--method sample has nothing to tune");
        tc.estimator = method_estimator(*a.method);
    }
    if (a.percentiles)
        tc.percentiles = parse_percentiles(*a.percentiles);
    if (a.seed)
        tc.seed = *a.seed;
    if (a.center)
        tc.center_robust = *a.center;
    tc.threads = a.threads;

    const MatrixDataset ds = io::read_dataset(a.dataset);
    const TuningResult r = select(ds, tc);

    ordered_json j;
    j["schema_version"] = kSchemaVersion;
    j["dataset"] = a.dataset;
    j["n"] = ds.n();
    j["p"] = ds.p();
    j["q"] = ds.q();
    j["estimator"] = to_string(tc.estimator);
    j["splits"] = tc.splits;
    j["n1"] = tc.train_size(ds.n());
    j["seed"] = tc.seed;
    j["k1_hat"] = r.k1_hat;
    if (!is_baseline(tc.estimator))
        j["k2_hat"] = r.k2_hat;
    j["tau_hat"] = r.tau_hat ? ordered_json(*r.tau_hat) : ordered_json(nullptr);
    j["min_score"] = r.min_score();
    ordered_json grid = ordered_json::array();
    for (const auto& e : r.score_grid)
    {
        ordered_json g;
        g["k1"] = e.k1;
        if (!is_baseline(tc.estimator))
            g["k2"] = e.k2;
        if (is_robust(tc.estimator))
            g["tau"] = e.tau;
        g["score"] = e.score;
        grid.push_back(g);
    }
    j["score_grid"] = grid;
    write_json(a.out, j);
    return 0;
}

// ---------------------------------------------------------------------------
// bench

struct BenchArgs
{
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;
    bool large = false;
    bool plot = false;
    bool timing = false;
};

int cmd_bench(const BenchArgs& a)
{
    ExperimentSpec spec = ExperimentSpec::from_config(Config::load(a.config));
    if (a.seed)
        spec.seed = *a.seed;
    spec.threads = a.threads.value_or(default_threads());
    spec.large = spec.large || a.large;
    spec.validate();

    const ResultTable t = run_experiment(spec);
    std::ostringstream csv;
    write_csv(csv, t);
    write_text(a.out + ".csv", csv.str());
    write_json(a.out + ".json", to_json(t, a.timing));
    if (a.plot)
    {
        std::vector<double> frob;
        for (Method m : spec.methods)
            for (const auto& r : t.rows)
                if (r.method == m && r.metric == spec.metrics.front())
                    frob.push_back(r.mean);
        tools::write_png(a.out + ".png", tools::bar_plot(frob));
    }
    if (t.failed > 0)
        std::cerr << t.failed << " replication(s) failed and were excluded\n";
    std::cerr << "wrote " << a.out << ".csv and " << a.out << ".json\n";
    return 0;
}

// ---------------------------------------------------------------------------
// inspect

struct InspectArgs
{
    std::string dataset;
    std::optional<std::string> percentiles;
    bool center = false;
    std::string out;
};

int cmd_inspect(const InspectArgs& a)
{
    const MatrixDataset ds = io::read_dataset(a.dataset);
    const std::vector<double> pct = a.percentiles ? parse_percentiles(*a.percentiles)
                                                  : std::vector<double>{99.9999, 99.999, 99.99, 99.9, 95, 90};
    const MatrixDataset base = a.center ? center_transform(ds) : ds;
    const Matrix& x = base.columns();

    std::vector<double> abs(x.data(), x.data() + x.size());
    for (double& v : abs)
        v = std::abs(v);
    std::sort(abs.begin(), abs.end());

    ordered_json j;
    j["schema_version"] = kSchemaVersion;
    j["dataset"] = a.dataset;
    j["n"] = ds.n();
    j["p"] = ds.p();
    j["q"] = ds.q();
    j["centered"] = a.center;
    j["entries"] = x.size();
    j["min"] = x.minCoeff();
    j["max"] = x.maxCoeff();
    j["mean"] = x.mean();
    j["max_abs"] = abs.back();
    ordered_json pj = ordered_json::array();
    for (double p : pct)
        pj.push_back({{"percentile", p}, {"abs_value", nearest_rank(abs, p)}});
    j["abs_percentiles"] = pj;
    j["tau_pool"] = tau_candidates(base, pct);
    write_json(a.out, j);
    return 0;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Kronecker-structured banded / tapered covariance estimation"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Show help for all subcommands");

    SimulateArgs sim;
    auto* s = app.add_subcommand("simulate", "Draw a dataset from a [sim] config");
    s->add_option("--config", sim.config, "Config file with a [sim] section")->required();
    s->add_option("--out", sim.out, "Output path (.csv for CSV, otherwise binary container)")->required();
    s->add_option("--seed", sim.seed, "Override sim.seed");

    EstimateArgs est;
    auto* e = app.add_subcommand("estimate", "Fit one estimator at fixed tuning parameters");
    e->add_option("--dataset", est.dataset, "Dataset path")->required();
    e->add_option("--method", est.method, "Estimator")
        ->check(CLI::IsMember({"sample", "band", "taper", "robust-band", "robust-taper", "baseline-band",
                               "baseline-taper"}));
    e->add_option("--k1", est.k1, "Bandwidth for sigma1 (baselines: the single pq bandwidth)");
    e->add_option("--k2", est.k2, "Bandwidth for sigma2");
    e->add_option("--tau", est.tau, "Truncation level (robust methods)");
    e->add_flag("--center", est.center, "Centering transform before truncation (robust methods)");
    e->add_option("--out", est.out, "Output directory")->required();
    e->add_flag("--heatmap", est.heatmap, "Write PNG heatmaps of the estimated factors");
    e->add_option("--cell", est.cell, "Heatmap pixels per matrix entry")->capture_default_str();

    SelectArgs sel;
    auto* se = app.add_subcommand("select", "Choose bandwidths (and tau) by random splits");
    se->add_option("--dataset", sel.dataset, "Dataset path")->required();
    se->add_option("--config", sel.config, "Config file with a [tuning] section");
    se->add_option("--method", sel.method, "Estimator (overrides tuning.estimator)")
        ->check(CLI::IsMember({"band", "taper", "robust-band", "robust-taper", "baseline-band", "baseline-taper"}));
    se->add_option("--percentiles", sel.percentiles, "Comma list of percentiles for the tau pool");
    se->add_option("--seed", sel.seed, "Seed for the random splits");
    se->add_option("--center", sel.center, "Centering transform before truncation (true/false)");
    se->add_option("--threads", sel.threads, "Worker threads")->default_val(default_threads());
    se->add_option("--out", sel.out, "Output JSON path (default stdout)");

    BenchArgs bench;
    auto* b = app.add_subcommand("bench", "Run a Monte Carlo experiment");
    b->add_option("--config", bench.config, "Experiment config ([experiment], [sim], [tuning])")->required();
    b->add_option("--out", bench.out, "Output prefix; writes <prefix>.csv and <prefix>.json")->required();
    b->add_option("--seed", bench.seed, "Override the experiment seed");
    b->add_option("--threads", bench.threads, "Worker threads (default: available parallelism)");
    b->add_flag("--large", bench.large, "Allow pq > 4096 (dense pq x pq matrices)");
    b->add_flag("--plot", bench.plot, "Write <prefix>.png with mean errors per method");
    b->add_flag("--timing", bench.timing, "Include per-replication runtimes in the JSON");

    InspectArgs ins;
    auto* in = app.add_subcommand("inspect", "Shape and entry statistics of a dataset");
    in->add_option("--dataset", ins.dataset, "Dataset path")->required();
    in->add_option("--percentiles", ins.percentiles, "Comma list of percentiles for the tau pool");
    in->add_flag("--center", ins.center, "Apply the centering transform first");
    in->add_option("--out", ins.out, "Output JSON path (default stdout)");

    try
    {
        app.parse(argc, argv);
    }
    catch (const CLI::ParseError& err)
    {
        const int rc = app.exit(err);
        return rc == 0 ? 0 : 2;
    }

    try
    {
        if (*s)
            return cmd_simulate(sim);
        if (*e)
            return cmd_estimate(est);
        if (*se)
            return cmd_select(sel);
        if (*b)
            return cmd_bench(bench);
        if (*in)
            return cmd_inspect(ins);
    }
    catch (const ValidationError& err)
    {
        std::cerr << "error: " << err.what() << '\n';
        return 2;
    }
    catch (const NumericalError& err)
    {
        std::cerr << "numerical error: " << err.what() << '\n';
        return 3;
    }
    catch (const IoError& err)
    {
        std::cerr << "I/O error: " << err.what() << '\n';
        return 4;
    }
    catch (const std::exception& err)
    {
        std::cerr << "error: " << err.what() << '\n';
        return 1;
    }
    return 0;
}

/**
 * @file simulate.hpp
 * @brief Ground-truth MA(1)/AR(1) factors and matrix-normal / matrix-t draws.
 */
#pragma once

#include "kronband/config.hpp"
#include "kronband/core.hpp"
#include "kronband/rng.hpp"

#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>

namespace kronband
{

enum class CovKind
{
    ma1,
    ar1
};

inline const char* to_string(CovKind k) { return k == CovKind::ma1 ? "ma1" : "ar1"; }

inline CovKind parse_cov_kind(const std::string& s)
{
    if (s == "ma1" || s == "MA1")
        return CovKind::ma1;
    if (s == "ar1" || s == "AR1")
        return CovKind::ar1;
    throw ParameterError("unknown covariance model '" + s + "' (expected ma1 or ar1)");
}

struct CovModel
{
    CovKind kind = CovKind::ar1;
    Index dim = 1;
    double rho = 0.0;
};

/// rho^|l-m| (AR1), truncated to |l-m| <= 1 for MA1. Unit diagonal.
inline DenseSymMatrix build_cov(const CovModel& model)
{
    if (!(std::abs(model.rho) < 1.0))
        throw ParameterError("build_cov: |rho| must be < 1, got " + std::to_string(model.rho));
    if (model.dim < 1)
        throw ParameterError("build_cov: dim must be >= 1");
    Matrix s(model.dim, model.dim);
    for (Index m = 0; m < model.dim; ++m)
        for (Index l = 0; l < model.dim; ++l)
        {
            const Index lag = l > m ? l - m : m - l;
            if (model.kind == CovKind::ma1 && lag > 1)
                s(l, m) = 0.0;
            else
                s(l, m) = lag == 0 ? 1.0 : std::pow(model.rho, static_cast<double>(lag));
        }
    return DenseSymMatrix(s);
}

/// Lower Cholesky factor; throws NotPositiveDefiniteError.
inline Matrix cholesky_lower(const DenseSymMatrix& s, const char* what)
{
    Eigen::LLT<Matrix> llt(s.matrix());
    if (llt.info() != Eigen::Success)
        throw NotPositiveDefiniteError(std::string(what) + ": matrix is not positive definite");
    return llt.matrixL();
}

/// Each X_i = L1 Z L2^T with Z standard normal (drawn column-major).
inline MatrixDataset sample_matrix_normal(Index n, const DenseSymMatrix& sigma1, const DenseSymMatrix& sigma2,
                                          Rng& rng)
{
    if (n < 1)
        throw ParameterError("sample_matrix_normal: n must be >= 1");
    const Matrix l1 = cholesky_lower(sigma1, "sample_matrix_normal: sigma1");
    const Matrix l2 = cholesky_lower(sigma2, "sample_matrix_normal: sigma2");
    const Index p = sigma1.dim();
    const Index q = sigma2.dim();
    Matrix cols(p * q, n);
    Matrix z(p, q);
    for (Index i = 0; i < n; ++i)
    {
        for (Index j = 0; j < z.size(); ++j)
            z.data()[j] = rng.normal();
        Matrix x = l1 * z * l2.transpose();
        cols.col(i) = Eigen::Map<const Vector>(x.data(), p * q);
    }
    return MatrixDataset(p, q, std::move(cols));
}

/// How the matrix passed to the t sampler relates to cov(vec X).
enum class TParameterization
{
    scale,       ///< cov(vec X) = df / (df - 2) * Sigma
    covariance,  ///< cov(vec X) = Sigma
};

inline const char* to_string(TParameterization t)
{
    return t == TParameterization::scale ? "scale" : "covariance";
}

inline TParameterization parse_t_parameterization(const std::string& s)
{
    if (s == "scale")
        return TParameterization::scale;
    if (s == "covariance")
        return TParameterization::covariance;
    throw ParameterError("unknown t parameterization '" + s + "' (expected scale or covariance)");
}

/**
 * Multivariate t: X_i = G_i * sqrt(df / W_i), G_i matrix normal, W_i ~ chi2(df).
 *
 * With TParameterization::covariance the factor is sqrt((df - 2) / W_i) so
 * that the supplied Kronecker product is the covariance rather than the scale.
 */
inline MatrixDataset sample_matrix_t(Index n, const DenseSymMatrix& sigma1, const DenseSymMatrix& sigma2, double df,
                                     Rng& rng, TParameterization param = TParameterization::scale)
{
    if (!(df >= 3.0))
        throw ParameterError("sample_matrix_t: df must be >= 3, got " + std::to_string(df));
    if (n < 1)
        throw ParameterError("sample_matrix_t: n must be >= 1");
    const Matrix l1 = cholesky_lower(sigma1, "sample_matrix_t: sigma1");
    const Matrix l2 = cholesky_lower(sigma2, "sample_matrix_t: sigma2");
    const Index p = sigma1.dim();
    const Index q = sigma2.dim();
    const double numerator = param == TParameterization::scale ? df : df - 2.0;
    Matrix cols(p * q, n);
    Matrix z(p, q);
    for (Index i = 0; i < n; ++i)
    {
        for (Index j = 0; j < z.size(); ++j)
            z.data()[j] = rng.normal();
        const double w = rng.chi_square(df);
        Matrix x = (std::sqrt(numerator / w)) * (l1 * z * l2.transpose());
        cols.col(i) = Eigen::Map<const Vector>(x.data(), p * q);
    }
    return MatrixDataset(p, q, std::move(cols));
}

enum class Tail
{
    gaussian,
    student_t
};

struct SimConfig
{
    Index n = 50;
    Index p = 20;
    Index q = 30;
    CovModel model1{CovKind::ar1, 20, 0.5};
    CovModel model2{CovKind::ar1, 30, 0.5};
    Tail tail = Tail::gaussian;
    double df = 3.0;
    TParameterization t_param = TParameterization::scale;
    std::uint64_t seed = 0;

    void validate() const
    {
        if (n < 1)
            throw ParameterError("sim.n: must be >= 1");
        if (p < 1 || q < 1)
            throw ParameterError("sim.p/sim.q: must be >= 1");
        if (model1.dim != p)
            throw ParameterError("sim: model1 dimension must equal p");
        if (model2.dim != q)
            throw ParameterError("sim: model2 dimension must equal q");
        if (!(std::abs(model1.rho) < 1.0))
            throw ParameterError("sim.rho1: |rho| must be < 1");
        if (!(std::abs(model2.rho) < 1.0))
            throw ParameterError("sim.rho2: |rho| must be < 1");
        if (tail == Tail::student_t && !(df >= 3.0))
            throw ParameterError("sim.df: must be >= 3");
    }

    DenseSymMatrix sigma1() const { return build_cov(model1); }
    DenseSymMatrix sigma2() const { return build_cov(model2); }

    /// Plain-text form accepted by from_config (section [sim]).
    std::string to_text() const
    {
        std::ostringstream out;
        out.precision(17);
        out << "[sim]\n"
            << "n = " << n << '\n'
            << "p = " << p << '\n'
            << "q = " << q << '\n'
            << "model1 = " << to_string(model1.kind) << '\n'
            << "rho1 = " << model1.rho << '\n'
            << "model2 = " << to_string(model2.kind) << '\n'
            << "rho2 = " << model2.rho << '\n'
            << "tail = " << (tail == Tail::gaussian ? "gaussian" : "t") << '\n'
            << "df = " << df << '\n'
            << "t_parameterization = " << to_string(t_param) << '\n'
            << "seed = " << seed << '\n';
        return out.str();
    }

    /**
     * Reads section [sim]:
     *   n, p, q            integers
     *   model  | model1/model2     ma1 | ar1   (model sets both)
     *   rho    | rho1/rho2         |rho| < 1   (rho sets both)
     *   tail               gaussian | t        (default gaussian)
     *   df                 >= 3                (default 3)
     *   t_parameterization scale | covariance  (default scale)
     *   seed               unsigned integer    (default 0)
     */
    static SimConfig from_config(const Config& cfg, const std::string& section = "sim")
    {
        cfg.require_known(section, {"n", "p", "q", "model", "model1", "model2", "rho", "rho1", "rho2", "tail",
                                    "df", "t_parameterization", "seed"});
        SimConfig sc;
        sc.n = cfg.get_int(section, "n");
        sc.p = cfg.get_int(section, "p");
        sc.q = cfg.get_int(section, "q");
        const auto kind_of = [&](const std::string& key, const std::string& fallback_key) {
            const std::string k = cfg.has(section, key) ? key : fallback_key;
            try
            {
                return parse_cov_kind(cfg.get_string(section, k, "ar1"));
            }
            catch (const ParameterError& e)
            {
                throw ParameterError(cfg.where(section, k) + ": " + e.what());
            }
        };
        const auto rho_of = [&](const std::string& key, const std::string& fallback_key) {
            const std::string k = cfg.has(section, key) ? key : fallback_key;
            const double r = cfg.get_double(section, k);
            if (!(std::abs(r) < 1.0))
                throw ParameterError(cfg.where(section, k) + ": |rho| must be < 1, got " + cfg.get_string(section, k));
            return r;
        };
        sc.model1 = CovModel{kind_of("model1", "model"), sc.p, rho_of("rho1", "rho")};
        sc.model2 = CovModel{kind_of("model2", "model"), sc.q, rho_of("rho2", "rho")};
        const std::string tail = cfg.get_string(section, "tail", "gaussian");
        if (tail == "gaussian" || tail == "normal")
            sc.tail = Tail::gaussian;
        else if (tail == "t" || tail == "student_t")
            sc.tail = Tail::student_t;
        else
            throw ParameterError(cfg.where(section, "tail") + ": expected gaussian or t, got '" + tail + "'");
        sc.df = cfg.get_double(section, "df", 3.0);
        if (sc.tail == Tail::student_t && !(sc.df >= 3.0))
            throw ParameterError(cfg.where(section, "df") + ": must be >= 3");
        try
        {
            sc.t_param = parse_t_parameterization(cfg.get_string(section, "t_parameterization", "scale"));
        }
        catch (const ParameterError& e)
        {
            throw ParameterError(cfg.where(section, "t_parameterization") + ": " + e.what());
        }
        const long long seed = cfg.get_int(section, "seed", 0);
        if (seed < 0)
            throw ParameterError(cfg.where(section, "seed") + ": must be non-negative");
        sc.seed = static_cast<std::uint64_t>(seed);
        if (sc.n < 1)
            throw ParameterError(cfg.where(section, "n") + ": must be >= 1");
        if (sc.p < 1)
            throw ParameterError(cfg.where(section, "p") + ": must be >= 1");
        if (sc.q < 1)
            throw ParameterError(cfg.where(section, "q") + ": must be >= 1");
        sc.validate();
        return sc;
    }
};

/// Draws one dataset from `cfg` using the supplied stream.
inline MatrixDataset simulate(const SimConfig& cfg, Rng& rng)
{
    cfg.validate();
    const DenseSymMatrix s1 = cfg.sigma1();
    const DenseSymMatrix s2 = cfg.sigma2();
    if (cfg.tail == Tail::gaussian)
        return sample_matrix_normal(cfg.n, s1, s2, rng);
    return sample_matrix_t(cfg.n, s1, s2, cfg.df, rng, cfg.t_param);
}

inline MatrixDataset simulate(const SimConfig& cfg)
{
    Rng rng(cfg.seed, 0);
    return simulate(cfg, rng);
}

}  // namespace kronband

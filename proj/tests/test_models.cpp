// simulate, covariance, regularize
#include "kronband/covariance.hpp"
#include "kronband/regularize.hpp"
#include "kronband/simulate.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

using namespace kronband;

namespace
{

std::mt19937_64 gen(77);

std::vector<Vector> vectors_of(const MatrixDataset& ds)
{
    std::vector<Vector> xs;
    for (Index i = 0; i < ds.n(); ++i)
        xs.push_back(ds.columns().col(i));
    return xs;
}

MatrixDataset random_dataset(Index n, Index p, Index q, double scale = 1.0)
{
    return MatrixDataset(p, q, scale * oracle::random_matrix(p * q, n, gen));
}

}  // namespace

// ---------------------------------------------------------------------------
// simulate

TEST(Simulate, CovarianceModelsClosedForm)
{
    EXPECT_EQ(build_cov({CovKind::ma1, 6, 0.5}).matrix(), oracle::ma1(6, 0.5));
    EXPECT_LT((build_cov({CovKind::ar1, 7, -0.3}).matrix() - oracle::ar1(7, -0.3)).cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_THROW(build_cov({CovKind::ar1, 4, 1.0}), ParameterError);
    EXPECT_THROW(build_cov({CovKind::ma1, 4, -1.5}), ParameterError);
    EXPECT_EQ(parse_cov_kind("ma1"), CovKind::ma1);
    EXPECT_THROW(parse_cov_kind("arma"), ParameterError);
}

TEST(Simulate, CholeskyRejectsIndefinite)
{
    // MA(1) with rho = 0.9 is indefinite for larger dimensions
    const DenseSymMatrix s = build_cov({CovKind::ma1, 10, 0.9});
    EXPECT_THROW(cholesky_lower(s, "sigma"), NotPositiveDefiniteError);
}

TEST(Simulate, MatrixNormalCovarianceMonteCarlo)
{
    const DenseSymMatrix s1 = build_cov({CovKind::ar1, 3, 0.6});
    const DenseSymMatrix s2 = build_cov({CovKind::ma1, 2, 0.4});
    Rng rng(1);
    const MatrixDataset ds = sample_matrix_normal(100000, s1, s2, rng);
    const Matrix emp = oracle::covariance(vectors_of(ds), false);
    const Matrix truth = oracle::kron(s2.matrix(), s1.matrix());
    // entry sd <= sqrt(2/n) ~ 0.0045
    EXPECT_LT((emp - truth).cwiseAbs().maxCoeff(), 0.025);
}

TEST(Simulate, MatrixTCovarianceUnderBothParameterizations)
{
    const DenseSymMatrix s1 = build_cov({CovKind::ar1, 2, 0.5});
    const DenseSymMatrix s2 = build_cov({CovKind::ar1, 2, 0.3});
    const Matrix truth = oracle::kron(s2.matrix(), s1.matrix());
    const double df = 8.0;
    Rng a(2), b(2);
    const Matrix scale_cov =
        oracle::covariance(vectors_of(sample_matrix_t(200000, s1, s2, df, a, TParameterization::scale)), false);
    const Matrix cov_cov =
        oracle::covariance(vectors_of(sample_matrix_t(200000, s1, s2, df, b, TParameterization::covariance)), false);
    EXPECT_LT((scale_cov - df / (df - 2.0) * truth).cwiseAbs().maxCoeff(), 0.04);
    EXPECT_LT((cov_cov - truth).cwiseAbs().maxCoeff(), 0.03);
    Rng c(3);
    EXPECT_THROW(sample_matrix_t(5, s1, s2, 2.0, c), ParameterError);
}

TEST(Simulate, ConfigRoundTripAndDeterminism)
{
    SimConfig sc;
    sc.n = 7;
    sc.p = 4;
    sc.q = 3;
    sc.model1 = {CovKind::ma1, 4, 0.5};
    sc.model2 = {CovKind::ar1, 3, -0.25};
    sc.tail = Tail::student_t;
    sc.df = 4;
    sc.t_param = TParameterization::covariance;
    sc.seed = 99;
    const SimConfig back = SimConfig::from_config(Config::parse_string(sc.to_text()));
    EXPECT_EQ(back.to_text(), sc.to_text());
    EXPECT_EQ(simulate(sc).columns(), simulate(back).columns());
    SimConfig other = sc;
    other.seed = 100;
    EXPECT_NE(simulate(sc).columns(), simulate(other).columns());
}

TEST(Simulate, ConfigErrorsNameTheField)
{
    try
    {
        SimConfig::from_config(Config::parse_string("[sim]\nn = 5\np = 3\nq = 3\nrho = 1.5\n", "s.cfg"));
        FAIL();
    }
    catch (const ParameterError& e)
    {
        const std::string m = e.what();
        EXPECT_NE(m.find("sim.rho"), std::string::npos) << m;
        EXPECT_NE(m.find("s.cfg:5"), std::string::npos) << m;
    }
    EXPECT_THROW(SimConfig::from_config(Config::parse_string("[sim]\nn = 5\np = 3\nq = 3\nrho = 0.2\ntail = cauchy\n")),
                 ParameterError);
    EXPECT_THROW(SimConfig::from_config(Config::parse_string("[sim]\nn = 5\np = 3\nq = 3\nrho = 0.2\nbogus = 1\n")),
                 ParameterError);
}

// ---------------------------------------------------------------------------
// covariance

TEST(Covariance, SampleAndUncenteredMatchOracle)
{
    const MatrixDataset ds = random_dataset(9, 3, 2);
    const auto xs = vectors_of(ds);
    EXPECT_LT((sample_cov(ds, true).matrix.matrix() - oracle::covariance(xs, true)).cwiseAbs().maxCoeff(), 1e-14);
    EXPECT_LT((sample_cov(ds, false).matrix.matrix() - oracle::covariance(xs, false)).cwiseAbs().maxCoeff(), 1e-14);
    EXPECT_THROW(sample_cov(random_dataset(1, 2, 2), true), ParameterError);
}

TEST(Covariance, RobustTruncatesEntrywise)
{
    const MatrixDataset ds = random_dataset(12, 2, 3, 2.0);
    const double tau = 1.1;
    std::vector<Vector> xs = vectors_of(ds);
    for (auto& x : xs)
        for (Index i = 0; i < x.size(); ++i)
            x[i] = std::copysign(std::min(std::abs(x[i]), tau), x[i]);
    const CovEstimate r = robust_cov(ds, tau);
    EXPECT_LT((r.matrix.matrix() - oracle::covariance(xs, false)).cwiseAbs().maxCoeff(), 1e-14);
    EXPECT_EQ(r.kind, CovKindTag::robust_truncated);
    EXPECT_EQ(r.tau, tau);
    EXPECT_THROW(robust_cov(ds, 0.0), ParameterError);

    const double big = ds.columns().cwiseAbs().maxCoeff();
    EXPECT_EQ(robust_cov(ds, big).matrix.matrix(), sample_cov(ds, false).matrix.matrix());
}

TEST(Covariance, CenterTransform)
{
    const MatrixDataset ds = random_dataset(6, 2, 2);
    const MatrixDataset c = center_transform(ds);
    const Vector mean = ds.columns().rowwise().mean();
    for (Index i = 0; i < 6; ++i)
        EXPECT_LT((c.columns().col(i) - 1.2 * (ds.columns().col(i) - mean)).norm(), 1e-14);
}

TEST(Covariance, TauCandidatesByNearestRank)
{
    Matrix cols(2, 5);
    cols << 1, -2, 3, -4, 5, -6, 7, -8, 9, -10;  // |x| = 1..10
    const MatrixDataset ds(1, 2, cols);
    const auto taus = tau_candidates(ds, {90, 95, 50, 99.9, 10});
    // nearest rank over 10 values: 90 -> 9, 95 -> 10, 50 -> 5, 99.9 -> 10, 10 -> 1
    EXPECT_EQ(taus, (std::vector<double>{10, 9, 5, 1}));
    std::vector<double> sorted{1, 2, 3, 4};
    for (double p : {0.1, 24.9, 25.0, 25.1, 75.0, 100.0})
        EXPECT_EQ(nearest_rank(sorted, p), oracle::nearest_rank(sorted, p));
    EXPECT_THROW(tau_candidates(ds, {0.0}), ParameterError);
    EXPECT_THROW(tau_candidates(ds, {}), ParameterError);
}

// ---------------------------------------------------------------------------
// regularize

TEST(Regularize, WeightsByHand)
{
    EXPECT_EQ(band_weight(2, 0, 2), 1.0);
    EXPECT_EQ(band_weight(2, 0, 3), 0.0);
    EXPECT_EQ(taper_weight(0, 1, 1), 1.0);
    EXPECT_EQ(taper_weight(1, 0, 1), 0.0);  // h = 0 keeps only the diagonal
    EXPECT_EQ(taper_weight(4, 0, 2), 1.0);
    EXPECT_EQ(taper_weight(4, 0, 3), 0.5);
    EXPECT_EQ(taper_weight(4, 0, 4), 0.0);
    EXPECT_EQ(taper_weight(6, 5, 1), 2.0 - 4.0 / 3.0);
    EXPECT_EQ(taper_weight(3, 0, 3), 0.0);  // odd k: clamped at 0
    for (long k = 0; k <= 9; ++k)
        for (long l = 0; l < 8; ++l)
            for (long m = 0; m < 8; ++m)
            {
                EXPECT_EQ(band_weight(k, l, m), oracle::band_w(k, l, m));
                EXPECT_EQ(taper_weight(k, l, m), oracle::taper_w(k, l, m));
            }
}

TEST(Regularize, MaskedCovarianceMatchesEntrywiseOracle)
{
    for (int t = 0; t < 40; ++t)
    {
        const Index p = 2 + t % 5, q = 2 + (t / 5) % 4;
        const Matrix c = oracle::random_spd(p * q, gen);
        const bool taper = t % 2 == 1;
        const Mode mode = taper ? Mode::taper : Mode::band;
        const int k1 = taper ? (t * 7) % (2 * static_cast<int>(p) + 1) : (t * 7) % static_cast<int>(p);
        const int k2 = taper ? (t * 3) % (2 * static_cast<int>(q) + 1) : (t * 3) % static_cast<int>(q);
        const MaskedCovariance m = mask_separable(c, p, q, k1, k2, mode);
        const Matrix expect = oracle::mask(c, p, q, k1, k2, taper);
        EXPECT_EQ(m.to_dense(), expect) << "p=" << p << " q=" << q << " k=" << k1 << "," << k2;
        for (Index i = 0; i < p * q; ++i)
            for (Index j = 0; j < p * q; ++j)
                ASSERT_EQ(m.entry(i, j), expect(i, j));
    }
}

TEST(Regularize, BandwidthRangeChecks)
{
    const Matrix c = Matrix::Identity(6, 6);
    EXPECT_THROW(mask_separable(c, 2, 3, 2, 0, Mode::band), ParameterError);   // k1 > p - 1
    EXPECT_THROW(mask_separable(c, 2, 3, 0, -1, Mode::band), ParameterError);
    EXPECT_NO_THROW(mask_separable(c, 2, 3, 4, 6, Mode::taper));               // up to 2 * dim
    EXPECT_THROW(mask_separable(c, 2, 3, 5, 0, Mode::taper), ParameterError);
    EXPECT_THROW(mask_separable(c, 3, 3, 0, 0, Mode::band), DimensionError);
}

TEST(Regularize, BaselineOnFullVector)
{
    const Matrix c = oracle::random_spd(6, gen);
    const Matrix b = baseline_regularize(c, 2, Mode::band).matrix();
    const Matrix t = baseline_regularize(c, 4, Mode::taper).matrix();
    for (Index i = 0; i < 6; ++i)
        for (Index j = 0; j < 6; ++j)
        {
            EXPECT_DOUBLE_EQ(b(i, j), oracle::band_w(2, i, j) * c(i, j));
            EXPECT_DOUBLE_EQ(t(i, j), oracle::taper_w(4, i, j) * c(i, j));
        }
}

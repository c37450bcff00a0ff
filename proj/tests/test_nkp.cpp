// rearrangement, nearest Kronecker product, masked fitter
#include "kronband/nkp.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

using namespace kronband;

namespace
{

std::mt19937_64 gen(4242);

}  // namespace

TEST(Rearrange, MatchesOracleOnAnyMatrix)
{
    for (int t = 0; t < 30; ++t)
    {
        const Index p = 1 + t % 5, q = 1 + (t / 5) % 5;
        const Matrix m = oracle::random_matrix(p * q, p * q, gen);
        const Matrix x = oracle::xi(m, p, q);
        EXPECT_EQ(RearrangedView::from_dense(m, p, q).to_dense(), x);
        const auto implicit = RearrangedView::from_dense(m, p, q, RearrangedView::Access::implicit);
        EXPECT_EQ(implicit.access(), RearrangedView::Access::implicit);
        EXPECT_EQ(implicit.to_dense(), x);
        const Vector v = oracle::random_matrix(p * p, 1, gen);
        const Vector u = oracle::random_matrix(q * q, 1, gen);
        Vector y, z;
        implicit.apply(v, y);
        implicit.apply_transpose(u, z);
        EXPECT_LT((y - x * v).norm(), 1e-12 * (1 + y.norm()));
        EXPECT_LT((z - x.transpose() * u).norm(), 1e-12 * (1 + z.norm()));
    }
}

TEST(Rearrange, KroneckerBecomesOuterProduct)
{
    for (int t = 0; t < 50; ++t)
    {
        const Index p = 1 + t % 6, q = 1 + (t / 6) % 6;
        const Matrix b = oracle::random_matrix(q, q, gen);
        const Matrix c = oracle::random_matrix(p, p, gen);
        const Matrix x = RearrangedView::from_dense(oracle::kron(b, c), p, q).to_dense();
        EXPECT_EQ(x, oracle::vec(b) * oracle::vec(c).transpose());
    }
}

TEST(Rearrange, MaskedViewMatchesDenseMaskedOracle)
{
    for (int t = 0; t < 20; ++t)
    {
        const Index p = 2 + t % 4, q = 2 + (t / 4) % 4;
        const Matrix c = oracle::random_spd(p * q, gen);
        const bool taper = t % 2;
        const int k1 = taper ? t % (2 * static_cast<int>(p) + 1) : t % static_cast<int>(p);
        const int k2 = taper ? (t + 1) % (2 * static_cast<int>(q) + 1) : (t + 1) % static_cast<int>(q);
        const MaskedCovariance m = mask_separable(c, p, q, k1, k2, taper ? Mode::taper : Mode::band);
        const Matrix x = oracle::xi(oracle::mask(c, p, q, k1, k2, taper), p, q);
        for (auto access : {RearrangedView::Access::materialized, RearrangedView::Access::implicit})
        {
            const auto view = RearrangedView::from_masked(m, access);
            EXPECT_LT((view.to_dense() - x).cwiseAbs().maxCoeff(), 1e-15);
            EXPECT_NEAR(view.frobenius_norm(), x.norm(), 1e-12 * x.norm());
            const Vector v = oracle::random_matrix(p * p, 1, gen);
            Vector y;
            view.apply(v, y);
            EXPECT_LT((y - x * v).norm(), 1e-12 * (1 + y.norm()));
        }
    }
}

TEST(Nkp, ProductMatchesDenseSvdOracle)
{
    for (int t = 0; t < 60; ++t)
    {
        const Index p = 2 + t % 4, q = 2 + (t / 4) % 4;
        const Matrix m = oracle::random_spd(p * q, gen);
        const KronFit fit = kron_factorize(DenseSymMatrix(m), p, q);
        const Matrix prod = oracle::kron(fit.cov.sigma2.matrix(), fit.cov.sigma1.matrix());
        const Matrix expect = oracle::nkp_product(m, p, q);
        EXPECT_LT((prod - expect).norm(), 1e-8);
        EXPECT_NEAR(fit.residual_frobenius(), (m - prod).norm(), 1e-8 * m.norm());
        EXPECT_NEAR(fit.factor.sigma, oracle::leading(oracle::xi(m, p, q)).sigma, 1e-10 * fit.factor.sigma);
    }
}

TEST(Nkp, ScaleAndSignConventions)
{
    const Matrix b = oracle::ar1(3, 0.4) * 2.5;
    const Matrix c = oracle::ma1(4, 0.3) * 0.7;
    const KronFit fit = kron_factorize(DenseSymMatrix(oracle::kron(b, c)), 4, 3);
    EXPECT_EQ(fit.cov.convention, ScaleConvention::unit_trace);
    EXPECT_NEAR(fit.cov.sigma2.matrix().trace(), 3.0, 1e-12);
    // exact recovery up to the scale convention: sigma2 = b * 3 / trace(b)
    EXPECT_LT((fit.cov.sigma2.matrix() - b * (3.0 / b.trace())).norm(), 1e-10);
    EXPECT_LT((fit.cov.sigma1.matrix() - c * (b.trace() / 3.0)).norm(), 1e-10);
    EXPECT_LT(fit.residual_frobenius(), 1e-6);

    // negative-definite input: trace of sigma2 stays positive, sigma1 absorbs the sign
    const KronFit neg = kron_factorize(DenseSymMatrix(-oracle::kron(b, c)), 4, 3);
    EXPECT_GT(neg.cov.sigma2.matrix().trace(), 0.0);
    EXPECT_LT(neg.cov.sigma1.matrix().trace(), 0.0);

    // traceless leading factor falls back to the Frobenius convention
    Matrix z(2, 2);
    z << 1, 2, 2, -1;
    const KronFit tl = kron_factorize(DenseSymMatrix(oracle::kron(z, oracle::ma1(2, 0.2))), 2, 2);
    EXPECT_EQ(tl.cov.convention, ScaleConvention::unit_frobenius);
    EXPECT_NEAR(tl.cov.sigma2.matrix().norm(), std::sqrt(2.0), 1e-10);
}

TEST(Nkp, ZeroInputIsNumericalError)
{
    EXPECT_THROW(kron_factorize(DenseSymMatrix(Matrix::Zero(6, 6)), 2, 3), NumericalError);
}

TEST(Nkp, StartInNullSpaceStillConverges)
{
    // vec(I_p) is orthogonal to every row of xi(M) here, so the default start is useless.
    Matrix c(2, 2);
    c << 1, 0, 0, -1;
    const Matrix m = oracle::kron(oracle::ma1(3, 0.2), c);
    const KronFit fit = kron_factorize(DenseSymMatrix(m), 2, 3);
    EXPECT_LT((oracle::kron(fit.cov.sigma2.matrix(), fit.cov.sigma1.matrix()) - m).norm(), 1e-8);
}

TEST(Nkp, RepeatedLeadingSingularValue)
{
    // xi(M) has singular values (1, 1, 0, 0); any leading pair is a valid answer.
    Matrix i2 = Matrix::Identity(2, 2) / std::sqrt(2.0);
    Matrix j2(2, 2);
    j2 << 0, 1, 1, 0;
    j2 /= std::sqrt(2.0);
    const Matrix m = oracle::kron(i2, i2) + oracle::kron(j2, j2);
    const KronFit fit = kron_factorize(DenseSymMatrix(m), 2, 2);
    EXPECT_NEAR(fit.factor.sigma, 1.0, 1e-10);
    const Matrix prod = oracle::kron(fit.cov.sigma2.matrix(), fit.cov.sigma1.matrix());
    EXPECT_NEAR((m - prod).norm(), 1.0, 1e-8);
}

TEST(Nkp, BandedInputsGiveBandedFactors)
{
    for (int t = 0; t < 40; ++t)
    {
        const Index p = 3 + t % 4, q = 3 + (t / 4) % 3;
        const int k1 = t % static_cast<int>(p - 1), k2 = (t / 3) % static_cast<int>(q - 1);
        const Matrix c = oracle::random_spd(p * q, gen) + oracle::kron(oracle::random_banded(q, k2, gen),
                                                                       oracle::random_banded(p, k1, gen));
        const KronFit fit = kron_factorize(mask_separable(c, p, q, k1, k2, Mode::band));
        for (Index i = 0; i < p; ++i)
            for (Index j = 0; j < p; ++j)
                if (std::abs(i - j) > k1)
                    EXPECT_LE(std::abs(fit.cov.sigma1(i, j)), 1e-12);
        for (Index i = 0; i < q; ++i)
            for (Index j = 0; j < q; ++j)
                if (std::abs(i - j) > k2)
                    EXPECT_LE(std::abs(fit.cov.sigma2(i, j)), 1e-12);
    }
}

TEST(MaskedFitter, AgreesWithDirectMaskedFactorization)
{
    for (int t = 0; t < 12; ++t)
    {
        const Index p = 3 + t % 4, q = 2 + t % 5;
        const Matrix c = oracle::random_spd(p * q, gen) + 2.0 * oracle::kron(oracle::ar1(q, 0.5), oracle::ar1(p, 0.5));
        const MaskedFitter fitter(c, p, q);
        for (Mode mode : {Mode::band, Mode::taper})
        {
            const int hi1 = mode == Mode::band ? static_cast<int>(p) - 1 : 2 * static_cast<int>(p);
            const int hi2 = mode == Mode::band ? static_cast<int>(q) - 1 : 2 * static_cast<int>(q);
            Vector warm;
            for (int k1 = 0; k1 <= hi1; ++k1)
                for (int k2 = 0; k2 <= hi2; ++k2)
                {
                    const auto f = fitter.fit(mode, k1, k2, {}, warm.size() ? &warm : nullptr);
                    warm = f.warm;
                    const Matrix masked = oracle::mask(c, p, q, k1, k2, mode == Mode::taper);
                    const Matrix expect = oracle::nkp_product(masked, p, q);
                    const Matrix got = oracle::kron(f.cov.sigma2.matrix(), f.cov.sigma1.matrix());
                    ASSERT_LT((got - expect).norm(), 1e-8 * (1 + expect.norm()))
                        << "p=" << p << " q=" << q << " k=" << k1 << "," << k2;
                }
        }
    }
}

TEST(MaskedFitter, RejectsBadInput)
{
    const Matrix c = Matrix::Identity(6, 6);
    EXPECT_THROW(MaskedFitter(c, 2, 2), DimensionError);
    const MaskedFitter f(c, 2, 3);
    EXPECT_THROW(f.fit(Mode::band, 2, 0), ParameterError);
}

TEST(BandEquivalence, NkpOfDoublyBandedIsOptimalOverBandedPairs)
{
    for (int t = 0; t < 10; ++t)
    {
        const Index p = 2 + t % 3, q = 2 + (t / 3) % 3;
        const Matrix c = oracle::random_spd(p * q, gen);
        const int k1 = t % static_cast<int>(p), k2 = (t + 1) % static_cast<int>(q);
        const auto rep = band_equivalence_check(c, p, q, k1, k2, 10, static_cast<std::uint64_t>(t));
        EXPECT_TRUE(rep.passed) << rep.nkp_objective << " vs " << rep.search_objective;
        // objective at the factorization equals ||C||^2 - ||C masked||^2 + residual^2 of the masked fit
        const Matrix masked = oracle::mask(c, p, q, k1, k2, false);
        const double res = (masked - oracle::nkp_product(masked, p, q)).squaredNorm();
        EXPECT_NEAR(rep.nkp_objective, c.squaredNorm() - masked.squaredNorm() + res, 1e-8 * c.squaredNorm());
    }
}

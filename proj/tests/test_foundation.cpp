// core types, norms, rng, io, config
#include "kronband/config.hpp"
#include "kronband/core.hpp"
#include "kronband/io.hpp"
#include "kronband/rng.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

using namespace kronband;

namespace
{

std::mt19937_64 gen(20240611);

std::string temp_path(const std::string& name)
{
    return (std::filesystem::temp_directory_path() / ("kronband_test_" + name)).string();
}

MatrixDataset small_dataset(Index n, Index p, Index q, std::uint64_t seed)
{
    Rng rng(seed);
    Matrix cols(p * q, n);
    for (Index j = 0; j < n; ++j)
        for (Index i = 0; i < p * q; ++i)
            cols(i, j) = rng.normal();
    return MatrixDataset(p, q, cols);
}

}  // namespace

// ---------------------------------------------------------------------------
// core

TEST(Core, VecUnvecRoundTripFollowsColumnStacking)
{
    Matrix x(2, 3);
    x << 1, 3, 5, 2, 4, 6;
    const Vector v = vec(x);
    for (Index i = 0; i < 6; ++i)
        EXPECT_EQ(v[i], static_cast<double>(i + 1));
    EXPECT_EQ(unvec(v, 2, 3), x);
    EXPECT_THROW(unvec(v, 4, 2), DimensionError);
}

TEST(Core, KronMatchesBlockDefinition)
{
    for (int t = 0; t < 20; ++t)
    {
        const Matrix a = oracle::random_matrix(1 + t % 4, 2 + t % 3, gen);
        const Matrix b = oracle::random_matrix(3 - t % 3, 1 + t % 5, gen);
        EXPECT_EQ(kron(a, b), oracle::kron(a, b));
    }
}

TEST(Core, KronVecIdentity)
{
    // (B (x) A) vec(X) = vec(A X B^T)
    const Matrix a = oracle::random_matrix(4, 4, gen);
    const Matrix b = oracle::random_matrix(3, 3, gen);
    const Matrix x = oracle::random_matrix(4, 3, gen);
    const Vector lhs = kron(b, a) * vec(x);
    const Vector rhs = vec(a * x * b.transpose());
    EXPECT_LT((lhs - rhs).norm(), 1e-12);
}

TEST(Core, NormsAgainstOracle)
{
    for (int t = 0; t < 10; ++t)
    {
        const Matrix s = oracle::random_spd(7, gen) - oracle::random_spd(7, gen);
        EXPECT_NEAR(norm_l1(s), oracle::l1(s), 1e-12);
        EXPECT_NEAR(norm_operator(s), oracle::op(s), 1e-10);
        OperatorNormOptions matrix_free;
        matrix_free.dense_threshold = 0;
        matrix_free.tol = 1e-13;
        matrix_free.max_iter = 200000;
        EXPECT_NEAR(norm_operator(s, matrix_free), oracle::op(s), 1e-6 * oracle::op(s));
        EXPECT_NEAR(norm(s, NormKind::frob), std::sqrt(s.cwiseAbs2().sum()), 1e-12);
        EXPECT_EQ(norm(s, NormKind::max), s.cwiseAbs().maxCoeff());
    }
    EXPECT_EQ(norm_operator(Matrix::Zero(5, 5)), 0.0);
}

TEST(Core, SeparableDifferenceNormsMatchMaterialized)
{
    for (int t = 0; t < 8; ++t)
    {
        const Index p = 2 + t % 4, q = 2 + (t * 3) % 5;
        const SeparableCovariance s{DenseSymMatrix(oracle::random_spd(q, gen)), DenseSymMatrix(oracle::random_spd(p, gen)),
                                    ScaleConvention::none};
        const SeparableCovariance r{DenseSymMatrix(oracle::random_spd(q, gen)), DenseSymMatrix(oracle::random_spd(p, gen)),
                                    ScaleConvention::none};
        const Matrix d = oracle::random_spd(p * q, gen);
        const Matrix sk = oracle::kron(s.sigma2.matrix(), s.sigma1.matrix());
        const Matrix rk = oracle::kron(r.sigma2.matrix(), r.sigma1.matrix());

        EXPECT_NEAR(norm_diff_separable_vs_dense(s, d, NormKind::frob), (sk - d).norm(), 1e-10);
        EXPECT_NEAR(norm_diff_separable_vs_dense(s, d, NormKind::l1), oracle::l1(sk - d), 1e-10);
        EXPECT_NEAR(norm_diff_separable_vs_dense(s, d, NormKind::max), (sk - d).cwiseAbs().maxCoeff(), 1e-12);
        EXPECT_NEAR(norm_diff_separable_vs_dense(s, d, NormKind::op), oracle::op(sk - d), 1e-9);

        EXPECT_NEAR(norm_diff_separable(s, r, NormKind::frob), (sk - rk).norm(), 1e-10);
        EXPECT_NEAR(norm_diff_separable(s, r, NormKind::l1), oracle::l1(sk - rk), 1e-10);
        EXPECT_NEAR(norm_diff_separable(s, r, NormKind::op), oracle::op(sk - rk), 1e-9);

        OperatorNormOptions mf;
        mf.dense_threshold = 0;
        mf.tol = 1e-13;
        mf.max_iter = 200000;
        EXPECT_NEAR(norm_diff_separable_vs_dense(s, d, NormKind::op, mf), oracle::op(sk - d),
                    1e-6 * oracle::op(sk - d));
        EXPECT_NEAR(norm_diff_separable(s, r, NormKind::op, mf), oracle::op(sk - rk), 1e-6 * oracle::op(sk - rk));
    }
}

TEST(Core, EntryIndexing)
{
    const Matrix s1 = oracle::random_spd(3, gen);
    const Matrix s2 = oracle::random_spd(4, gen);
    const SeparableCovariance s{DenseSymMatrix(s2), DenseSymMatrix(s1), ScaleConvention::none};
    const Matrix k = oracle::kron(s2, s1);
    for (Index i = 0; i < 12; ++i)
        for (Index j = 0; j < 12; ++j)
            EXPECT_DOUBLE_EQ(s.entry(i, j), k(i, j));
    EXPECT_EQ(materialize(s), k);
}

TEST(Core, DatasetValidation)
{
    EXPECT_THROW(MatrixDataset(2, 3, Matrix::Zero(5, 4)), DimensionError);
    EXPECT_THROW(MatrixDataset(2, 3, Matrix::Zero(6, 0)), DimensionError);
    Matrix bad = Matrix::Zero(6, 2);
    bad(3, 1) = std::numeric_limits<double>::quiet_NaN();
    EXPECT_THROW(MatrixDataset(2, 3, bad), ValidationError);

    std::vector<Matrix> samples{oracle::random_matrix(2, 3, gen), oracle::random_matrix(2, 3, gen)};
    const auto ds = MatrixDataset::from_samples(samples);
    EXPECT_EQ(ds.n(), 2);
    EXPECT_EQ(Matrix(ds.sample(1)), samples[1]);
    samples.push_back(Matrix::Zero(3, 2));
    EXPECT_THROW(MatrixDataset::from_samples(samples), DimensionError);
}

TEST(Core, DenseSymMatrixSymmetrizes)
{
    Matrix a(2, 2);
    a << 1, 2, 4, 3;
    const DenseSymMatrix s(a);
    EXPECT_EQ(s(0, 1), 3.0);
    EXPECT_EQ(s(1, 0), 3.0);
}

// ---------------------------------------------------------------------------
// rng

TEST(Rng, SameSeedAndStreamReproduce)
{
    Rng a(42, 3), b(42, 3), c(42, 4), d(43, 3);
    bool differs_c = false, differs_d = false;
    for (int i = 0; i < 100; ++i)
    {
        const auto x = a.next_u64();
        EXPECT_EQ(x, b.next_u64());
        differs_c |= x != c.next_u64();
        differs_d |= x != d.next_u64();
    }
    EXPECT_TRUE(differs_c);
    EXPECT_TRUE(differs_d);
}

TEST(Rng, UniformAndBelowRanges)
{
    Rng r(1);
    std::vector<int> counts(7, 0);
    for (int i = 0; i < 70000; ++i)
    {
        const double u = r.uniform();
        ASSERT_GE(u, 0.0);
        ASSERT_LT(u, 1.0);
        ++counts[r.below(7)];
    }
    for (int c : counts)
        EXPECT_NEAR(c, 10000, 450);  // ~4.7 sd
    EXPECT_THROW(r.below(0), std::invalid_argument);
}

TEST(Rng, NormalMoments)
{
    Rng r(5);
    const int n = 200000;
    double s = 0, s2 = 0, s4 = 0;
    for (int i = 0; i < n; ++i)
    {
        const double z = r.normal();
        s += z;
        s2 += z * z;
        s4 += z * z * z * z;
    }
    EXPECT_NEAR(s / n, 0.0, 0.012);
    EXPECT_NEAR(s2 / n, 1.0, 0.015);
    EXPECT_NEAR(s4 / n, 3.0, 0.08);
}

TEST(Rng, GammaAndChiSquareMoments)
{
    Rng r(9);
    for (double shape : {0.5, 1.5, 4.0})
    {
        const int n = 100000;
        double s = 0, s2 = 0;
        for (int i = 0; i < n; ++i)
        {
            const double g = r.gamma(shape);
            ASSERT_GT(g, 0.0);
            s += g;
            s2 += g * g;
        }
        const double m = s / n, v = s2 / n - m * m;
        EXPECT_NEAR(m, shape, 5 * std::sqrt(shape / n));
        EXPECT_NEAR(v, shape, 0.05 * shape + 0.02);
    }
    double s = 0;
    for (int i = 0; i < 100000; ++i)
        s += r.chi_square(3.0);
    EXPECT_NEAR(s / 100000, 3.0, 0.05);
}

TEST(Rng, ShuffleIsPermutation)
{
    Rng r(3);
    std::vector<int> v(50);
    std::iota(v.begin(), v.end(), 0);
    r.shuffle(v);
    std::vector<int> sorted = v;
    std::sort(sorted.begin(), sorted.end());
    for (int i = 0; i < 50; ++i)
        EXPECT_EQ(sorted[static_cast<std::size_t>(i)], i);
    // first position uniform over 4 items
    std::vector<int> first(4, 0);
    for (int t = 0; t < 40000; ++t)
    {
        std::vector<int> w{0, 1, 2, 3};
        r.shuffle(w);
        ++first[static_cast<std::size_t>(w[0])];
    }
    for (int c : first)
        EXPECT_NEAR(c, 10000, 450);
}

// ---------------------------------------------------------------------------
// io

TEST(Io, ContainerByteLayout)
{
    Matrix cols(6, 2);
    for (Index i = 0; i < 12; ++i)
        cols.data()[i] = 0.5 * static_cast<double>(i) - 1.0;
    const MatrixDataset ds(2, 3, cols);
    std::ostringstream out(std::ios::binary);
    io::write_container(out, ds);
    const std::string bytes = out.str();
    ASSERT_EQ(bytes.size(), 6u + 3u * 8u + 12u * 8u);
    EXPECT_EQ(std::memcmp(bytes.data(), "KCOV1\0", 6), 0);
    const auto u64_at = [&](std::size_t off) {
        std::uint64_t v = 0;
        for (int b = 7; b >= 0; --b)
            v = (v << 8) | static_cast<unsigned char>(bytes[off + static_cast<std::size_t>(b)]);
        return v;
    };
    EXPECT_EQ(u64_at(6), 2u);
    EXPECT_EQ(u64_at(14), 2u);
    EXPECT_EQ(u64_at(22), 3u);
    for (int i = 0; i < 12; ++i)
    {
        const std::uint64_t bits = u64_at(30 + 8 * static_cast<std::size_t>(i));
        double v;
        std::memcpy(&v, &bits, 8);
        EXPECT_EQ(v, 0.5 * i - 1.0);  // sample-major, column-major inside a sample
    }
}

TEST(Io, ContainerRoundTripAndErrors)
{
    const MatrixDataset ds = small_dataset(5, 3, 4, 11);
    const std::string path = temp_path("rt.kcov");
    io::write_container(path, ds);
    const MatrixDataset back = io::read_container(path);
    EXPECT_EQ(back.p(), 3);
    EXPECT_EQ(back.q(), 4);
    EXPECT_EQ(back.columns(), ds.columns());
    EXPECT_EQ(io::read_dataset(path).columns(), ds.columns());

    std::ostringstream out(std::ios::binary);
    io::write_container(out, ds);
    std::string bytes = out.str();

    std::istringstream truncated(bytes.substr(0, bytes.size() - 3));
    EXPECT_THROW(io::read_container(truncated), IoError);
    std::istringstream trailing(bytes + "x");
    EXPECT_THROW(io::read_container(trailing), IoError);
    std::string badmagic = bytes;
    badmagic[0] = 'X';
    std::istringstream bm(badmagic);
    EXPECT_THROW(io::read_container(bm), IoError);
    EXPECT_THROW(io::read_container(temp_path("does_not_exist")), IoError);
}

TEST(Io, CsvRoundTripAndLineNumbers)
{
    const MatrixDataset ds = small_dataset(4, 2, 3, 12);
    const std::string path = temp_path("rt.csv");
    io::write_csv(path, ds);
    const MatrixDataset back = io::read_dataset(path);
    EXPECT_EQ(back.columns(), ds.columns());  // shortest round-trip formatting

    std::istringstream bad("# n=2 p=1 q=2\n1,2\n3,zz\n");
    try
    {
        io::read_csv(bad, "bad.csv");
        FAIL() << "expected IoError";
    }
    catch (const IoError& e)
    {
        EXPECT_NE(std::string(e.what()).find("bad.csv:3"), std::string::npos) << e.what();
    }
    std::istringstream wrong_count("# n=3 p=1 q=2\n1,2\n3,4\n");
    EXPECT_THROW(io::read_csv(wrong_count), IoError);
    std::istringstream wrong_width("# n=1 p=1 q=2\n1,2,3\n");
    EXPECT_THROW(io::read_csv(wrong_width), IoError);
}

TEST(Io, MatrixCsvRoundTrip)
{
    const Matrix m = oracle::random_matrix(3, 5, gen);
    const std::string path = temp_path("m.csv");
    io::write_matrix_csv(path, m);
    EXPECT_EQ(io::read_matrix_csv(path), m);
}

// ---------------------------------------------------------------------------
// config

TEST(Config, ParsesSectionsListsAndComments)
{
    const Config c = Config::parse_string("top = 1\n"
                                          "[sim]  # comment\n"
                                          "n = 50 ; trailing\n"
                                          "rho = 0.5\n"
                                          "\n"
                                          "[tuning]\n"
                                          "grid1 = 0..4\n"
                                          "grid2 = 0..10:2, 13\n"
                                          "percentiles = 99.9, 95\n",
                                          "t.cfg");
    EXPECT_EQ(c.get_int("", "top"), 1);
    EXPECT_EQ(c.get_int("sim", "n"), 50);
    EXPECT_DOUBLE_EQ(c.get_double("sim", "rho"), 0.5);
    EXPECT_EQ(c.get_int_list("tuning", "grid1"), (std::vector<int>{0, 1, 2, 3, 4}));
    EXPECT_EQ(c.get_int_list("tuning", "grid2"), (std::vector<int>{0, 2, 4, 6, 8, 10, 13}));
    EXPECT_EQ(c.get_double_list("tuning", "percentiles"), (std::vector<double>{99.9, 95}));
    EXPECT_EQ(c.get_int("sim", "missing", 7), 7);
    EXPECT_TRUE(c.has_section("tuning"));
    EXPECT_FALSE(c.has("sim", "p"));
}

TEST(Config, ErrorsNameFieldAndLine)
{
    const auto message = [](const std::string& text, auto&& fn) {
        try
        {
            const Config c = Config::parse_string(text, "x.cfg");
            fn(c);
        }
        catch (const ParameterError& e)
        {
            return std::string(e.what());
        }
        return std::string();
    };
    EXPECT_NE(message("[sim]\nn = 5\nn = 6\n", [](const Config&) {}).find("x.cfg:3"), std::string::npos);
    EXPECT_NE(message("[sim]\nnonsense\n", [](const Config&) {}).find("x.cfg:2"), std::string::npos);
    const std::string bad_int = message("[sim]\n\nn = five\n", [](const Config& c) { c.get_int("sim", "n"); });
    EXPECT_NE(bad_int.find("x.cfg:3"), std::string::npos) << bad_int;
    EXPECT_NE(bad_int.find("sim.n"), std::string::npos) << bad_int;
    const std::string missing = message("[sim]\n", [](const Config& c) { c.get_int("sim", "n"); });
    EXPECT_NE(missing.find("sim.n"), std::string::npos) << missing;
    const std::string unknown =
        message("[sim]\nn = 1\nrh0 = 2\n", [](const Config& c) { c.require_known("sim", {"n", "rho"}); });
    EXPECT_NE(unknown.find("x.cfg:3"), std::string::npos) << unknown;
    EXPECT_NE(unknown.find("sim.rh0"), std::string::npos) << unknown;
    EXPECT_THROW(Config::load(temp_path("no_such.cfg")), IoError);
}

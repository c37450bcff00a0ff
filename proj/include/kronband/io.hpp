/**
 * @file io.hpp
 * @brief MatrixDataset containers and matrix CSV files.
 *
 * Binary container:
 *
 *     bytes 0..5   magic "KCOV1\0"
 *     u64 LE       n
 *     u64 LE       p
 *     u64 LE       q
 *     f64 LE       n*p*q values, sample-major, vec (column-major) order
 *                  within each sample
 *
 * CSV interchange: first line "# n=<n> p=<p> q=<q>", then n rows of p*q
 * comma-separated values in vec order.
 */
#pragma once

#include "kronband/core.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>

namespace kronband::io
{

inline constexpr std::array<char, 6> kMagic = {'K', 'C', 'O', 'V', '1', '\0'};

namespace detail
{

template <class T>
T to_little(T v)
{
    if constexpr (std::endian::native == std::endian::little)
        return v;
    auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(v);
    std::reverse(bytes.begin(), bytes.end());
    return std::bit_cast<T>(bytes);
}

template <class T>
void put(std::ostream& out, T v)
{
    v = to_little(v);
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& in, const std::string& path)
{
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in)
        throw IoError(path + ": truncated container");
    return to_little(v);
}

inline std::string format_double(double v)
{
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s, const std::string& where)
{
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t'))
        s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
        s.remove_suffix(1);
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
        throw IoError(where + ": cannot parse number '" + std::string(s) + "'");
    return v;
}

}  // namespace detail

inline void write_container(std::ostream& out, const MatrixDataset& ds)
{
    out.write(kMagic.data(), kMagic.size());
    detail::put<std::uint64_t>(out, static_cast<std::uint64_t>(ds.n()));
    detail::put<std::uint64_t>(out, static_cast<std::uint64_t>(ds.p()));
    detail::put<std::uint64_t>(out, static_cast<std::uint64_t>(ds.q()));
    const Matrix& cols = ds.columns();
    for (Index i = 0; i < cols.size(); ++i)
        detail::put<double>(out, cols.data()[i]);
}

inline void write_container(const std::string& path, const MatrixDataset& ds)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw IoError(path + ": cannot open for writing");
    write_container(out, ds);
    if (!out)
        throw IoError(path + ": write failed");
}

inline MatrixDataset read_container(std::istream& in, const std::string& path = "<stream>")
{
    std::array<char, 6> magic{};
    in.read(magic.data(), magic.size());
    if (!in || magic != kMagic)
        throw IoError(path + ": bad magic, not a KCOV1 container");
    const auto n = detail::get<std::uint64_t>(in, path);
    const auto p = detail::get<std::uint64_t>(in, path);
    const auto q = detail::get<std::uint64_t>(in, path);
    if (n == 0 || p == 0 || q == 0 || p * q > (std::uint64_t{1} << 32) || n > (std::uint64_t{1} << 32))
        throw IoError(path + ": implausible header n=" + std::to_string(n) + " p=" + std::to_string(p) +
                      " q=" + std::to_string(q));
    Matrix cols(static_cast<Index>(p * q), static_cast<Index>(n));
    for (Index i = 0; i < cols.size(); ++i)
        cols.data()[i] = detail::get<double>(in, path);
    if (in.peek() != std::char_traits<char>::eof())
        throw IoError(path + ": trailing bytes after payload");
    try
    {
        return MatrixDataset(static_cast<Index>(p), static_cast<Index>(q), std::move(cols));
    }
    catch (const ValidationError& e)
    {
        throw IoError(path + ": " + e.what());
    }
}

inline MatrixDataset read_container(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError(path + ": cannot open");
    return read_container(in, path);
}

inline void write_csv(std::ostream& out, const MatrixDataset& ds)
{
    out << "# n=" << ds.n() << " p=" << ds.p() << " q=" << ds.q() << '\n';
    for (Index i = 0; i < ds.n(); ++i)
    {
        for (Index j = 0; j < ds.dim(); ++j)
        {
            if (j)
                out << ',';
            out << detail::format_double(ds.columns()(j, i));
        }
        out << '\n';
    }
}

inline void write_csv(const std::string& path, const MatrixDataset& ds)
{
    std::ofstream out(path, std::ios::trunc);
    if (!out)
        throw IoError(path + ": cannot open for writing");
    write_csv(out, ds);
}

inline MatrixDataset read_csv(std::istream& in, const std::string& path = "<stream>")
{
    std::string line;
    if (!std::getline(in, line))
        throw IoError(path + ": empty file");
    long long n = -1, p = -1, q = -1;
    if (std::sscanf(line.c_str(), "# n=%lld p=%lld q=%lld", &n, &p, &q) != 3 || n < 1 || p < 1 || q < 1)
        throw IoError(path + ":1: expected header '# n=<n> p=<p> q=<q>'");
    Matrix cols(p * q, n);
    Index row = 0;
    int lineno = 1;
    while (std::getline(in, line))
    {
        ++lineno;
        if (line.empty() || line == "\r")
            continue;
        if (row >= n)
            throw IoError(path + ":" + std::to_string(lineno) + ": more rows than n=" + std::to_string(n));
        std::string_view rest(line);
        const std::string where = path + ":" + std::to_string(lineno);
        Index j = 0;
        while (true)
        {
            const auto comma = rest.find(',');
            const auto field = rest.substr(0, comma);
            if (j >= p * q)
                throw IoError(where + ": more than p*q fields");
            cols(j++, row) = detail::parse_double(field, where);
            if (comma == std::string_view::npos)
                break;
            rest.remove_prefix(comma + 1);
        }
        if (j != p * q)
            throw IoError(where + ": expected " + std::to_string(p * q) + " fields, got " + std::to_string(j));
        ++row;
    }
    if (row != n)
        throw IoError(path + ": expected " + std::to_string(n) + " rows, got " + std::to_string(row));
    try
    {
        return MatrixDataset(p, q, std::move(cols));
    }
    catch (const ValidationError& e)
    {
        throw IoError(path + ": " + e.what());
    }
}

inline MatrixDataset read_csv(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw IoError(path + ": cannot open");
    return read_csv(in, path);
}

/// Reads either format, chosen by the leading bytes.
inline MatrixDataset read_dataset(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError(path + ": cannot open");
    const int c = in.peek();
    if (c == '#')
        return read_csv(in, path);
    return read_container(in, path);
}

inline void write_matrix_csv(const std::string& path, const Eigen::Ref<const Matrix>& m)
{
    std::ofstream out(path, std::ios::trunc);
    if (!out)
        throw IoError(path + ": cannot open for writing");
    for (Index i = 0; i < m.rows(); ++i)
    {
        for (Index j = 0; j < m.cols(); ++j)
        {
            if (j)
                out << ',';
            out << detail::format_double(m(i, j));
        }
        out << '\n';
    }
    if (!out)
        throw IoError(path + ": write failed");
}

inline Matrix read_matrix_csv(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw IoError(path + ": cannot open");
    std::vector<std::vector<double>> rows;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line))
    {
        ++lineno;
        if (line.empty() || line[0] == '#')
            continue;
        std::vector<double> r;
        std::string_view rest(line);
        const std::string where = path + ":" + std::to_string(lineno);
        while (true)
        {
            const auto comma = rest.find(',');
            r.push_back(detail::parse_double(rest.substr(0, comma), where));
            if (comma == std::string_view::npos)
                break;
            rest.remove_prefix(comma + 1);
        }
        if (!rows.empty() && r.size() != rows.front().size())
            throw IoError(where + ": ragged row");
        rows.push_back(std::move(r));
    }
    if (rows.empty())
        return Matrix();
    Matrix m(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows[i].size(); ++j)
            m(static_cast<Index>(i), static_cast<Index>(j)) = rows[i][j];
    return m;
}

}  // namespace kronband::io

/**
 * @file rng.hpp
 * @brief Deterministic random streams for simulation and resampling.
 *
 * Generator: xoshiro256** (Blackman & Vigna), state filled by SplitMix64.
 * Stream splitting: Rng(seed, stream) seeds SplitMix64 with
 * splitmix64(seed) + stream * 0xD1B54A32D192ED03, so every (seed, stream)
 * pair owns an independent, reproducible sequence. Monte Carlo code derives
 * one stream per replication and never shares a generator across threads.
 *
 * All variates are produced by code in this file (no <random>
 * distributions) so streams are bit-identical across standard libraries.
 */
#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace kronband
{

class Rng
{
  public:
    explicit Rng(std::uint64_t seed = 0, std::uint64_t stream = 0)
    {
        std::uint64_t mix = seed;
        std::uint64_t sm = splitmix64(mix) + stream * 0xD1B54A32D192ED03ULL;
        for (auto& s : state_)
            s = splitmix64(sm);
    }

    std::uint64_t next_u64()
    {
        const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    /// Uniform on [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform integer in [0, bound), unbiased by rejection.
    std::uint64_t below(std::uint64_t bound)
    {
        if (bound == 0)
            throw std::invalid_argument("Rng::below: bound must be positive");
        const std::uint64_t limit = (~std::uint64_t{0}) - (~std::uint64_t{0}) % bound;
        std::uint64_t r;
        do
        {
            r = next_u64();
        } while (r >= limit);
        return r % bound;
    }

    /// Standard normal, Box-Muller with the second variate cached.
    double normal()
    {
        if (has_spare_)
        {
            has_spare_ = false;
            return spare_;
        }
        double u1;
        do
        {
            u1 = uniform();
        } while (u1 <= 0.0);
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    /// Gamma(shape, 1) by Marsaglia & Tsang; shape < 1 via the U^(1/a) boost.
    double gamma(double shape)
    {
        if (!(shape > 0.0))
            throw std::invalid_argument("Rng::gamma: shape must be positive");
        if (shape < 1.0)
        {
            double u;
            do
            {
                u = uniform();
            } while (u <= 0.0);
            return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
        }
        const double d = shape - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        for (;;)
        {
            double x, v;
            do
            {
                x = normal();
                v = 1.0 + c * x;
            } while (v <= 0.0);
            v = v * v * v;
            const double u = uniform();
            if (u < 1.0 - 0.0331 * x * x * x * x)
                return d * v;
            if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v)))
                return d * v;
        }
    }

    double chi_square(double df) { return 2.0 * gamma(0.5 * df); }

    /// In-place Fisher-Yates shuffle.
    template <class T>
    void shuffle(std::vector<T>& v)
    {
        for (std::size_t i = v.size(); i > 1; --i)
        {
            const std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

  private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    static std::uint64_t splitmix64(std::uint64_t& x)
    {
        std::uint64_t z = (x += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    std::uint64_t state_[4]{};
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace kronband

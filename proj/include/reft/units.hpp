#pragma once

#include <compare>
#include <cstdint>
#include <random>

namespace reft
{
    inline constexpr double kSecondsPerDay = 86400.0;

    // Reliability math runs in days, the simulator in seconds. The two never convert implicitly.
    struct Days
    {
        double value = 0.0;
        constexpr explicit Days(double v = 0.0) noexcept : value(v) {}
        friend constexpr auto operator<=>(const Days &, const Days &) = default;
    };

    struct Seconds
    {
        double value = 0.0;
        constexpr explicit Seconds(double v = 0.0) noexcept : value(v) {}
        friend constexpr auto operator<=>(const Seconds &, const Seconds &) = default;
    };

    constexpr Seconds to_seconds(Days d) noexcept { return Seconds{d.value * kSecondsPerDay}; }
    constexpr Days to_days(Seconds s) noexcept { return Days{s.value / kSecondsPerDay}; }

    /// Seeded 64-bit Mersenne Twister with a portable [0, 1) mapping.
    class Rng
    {
    public:
        explicit Rng(std::uint64_t seed) : m_engine(seed) {}

        std::uint64_t next() { return m_engine(); }
        /// 53 random bits scaled into [0, 1).
        double uniform() { return static_cast<double>(m_engine() >> 11) * 0x1.0p-53; }
        /// Uniform integer in [0, bound).
        std::uint64_t below(std::uint64_t bound) { return bound == 0 ? 0 : m_engine() % bound; }
        /// Independent child stream for a sub-task.
        Rng fork(std::uint64_t salt) { return Rng(m_engine() ^ (salt * 0x9e3779b97f4a7c15ull)); }

    private:
        std::mt19937_64 m_engine;
    };
}

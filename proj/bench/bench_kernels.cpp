#include "reft/kernels.hpp"
#include "reft/protection.hpp"

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

namespace
{
    std::vector<std::uint8_t> noise(std::size_t n, unsigned seed)
    {
        std::mt19937_64 gen(seed);
        std::vector<std::uint8_t> v(n);
        for (auto &b : v)
        {
            b = static_cast<std::uint8_t>(gen());
        }
        return v;
    }

    std::vector<std::uint8_t> floats(std::size_t count, unsigned seed)
    {
        std::mt19937 gen(seed);
        std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
        std::vector<float> f(count);
        for (auto &x : f)
        {
            x = dist(gen);
        }
        const auto *p = reinterpret_cast<const std::uint8_t *>(f.data());
        return {p, p + count * sizeof(float)};
    }

    template <bool Parallel>
    void BM_Xor(benchmark::State &state)
    {
        const auto n = static_cast<std::size_t>(state.range(0));
        auto dst = noise(n, 1);
        const auto src = noise(n, 2);
        for (auto _ : state)
        {
            if constexpr (Parallel)
                reft::xor_into(dst, src);
            else
                reft::xor_into_serial(dst, src);
            benchmark::DoNotOptimize(dst.data());
        }
        state.SetBytesProcessed(static_cast<std::int64_t>(state.iterations() * n));
    }

    template <bool Parallel>
    void BM_Sgd(benchmark::State &state)
    {
        const auto count = static_cast<std::size_t>(state.range(0)) / sizeof(float);
        auto w = floats(count, 3);
        const auto g = floats(count, 4);
        for (auto _ : state)
        {
            if constexpr (Parallel)
                reft::sgd_update(w, g, 1e-3f);
            else
                reft::sgd_update_serial(w, g, 1e-3f);
            benchmark::DoNotOptimize(w.data());
        }
        state.SetBytesProcessed(static_cast<std::int64_t>(state.iterations() * count * sizeof(float)));
    }

    void BM_AecEncode(benchmark::State &state)
    {
        const auto m = static_cast<std::uint32_t>(state.range(0));
        const std::size_t len = 1 << 20;
        std::vector<reft::ParamBuffer> inputs;
        for (std::uint32_t i = 0; i + 1 < m; ++i)
        {
            reft::ParamBuffer b;
            b.bytes = noise(len, 10 + i);
            b.owner_node = i;
            b.sub_slice_index = 0;
            inputs.push_back(std::move(b));
        }
        for (auto _ : state)
        {
            benchmark::DoNotOptimize(reft::aec_encode(inputs));
        }
        state.SetBytesProcessed(static_cast<std::int64_t>(state.iterations() * len * (m - 1)));
    }
}

BENCHMARK(BM_Xor<false>)->Name("xor/serial")->RangeMultiplier(16)->Range(1 << 12, 1 << 24);
BENCHMARK(BM_Xor<true>)->Name("xor/openmp")->RangeMultiplier(16)->Range(1 << 12, 1 << 24);
BENCHMARK(BM_Sgd<false>)->Name("sgd/serial")->RangeMultiplier(16)->Range(1 << 12, 1 << 24);
BENCHMARK(BM_Sgd<true>)->Name("sgd/openmp")->RangeMultiplier(16)->Range(1 << 12, 1 << 24);
BENCHMARK(BM_AecEncode)->Name("aec_encode/1MiB_slices")->DenseRange(2, 8, 2);

BENCHMARK_MAIN();

#include "reft/kernels.hpp"
#include "reft/errors.hpp"

#include <bit>
#include <cstdlib>
#include <cstring>
#include <string>

#include <omp.h>

static_assert(std::endian::native == std::endian::little, "float buffers are stored little-endian");

namespace reft
{
    namespace
    {
        constexpr std::size_t kWord = sizeof(std::uint64_t);
        // Below this size thread start-up costs more than the work.
        constexpr std::size_t kParallelThreshold = 1u << 16;

        void check_xor(std::span<std::uint8_t> dst, std::span<const std::uint8_t> src)
        {
            if (dst.size() != src.size())
            {
                throw InvalidArgument("xor: length mismatch (" + std::to_string(dst.size()) + " vs " +
                                      std::to_string(src.size()) + ")");
            }
        }

        void check_sgd(std::span<std::uint8_t> w, std::span<const std::uint8_t> g)
        {
            if (w.size() != g.size())
            {
                throw InvalidArgument("sgd: optimizer and gradient shards differ in length");
            }
            if (w.size() % sizeof(float) != 0)
            {
                throw InvalidArgument("sgd: shard length is not a whole number of float32 elements");
            }
        }

        inline void sgd_one(std::uint8_t *w, const std::uint8_t *g, float eta)
        {
            float wv;
            float gv;
            std::memcpy(&wv, w, sizeof wv);
            std::memcpy(&gv, g, sizeof gv);
            const float step = eta * gv;
            wv = wv - step;
            std::memcpy(w, &wv, sizeof wv);
        }
    }

    int kernel_threads()
    {
        if (const char *env = std::getenv("REFT_SIM_THREADS"))
        {
            const int n = std::atoi(env);
            if (n > 0)
            {
                return n;
            }
        }
        return omp_get_max_threads();
    }

    void xor_into_serial(std::span<std::uint8_t> dst, std::span<const std::uint8_t> src)
    {
        check_xor(dst, src);
        for (std::size_t i = 0; i < dst.size(); ++i)
        {
            dst[i] ^= src[i];
        }
    }

    void xor_into(std::span<std::uint8_t> dst, std::span<const std::uint8_t> src)
    {
        check_xor(dst, src);
        const std::size_t n = dst.size();
        const std::size_t words = n / kWord;
        std::uint8_t *d = dst.data();
        const std::uint8_t *s = src.data();
        const int threads = n >= kParallelThreshold ? kernel_threads() : 1;
#pragma omp parallel for schedule(static) num_threads(threads)
        for (std::size_t w = 0; w < words; ++w)
        {
            std::uint64_t a;
            std::uint64_t b;
            std::memcpy(&a, d + w * kWord, kWord);
            std::memcpy(&b, s + w * kWord, kWord);
            a ^= b;
            std::memcpy(d + w * kWord, &a, kWord);
        }
        for (std::size_t i = words * kWord; i < n; ++i)
        {
            d[i] ^= s[i];
        }
    }

    void sgd_update_serial(std::span<std::uint8_t> weights, std::span<const std::uint8_t> grads, float eta)
    {
        check_sgd(weights, grads);
        for (std::size_t i = 0; i < weights.size(); i += sizeof(float))
        {
            sgd_one(weights.data() + i, grads.data() + i, eta);
        }
    }

    void sgd_update(std::span<std::uint8_t> weights, std::span<const std::uint8_t> grads, float eta)
    {
        check_sgd(weights, grads);
        const std::size_t count = weights.size() / sizeof(float);
        std::uint8_t *w = weights.data();
        const std::uint8_t *g = grads.data();
        const int threads = weights.size() >= kParallelThreshold ? kernel_threads() : 1;
#pragma omp parallel for schedule(static) num_threads(threads)
        for (std::size_t i = 0; i < count; ++i)
        {
            sgd_one(w + i * sizeof(float), g + i * sizeof(float), eta);
        }
    }
}

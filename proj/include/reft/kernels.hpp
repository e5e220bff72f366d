#pragma once

#include <cstddef>
#include <cstdint>
#include <span>

namespace reft
{
    /// dst ^= src, byte by byte. Spans must have equal length.
    void xor_into(std::span<std::uint8_t> dst, std::span<const std::uint8_t> src);
    void xor_into_serial(std::span<std::uint8_t> dst, std::span<const std::uint8_t> src);

    /// In-place SGD step on little-endian float32 arrays stored as bytes: w = w - eta * g.
    void sgd_update(std::span<std::uint8_t> weights, std::span<const std::uint8_t> grads, float eta);
    void sgd_update_serial(std::span<std::uint8_t> weights, std::span<const std::uint8_t> grads, float eta);

    /// Threads used by the parallel kernels: REFT_SIM_THREADS when set, else the OpenMP default.
    int kernel_threads();
}

#pragma once

#include "reft/topology.hpp"

#include <iosfwd>
#include <vector>

namespace reft
{
    enum class OpKind
    {
        Fwd,
        Bwd,
        Comm,
    };

    const char *to_string(OpKind kind) noexcept;

    struct StageOp
    {
        OpKind kind = OpKind::Fwd;
        std::uint32_t microbatch = 0;
        double start = 0.0;
        double duration = 0.0;

        double end() const noexcept { return start + duration; }
    };

    struct Window
    {
        double start = 0.0;
        double end = 0.0;

        double length() const noexcept { return end - start; }
    };

    /// One pipeline stage's timeline for a single iteration, in iteration-local seconds.
    struct StageSchedule
    {
        std::uint32_t pp_stage = 0;
        std::vector<StageOp> ops;
        std::vector<Window> bubble_windows;
        double iteration_length = 0.0;

        double busy_time() const noexcept;
        double bubble_time() const noexcept;
        std::vector<Window> compute_windows() const;
        std::vector<Window> comm_windows() const;
    };

    struct PipelineOptions
    {
        /// Fraction of C_FB,BP spent in the forward pass.
        double fwd_ratio = 1.0 / 3.0;
        /// Per-stage gradient all-reduce time at the end of each iteration (empty = none).
        std::vector<double> grad_sync_seconds;
    };

    /// Ring all-reduce of `bytes` across `members` ranks: 2(m-1)/m * bytes / bandwidth.
    double ring_allreduce_seconds(Bytes bytes, std::uint32_t members, double bandwidth);

    /// Classic 1F1B: (pp - p - 1) warm-up forwards, 1F1B steady state, backward cool-down.
    std::vector<StageSchedule> generate_1f1b_schedule(const ClusterSpec &spec, const PipelineOptions &options = {});

    /// Iteration length shared by all stages (the synchronous step barrier).
    double iteration_length(const std::vector<StageSchedule> &schedules);

    /// Closed-form 1F1B bubble estimate (0.8p + 2|P| - p - 2) * C_p, clamped at zero.
    double estimate_bubble_time(std::uint32_t stage, const ClusterSpec &spec);

    /// Measured idle seconds per stage: iteration length minus busy op time.
    std::vector<double> profile_bubbles(const std::vector<StageSchedule> &schedules);

    /// Schedule dump: `stage,kind,start,duration`.
    void write_schedule_csv(std::ostream &os, const std::vector<StageSchedule> &schedules);
}

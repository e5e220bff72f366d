#pragma once

#include "reft/pipeline.hpp"
#include "reft/topology.hpp"

#include <iosfwd>
#include <utility>
#include <vector>

namespace reft
{
    /// Snapshot placement tier. Overflow chunks run after the iteration's compute
    /// ends and stall the step.
    enum class Layer : std::uint8_t
    {
        Bubble = 1,
        Compute = 2,
        Communication = 3,
        Overflow = 4,
    };

    const char *to_string(Layer layer) noexcept;

    enum class BubbleMode
    {
        ClosedForm,
        Profiled,
    };

    enum class SpillPolicy
    {
        /// Leftover bytes continue in the next iteration's windows; COMPLETED is delayed.
        Defer,
        /// Leftover bytes are copied right after the iteration ends and stall the step.
        Block,
    };

    struct Placement
    {
        Layer layer = Layer::Bubble;
        /// Iteration relative to the one that issued the snapshot.
        std::uint32_t iteration_offset = 0;
        /// Planned release time, iteration-local seconds.
        double start = 0.0;
        double end = 0.0;
        Bytes bytes = 0;
    };

    struct SnapshotPlan
    {
        NodeId node_id = 0;
        Bytes shard_bytes = 0;
        Bytes layer1_bytes = 0;
        Bytes layer2_bytes = 0;
        Bytes layer3_bytes = 0;
        Bytes overflow_bytes = 0;
        Bytes chunk_size = 64ull << 20;
        /// Bubble seconds the planner believed were available per iteration.
        double bubble_budget_seconds = 0.0;
        /// Iterations needed before the snapshot is COMPLETED (1 = fits in one).
        std::uint32_t iterations_spanned = 1;
        /// Baseline iteration length the windows were taken from.
        double iteration_length = 0.0;
        bool spillover = false;
        std::vector<Placement> placements;

        Bytes placed_bytes() const noexcept;
    };

    struct HasOptions
    {
        BubbleMode mode = BubbleMode::Profiled;
        SpillPolicy spill = SpillPolicy::Defer;
        Bytes chunk_size = 64ull << 20;
        bool layer2_enabled = true;
        /// Layer 3 requires training traffic on a different link than D2H copies.
        bool separate_interconnect = true;
        /// Usable fraction of each bubble window, taken from its start.
        double bubble_utilization = 1.0;
        /// Upper bound on iterations a deferred snapshot may span.
        std::uint32_t max_span = 1024;
    };

    /// size / B_io.
    double estimate_snapshot_time(Bytes bytes, double bandwidth);

    struct SplitResult
    {
        Bytes bubble_bytes = 0;
        Bytes rest_bytes = 0;
        friend bool operator==(const SplitResult &, const SplitResult &) = default;
    };

    /// Bytes that fit in the bubble: floor(bytes * t_bubble / t_ss) when t_ss >= t_bubble, else everything.
    SplitResult split_parameter(Bytes bytes, double t_ss, double t_bubble);

    /// Waterfall placement for one node: bubbles, then compute overlap, then communication
    /// overlap, then spill according to `options.spill`.
    SnapshotPlan plan_snapshot(NodeId node, Bytes shard_bytes, const StageSchedule &schedule,
                               const ClusterSpec &spec, const HasOptions &options = {});

    /// Plans every node of the topology; `node_bytes[i]` is node i's D2H volume.
    std::vector<SnapshotPlan> plan_all(const Topology &topology, const std::vector<Bytes> &node_bytes,
                                       const std::vector<StageSchedule> &schedules, const HasOptions &options = {});

    /// Plan dump: `node,layer,window_start,bytes`; window_start counts from the issuing iteration's start.
    void write_plan_csv(std::ostream &os, const std::vector<SnapshotPlan> &plans);
}

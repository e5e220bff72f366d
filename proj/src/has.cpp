#include "reft/has.hpp"
#include "reft/errors.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>

namespace reft
{
    const char *to_string(Layer layer) noexcept
    {
        switch (layer)
        {
        case Layer::Bubble:
            return "1";
        case Layer::Compute:
            return "2";
        case Layer::Communication:
            return "3";
        case Layer::Overflow:
            return "overflow";
        }
        return "?";
    }

    Bytes SnapshotPlan::placed_bytes() const noexcept
    {
        Bytes b = 0;
        for (const auto &p : placements)
        {
            b += p.bytes;
        }
        return b;
    }

    double estimate_snapshot_time(Bytes bytes, double bandwidth)
    {
        if (!(bandwidth > 0))
        {
            throw InvalidArgument("estimate_snapshot_time: bandwidth must be > 0");
        }
        return static_cast<double>(bytes) / bandwidth;
    }

    SplitResult split_parameter(Bytes bytes, double t_ss, double t_bubble)
    {
        if (t_ss < 0 || t_bubble < 0)
        {
            throw InvalidArgument("split_parameter: times must be >= 0");
        }
        if (t_ss == 0.0 || t_ss < t_bubble)
        {
            return {bytes, 0};
        }
        const long double exact = static_cast<long double>(bytes) * t_bubble / t_ss;
        const Bytes head = std::min<Bytes>(bytes, static_cast<Bytes>(std::floor(exact)));
        return {head, bytes - head};
    }

    namespace
    {
        /// Tiles up to `wanted` bytes into `windows` as back-to-back chunks. Chunk times are
        /// computed with the same floating-point chain the simulator uses, and every chunk
        /// ends no later than its window.
        Bytes tile(std::vector<Placement> &out, const std::vector<Window> &windows, Layer layer,
                   std::uint32_t offset, Bytes wanted, double bandwidth, Bytes chunk)
        {
            Bytes placed = 0;
            for (const auto &w : windows)
            {
                double t = w.start;
                while (placed < wanted)
                {
                    const double room = w.end - t;
                    if (!(room > 0))
                    {
                        break;
                    }
                    const long double fit = std::floor(static_cast<long double>(room) * bandwidth);
                    Bytes b = std::min<Bytes>({chunk, wanted - placed,
                                               fit > 0 ? static_cast<Bytes>(std::min<long double>(fit, 1e19L)) : 0});
                    while (b > 0 && t + static_cast<double>(b) / bandwidth > w.end)
                    {
                        --b;
                    }
                    if (b == 0)
                    {
                        break;
                    }
                    const double end = t + static_cast<double>(b) / bandwidth;
                    out.push_back({layer, offset, t, end, b});
                    t = end;
                    placed += b;
                }
                if (placed == wanted)
                {
                    break;
                }
            }
            return placed;
        }

        /// Window capacity in bytes, saturating at `limit`.
        Bytes capacity_of(const std::vector<Window> &windows, double bandwidth, Bytes chunk, Bytes limit)
        {
            std::vector<Placement> scratch;
            return tile(scratch, windows, Layer::Bubble, 0, limit, bandwidth, chunk);
        }

        std::vector<Window> usable_bubbles(const StageSchedule &s, double utilization)
        {
            std::vector<Window> out;
            for (const auto &w : s.bubble_windows)
            {
                const double len = w.length() * utilization;
                if (len > 0)
                {
                    out.push_back({w.start, utilization >= 1.0 ? w.end : w.start + len});
                }
            }
            return out;
        }
    }

    SnapshotPlan plan_snapshot(NodeId node, Bytes shard_bytes, const StageSchedule &schedule,
                               const ClusterSpec &spec, const HasOptions &options)
    {
        if (options.chunk_size == 0)
        {
            throw ConfigError("has: chunk_size must be > 0");
        }
        if (!(options.bubble_utilization > 0.0) || options.bubble_utilization > 1.0)
        {
            throw ConfigError("has: bubble_utilization must be in (0, 1]");
        }
        const double bw = spec.d2h_bandwidth;
        const Bytes chunk = options.chunk_size;
        const double iter_len = schedule.iteration_length;

        SnapshotPlan plan;
        plan.node_id = node;
        plan.shard_bytes = shard_bytes;
        plan.chunk_size = chunk;
        plan.iteration_length = iter_len;

        const auto bubbles = usable_bubbles(schedule, options.bubble_utilization);
        const auto compute = options.layer2_enabled ? schedule.compute_windows() : std::vector<Window>{};
        const auto comm = options.separate_interconnect ? schedule.comm_windows() : std::vector<Window>{};

        double profiled = 0.0;
        for (const auto &w : bubbles)
        {
            profiled += w.length();
        }
        const double t_bubble = options.mode == BubbleMode::ClosedForm
                                    ? estimate_bubble_time(schedule.pp_stage, spec) * options.bubble_utilization
                                    : profiled;
        plan.bubble_budget_seconds = t_bubble;
        const double t_ss = estimate_snapshot_time(shard_bytes, bw);

        const Bytes cap1 = capacity_of(bubbles, bw, chunk, shard_bytes + 1);
        const Bytes cap2 = capacity_of(compute, bw, chunk, shard_bytes + 1);
        const Bytes cap3 = capacity_of(comm, bw, chunk, shard_bytes + 1);
        const Bytes per_iteration = cap1 + cap2 + cap3;
        plan.spillover = shard_bytes > per_iteration;

        Bytes remaining = shard_bytes;
        Bytes overflow = 0;

        // First iteration: the Layer-1 budget comes from the bubble estimate.
        const SplitResult split = split_parameter(shard_bytes, t_ss, t_bubble);
        const Bytes l1 = tile(plan.placements, bubbles, Layer::Bubble, 0, std::min(split.bubble_bytes, cap1), bw, chunk);
        remaining -= l1;
        if (options.mode == BubbleMode::ClosedForm && split.bubble_bytes > l1)
        {
            // The estimate promised bubble time that the real schedule does not have.
            overflow += split.bubble_bytes - l1;
            remaining -= split.bubble_bytes - l1;
        }
        remaining -= tile(plan.placements, compute, Layer::Compute, 0, remaining, bw, chunk);
        remaining -= tile(plan.placements, comm, Layer::Communication, 0, remaining, bw, chunk);

        std::uint32_t offset = 0;
        if (options.spill == SpillPolicy::Defer && per_iteration > 0)
        {
            while (remaining > 0)
            {
                if (++offset >= options.max_span)
                {
                    throw ConfigError("has: snapshot of node " + std::to_string(node) + " needs more than " +
                                      std::to_string(options.max_span) + " iterations");
                }
                remaining -= tile(plan.placements, bubbles, Layer::Bubble, offset, remaining, bw, chunk);
                remaining -= tile(plan.placements, compute, Layer::Compute, offset, remaining, bw, chunk);
                remaining -= tile(plan.placements, comm, Layer::Communication, offset, remaining, bw, chunk);
            }
        }
        overflow += remaining;

        if (overflow > 0)
        {
            // Back-to-back after the step barrier; nothing else is running then.
            double t = iter_len;
            Bytes left = overflow;
            while (left > 0)
            {
                const Bytes b = std::min(left, chunk);
                const double end = t + static_cast<double>(b) / bw;
                plan.placements.push_back({Layer::Overflow, offset, t, end, b});
                t = end;
                left -= b;
            }
        }

        plan.iterations_spanned = offset + 1;
        for (const auto &p : plan.placements)
        {
            switch (p.layer)
            {
            case Layer::Bubble:
                plan.layer1_bytes += p.bytes;
                break;
            case Layer::Compute:
                plan.layer2_bytes += p.bytes;
                break;
            case Layer::Communication:
                plan.layer3_bytes += p.bytes;
                break;
            case Layer::Overflow:
                plan.overflow_bytes += p.bytes;
                break;
            }
        }
        std::stable_sort(plan.placements.begin(), plan.placements.end(), [](const Placement &a, const Placement &b) {
            return a.iteration_offset != b.iteration_offset ? a.iteration_offset < b.iteration_offset
                                                            : a.start < b.start;
        });
        return plan;
    }

    std::vector<SnapshotPlan> plan_all(const Topology &topology, const std::vector<Bytes> &node_bytes,
                                       const std::vector<StageSchedule> &schedules, const HasOptions &options)
    {
        if (node_bytes.size() != topology.nodes.size())
        {
            throw InvalidArgument("plan_all: need one byte count per node");
        }
        if (schedules.size() != topology.pp_size())
        {
            throw InvalidArgument("plan_all: need one schedule per stage");
        }
        std::vector<SnapshotPlan> plans;
        plans.reserve(topology.nodes.size());
        for (const auto &n : topology.nodes)
        {
            plans.push_back(plan_snapshot(n.id, node_bytes[n.id], schedules[n.pp_stage], topology.spec, options));
        }
        return plans;
    }

    void write_plan_csv(std::ostream &os, const std::vector<SnapshotPlan> &plans)
    {
        const auto old = os.precision(17);
        os << "node,layer,window_start,bytes\n";
        for (const auto &plan : plans)
        {
            for (const auto &p : plan.placements)
            {
                os << plan.node_id << ',' << to_string(p.layer) << ',' << (p.iteration_offset * plan.iteration_length + p.start) << ',' << p.bytes << '\n';
            }
        }
        os.precision(old);
    }
}

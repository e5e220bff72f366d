#include "reft/pipeline.hpp"
#include "reft/errors.hpp"

#include <algorithm>
#include <iostream>
#include <limits>

namespace reft
{
    const char *to_string(OpKind kind) noexcept
    {
        switch (kind)
        {
        case OpKind::Fwd:
            return "FWD";
        case OpKind::Bwd:
            return "BWD";
        case OpKind::Comm:
            return "COMM";
        }
        return "?";
    }

    double StageSchedule::busy_time() const noexcept
    {
        double t = 0.0;
        for (const auto &op : ops)
        {
            t += op.duration;
        }
        return t;
    }

    double StageSchedule::bubble_time() const noexcept
    {
        double t = 0.0;
        for (const auto &w : bubble_windows)
        {
            t += w.length();
        }
        return t;
    }

    std::vector<Window> StageSchedule::compute_windows() const
    {
        std::vector<Window> out;
        for (const auto &op : ops)
        {
            if (op.kind != OpKind::Comm && op.duration > 0)
            {
                out.push_back({op.start, op.end()});
            }
        }
        return out;
    }

    std::vector<Window> StageSchedule::comm_windows() const
    {
        std::vector<Window> out;
        for (const auto &op : ops)
        {
            if (op.kind == OpKind::Comm && op.duration > 0)
            {
                out.push_back({op.start, op.end()});
            }
        }
        return out;
    }

    double ring_allreduce_seconds(Bytes bytes, std::uint32_t members, double bandwidth)
    {
        if (members <= 1)
        {
            return 0.0;
        }
        if (!(bandwidth > 0))
        {
            throw InvalidArgument("ring_allreduce_seconds: bandwidth must be > 0");
        }
        return 2.0 * (members - 1) / members * static_cast<double>(bytes) / bandwidth;
    }

    namespace
    {
        struct PendingOp
        {
            OpKind kind;
            std::uint32_t mb;
        };

        std::vector<PendingOp> one_f_one_b_order(std::uint32_t stage, std::uint32_t stages, std::uint32_t mbs)
        {
            const std::uint32_t warmup = std::min(stages - stage - 1, mbs);
            std::vector<PendingOp> order;
            std::uint32_t next_f = 0;
            std::uint32_t next_b = 0;
            for (; next_f < warmup; ++next_f)
            {
                order.push_back({OpKind::Fwd, next_f});
            }
            while (next_f < mbs)
            {
                order.push_back({OpKind::Fwd, next_f++});
                order.push_back({OpKind::Bwd, next_b++});
            }
            while (next_b < mbs)
            {
                order.push_back({OpKind::Bwd, next_b++});
            }
            return order;
        }
    }

    std::vector<StageSchedule> generate_1f1b_schedule(const ClusterSpec &spec, const PipelineOptions &options)
    {
        spec.validate();
        if (!(options.fwd_ratio > 0.0) || !(options.fwd_ratio < 1.0))
        {
            throw ConfigError("pipeline: fwd_ratio must be in (0, 1)");
        }
        if (!options.grad_sync_seconds.empty() && options.grad_sync_seconds.size() != spec.pp_size)
        {
            throw ConfigError("pipeline: grad_sync_seconds needs one entry per stage");
        }
        if (spec.num_microbatches < spec.pp_size)
        {
            std::clog << "warning: num_microbatches (" << spec.num_microbatches << ") < pp_size (" << spec.pp_size
                      << "); 1F1B never reaches steady state\n";
        }

        const std::uint32_t P = spec.pp_size;
        const std::uint32_t M = spec.num_microbatches;
        constexpr double kUnset = -1.0;
        std::vector<std::vector<double>> fwd_end(P, std::vector<double>(M, kUnset));
        std::vector<std::vector<double>> bwd_end(P, std::vector<double>(M, kUnset));
        std::vector<std::vector<PendingOp>> orders(P);
        std::vector<std::size_t> cursor(P, 0);
        std::vector<double> free_at(P, 0.0);
        std::vector<StageSchedule> out(P);
        for (std::uint32_t p = 0; p < P; ++p)
        {
            orders[p] = one_f_one_b_order(p, P, M);
            out[p].pp_stage = p;
        }

        // Each pass issues every op whose cross-stage dependency is met; 1F1B never deadlocks.
        bool progressed = true;
        while (progressed)
        {
            progressed = false;
            for (std::uint32_t p = 0; p < P; ++p)
            {
                while (cursor[p] < orders[p].size())
                {
                    const PendingOp op = orders[p][cursor[p]];
                    double dep = 0.0;
                    if (op.kind == OpKind::Fwd && p > 0)
                    {
                        dep = fwd_end[p - 1][op.mb];
                    }
                    else if (op.kind == OpKind::Bwd && p + 1 < P)
                    {
                        dep = bwd_end[p + 1][op.mb];
                    }
                    if (dep == kUnset)
                    {
                        break;
                    }
                    const double c = spec.compute_time(p);
                    const double dur = op.kind == OpKind::Fwd ? c * options.fwd_ratio : c * (1.0 - options.fwd_ratio);
                    const double start = std::max(free_at[p], dep);
                    const double end = start + dur;
                    (op.kind == OpKind::Fwd ? fwd_end : bwd_end)[p][op.mb] = end;
                    free_at[p] = end;
                    out[p].ops.push_back({op.kind, op.mb, start, dur});
                    ++cursor[p];
                    progressed = true;
                }
            }
        }
        for (std::uint32_t p = 0; p < P; ++p)
        {
            if (cursor[p] != orders[p].size())
            {
                throw StateError("pipeline: 1F1B schedule did not converge");
            }
        }

        double length = 0.0;
        for (std::uint32_t p = 0; p < P; ++p)
        {
            const double sync = options.grad_sync_seconds.empty() ? 0.0 : options.grad_sync_seconds[p];
            if (sync > 0)
            {
                out[p].ops.push_back({OpKind::Comm, 0, free_at[p], sync});
                free_at[p] += sync;
            }
            length = std::max(length, free_at[p]);
        }

        for (auto &stage : out)
        {
            stage.iteration_length = length;
            double cursor_t = 0.0;
            for (const auto &op : stage.ops)
            {
                if (op.start > cursor_t)
                {
                    stage.bubble_windows.push_back({cursor_t, op.start});
                }
                cursor_t = std::max(cursor_t, op.end());
            }
            if (length > cursor_t)
            {
                stage.bubble_windows.push_back({cursor_t, length});
            }
        }
        return out;
    }

    double iteration_length(const std::vector<StageSchedule> &schedules)
    {
        double t = 0.0;
        for (const auto &s : schedules)
        {
            t = std::max(t, s.iteration_length);
        }
        return t;
    }

    double estimate_bubble_time(std::uint32_t stage, const ClusterSpec &spec)
    {
        if (stage >= spec.pp_size)
        {
            throw InvalidArgument("estimate_bubble_time: stage out of range");
        }
        const double p = stage;
        const double stages = spec.pp_size;
        const double t = (0.8 * p + 2.0 * stages - p - 2.0) * spec.compute_time(stage);
        return std::max(0.0, t);
    }

    std::vector<double> profile_bubbles(const std::vector<StageSchedule> &schedules)
    {
        std::vector<double> out;
        out.reserve(schedules.size());
        for (const auto &s : schedules)
        {
            if (s.ops.empty())
            {
                throw InvalidArgument("profile_bubbles: stage " + std::to_string(s.pp_stage) + " has no ops");
            }
            out.push_back(s.bubble_time());
        }
        return out;
    }

    void write_schedule_csv(std::ostream &os, const std::vector<StageSchedule> &schedules)
    {
        const auto old = os.precision(17);
        os << "stage,kind,start,duration\n";
        for (const auto &s : schedules)
        {
            for (const auto &op : s.ops)
            {
                os << s.pp_stage << ',' << to_string(op.kind) << ',' << op.start << ',' << op.duration << '\n';
            }
        }
        os.precision(old);
    }
}

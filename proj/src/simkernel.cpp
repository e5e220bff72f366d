#include "reft/simkernel.hpp"
#include "reft/errors.hpp"

#include <algorithm>
#include <cstring>
#include <iostream>
#include <map>
#include <optional>
#include <queue>

namespace reft
{
    const char *to_string(Stream stream) noexcept
    {
        switch (stream)
        {
        case Stream::Compute:
            return "COMPUTE";
        case Stream::D2H:
            return "D2H";
        case Stream::Network:
            return "NETWORK";
        }
        return "?";
    }

    const char *to_string(EventKind kind) noexcept
    {
        switch (kind)
        {
        case EventKind::Fwd:
            return "FWD";
        case EventKind::Bwd:
            return "BWD";
        case EventKind::SnapshotChunk:
            return "SNAPSHOT_CHUNK";
        case EventKind::Comm:
            return "COMM";
        case EventKind::Failure:
            return "FAILURE";
        case EventKind::Signal:
            return "SIGNAL";
        }
        return "?";
    }

    namespace
    {
        constexpr std::size_t kStreams = 3;

        struct Task
        {
            NodeId node = 0;
            Stream stream = Stream::Compute;
            EventKind kind = EventKind::Fwd;
            double duration = 0.0;
            double release = 0.0;
            Bytes bytes = 0;
            Layer layer = Layer::Bubble;
            int snapshot = -1;
            std::vector<int> deps;
            std::vector<int> dependents;
            double start = 0.0;
            double end = 0.0;
            bool scheduled = false;
            bool finished = false;
            std::uint32_t version = 0;
            std::uint64_t seq = 0;
            /// D2H chunks only: whether the chunk already slowed the compute / network op.
            std::array<bool, 2> interfered{};
        };

        struct StreamState
        {
            std::vector<int> queue;
            std::size_t head = 0;
            bool busy = false;
            int running = -1;
            double free_at = 0.0;
        };

        struct QueuedEvent
        {
            double time;
            NodeId node;
            Stream stream;
            std::uint64_t seq;
            int task;
            bool finish;
            std::uint32_t version;
        };

        struct Later
        {
            bool operator()(const QueuedEvent &a, const QueuedEvent &b) const noexcept
            {
                if (a.time != b.time)
                    return a.time > b.time;
                if (a.node != b.node)
                    return a.node > b.node;
                if (a.stream != b.stream)
                    return a.stream > b.stream;
                return a.seq > b.seq;
            }
        };

        /// Event loop for one iteration, in iteration-local time.
        class IterationRun
        {
        public:
            IterationRun(std::vector<Task> tasks, std::size_t nodes, const SimOptions &options)
                : m_tasks(std::move(tasks)), m_streams(nodes * kStreams), m_options(options)
            {
                for (std::size_t i = 0; i < m_tasks.size(); ++i)
                {
                    stream_of(m_tasks[i]).queue.push_back(static_cast<int>(i));
                    for (int d : m_tasks[i].deps)
                    {
                        m_tasks[d].dependents.push_back(static_cast<int>(i));
                    }
                }
            }

            void run()
            {
                for (auto &s : m_streams)
                {
                    if (!s.queue.empty())
                    {
                        try_schedule(s.queue.front());
                    }
                }
                while (!m_queue.empty())
                {
                    const QueuedEvent ev = m_queue.top();
                    m_queue.pop();
                    Task &t = m_tasks[ev.task];
                    if (ev.finish)
                    {
                        if (ev.version != t.version)
                        {
                            continue;
                        }
                        finish(ev.task);
                    }
                    else
                    {
                        start(ev.task, ev.time);
                    }
                }
                for (const auto &t : m_tasks)
                {
                    if (!t.finished)
                    {
                        throw StateError("simulation: task graph did not drain (dependency cycle)");
                    }
                }
            }

            const std::vector<Task> &tasks() const noexcept { return m_tasks; }

        private:
            StreamState &stream_of(const Task &t)
            {
                return m_streams[t.node * kStreams + static_cast<std::size_t>(t.stream)];
            }

            void push(int task, double time, bool finish)
            {
                const Task &t = m_tasks[task];
                m_queue.push({time, t.node, t.stream, m_next_seq++, task, finish, t.version});
            }

            void try_schedule(int id)
            {
                Task &t = m_tasks[id];
                StreamState &s = stream_of(t);
                if (t.scheduled || s.busy || s.head >= s.queue.size() || s.queue[s.head] != id)
                {
                    return;
                }
                double ready = std::max(t.release, s.free_at);
                for (int d : t.deps)
                {
                    if (!m_tasks[d].finished)
                    {
                        return;
                    }
                    ready = std::max(ready, m_tasks[d].end);
                }
                t.scheduled = true;
                push(id, ready, false);
            }

            void start(int id, double now)
            {
                Task &t = m_tasks[id];
                StreamState &s = stream_of(t);
                t.start = now;
                t.end = now + t.duration;
                s.busy = true;
                s.running = id;
                if (t.stream == Stream::D2H)
                {
                    t.interfered[0] = interfere(t.node, Stream::Compute, m_options.alpha_compute, t.duration, now);
                    t.interfered[1] = interfere(t.node, Stream::Network, m_options.alpha_network, t.duration, now);
                }
                else
                {
                    // A chunk that started at this same instant overlaps this op as well.
                    StreamState &d2h = m_streams[t.node * kStreams + static_cast<std::size_t>(Stream::D2H)];
                    const std::size_t slot = t.stream == Stream::Compute ? 0 : 1;
                    const double alpha = slot == 0 ? m_options.alpha_compute : m_options.alpha_network;
                    if (alpha != 0.0 && d2h.running >= 0)
                    {
                        Task &chunk = m_tasks[d2h.running];
                        if (chunk.start == now && !chunk.interfered[slot])
                        {
                            t.end += alpha * chunk.duration;
                            chunk.interfered[slot] = true;
                        }
                    }
                }
                push(id, t.end, true);
            }

            bool interfere(NodeId node, Stream stream, double alpha, double chunk, double now)
            {
                if (alpha == 0.0)
                {
                    return false;
                }
                StreamState &s = m_streams[node * kStreams + static_cast<std::size_t>(stream)];
                if (s.running < 0)
                {
                    return false;
                }
                Task &victim = m_tasks[s.running];
                if (victim.start <= now && now < victim.end)
                {
                    victim.end += alpha * chunk;
                    ++victim.version;
                    push(s.running, victim.end, true);
                    return true;
                }
                return false;
            }

            void finish(int id)
            {
                Task &t = m_tasks[id];
                StreamState &s = stream_of(t);
                t.finished = true;
                s.busy = false;
                s.running = -1;
                s.free_at = t.end;
                ++s.head;
                if (s.head < s.queue.size())
                {
                    try_schedule(s.queue[s.head]);
                }
                for (int d : t.dependents)
                {
                    try_schedule(d);
                }
            }

            std::vector<Task> m_tasks;
            std::vector<StreamState> m_streams;
            const SimOptions &m_options;
            std::priority_queue<QueuedEvent, std::vector<QueuedEvent>, Later> m_queue;
            std::uint64_t m_next_seq = 0;
        };

        struct InFlight
        {
            int id = 0;
            std::uint64_t logical_iteration = 0;
            double state_time = 0.0;
            std::uint64_t issued_at = 0;
            std::size_t chunks_left = 0;
        };

        struct RestorePoint
        {
            std::uint64_t logical_iteration = 0;
            double state_time = 0.0;
        };

        void mix(std::uint64_t &h, const void *data, std::size_t n)
        {
            const auto *p = static_cast<const unsigned char *>(data);
            for (std::size_t i = 0; i < n; ++i)
            {
                h ^= p[i];
                h *= 0x100000001b3ull;
            }
        }

        template <class T>
        void mix(std::uint64_t &h, const T &v)
        {
            mix(h, &v, sizeof(T));
        }
    }

    std::uint64_t run_digest(const Topology &topology, const std::vector<StageSchedule> &schedules,
                             const FailureScript &failures, std::uint64_t iterations, const SimOptions &options)
    {
        std::uint64_t h = topology.digest();
        for (const auto &s : schedules)
        {
            mix(h, s.iteration_length);
            for (const auto &op : s.ops)
            {
                mix(h, op.start);
                mix(h, op.duration);
            }
        }
        for (const auto &f : failures)
        {
            mix(h, f.time_s);
            mix(h, f.node);
            mix(h, f.kind);
        }
        mix(h, iterations);
        mix(h, options.seed);
        return h;
    }

    SimulationResult run_simulation(const Topology &topology, const std::vector<StageSchedule> &schedules,
                                    const std::vector<SnapshotPlan> &plans, const FailureScript &failures,
                                    std::uint64_t iterations, const SimOptions &options)
    {
        const std::size_t nodes = topology.nodes.size();
        if (schedules.size() != topology.pp_size())
        {
            throw InvalidArgument("run_simulation: need one schedule per pipeline stage");
        }
        if (!plans.empty() && plans.size() != nodes)
        {
            throw InvalidArgument("run_simulation: need one snapshot plan per node");
        }
        for (std::size_t i = 0; i < plans.size(); ++i)
        {
            if (plans[i].node_id >= nodes)
            {
                throw InvalidArgument("run_simulation: plan references unknown node " +
                                      std::to_string(plans[i].node_id));
            }
        }
        for (const auto &f : failures)
        {
            if (f.node >= nodes)
            {
                throw InvalidArgument("run_simulation: failure references unknown node " + std::to_string(f.node));
            }
        }
        if (options.snapshot_interval == 0)
        {
            throw ConfigError("simulation: snapshot_interval must be >= 1");
        }

        std::vector<const SnapshotPlan *> plan_of(nodes, nullptr);
        for (const auto &p : plans)
        {
            plan_of[p.node_id] = &p;
        }

        SimulationResult result;
        result.config_digest = run_digest(topology, schedules, failures, iterations, options);
        SignalBoard board(static_cast<std::uint32_t>(nodes));
        std::uint64_t seq = 0;

        auto signal_all = [&](double time, SignalEvent ev) {
            board.apply_all(ev);
            for (NodeId n = 0; n < nodes; ++n)
            {
                result.trace.push_back({time, n, Stream::Compute, EventKind::Signal, 0.0, 0, seq++,
                                        to_string(board.state(n))});
            }
        };

        FailureScript pending = failures;
        std::sort(pending.begin(), pending.end(), [](const FailureEvent &a, const FailureEvent &b) {
            return a.time_s != b.time_s ? a.time_s < b.time_s : a.node < b.node;
        });
        std::size_t next_failure = 0;

        RestorePoint committed;
        RestorePoint nfs;
        std::optional<InFlight> inflight;
        int next_snapshot_id = 0;
        std::uint64_t logical = 0;
        std::uint64_t executed = 0;
        double now = 0.0;

        auto recover = [&](double fail_time, std::vector<FailureEvent> batch) {
            for (const auto &f : batch)
            {
                board.fail(f.node, f.kind);
                result.trace.push_back({fail_time, f.node, Stream::Compute, EventKind::Failure, 0.0, 0, seq++,
                                        to_string(f.kind)});
            }
            board.begin_recovery();
            for (NodeId n = 0; n < nodes; ++n)
            {
                result.trace.push_back({fail_time, n, Stream::Compute, EventKind::Signal, 0.0, 0, seq++,
                                        to_string(board.state(n))});
            }
            inflight.reset();

            const RecoveryDecision decision = options.recover ? options.recover(batch) : RecoveryDecision{};
            RecoveryRecord rec;
            rec.failure_time = fail_time;
            rec.failures = std::move(batch);
            rec.in_memory = decision.in_memory;
            rec.load_seconds = decision.load_seconds;
            const double done = fail_time + decision.load_seconds;
            if (decision.in_memory)
            {
                rec.restored_iteration = committed.logical_iteration;
                rec.recompute_seconds = fail_time - committed.state_time;
                signal_all(done, SignalEvent::RecoverySuccess);
            }
            else
            {
                committed = nfs;
                rec.restored_iteration = nfs.logical_iteration;
                rec.recompute_seconds = fail_time - nfs.state_time;
                signal_all(done, SignalEvent::RecoveryBeyondTolerance);
                signal_all(done, SignalEvent::RestartComplete);
            }
            logical = rec.restored_iteration;
            result.recoveries.push_back(std::move(rec));
            now = done;
        };

        const double base_len = iteration_length(schedules);
        while (logical < iterations)
        {
            // Failures that landed during a recovery window strike as the next step begins.
            if (next_failure < pending.size() && pending[next_failure].time_s <= now)
            {
                std::vector<FailureEvent> batch;
                while (next_failure < pending.size() && pending[next_failure].time_s <= now)
                {
                    batch.push_back(pending[next_failure++]);
                }
                recover(now, std::move(batch));
                continue;
            }

            const bool snapshot_due = !plans.empty() && !inflight && logical % options.snapshot_interval == 0;
            if (snapshot_due)
            {
                InFlight f;
                f.id = next_snapshot_id++;
                f.logical_iteration = logical;
                f.state_time = now;
                f.issued_at = executed;
                for (const auto *p : plan_of)
                {
                    f.chunks_left += p ? p->placements.size() : 0;
                }
                inflight = f;
                signal_all(now, SignalEvent::Snap);
            }

            // Build this step's task graph.
            std::vector<Task> tasks;
            std::map<std::tuple<NodeId, int, std::uint32_t>, int> index;
            std::vector<int> last_compute(nodes, -1);
            for (const auto &node : topology.nodes)
            {
                for (const auto &op : schedules[node.pp_stage].ops)
                {
                    Task t;
                    t.node = node.id;
                    t.duration = op.duration;
                    if (op.kind == OpKind::Comm)
                    {
                        t.stream = Stream::Network;
                        t.kind = EventKind::Comm;
                    }
                    else
                    {
                        t.stream = Stream::Compute;
                        t.kind = op.kind == OpKind::Fwd ? EventKind::Fwd : EventKind::Bwd;
                        last_compute[node.id] = static_cast<int>(tasks.size());
                    }
                    index[{node.id, static_cast<int>(op.kind), op.microbatch}] = static_cast<int>(tasks.size());
                    tasks.push_back(std::move(t));
                }
            }
            for (const auto &node : topology.nodes)
            {
                const auto &sched = schedules[node.pp_stage];
                for (const auto &op : sched.ops)
                {
                    Task &t = tasks[index.at({node.id, static_cast<int>(op.kind), op.microbatch})];
                    if (op.kind == OpKind::Fwd && node.pp_stage > 0)
                    {
                        t.deps.push_back(index.at({topology.node_at(node.pp_stage - 1, node.dp_rank),
                                                   static_cast<int>(OpKind::Fwd), op.microbatch}));
                    }
                    else if (op.kind == OpKind::Bwd && node.pp_stage + 1 < topology.pp_size())
                    {
                        t.deps.push_back(index.at({topology.node_at(node.pp_stage + 1, node.dp_rank),
                                                   static_cast<int>(OpKind::Bwd), op.microbatch}));
                    }
                    else if (op.kind == OpKind::Comm)
                    {
                        // Gradient all-reduce is a collective across the stage's DP group.
                        for (std::uint32_t d = 0; d < topology.dp_size(); ++d)
                        {
                            const int last = last_compute[topology.node_at(node.pp_stage, d)];
                            if (last >= 0)
                            {
                                t.deps.push_back(last);
                            }
                        }
                    }
                }
            }
            if (inflight)
            {
                const std::uint64_t offset = executed - inflight->issued_at;
                for (const auto *p : plan_of)
                {
                    if (!p)
                    {
                        continue;
                    }
                    for (const auto &pl : p->placements)
                    {
                        if (pl.iteration_offset != offset)
                        {
                            continue;
                        }
                        Task t;
                        t.node = p->node_id;
                        t.stream = Stream::D2H;
                        t.kind = EventKind::SnapshotChunk;
                        t.release = pl.start;
                        t.duration = static_cast<double>(pl.bytes) / topology.spec.d2h_bandwidth;
                        t.bytes = pl.bytes;
                        t.layer = pl.layer;
                        t.snapshot = inflight->id;
                        tasks.push_back(std::move(t));
                    }
                }
            }
            for (auto &t : tasks)
            {
                t.seq = seq++;
            }

            IterationRun run(std::move(tasks), nodes, options);
            run.run();

            double end = 0.0;
            double work_end = 0.0;
            double last_chunk_end = -1.0;
            std::size_t chunks = 0;
            IterationMetrics m;
            m.iteration = logical;
            for (const auto &t : run.tasks())
            {
                end = std::max(end, t.end);
                if (t.stream == Stream::D2H)
                {
                    last_chunk_end = std::max(last_chunk_end, t.end);
                    ++chunks;
                    if (t.layer == Layer::Overflow)
                    {
                        m.overflow_bytes += t.bytes;
                    }
                    else
                    {
                        m.bytes_snapshotted_by_layer[static_cast<std::size_t>(t.layer) - 1] += t.bytes;
                    }
                }
                else
                {
                    work_end = std::max(work_end, t.end);
                }
            }
            if (run.tasks().empty())
            {
                end = base_len;
                work_end = base_len;
            }

            // A failure inside this step aborts it.
            if (next_failure < pending.size() && pending[next_failure].time_s < now + end)
            {
                const double fail_time = pending[next_failure].time_s;
                for (const auto &t : run.tasks())
                {
                    if (now + t.start < fail_time)
                    {
                        result.trace.push_back({now + t.start, t.node, t.stream, t.kind,
                                                std::min(t.end, fail_time - now) - t.start, t.bytes, t.seq,
                                                t.stream == Stream::D2H ? to_string(t.layer) : ""});
                    }
                }
                std::vector<FailureEvent> batch;
                while (next_failure < pending.size() && pending[next_failure].time_s == fail_time)
                {
                    batch.push_back(pending[next_failure++]);
                }
                ++executed;
                recover(fail_time, std::move(batch));
                continue;
            }

            for (const auto &t : run.tasks())
            {
                result.trace.push_back({now + t.start, t.node, t.stream, t.kind, t.end - t.start, t.bytes, t.seq,
                                        t.stream == Stream::D2H ? to_string(t.layer) : ""});
            }
            m.t_iter = end;
            m.stalls = std::max(0.0, end - work_end);
            result.iterations.push_back(m);

            if (inflight)
            {
                inflight->chunks_left -= chunks;
                if (inflight->chunks_left == 0)
                {
                    const double done = now + std::max(last_chunk_end, 0.0);
                    if (board.can_commit(std::vector<NodeId>{}))
                    {
                        signal_all(done, SignalEvent::ShardsComplete);
                        committed = {inflight->logical_iteration, inflight->state_time};
                        ++result.snapshots_committed;
                        if (options.nfs_every_snapshots > 0 &&
                            result.snapshots_committed % options.nfs_every_snapshots == 0)
                        {
                            nfs = committed;
                        }
                        signal_all(done, SignalEvent::Resume);
                    }
                    inflight.reset();
                }
            }

            now += end;
            ++logical;
            ++executed;
        }
        result.total_time = now;

        std::stable_sort(result.trace.begin(), result.trace.end(), [](const SimEvent &a, const SimEvent &b) {
            if (a.time != b.time)
                return a.time < b.time;
            if (a.node != b.node)
                return a.node < b.node;
            if (a.stream != b.stream)
                return a.stream < b.stream;
            return a.sequence < b.sequence;
        });
        return result;
    }

    OverheadReport compute_overhead(SimulationResult &with_plan, const SimulationResult &baseline)
    {
        if (with_plan.config_digest != baseline.config_digest)
        {
            throw InvalidArgument("compute_overhead: runs do not share topology/schedule/seed");
        }
        if (with_plan.iterations.size() != baseline.iterations.size())
        {
            throw InvalidArgument("compute_overhead: runs executed different iteration counts");
        }
        OverheadReport report;
        for (std::size_t i = 0; i < baseline.iterations.size(); ++i)
        {
            auto &m = with_plan.iterations[i];
            if (m.iteration != baseline.iterations[i].iteration)
            {
                throw InvalidArgument("compute_overhead: iteration sequences diverge");
            }
            m.o_inmem = std::max(0.0, m.t_iter - baseline.iterations[i].t_iter);
            report.per_iteration.push_back(m.o_inmem);
            report.mean += m.o_inmem;
            report.max = std::max(report.max, m.o_inmem);
        }
        if (!report.per_iteration.empty())
        {
            report.mean /= static_cast<double>(report.per_iteration.size());
        }
        return report;
    }

    std::vector<double> profile_bubbles(const std::vector<SimEvent> &trace, const Topology &topology,
                                        double iteration_start, double iteration_length)
    {
        std::vector<double> busy(topology.pp_size(), 0.0);
        std::vector<bool> seen(topology.pp_size(), false);
        const double stop = iteration_start + iteration_length;
        for (const auto &ev : trace)
        {
            if (ev.time < iteration_start || ev.time >= stop)
            {
                continue;
            }
            if (ev.kind != EventKind::Fwd && ev.kind != EventKind::Bwd && ev.kind != EventKind::Comm)
            {
                continue;
            }
            const auto &node = topology.nodes.at(ev.node);
            if (node.dp_rank != 0)
            {
                continue;
            }
            busy[node.pp_stage] += ev.duration;
            seen[node.pp_stage] = true;
        }
        std::vector<double> idle;
        for (std::uint32_t p = 0; p < topology.pp_size(); ++p)
        {
            if (!seen[p])
            {
                throw InvalidArgument("profile_bubbles: trace has no ops for stage " + std::to_string(p));
            }
            idle.push_back(iteration_length - busy[p]);
        }
        return idle;
    }

    void write_trace_csv(std::ostream &os, const std::vector<SimEvent> &trace)
    {
        const auto old = os.precision(17);
        os << "time,node,stream,kind,duration,bytes\n";
        for (const auto &ev : trace)
        {
            os << ev.time << ',' << ev.node << ',' << to_string(ev.stream) << ',' << to_string(ev.kind) << ','
               << ev.duration << ',' << ev.bytes << '\n';
        }
        os.precision(old);
    }

    void write_metrics_csv(std::ostream &os, const std::vector<IterationMetrics> &metrics)
    {
        const auto old = os.precision(17);
        os << "# reft-sim v1\n";
        os << "iteration,t_iter,o_inmem,layer1_bytes,layer2_bytes,layer3_bytes,overflow_bytes,stalls\n";
        for (const auto &m : metrics)
        {
            os << m.iteration << ',' << m.t_iter << ',' << m.o_inmem << ',' << m.bytes_snapshotted_by_layer[0] << ','
               << m.bytes_snapshotted_by_layer[1] << ',' << m.bytes_snapshotted_by_layer[2] << ','
               << m.overflow_bytes << ',' << m.stalls << '\n';
        }
        os.precision(old);
    }
}

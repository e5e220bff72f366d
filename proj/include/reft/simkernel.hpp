#pragma once

#include "reft/failure.hpp"
#include "reft/has.hpp"
#include "reft/pipeline.hpp"
#include "reft/topology.hpp"

#include <array>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace reft
{
    enum class Stream : std::uint8_t
    {
        Compute = 0,
        D2H = 1,
        Network = 2,
    };

    enum class EventKind : std::uint8_t
    {
        Fwd,
        Bwd,
        SnapshotChunk,
        Comm,
        Failure,
        Signal,
    };

    const char *to_string(Stream stream) noexcept;
    const char *to_string(EventKind kind) noexcept;

    /// One executed activity. Trace order is (time, node, stream, sequence).
    struct SimEvent
    {
        double time = 0.0;
        NodeId node = 0;
        Stream stream = Stream::Compute;
        EventKind kind = EventKind::Fwd;
        double duration = 0.0;
        Bytes bytes = 0;
        std::uint64_t sequence = 0;
        /// Layer for snapshot chunks, signal/failure name otherwise.
        std::string payload;
    };

    struct IterationMetrics
    {
        std::uint64_t iteration = 0;
        double t_iter = 0.0;
        /// Filled by compute_overhead; zero straight out of the simulator.
        double o_inmem = 0.0;
        std::array<Bytes, 3> bytes_snapshotted_by_layer{};
        Bytes overflow_bytes = 0;
        /// Time the step barrier waited on D2H copies after training work finished.
        double stalls = 0.0;
    };

    struct RecoveryDecision
    {
        bool in_memory = true;
        double load_seconds = 0.0;
    };

    struct RecoveryRecord
    {
        double failure_time = 0.0;
        std::vector<FailureEvent> failures;
        bool in_memory = true;
        double load_seconds = 0.0;
        /// Training time lost: failure time minus the restored state's time.
        double recompute_seconds = 0.0;
        std::uint64_t restored_iteration = 0;
    };

    struct SimOptions
    {
        /// Interference coefficient of a D2H chunk against a running compute op.
        double alpha_compute = 0.0;
        /// Interference coefficient of a D2H chunk against a running network op.
        double alpha_network = 0.0;
        std::uint32_t snapshot_interval = 1;
        /// Every k-th committed snapshot also counts as an NFS checkpoint (0 = never).
        std::uint32_t nfs_every_snapshots = 0;
        std::uint64_t seed = 0;
        /// Decides the recovery path for simultaneous failures. Default: in-memory, free.
        std::function<RecoveryDecision(const std::vector<FailureEvent> &)> recover;
    };

    struct SimulationResult
    {
        std::vector<IterationMetrics> iterations;
        std::vector<SimEvent> trace;
        std::vector<RecoveryRecord> recoveries;
        std::uint64_t snapshots_committed = 0;
        double total_time = 0.0;
        /// Digest of every input that shapes the run; compute_overhead checks it.
        std::uint64_t config_digest = 0;
    };

    /// Runs `iterations` training steps (re-executed steps after a rollback do not count).
    /// `plans` may be empty for a baseline run; otherwise one plan per node.
    SimulationResult run_simulation(const Topology &topology, const std::vector<StageSchedule> &schedules,
                                    const std::vector<SnapshotPlan> &plans, const FailureScript &failures,
                                    std::uint64_t iterations, const SimOptions &options = {});

    struct OverheadReport
    {
        std::vector<double> per_iteration;
        double mean = 0.0;
        double max = 0.0;
    };

    /// Per-iteration t_iter(with snapshots) - t_iter(baseline); writes o_inmem into `with_plan`.
    OverheadReport compute_overhead(SimulationResult &with_plan, const SimulationResult &baseline);

    /// Digest of the run-shaping inputs other than the snapshot plans.
    std::uint64_t run_digest(const Topology &topology, const std::vector<StageSchedule> &schedules,
                             const FailureScript &failures, std::uint64_t iterations, const SimOptions &options);

    /// Measured idle seconds per stage for one iteration of a trace, using one node per stage.
    std::vector<double> profile_bubbles(const std::vector<SimEvent> &trace, const Topology &topology,
                                        double iteration_start, double iteration_length);

    /// `time,node,stream,kind,duration,bytes`
    void write_trace_csv(std::ostream &os, const std::vector<SimEvent> &trace);

    /// Header comment `# reft-sim v1`, then one row per iteration.
    void write_metrics_csv(std::ostream &os, const std::vector<IterationMetrics> &metrics);
}

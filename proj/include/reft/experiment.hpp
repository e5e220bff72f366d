#pragma once

#include "reft/config.hpp"
#include "reft/pipeline.hpp"
#include "reft/recovery.hpp"
#include "reft/simkernel.hpp"

#include <filesystem>
#include <iosfwd>

namespace reft
{
    /// Per-stage bytes each sharding group splits: model only under ZeRO-1, model plus optimizer otherwise.
    std::vector<Bytes> stage_bytes(const ExperimentConfig &config);

    /// D2H volume of every node per snapshot: own shard, ARC copies, AEC parity, and under ZeRO-1 the
    /// optimizer shard (plus the gradient shard that feeds AOR).
    std::vector<Bytes> snapshot_volumes(const ExperimentConfig &config, const Topology &topology,
                                        const std::vector<ShardingGroup> &groups);

    struct ExperimentResult
    {
        Topology topology;
        std::vector<ShardingGroup> groups;
        std::vector<StageSchedule> schedules;
        std::vector<Bytes> node_bytes;
        std::vector<SnapshotPlan> plans;
        /// Failure-free runs used for the overhead comparison.
        SimulationResult baseline;
        SimulationResult snapshot;
        OverheadReport overhead;
        /// Present when failure injection is on: the snapshotting run replayed with the failure script.
        FailureScript failures;
        std::optional<SimulationResult> resilience;
        double baseline_samples_per_second = 0.0;
        double snapshot_samples_per_second = 0.0;
    };

    ExperimentResult run_experiment(const ExperimentConfig &config);

    /// Recovery decision used inside simulations: lost = hardware-failed ranks (software failures keep
    /// host memory), in-memory when every group stays within effective_tolerance().
    RecoveryDecision decide_recovery(const ExperimentConfig &config, const Topology &topology,
                                     const std::vector<FailureEvent> &failures);

    void write_summary(std::ostream &os, const ExperimentConfig &config, const ExperimentResult &result);

    /// Writes metrics.csv, trace.csv, plan.csv, schedule.csv, failures.csv, config.cfg and summary.txt.
    void write_outputs(const std::filesystem::path &dir, const ExperimentConfig &config,
                       const ExperimentResult &result);
}

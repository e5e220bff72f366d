#pragma once

#include "reft/failure.hpp"
#include "reft/protection.hpp"
#include "reft/store.hpp"

#include <optional>
#include <set>
#include <vector>

namespace reft
{
    /// Step one: the node's own completed snapshot. Hardware failures erase host memory; a software-failed
    /// node reloads from `tmpfs_root` when given, else from its surviving host memory.
    std::optional<CompletedSnapshot> local_load(const SnapshotSet &set, std::optional<FailureKind> failure,
                                                const std::filesystem::path *tmpfs_root = nullptr);

    /// Ring all-gather of W_n spread over m ranks: (m - 1) * (W_n / m) / bandwidth.
    double all_gather_seconds(Bytes total_bytes, std::uint32_t m, double bandwidth);

    struct GatherResult
    {
        ByteVec parameters;
        double seconds = 0.0;
    };

    /// Step two: concatenates rank shards in order. Every shard must be present.
    GatherResult all_gather_sync(const std::vector<std::optional<ByteVec>> &shards, double bandwidth);

    struct RecoveredGroup
    {
        /// Model shard per rank after reconstruction.
        std::vector<ByteVec> shards;
        std::size_t slices_copied = 0;
        std::size_t slices_decoded = 0;
        Bytes bytes_moved = 0;
        double transfer_seconds = 0.0;
    };

    /// Step three: rebuilds lost model shards from ARC copies and AEC parities. Throws
    /// UnrecoverableError beyond what the surviving redundancy covers.
    RecoveredGroup reconstruct_missing(const GroupProtection &state, const std::set<std::uint32_t> &failed,
                                       double bandwidth);

    /// Per-node in-memory load time model: local host-to-device bytes plus the all-gather.
    struct LoadModel
    {
        /// Host-to-device bandwidth per node (one channel per node).
        double host_bandwidth = 16e9;
        double network_bandwidth = 12.5e9;
        double nfs_bandwidth = 1.25e9;
    };

    /// Bytes a node reads from host memory on restart: its shard plus its redundancy.
    Bytes local_restore_bytes(Bytes stage_bytes, std::uint32_t m, const ProtectionConfig &config);
    double in_memory_load_seconds(Bytes stage_bytes, std::uint32_t m, const ProtectionConfig &config,
                                  const LoadModel &model);
    /// Whole checkpoint streamed from shared storage: checkpoint_bytes / nfs_bandwidth.
    double nfs_load_seconds(Bytes checkpoint_bytes, const LoadModel &model);

    enum class RecoveryPath
    {
        InMemory,
        Nfs,
    };

    const char *to_string(RecoveryPath path) noexcept;

    struct RecoveryInputs
    {
        /// Failed ranks per sharding group.
        std::vector<std::set<std::uint32_t>> failed_per_group;
        std::uint32_t group_size = 1;
        ProtectionConfig config;
        Bytes stage_bytes = 0;
        Bytes checkpoint_bytes = 0;
        LoadModel load;
        double failure_time = 0.0;
        double last_snapshot_time = 0.0;
        double last_nfs_time = 0.0;
    };

    struct RecoveryOutcome
    {
        RecoveryPath path = RecoveryPath::InMemory;
        double load_seconds = 0.0;
        /// O_restart: failure time minus the time of the state training resumes from.
        double recompute_seconds = 0.0;
    };

    /// In-memory when every group lost no more ranks than effective_tolerance(), NFS otherwise.
    RecoveryOutcome recover_or_fallback(const RecoveryInputs &inputs);

    struct LoadCalibration
    {
        LoadModel model;
        double nfs_seconds = 0.0;
        double arc_seconds = 0.0;
        double aec_seconds = 0.0;
    };

    /// Solves nfs_bandwidth and network_bandwidth so that NFS and ARC loads hit the given times for a
    /// model of `model_bytes` state split into `pp` stages over `m` data-parallel ranks, then evaluates AEC.
    LoadCalibration calibrate_load_model(Bytes model_bytes, std::uint32_t pp, std::uint32_t m, double host_bandwidth,
                                          double nfs_target_seconds, double arc_target_seconds);
}

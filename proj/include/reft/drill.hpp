#pragma once

#include "reft/failure.hpp"
#include "reft/protection.hpp"
#include "reft/recovery.hpp"
#include "reft/store.hpp"

#include <optional>
#include <string>
#include <vector>

namespace reft
{
    /// An end-to-end recovery exercise: train a few iterations on random parameters, snapshot every
    /// iteration through the host-memory store, crash part-way through a snapshot, then recover.
    struct DrillSpec
    {
        ClusterSpec cluster;
        /// Model bytes each sharding group splits.
        Bytes stage_bytes = 64 * 1024;
        /// Per-node float32 optimizer shard under ZeRO-1 (multiple of 4).
        Bytes optimizer_shard_bytes = 4 * 1024;
        ProtectionConfig protection;
        std::vector<NodeId> kill;
        FailureKind kind = FailureKind::Hardware;
        /// Iterations run before the crash is drawn; the crash lands in [1, iterations].
        std::uint32_t iterations = 4;
        std::uint64_t seed = 0;
        /// Starting parameters; model entries keyed by node, optimizer entries likewise. Random when absent.
        std::optional<Checkpoint> initial;
    };

    struct DrillReport
    {
        RecoveryPath path = RecoveryPath::InMemory;
        std::uint32_t crash_iteration = 0;
        std::uint64_t restored_iteration = 0;
        double load_seconds = 0.0;
        double transfer_seconds = 0.0;
        Bytes bytes_moved = 0;
        std::size_t slices_copied = 0;
        std::size_t slices_decoded = 0;
        std::size_t aor_lag = 0;
        bool model_checked = false;
        bool optimizer_checked = false;
        bool bit_exact = false;
        std::string detail;
        /// Parameters the drill started from, as written to NFS at iteration 0.
        Checkpoint initial;
    };

    DrillReport run_recovery_drill(const DrillSpec &spec);

    void write_drill_report(std::ostream &os, const DrillReport &report);
}

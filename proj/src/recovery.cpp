#include "reft/recovery.hpp"
#include "reft/errors.hpp"

#include <algorithm>

namespace reft
{
    std::optional<CompletedSnapshot> local_load(const SnapshotSet &set, std::optional<FailureKind> failure,
                                                const std::filesystem::path *tmpfs_root)
    {
        if (failure == FailureKind::Hardware)
        {
            return std::nullopt;
        }
        if (failure == FailureKind::Software && tmpfs_root)
        {
            return load_from_tmpfs(*tmpfs_root, set.node());
        }
        const auto snap = set.completed();
        if (!snap)
        {
            return std::nullopt;
        }
        return *snap;
    }

    double all_gather_seconds(Bytes total_bytes, std::uint32_t m, double bandwidth)
    {
        if (m == 0 || !(bandwidth > 0))
        {
            throw InvalidArgument("all_gather_seconds: need m >= 1 and bandwidth > 0");
        }
        return (m - 1) * (static_cast<double>(total_bytes) / m) / bandwidth;
    }

    GatherResult all_gather_sync(const std::vector<std::optional<ByteVec>> &shards, double bandwidth)
    {
        GatherResult out;
        for (std::size_t r = 0; r < shards.size(); ++r)
        {
            if (!shards[r])
            {
                throw StateError("all_gather: shard of rank " + std::to_string(r) +
                                 " is missing; reconstruct it before gathering");
            }
            out.parameters.insert(out.parameters.end(), shards[r]->begin(), shards[r]->end());
        }
        out.seconds = shards.empty() ? 0.0
                                     : all_gather_seconds(out.parameters.size(),
                                                          static_cast<std::uint32_t>(shards.size()), bandwidth);
        return out;
    }

    RecoveredGroup reconstruct_missing(const GroupProtection &state, const std::set<std::uint32_t> &failed,
                                       double bandwidth)
    {
        RecoveredGroup out;
        for (const auto &s : state.shards)
        {
            out.shards.push_back(s.bytes);
        }
        const ReconstructResult r = reconstruct_shards(state, failed);
        for (const auto &[rank, bytes] : r.shards)
        {
            out.shards[rank] = bytes;
        }
        out.slices_copied = r.slices_copied;
        out.slices_decoded = r.slices_decoded;
        out.bytes_moved = r.bytes_moved;
        out.transfer_seconds = static_cast<double>(r.bytes_moved) / bandwidth;
        return out;
    }

    Bytes local_restore_bytes(Bytes stage_bytes, std::uint32_t m, const ProtectionConfig &config)
    {
        if (m == 0)
        {
            throw InvalidArgument("local_restore_bytes: m must be >= 1");
        }
        const Bytes shard = (stage_bytes + m - 1) / m;
        Bytes total = shard;
        if (m >= 2 && config.has(Strategy::Arc))
        {
            total += shard;
        }
        if (m >= 2 && config.has(Strategy::Aec))
        {
            total += aec_slice_length(shard, m);
        }
        return total;
    }

    double in_memory_load_seconds(Bytes stage_bytes, std::uint32_t m, const ProtectionConfig &config,
                                  const LoadModel &model)
    {
        return static_cast<double>(local_restore_bytes(stage_bytes, m, config)) / model.host_bandwidth +
               all_gather_seconds(stage_bytes, m, model.network_bandwidth);
    }

    double nfs_load_seconds(Bytes checkpoint_bytes, const LoadModel &model)
    {
        return static_cast<double>(checkpoint_bytes) / model.nfs_bandwidth;
    }

    const char *to_string(RecoveryPath path) noexcept
    {
        return path == RecoveryPath::InMemory ? "IN_MEMORY" : "NFS";
    }

    RecoveryOutcome recover_or_fallback(const RecoveryInputs &inputs)
    {
        const std::uint32_t limit = effective_tolerance(inputs.config, inputs.group_size);
        const bool recoverable = std::all_of(inputs.failed_per_group.begin(), inputs.failed_per_group.end(),
                                             [limit](const auto &f) { return f.size() <= limit; });
        RecoveryOutcome out;
        if (recoverable)
        {
            out.path = RecoveryPath::InMemory;
            out.load_seconds = in_memory_load_seconds(inputs.stage_bytes, inputs.group_size, inputs.config,
                                                      inputs.load);
            out.recompute_seconds = inputs.failure_time - inputs.last_snapshot_time;
        }
        else
        {
            out.path = RecoveryPath::Nfs;
            out.load_seconds = nfs_load_seconds(inputs.checkpoint_bytes, inputs.load);
            out.recompute_seconds = inputs.failure_time - inputs.last_nfs_time;
        }
        return out;
    }

    LoadCalibration calibrate_load_model(Bytes model_bytes, std::uint32_t pp, std::uint32_t m, double host_bandwidth,
                                          double nfs_target_seconds, double arc_target_seconds)
    {
        if (pp == 0 || m < 2 || !(host_bandwidth > 0) || !(nfs_target_seconds > 0) || !(arc_target_seconds > 0))
        {
            throw InvalidArgument("calibrate_load_model: need pp >= 1, m >= 2 and positive targets");
        }
        const Bytes stage = model_bytes / pp;
        ProtectionConfig arc;
        arc.strategies = {Strategy::Arc};
        ProtectionConfig aec;
        aec.strategies = {Strategy::Aec};

        LoadCalibration cal;
        cal.model.host_bandwidth = host_bandwidth;
        cal.model.nfs_bandwidth = static_cast<double>(model_bytes) / nfs_target_seconds;
        const double local = static_cast<double>(local_restore_bytes(stage, m, arc)) / host_bandwidth;
        const double gather = arc_target_seconds - local;
        if (!(gather > 0))
        {
            throw InvalidArgument("calibrate_load_model: ARC target is below the local host-load time");
        }
        cal.model.network_bandwidth = (m - 1) * (static_cast<double>(stage) / m) / gather;
        cal.nfs_seconds = nfs_load_seconds(model_bytes, cal.model);
        cal.arc_seconds = in_memory_load_seconds(stage, m, arc, cal.model);
        cal.aec_seconds = in_memory_load_seconds(stage, m, aec, cal.model);
        return cal;
    }
}

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace reft
{
    using Bytes = std::uint64_t;
    using NodeId = std::uint32_t;

    /// Half-open byte range [offset, offset + length).
    struct ByteRange
    {
        Bytes offset = 0;
        Bytes length = 0;

        Bytes end() const noexcept { return offset + length; }
        bool empty() const noexcept { return length == 0; }
        friend bool operator==(const ByteRange &, const ByteRange &) = default;
    };

    /// Hybrid-parallel cluster layout and hardware costs.
    ///
    /// Bandwidths are bytes/second. `microbatch_compute_time` holds one combined
    /// forward+backward time per pipeline stage; a single entry is broadcast to
    /// every stage.
    struct ClusterSpec
    {
        std::uint32_t dp_size = 1;
        std::uint32_t pp_size = 1;
        std::uint32_t tp_size = 1;
        std::uint32_t gpus_per_node = 1;
        double d2h_bandwidth = 16.0 * (1ull << 30);
        double internode_bandwidth = 12.5e9;
        double nfs_bandwidth = 1.25e9;
        std::vector<double> microbatch_compute_time{1.0};
        std::uint32_t num_microbatches = 1;
        bool zero1_enabled = false;

        /// Throws ConfigError when an invariant fails.
        void validate() const;
        std::uint32_t node_count() const;
        double compute_time(std::uint32_t stage) const;
        /// Canonical text used for digests and config dumps.
        std::string canonical() const;
    };

    struct Node
    {
        NodeId id = 0;
        std::uint32_t pp_stage = 0;
        std::uint32_t dp_rank = 0;
        std::vector<std::uint32_t> tp_ranks;
    };

    struct Topology
    {
        ClusterSpec spec;
        std::vector<Node> nodes;

        std::uint32_t dp_size() const noexcept { return spec.dp_size; }
        std::uint32_t pp_size() const noexcept { return spec.pp_size; }
        NodeId node_at(std::uint32_t pp_stage, std::uint32_t dp_rank) const;
        /// 64-bit FNV-1a over the canonical spec.
        std::uint64_t digest() const;
    };

    struct ShardingGroup
    {
        std::uint32_t group_id = 0;
        std::uint32_t pp_stage = 0;
        std::vector<NodeId> members;
        Bytes total_bytes = 0;

        std::uint32_t size() const noexcept { return static_cast<std::uint32_t>(members.size()); }
        /// Rank of `node` inside the group; throws if absent.
        std::uint32_t rank_of(NodeId node) const;
    };

    struct ShardAssignment
    {
        NodeId node_id = 0;
        std::uint32_t group_id = 0;
        ByteRange local_range;
        /// Present only under ZeRO-1; such ranges have no inherent DP redundancy.
        std::optional<ByteRange> optimizer_range;
        bool optimizer_non_redundant = false;
    };

    /// Nodes are laid out row-major: pipeline stage outer, DP rank inner.
    Topology build_topology(const ClusterSpec &spec);

    std::vector<ShardingGroup> form_sharding_groups(const Topology &topology,
                                                    const std::vector<Bytes> &per_stage_bytes);

    /// Ceiling split of [0, total) into `parts` contiguous ranges; trailing ranges may be short or empty.
    std::vector<ByteRange> ceil_split(Bytes total, std::uint32_t parts);

    /// `optimizer_bytes` is the model-wide optimizer size; each node gets optimizer_bytes/(m*n).
    std::vector<ShardAssignment> assign_shards(const ShardingGroup &group, bool zero1,
                                               Bytes optimizer_bytes, std::uint32_t pp_size);

    /// W_model / (m * n): per-node model shard size for evenly divided models.
    Bytes model_shard_bytes(Bytes model_bytes, std::uint32_t dp_size, std::uint32_t pp_size);
}

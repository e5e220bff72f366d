#pragma once

#include "reft/topology.hpp"

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace reft
{
    using ByteVec = std::vector<std::uint8_t>;

    enum class BufferRole : std::uint8_t
    {
        Model = 0,
        Optimizer = 1,
        Gradient = 2,
        Parity = 3,
    };

    const char *to_string(BufferRole role) noexcept;

    /// (owner node, sub-slice index) of one encoded term.
    using SliceRef = std::pair<NodeId, std::uint32_t>;

    struct ParamBuffer
    {
        ByteVec bytes;
        BufferRole role = BufferRole::Model;
        NodeId owner_node = 0;
        std::uint32_t group_id = 0;
        std::optional<std::uint32_t> sub_slice_index;
        /// Parity buffers only: the exact terms folded into `bytes`.
        std::vector<SliceRef> encoded;
    };

    enum class Strategy : std::uint8_t
    {
        Arc,
        Aec,
        Aor,
    };

    const char *to_string(Strategy s) noexcept;
    /// Accepts "arc", "aec", "aor" (case-insensitive).
    Strategy parse_strategy(const std::string &name);

    struct ProtectionConfig
    {
        std::vector<Strategy> strategies;
        /// Learning rate the AOR host replicas apply.
        float eta = 0.01f;

        bool has(Strategy s) const noexcept;
        /// Throws ConfigError on duplicates or AOR without ZeRO-1.
        void validate(bool zero1_enabled) const;
    };

    /// Nominal number of simultaneous failures per sharding group that stay recoverable.
    std::uint32_t tolerance(const ProtectionConfig &config);

    /// tolerance() limited by what a group of `m` members can hold: 0 for m = 1, and at most 1
    /// for m <= 3 because ARC and AEC then share too few holders to cover two losses.
    std::uint32_t effective_tolerance(const ProtectionConfig &config, std::uint32_t m);

    /// Sub-slice of peer `owner` that node `holder` folds into its parity: rank of holder among nodes != owner.
    std::uint32_t aec_slice_index(std::uint32_t holder, std::uint32_t owner) noexcept;

    /// Sub-slice length for a group whose largest shard is `max_shard` bytes: ceil(max_shard / (m - 1)).
    Bytes aec_slice_length(Bytes max_shard, std::uint32_t m);

    /// Sub-slice k of `shard`, zero-padded to `slice_len`.
    ByteVec sub_slice(const ByteVec &shard, std::uint32_t k, Bytes slice_len);

    /// ARC placement for a group of `m` ranks. Rank b stores, of every peer a, the sub-slice that
    /// rank parity_holder(a, b) encodes, so each peer's shard is spread over all other ranks.
    class ArcLayout
    {
    public:
        explicit ArcLayout(std::uint32_t m);

        std::uint32_t size() const noexcept { return m_m; }
        /// Rank whose parity covers the sub-slice of `owner` copied by `holder`.
        std::uint32_t parity_holder(std::uint32_t owner, std::uint32_t holder) const;
        /// Sub-slice index of `owner` stored at `holder`.
        std::uint32_t slice_at(std::uint32_t owner, std::uint32_t holder) const;
        /// Rank storing sub-slice `k` of `owner`.
        std::uint32_t holder_of(std::uint32_t owner, std::uint32_t k) const;

    private:
        std::uint32_t m_m;
        std::vector<std::uint32_t> m_table;
    };

    /// Byte ranges of peers' shards that `rank` additionally snapshots under ARC.
    struct ArcCopy
    {
        std::uint32_t owner_rank = 0;
        std::uint32_t sub_slice = 0;
        ByteRange range;
    };

    /// Per-rank extra ranges; volume per rank equals W_n/m for divisible sizes. Throws ConfigError for m = 1.
    std::vector<std::vector<ArcCopy>> arc_redundancy(const std::vector<ShardAssignment> &assignments,
                                                     const ShardingGroup &group);

    /// Bytewise XOR of equal-length peer sub-slices; metadata lists the encoded terms.
    ParamBuffer aec_encode(const std::vector<ParamBuffer> &peer_sub_slices);

    /// missing = parity ^ survivors. Survivors must be the encoded set minus exactly one term.
    ParamBuffer aec_decode(const ParamBuffer &parity, const std::vector<ParamBuffer> &survivors);

    /// W - eta * g on little-endian float32 buffers.
    ParamBuffer aor_update(const ParamBuffer &optimizer_shard, const ParamBuffer &gradient_shard, float eta);

    /// Host-side optimizer replicas for one sharding group. The replica of rank i lives on rank (i+1) mod m
    /// and trails the owner by however many gradient snapshots are still queued.
    class AorGroup
    {
    public:
        AorGroup(std::vector<ParamBuffer> initial_optimizer_shards, float eta);

        std::uint32_t size() const noexcept { return static_cast<std::uint32_t>(m_replicas.size()); }
        static std::uint32_t holder_of(std::uint32_t owner, std::uint32_t m) noexcept { return (owner + 1) % m; }

        /// Queue a snapshotted gradient for `owner`'s replica.
        void push_gradient(std::uint32_t owner, ParamBuffer gradient);
        /// Apply up to `max_steps` queued gradients to `owner`'s replica. Returns the number applied.
        std::size_t drain(std::uint32_t owner, std::size_t max_steps = SIZE_MAX);

        const ParamBuffer &replica(std::uint32_t owner) const { return m_replicas.at(owner); }
        std::uint64_t replica_step(std::uint32_t owner) const { return m_steps.at(owner); }
        std::size_t lag(std::uint32_t owner) const { return m_pending.at(owner).size(); }
        const std::vector<ParamBuffer> &pending(std::uint32_t owner) const { return m_pending.at(owner); }
        float eta() const noexcept { return m_eta; }

    private:
        std::vector<ParamBuffer> m_replicas;
        std::vector<std::uint64_t> m_steps;
        std::vector<std::vector<ParamBuffer>> m_pending;
        float m_eta;
    };

    struct AorRecovered
    {
        ParamBuffer shard;
        /// Gradient steps the replica trailed by; replayed into `shard` before returning.
        std::size_t lag = 0;
    };

    /// Replica of `failed` as held by its ring peer, with buffered gradients replayed.
    /// Throws UnrecoverableError when the holder is also in `lost`.
    AorRecovered aor_reconstruct(std::uint32_t failed, const AorGroup &group, const std::set<std::uint32_t> &lost);

    /// Every in-memory buffer a sharding group keeps for one snapshot, indexed by group rank.
    struct GroupProtection
    {
        std::uint32_t group_id = 0;
        std::vector<NodeId> members;
        Bytes slice_length = 0;
        std::vector<Bytes> shard_lengths;
        /// Each rank's own model shard.
        std::vector<ParamBuffer> shards;
        /// ARC copies stored at each rank (empty without ARC).
        std::vector<std::vector<ParamBuffer>> arc_copies;
        /// AEC parity at each rank (empty without AEC).
        std::vector<ParamBuffer> parities;

        std::uint32_t size() const noexcept { return static_cast<std::uint32_t>(members.size()); }
        /// Bytes rank `r` snapshots: shard + ARC copies + parity.
        Bytes snapshot_bytes(std::uint32_t r) const;
        Bytes arc_bytes(std::uint32_t r) const;
        Bytes parity_bytes(std::uint32_t r) const;
    };

    /// Builds ARC copies and AEC parities over `shards` (one per group rank) as `config` enables.
    GroupProtection protect_group(const ShardingGroup &group, const std::vector<ByteVec> &shards,
                                  const ProtectionConfig &config);

    struct ReconstructResult
    {
        /// Rebuilt shards of the failed ranks.
        std::vector<std::pair<std::uint32_t, ByteVec>> shards;
        std::size_t slices_copied = 0;
        std::size_t slices_decoded = 0;
        /// Bytes sent to the rebuilt ranks over the network.
        Bytes bytes_moved = 0;
    };

    /// Rebuilds the model shards of `failed` ranks from surviving copies and parities by peeling:
    /// copies resolve slices directly, a parity resolves once it has a single unknown term left.
    /// Throws UnrecoverableError when a slice stays unknown.
    ReconstructResult reconstruct_shards(const GroupProtection &state, const std::set<std::uint32_t> &failed);
}

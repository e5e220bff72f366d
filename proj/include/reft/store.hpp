#pragma once

#include "reft/protection.hpp"

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace reft
{
    /// IEEE CRC-32 (zlib polynomial).
    std::uint32_t crc32_of(std::span<const std::uint8_t> data) noexcept;

    struct ShardSpec
    {
        std::string id;
        Bytes size = 0;
    };

    /// A committed snapshot. Immutable once published.
    struct CompletedSnapshot
    {
        std::uint64_t iteration = 0;
        std::map<std::string, ByteVec> shards;

        Bytes bytes() const noexcept;
    };

    /// Host-memory double buffer for one node: one ongoing set being written and one completed
    /// set that readers load. Single writer, any number of concurrent readers.
    class SnapshotSet
    {
    public:
        SnapshotSet(NodeId node, Bytes capacity_limit);

        NodeId node() const noexcept { return m_node; }
        Bytes capacity_limit() const noexcept { return m_capacity; }

        /// Opens a fresh ongoing set. An uncommitted one is discarded only with `abandon_previous`.
        void begin(std::uint64_t iteration, const std::vector<ShardSpec> &shards, bool abandon_previous = false);
        /// Records `data` at `offset` of shard `id`. Overlapping or out-of-bounds writes throw.
        void write_shard(const std::string &id, Bytes offset, std::span<const std::uint8_t> data);
        bool shard_completed(const std::string &id) const;
        bool has_ongoing() const noexcept;
        std::optional<std::uint64_t> ongoing_iteration() const;
        /// Publishes the ongoing set when every shard is COMPLETED; otherwise throws and keeps it ongoing.
        void commit();
        void abandon();

        /// Latest completed set (null before the first commit).
        std::shared_ptr<const CompletedSnapshot> completed() const;
        std::optional<std::uint64_t> completed_iteration() const;
        /// Completed plus ongoing bytes.
        Bytes resident_bytes() const;

    private:
        struct Ongoing
        {
            std::uint64_t iteration = 0;
            std::map<std::string, ByteVec> buffers;
            std::map<std::string, std::map<Bytes, Bytes>> written;
            std::map<std::string, Bytes> bytes_written;
        };

        NodeId m_node;
        Bytes m_capacity;
        mutable std::mutex m_publish;
        std::shared_ptr<const CompletedSnapshot> m_completed;
        mutable std::mutex m_write;
        std::unique_ptr<Ongoing> m_ongoing;
    };

    /// Default capacity: 3 x (model + optimizer) bytes held per node.
    Bytes default_capacity(Bytes model_bytes, Bytes optimizer_bytes);

    /// Writes `<root>/<node>/<shard_id>.<iteration>.shard`, then swaps in a MANIFEST listing iteration, sizes
    /// and CRCs, then removes shard files of older flushes.
    std::vector<std::filesystem::path> flush_to_tmpfs(const SnapshotSet &set, const std::filesystem::path &root);
    /// Reads a node directory written by flush_to_tmpfs, verifying every CRC.
    CompletedSnapshot load_from_tmpfs(const std::filesystem::path &root, NodeId node);

    struct CheckpointEntry
    {
        std::uint32_t group_id = 0;
        NodeId node_id = 0;
        BufferRole role = BufferRole::Model;
        std::uint64_t iteration = 0;
        ByteVec bytes;
    };

    struct Checkpoint
    {
        std::uint64_t topology_digest = 0;
        std::vector<CheckpointEntry> entries;
    };

    inline constexpr std::uint16_t kCheckpointVersion = 1;

    /// Layout, all integers little-endian:
    ///   "RFTC" | u16 version | u64 topology digest | u32 entry count
    ///   entry table: u32 group | u32 node | u8 role | u64 iteration | u64 offset | u64 length | u32 crc32
    ///   payloads, back to back, offsets measured from the start of the file.
    void write_nfs_checkpoint(const std::filesystem::path &file, const Checkpoint &checkpoint);
    ByteVec encode_checkpoint(const Checkpoint &checkpoint);
    /// Throws CorruptCheckpointError naming the shard whose CRC fails, or ConfigError on a malformed header.
    Checkpoint read_nfs_checkpoint(const std::filesystem::path &file);
    Checkpoint decode_checkpoint(std::span<const std::uint8_t> data);
}

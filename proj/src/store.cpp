#include "reft/store.hpp"
#include "reft/errors.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <sstream>

#include <zlib.h>

namespace reft
{
    std::uint32_t crc32_of(std::span<const std::uint8_t> data) noexcept
    {
        uLong crc = ::crc32(0L, Z_NULL, 0);
        const std::uint8_t *p = data.data();
        std::size_t left = data.size();
        // zlib takes a uInt length; feed large buffers in pieces.
        while (left > 0)
        {
            const uInt step = static_cast<uInt>(std::min<std::size_t>(left, 1u << 30));
            crc = ::crc32(crc, p, step);
            p += step;
            left -= step;
        }
        return static_cast<std::uint32_t>(crc);
    }

    Bytes CompletedSnapshot::bytes() const noexcept
    {
        Bytes total = 0;
        for (const auto &[id, b] : shards)
        {
            total += b.size();
        }
        return total;
    }

    namespace
    {
        void check_shard_id(const std::string &id)
        {
            if (id.empty() || id == "MANIFEST" || id.front() == '.')
            {
                throw InvalidArgument("store: invalid shard id '" + id + "'");
            }
            for (char c : id)
            {
                const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                                c == '.' || c == '_' || c == '-';
                if (!ok)
                {
                    throw InvalidArgument("store: shard id '" + id + "' may only use [A-Za-z0-9._-]");
                }
            }
        }
    }

    SnapshotSet::SnapshotSet(NodeId node, Bytes capacity_limit) : m_node(node), m_capacity(capacity_limit) {}

    void SnapshotSet::begin(std::uint64_t iteration, const std::vector<ShardSpec> &shards, bool abandon_previous)
    {
        std::lock_guard lock(m_write);
        if (m_ongoing && !abandon_previous)
        {
            throw StateError("store: node " + std::to_string(m_node) + " still has an uncommitted snapshot for iteration " +
                             std::to_string(m_ongoing->iteration));
        }
        const auto done = completed();
        if (done && iteration <= done->iteration)
        {
            throw StateError("store: snapshot iteration " + std::to_string(iteration) +
                             " does not advance past completed iteration " + std::to_string(done->iteration));
        }
        Bytes need = done ? done->bytes() : 0;
        for (const auto &s : shards)
        {
            check_shard_id(s.id);
            need += s.size;
        }
        if (need > m_capacity)
        {
            throw CapacityError("store: node " + std::to_string(m_node) + " needs " + std::to_string(need) +
                                " resident bytes but its snapshot budget is " + std::to_string(m_capacity));
        }
        auto fresh = std::make_unique<Ongoing>();
        fresh->iteration = iteration;
        for (const auto &s : shards)
        {
            if (!fresh->buffers.emplace(s.id, ByteVec(s.size, 0)).second)
            {
                throw InvalidArgument("store: shard id '" + s.id + "' listed twice");
            }
            fresh->written[s.id];
            fresh->bytes_written[s.id] = 0;
        }
        m_ongoing = std::move(fresh);
    }

    void SnapshotSet::write_shard(const std::string &id, Bytes offset, std::span<const std::uint8_t> data)
    {
        std::lock_guard lock(m_write);
        if (!m_ongoing)
        {
            throw StateError("store: write without an ongoing snapshot");
        }
        const auto it = m_ongoing->buffers.find(id);
        if (it == m_ongoing->buffers.end())
        {
            throw InvalidArgument("store: unknown shard '" + id + "'");
        }
        ByteVec &buf = it->second;
        if (offset > buf.size() || data.size() > buf.size() - offset)
        {
            throw InvalidArgument("store: write [" + std::to_string(offset) + ", " +
                                  std::to_string(offset + data.size()) + ") runs past shard '" + id + "' of " +
                                  std::to_string(buf.size()) + " bytes");
        }
        if (data.empty())
        {
            return;
        }
        auto &ranges = m_ongoing->written[id];
        const Bytes end = offset + data.size();
        auto next = ranges.lower_bound(offset);
        if (next != ranges.end() && next->first < end)
        {
            throw InvalidArgument("store: overlapping write to shard '" + id + "'");
        }
        if (next != ranges.begin() && std::prev(next)->second > offset)
        {
            throw InvalidArgument("store: overlapping write to shard '" + id + "'");
        }
        ranges.emplace(offset, end);
        std::memcpy(buf.data() + offset, data.data(), data.size());
        m_ongoing->bytes_written[id] += data.size();
    }

    bool SnapshotSet::shard_completed(const std::string &id) const
    {
        std::lock_guard lock(m_write);
        if (!m_ongoing)
        {
            return false;
        }
        const auto it = m_ongoing->buffers.find(id);
        if (it == m_ongoing->buffers.end())
        {
            throw InvalidArgument("store: unknown shard '" + id + "'");
        }
        return m_ongoing->bytes_written.at(id) == it->second.size();
    }

    bool SnapshotSet::has_ongoing() const noexcept
    {
        std::lock_guard lock(m_write);
        return static_cast<bool>(m_ongoing);
    }

    std::optional<std::uint64_t> SnapshotSet::ongoing_iteration() const
    {
        std::lock_guard lock(m_write);
        if (!m_ongoing)
        {
            return std::nullopt;
        }
        return m_ongoing->iteration;
    }

    void SnapshotSet::commit()
    {
        std::lock_guard lock(m_write);
        if (!m_ongoing)
        {
            throw StateError("store: nothing to commit");
        }
        for (const auto &[id, buf] : m_ongoing->buffers)
        {
            if (m_ongoing->bytes_written.at(id) != buf.size())
            {
                throw StateError("store: shard '" + id + "' is incomplete (" +
                                 std::to_string(m_ongoing->bytes_written.at(id)) + "/" + std::to_string(buf.size()) +
                                 " bytes); commit refused");
            }
        }
        auto snap = std::make_shared<CompletedSnapshot>();
        snap->iteration = m_ongoing->iteration;
        snap->shards = std::move(m_ongoing->buffers);
        m_ongoing.reset();
        std::lock_guard publish(m_publish);
        m_completed = std::move(snap);
    }

    void SnapshotSet::abandon()
    {
        std::lock_guard lock(m_write);
        m_ongoing.reset();
    }

    std::shared_ptr<const CompletedSnapshot> SnapshotSet::completed() const
    {
        std::lock_guard lock(m_publish);
        return m_completed;
    }

    std::optional<std::uint64_t> SnapshotSet::completed_iteration() const
    {
        const auto c = completed();
        if (!c)
        {
            return std::nullopt;
        }
        return c->iteration;
    }

    Bytes SnapshotSet::resident_bytes() const
    {
        Bytes total = 0;
        if (const auto c = completed())
        {
            total += c->bytes();
        }
        std::lock_guard lock(m_write);
        if (m_ongoing)
        {
            for (const auto &[id, b] : m_ongoing->buffers)
            {
                total += b.size();
            }
        }
        return total;
    }

    Bytes default_capacity(Bytes model_bytes, Bytes optimizer_bytes)
    {
        return 3 * (model_bytes + optimizer_bytes);
    }

    namespace
    {
        // Each flush writes fresh file names so the live manifest never points at a half-written file.
        std::string shard_file(const std::string &id, std::uint64_t iteration)
        {
            return id + "." + std::to_string(iteration) + ".shard";
        }
    }

    std::vector<std::filesystem::path> flush_to_tmpfs(const SnapshotSet &set, const std::filesystem::path &root)
    {
        const auto snap = set.completed();
        if (!snap)
        {
            throw StateError("store: node " + std::to_string(set.node()) + " has no completed snapshot to flush");
        }
        const auto dir = root / std::to_string(set.node());
        std::filesystem::create_directories(dir);
        std::vector<std::filesystem::path> files;
        std::ostringstream manifest;
        manifest << "iteration " << snap->iteration << '\n';
        for (const auto &[id, buf] : snap->shards)
        {
            const auto path = dir / shard_file(id, snap->iteration);
            std::ofstream os(path, std::ios::binary | std::ios::trunc);
            os.write(reinterpret_cast<const char *>(buf.data()), static_cast<std::streamsize>(buf.size()));
            if (!os)
            {
                throw std::runtime_error("store: cannot write " + path.string());
            }
            manifest << "shard " << id << ' ' << buf.size() << ' ' << crc32_of(buf) << '\n';
            files.push_back(path);
        }
        // Manifest last: a directory without one is an interrupted flush.
        const auto mpath = dir / "MANIFEST";
        const auto tmp = dir / "MANIFEST.tmp";
        {
            std::ofstream os(tmp, std::ios::trunc);
            os << manifest.str();
            if (!os)
            {
                throw std::runtime_error("store: cannot write " + tmp.string());
            }
        }
        std::filesystem::rename(tmp, mpath);
        files.push_back(mpath);
        // Files of earlier flushes are unreachable now that the new manifest is in place.
        for (const auto &entry : std::filesystem::directory_iterator(dir))
        {
            if (entry.path().extension() == ".shard" &&
                std::find(files.begin(), files.end(), entry.path()) == files.end())
            {
                std::error_code ignored;
                std::filesystem::remove(entry.path(), ignored);
            }
        }
        return files;
    }

    CompletedSnapshot load_from_tmpfs(const std::filesystem::path &root, NodeId node)
    {
        const auto dir = root / std::to_string(node);
        std::ifstream manifest(dir / "MANIFEST");
        if (!manifest)
        {
            throw StateError("store: no tmpfs manifest for node " + std::to_string(node) + " under " + root.string());
        }
        CompletedSnapshot snap;
        std::string word;
        if (!(manifest >> word >> snap.iteration) || word != "iteration")
        {
            throw ConfigError("store: malformed tmpfs manifest for node " + std::to_string(node));
        }
        std::string id;
        Bytes size = 0;
        std::uint32_t crc = 0;
        while (manifest >> word >> id >> size >> crc)
        {
            if (word != "shard")
            {
                throw ConfigError("store: malformed tmpfs manifest for node " + std::to_string(node));
            }
            std::ifstream is(dir / shard_file(id, snap.iteration), std::ios::binary);
            ByteVec buf(size);
            is.read(reinterpret_cast<char *>(buf.data()), static_cast<std::streamsize>(size));
            if (!is || is.gcount() != static_cast<std::streamsize>(size) || crc32_of(buf) != crc)
            {
                throw CorruptCheckpointError(id, "store: tmpfs shard '" + id + "' of node " + std::to_string(node) +
                                                     " fails its checksum");
            }
            snap.shards.emplace(id, std::move(buf));
        }
        return snap;
    }

    namespace
    {
        constexpr std::size_t kHeaderSize = 4 + 2 + 8 + 4;
        constexpr std::size_t kEntrySize = 4 + 4 + 1 + 8 + 8 + 8 + 4;

        template <class T>
        void put(ByteVec &out, T v)
        {
            for (std::size_t i = 0; i < sizeof(T); ++i)
            {
                out.push_back(static_cast<std::uint8_t>(static_cast<std::uint64_t>(v) >> (8 * i)));
            }
        }

        template <class T>
        T get(std::span<const std::uint8_t> in, std::size_t &pos)
        {
            if (in.size() < pos + sizeof(T))
            {
                throw ConfigError("checkpoint: file truncated");
            }
            std::uint64_t v = 0;
            for (std::size_t i = 0; i < sizeof(T); ++i)
            {
                v |= std::uint64_t{in[pos + i]} << (8 * i);
            }
            pos += sizeof(T);
            return static_cast<T>(v);
        }

        std::string entry_name(std::uint32_t group, NodeId node, std::uint8_t role)
        {
            const char *r = role <= 3 ? to_string(static_cast<BufferRole>(role)) : "?";
            return "group " + std::to_string(group) + " node " + std::to_string(node) + " " + r;
        }
    }

    ByteVec encode_checkpoint(const Checkpoint &checkpoint)
    {
        ByteVec out;
        out.insert(out.end(), {'R', 'F', 'T', 'C'});
        put<std::uint16_t>(out, kCheckpointVersion);
        put<std::uint64_t>(out, checkpoint.topology_digest);
        put<std::uint32_t>(out, static_cast<std::uint32_t>(checkpoint.entries.size()));
        std::uint64_t offset = kHeaderSize + kEntrySize * checkpoint.entries.size();
        for (const auto &e : checkpoint.entries)
        {
            put<std::uint32_t>(out, e.group_id);
            put<std::uint32_t>(out, e.node_id);
            put<std::uint8_t>(out, static_cast<std::uint8_t>(e.role));
            put<std::uint64_t>(out, e.iteration);
            put<std::uint64_t>(out, offset);
            put<std::uint64_t>(out, e.bytes.size());
            put<std::uint32_t>(out, crc32_of(e.bytes));
            offset += e.bytes.size();
        }
        for (const auto &e : checkpoint.entries)
        {
            out.insert(out.end(), e.bytes.begin(), e.bytes.end());
        }
        return out;
    }

    Checkpoint decode_checkpoint(std::span<const std::uint8_t> data)
    {
        if (data.size() < kHeaderSize || std::memcmp(data.data(), "RFTC", 4) != 0)
        {
            throw ConfigError("checkpoint: missing RFTC magic");
        }
        std::size_t pos = 4;
        const auto version = get<std::uint16_t>(data, pos);
        if (version != kCheckpointVersion)
        {
            throw ConfigError("checkpoint: unsupported format version " + std::to_string(version));
        }
        Checkpoint cp;
        cp.topology_digest = get<std::uint64_t>(data, pos);
        const auto count = get<std::uint32_t>(data, pos);
        if ((data.size() - kHeaderSize) / kEntrySize < count)
        {
            throw ConfigError("checkpoint: shard table truncated");
        }
        for (std::uint32_t i = 0; i < count; ++i)
        {
            CheckpointEntry e;
            e.group_id = get<std::uint32_t>(data, pos);
            e.node_id = get<std::uint32_t>(data, pos);
            const auto role = get<std::uint8_t>(data, pos);
            e.iteration = get<std::uint64_t>(data, pos);
            const auto offset = get<std::uint64_t>(data, pos);
            const auto length = get<std::uint64_t>(data, pos);
            const auto crc = get<std::uint32_t>(data, pos);
            const std::string name = entry_name(e.group_id, e.node_id, role);
            if (role > static_cast<std::uint8_t>(BufferRole::Parity))
            {
                throw CorruptCheckpointError(name, "checkpoint: " + name + " has an unknown role byte");
            }
            e.role = static_cast<BufferRole>(role);
            if (offset > data.size() || length > data.size() - offset)
            {
                throw CorruptCheckpointError(name, "checkpoint: " + name + " payload lies outside the file");
            }
            const auto payload = data.subspan(offset, length);
            if (crc32_of(payload) != crc)
            {
                throw CorruptCheckpointError(name, "checkpoint: CRC mismatch in " + name);
            }
            e.bytes.assign(payload.begin(), payload.end());
            cp.entries.push_back(std::move(e));
        }
        return cp;
    }

    void write_nfs_checkpoint(const std::filesystem::path &file, const Checkpoint &checkpoint)
    {
        const ByteVec data = encode_checkpoint(checkpoint);
        if (file.has_parent_path())
        {
            std::filesystem::create_directories(file.parent_path());
        }
        const auto tmp = std::filesystem::path(file.string() + ".tmp");
        {
            std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
            os.write(reinterpret_cast<const char *>(data.data()), static_cast<std::streamsize>(data.size()));
            if (!os)
            {
                throw std::runtime_error("checkpoint: cannot write " + tmp.string());
            }
        }
        std::filesystem::rename(tmp, file);
    }

    Checkpoint read_nfs_checkpoint(const std::filesystem::path &file)
    {
        std::ifstream is(file, std::ios::binary);
        if (!is)
        {
            throw ConfigError("checkpoint: cannot open " + file.string());
        }
        ByteVec data((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
        return decode_checkpoint(data);
    }
}

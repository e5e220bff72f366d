#include "reft/errors.hpp"
#include "reft/store.hpp"

#include <doctest.h>

#include <atomic>
#include <fstream>
#include <random>
#include <thread>

using namespace reft;
namespace fs = std::filesystem;

namespace
{
    fs::path scratch(const std::string &name)
    {
        const auto p = fs::temp_directory_path() / ("reft_store_" + name + "_" + std::to_string(::getpid()));
        fs::remove_all(p);
        fs::create_directories(p);
        return p;
    }

    ByteVec filled(Bytes n, std::uint8_t v) { return ByteVec(n, v); }

    // A snapshot of iteration `it` whose every byte equals it % 251, so a torn mix is easy to spot.
    void full_snapshot(SnapshotSet &s, std::uint64_t it, const std::vector<ShardSpec> &specs)
    {
        s.begin(it, specs);
        for (const auto &sp : specs)
        {
            s.write_shard(sp.id, 0, filled(sp.size, static_cast<std::uint8_t>(it % 251)));
        }
        s.commit();
    }

    bool consistent(const CompletedSnapshot &c, const std::vector<ShardSpec> &specs)
    {
        if (c.shards.size() != specs.size())
            return false;
        const auto tag = static_cast<std::uint8_t>(c.iteration % 251);
        for (const auto &sp : specs)
        {
            const auto it = c.shards.find(sp.id);
            if (it == c.shards.end() || it->second != filled(sp.size, tag))
                return false;
        }
        return true;
    }
}

TEST_CASE("crc32 matches the standard check value")
{
    const std::string s = "123456789";
    CHECK(crc32_of({reinterpret_cast<const std::uint8_t *>(s.data()), s.size()}) == 0xCBF43926u);
}

TEST_CASE("snapshot lifecycle")
{
    SnapshotSet s(3, 1000);
    CHECK_FALSE(s.completed());
    s.begin(5, {{"model", 100}});
    CHECK(s.ongoing_iteration() == 5u);
    CHECK_FALSE(s.shard_completed("model"));
    CHECK_THROWS_AS(s.begin(6, {{"model", 100}}), StateError);

    s.write_shard("model", 0, filled(50, 1));
    CHECK_FALSE(s.shard_completed("model"));
    CHECK_THROWS_AS(s.commit(), StateError);
    CHECK(s.has_ongoing());
    s.write_shard("model", 50, filled(50, 1));
    CHECK(s.shard_completed("model"));
    CHECK_THROWS_AS(s.write_shard("model", 90, filled(20, 1)), InvalidArgument);
    CHECK_THROWS_AS(s.write_shard("model", 40, filled(5, 1)), InvalidArgument);
    s.commit();
    CHECK(s.completed_iteration() == 5u);
    CHECK_FALSE(s.has_ongoing());

    s.begin(6, {{"model", 100}});
    s.write_shard("model", 0, filled(10, 2));
    s.begin(7, {{"model", 100}}, true);
    CHECK(s.ongoing_iteration() == 7u);
    CHECK(s.completed()->shards.at("model") == filled(100, 1));
    s.abandon();
    CHECK_THROWS_AS(s.begin(5, {{"model", 100}}), StateError);
    CHECK_NOTHROW(s.begin(7, {{"model", 100}}));
}

TEST_CASE("capacity is checked before any write")
{
    SnapshotSet s(0, 100);
    CHECK_THROWS_AS(s.begin(1, {{"a", 120}}), CapacityError);
    CHECK_FALSE(s.has_ongoing());
    full_snapshot(s, 1, {{"a", 60}});
    CHECK_THROWS_AS(s.begin(2, {{"a", 60}}), CapacityError);
    CHECK(default_capacity(10, 5) == 45);
}

TEST_CASE("shard ids are validated")
{
    SnapshotSet s(0, 1000);
    CHECK_THROWS_AS(s.begin(1, {{"MANIFEST", 1}}), InvalidArgument);
    CHECK_THROWS_AS(s.begin(1, {{"../x", 1}}), InvalidArgument);
    CHECK_THROWS_AS(s.begin(1, {{".hidden", 1}}), InvalidArgument);
    CHECK_THROWS_AS(s.begin(1, {{"a", 1}, {"a", 1}}), InvalidArgument);
}

TEST_CASE("500 random crash points never expose a torn snapshot")
{
    std::mt19937_64 gen(11);
    const std::vector<ShardSpec> specs{{"model", 4096}, {"arc.1.0", 1500}, {"parity", 777}};
    SnapshotSet s(0, 1 << 20);
    full_snapshot(s, 0, specs);
    std::uint64_t it = 0;
    for (int trial = 0; trial < 500; ++trial)
    {
        const std::uint64_t next = it + 1;
        s.begin(next, specs, true);
        // Crash somewhere among the writes, or between the last write and commit.
        std::vector<std::tuple<std::string, Bytes, Bytes>> writes;
        for (const auto &sp : specs)
        {
            for (Bytes off = 0; off < sp.size;)
            {
                const Bytes len = std::min<Bytes>(sp.size - off, 1 + gen() % 600);
                writes.emplace_back(sp.id, off, len);
                off += len;
            }
        }
        std::shuffle(writes.begin(), writes.end(), gen);
        const std::size_t crash_at = gen() % (writes.size() + 1);
        for (std::size_t i = 0; i < crash_at; ++i)
        {
            const auto &[id, off, len] = writes[i];
            s.write_shard(id, off, filled(len, static_cast<std::uint8_t>(next % 251)));
        }
        const bool commit_survives = crash_at == writes.size() && gen() % 2 == 0;
        if (commit_survives)
        {
            s.commit();
            it = next;
        }
        else if (crash_at < writes.size())
        {
            CHECK_THROWS_AS(s.commit(), StateError);
        }
        const auto seen = s.completed();
        REQUIRE(seen);
        CHECK(seen->iteration == it);
        CHECK(consistent(*seen, specs));
    }
}

TEST_CASE("concurrent readers only ever see whole snapshots")
{
    const std::vector<ShardSpec> specs{{"model", 64 * 1024}, {"parity", 8 * 1024}};
    SnapshotSet s(0, 1 << 22);
    full_snapshot(s, 0, specs);
    std::atomic<bool> stop{false};
    std::atomic<int> torn{0};
    std::atomic<long> reads{0};
    std::vector<std::thread> readers;
    for (int r = 0; r < 3; ++r)
    {
        readers.emplace_back([&] {
            std::uint64_t last = 0;
            while (!stop.load())
            {
                const auto c = s.completed();
                if (!consistent(*c, specs) || c->iteration < last)
                    ++torn;
                last = c->iteration;
                ++reads;
            }
        });
    }
    std::mt19937_64 gen(12);
    for (std::uint64_t it = 1; it <= 300; ++it)
    {
        s.begin(it, specs, true);
        for (const auto &sp : specs)
        {
            const Bytes cut = gen() % sp.size;
            s.write_shard(sp.id, cut, filled(sp.size - cut, static_cast<std::uint8_t>(it % 251)));
            if (gen() % 5 != 0)
                s.write_shard(sp.id, 0, filled(cut, static_cast<std::uint8_t>(it % 251)));
        }
        // Keep readers in step with the writer so reads overlap commits on any scheduler.
        while (reads.load() < static_cast<long>(it))
            std::this_thread::yield();
        try
        {
            s.commit();
        }
        catch (const StateError &)
        {
        }
    }
    stop = true;
    for (auto &t : readers)
        t.join();
    CHECK(torn.load() == 0);
    CHECK(reads.load() > 0);
}

TEST_CASE("tmpfs flush round trip and corruption")
{
    const auto root = scratch("tmpfs");
    SnapshotSet s(4, 1 << 20);
    full_snapshot(s, 9, {{"model", 300}, {"parity", 30}});
    flush_to_tmpfs(s, root);
    const auto back = load_from_tmpfs(root, 4);
    CHECK(back.iteration == 9);
    CHECK(back.shards == s.completed()->shards);

    full_snapshot(s, 10, {{"model", 300}, {"parity", 30}});
    // A flush that dies before the manifest swap leaves the previous flush readable.
    {
        std::ofstream partial(root / "4" / "model.10.shard", std::ios::binary);
        partial << "xx";
    }
    CHECK(load_from_tmpfs(root, 4).iteration == 9);
    flush_to_tmpfs(s, root);
    CHECK(load_from_tmpfs(root, 4).iteration == 10);
    CHECK_FALSE(fs::exists(root / "4" / "model.9.shard"));

    {
        std::fstream f(root / "4" / "model.10.shard", std::ios::binary | std::ios::in | std::ios::out);
        f.seekp(17);
        f.put('\x7f');
    }
    try
    {
        load_from_tmpfs(root, 4);
        FAIL("corruption went unnoticed");
    }
    catch (const CorruptCheckpointError &e)
    {
        CHECK(e.shard() == "model");
    }
    CHECK_THROWS_AS(load_from_tmpfs(root, 5), StateError);
    fs::remove_all(root);
}

TEST_CASE("NFS checkpoint round trip, layout and CRC")
{
    const auto root = scratch("nfs");
    Checkpoint cp;
    cp.topology_digest = 0x1122334455667788ull;
    std::mt19937_64 gen(13);
    for (std::uint32_t n = 0; n < 4; ++n)
    {
        ByteVec b(100 + n * 37);
        for (auto &x : b)
            x = static_cast<std::uint8_t>(gen());
        cp.entries.push_back({n / 2, n, n % 2 ? BufferRole::Optimizer : BufferRole::Model, 42, b});
    }
    cp.entries.push_back({0, 0, BufferRole::Parity, 42, {}});
    const auto file = root / "ckpt.bin";
    write_nfs_checkpoint(file, cp);
    const auto back = read_nfs_checkpoint(file);
    CHECK(back.topology_digest == cp.topology_digest);
    REQUIRE(back.entries.size() == cp.entries.size());
    for (std::size_t i = 0; i < cp.entries.size(); ++i)
    {
        CHECK(back.entries[i].bytes == cp.entries[i].bytes);
        CHECK(back.entries[i].role == cp.entries[i].role);
        CHECK(back.entries[i].node_id == cp.entries[i].node_id);
        CHECK(back.entries[i].iteration == 42);
    }

    const ByteVec raw = encode_checkpoint(cp);
    CHECK(raw[0] == 'R');
    CHECK(raw[3] == 'C');
    CHECK(raw[4] == kCheckpointVersion);
    CHECK(raw[6] == 0x88);
    CHECK(raw.size() == 18 + 5 * 37 + (100 + 137 + 174 + 211));
    CHECK(fs::file_size(file) == raw.size());
    CHECK_FALSE(fs::exists(root / "ckpt.bin.tmp"));

    // Flip one payload byte of the second entry (node 1, optimizer).
    ByteVec bad = raw;
    bad[18 + 5 * 37 + 100 + 5] ^= 0x01;
    try
    {
        decode_checkpoint(bad);
        FAIL("corruption went unnoticed");
    }
    catch (const CorruptCheckpointError &e)
    {
        CHECK(e.shard() == "group 0 node 1 OPTIMIZER");
    }
    ByteVec magic = raw;
    magic[0] = 'X';
    CHECK_THROWS_AS(decode_checkpoint(magic), ConfigError);
    CHECK_THROWS_AS(decode_checkpoint(ByteVec(raw.begin(), raw.begin() + 30)), ConfigError);
    CHECK_THROWS_AS(read_nfs_checkpoint(root / "absent.bin"), ConfigError);
    fs::remove_all(root);
}

#include "reft/drill.hpp"
#include "reft/errors.hpp"
#include "reft/kernels.hpp"

#include <algorithm>
#include <cstring>
#include <deque>
#include <map>
#include <ostream>

namespace reft
{
    namespace
    {
        ByteVec random_bytes(Rng &rng, Bytes n)
        {
            ByteVec out(n);
            for (Bytes i = 0; i < n; i += 8)
            {
                const std::uint64_t v = rng.next();
                std::memcpy(out.data() + i, &v, std::min<Bytes>(8, n - i));
            }
            return out;
        }

        ByteVec random_floats(Rng &rng, Bytes n)
        {
            ByteVec out(n);
            for (Bytes i = 0; i + sizeof(float) <= n; i += sizeof(float))
            {
                const float v = static_cast<float>(rng.uniform() * 2.0 - 1.0);
                std::memcpy(out.data() + i, &v, sizeof v);
            }
            return out;
        }

        struct Item
        {
            std::string id;
            const ByteVec *bytes;
        };

        std::vector<Item> snapshot_items(const GroupProtection &st, std::uint32_t r)
        {
            std::vector<Item> items;
            items.push_back({"model", &st.shards[r].bytes});
            if (!st.arc_copies.empty())
            {
                for (const auto &c : st.arc_copies[r])
                {
                    const std::uint32_t owner =
                        static_cast<std::uint32_t>(std::find(st.members.begin(), st.members.end(), c.owner_node) -
                                                   st.members.begin());
                    items.push_back({"arc." + std::to_string(owner) + "." + std::to_string(*c.sub_slice_index),
                                     &c.bytes});
                }
            }
            if (!st.parities.empty())
            {
                items.push_back({"parity", &st.parities[r].bytes});
            }
            return items;
        }

        /// Rebuilds a group's protection state from the survivors' completed host snapshots.
        GroupProtection from_store(const ShardingGroup &g, const std::vector<Bytes> &lengths,
                                   const std::vector<std::shared_ptr<const CompletedSnapshot>> &snaps,
                                   const ProtectionConfig &config)
        {
            const std::uint32_t m = g.size();
            GroupProtection st;
            st.group_id = g.group_id;
            st.members = g.members;
            st.shard_lengths = lengths;
            const bool redundant = m >= 2 && (config.has(Strategy::Arc) || config.has(Strategy::Aec));
            if (redundant)
            {
                st.slice_length = aec_slice_length(*std::max_element(lengths.begin(), lengths.end()), m);
            }
            st.shards.resize(m);
            if (config.has(Strategy::Arc) && redundant)
            {
                st.arc_copies.resize(m);
            }
            if (config.has(Strategy::Aec) && redundant)
            {
                st.parities.resize(m);
            }
            for (std::uint32_t r = 0; r < m; ++r)
            {
                st.shards[r].owner_node = g.members[r];
                st.shards[r].group_id = g.group_id;
                if (!snaps[r])
                {
                    continue;
                }
                for (const auto &[id, bytes] : snaps[r]->shards)
                {
                    if (id == "model")
                    {
                        st.shards[r].bytes = bytes;
                    }
                    else if (id == "parity" && !st.parities.empty())
                    {
                        ParamBuffer p;
                        p.role = BufferRole::Parity;
                        p.bytes = bytes;
                        p.owner_node = g.members[r];
                        p.group_id = g.group_id;
                        for (std::uint32_t j = 0; j < m; ++j)
                        {
                            if (j != r)
                            {
                                p.encoded.emplace_back(g.members[j], aec_slice_index(r, j));
                            }
                        }
                        st.parities[r] = std::move(p);
                    }
                    else if (id.rfind("arc.", 0) == 0 && !st.arc_copies.empty())
                    {
                        const auto dot = id.find('.', 4);
                        ParamBuffer c;
                        c.bytes = bytes;
                        c.owner_node = g.members.at(std::stoul(id.substr(4, dot - 4)));
                        c.group_id = g.group_id;
                        c.sub_slice_index = static_cast<std::uint32_t>(std::stoul(id.substr(dot + 1)));
                        st.arc_copies[r].push_back(std::move(c));
                    }
                }
            }
            return st;
        }
    }

    DrillReport run_recovery_drill(const DrillSpec &spec)
    {
        const Topology topo = build_topology(spec.cluster);
        const std::uint32_t m = spec.cluster.dp_size;
        const bool zero1 = spec.cluster.zero1_enabled;
        spec.protection.validate(zero1);
        if (spec.iterations == 0)
        {
            throw InvalidArgument("drill: iterations must be >= 1");
        }
        if (zero1 && (spec.optimizer_shard_bytes == 0 || spec.optimizer_shard_bytes % sizeof(float) != 0))
        {
            throw InvalidArgument("drill: optimizer shard must be a positive multiple of 4 bytes");
        }
        for (NodeId n : spec.kill)
        {
            if (n >= topo.nodes.size())
            {
                throw InvalidArgument("drill: cannot kill node " + std::to_string(n) + "; cluster has " +
                                      std::to_string(topo.nodes.size()) + " nodes");
            }
        }
        const std::size_t nodes = topo.nodes.size();
        Rng rng(spec.seed);

        std::vector<ByteVec> model(nodes);
        std::vector<ByteVec> opt(nodes);
        if (spec.initial)
        {
            for (const auto &e : spec.initial->entries)
            {
                if (e.node_id >= nodes)
                {
                    throw InvalidArgument("drill: checkpoint names node " + std::to_string(e.node_id) +
                                          " outside the cluster");
                }
                if (e.role == BufferRole::Model)
                {
                    model[e.node_id] = e.bytes;
                }
                else if (e.role == BufferRole::Optimizer)
                {
                    opt[e.node_id] = e.bytes;
                }
            }
        }
        std::vector<Bytes> per_stage(topo.pp_size(), spec.stage_bytes);
        if (spec.initial)
        {
            std::fill(per_stage.begin(), per_stage.end(), 0);
            for (const auto &n : topo.nodes)
            {
                per_stage[n.pp_stage] += model[n.id].size();
            }
        }
        const auto groups = form_sharding_groups(topo, per_stage);
        std::vector<std::vector<Bytes>> lengths;
        for (const auto &g : groups)
        {
            const auto assignments = assign_shards(g, false, 0, topo.pp_size());
            std::vector<Bytes> len;
            for (const auto &a : assignments)
            {
                if (spec.initial)
                {
                    if (model[a.node_id].size() != a.local_range.length)
                    {
                        throw InvalidArgument("drill: checkpoint shard of node " + std::to_string(a.node_id) +
                                              " does not match the ceiling split of its stage");
                    }
                }
                else
                {
                    model[a.node_id] = random_bytes(rng, a.local_range.length);
                }
                len.push_back(a.local_range.length);
            }
            lengths.push_back(std::move(len));
        }
        if (zero1)
        {
            for (std::size_t n = 0; n < nodes; ++n)
            {
                if (opt[n].empty())
                {
                    opt[n] = random_floats(rng, spec.optimizer_shard_bytes);
                }
                else if (opt[n].size() % sizeof(float) != 0)
                {
                    throw InvalidArgument("drill: optimizer shard of node " + std::to_string(n) +
                                          " is not float32-aligned");
                }
            }
        }

        Checkpoint nfs;
        nfs.topology_digest = topo.digest();
        for (const auto &n : topo.nodes)
        {
            nfs.entries.push_back({n.pp_stage, n.id, BufferRole::Model, 0, model[n.id]});
            if (zero1)
            {
                nfs.entries.push_back({n.pp_stage, n.id, BufferRole::Optimizer, 0, opt[n.id]});
            }
        }
        const ByteVec nfs_file = encode_checkpoint(nfs);

        const bool aor = spec.protection.has(Strategy::Aor);
        std::vector<AorGroup> aor_groups;
        if (aor)
        {
            for (const auto &g : groups)
            {
                std::vector<ParamBuffer> init;
                for (NodeId n : g.members)
                {
                    ParamBuffer b;
                    b.role = BufferRole::Optimizer;
                    b.owner_node = n;
                    b.group_id = g.group_id;
                    b.bytes = opt[n];
                    init.push_back(std::move(b));
                }
                aor_groups.emplace_back(std::move(init), spec.protection.eta);
            }
        }

        std::deque<SnapshotSet> stores;
        for (std::size_t n = 0; n < nodes; ++n)
        {
            stores.emplace_back(static_cast<NodeId>(n), default_capacity(per_stage[topo.nodes[n].pp_stage],
                                                                         zero1 ? opt[n].size() : 0));
        }

        DrillReport report;
        report.initial = nfs;
        report.crash_iteration = 1 + static_cast<std::uint32_t>(rng.below(spec.iterations));
        std::vector<ByteVec> ref_model = model;
        std::vector<ByteVec> ref_opt = opt;

        for (std::uint32_t it = 0; it <= report.crash_iteration; ++it)
        {
            const bool crash = it == report.crash_iteration;
            if (it > 0)
            {
                for (auto &shard : model)
                {
                    const ByteVec noise = random_bytes(rng, shard.size());
                    xor_into(shard, noise);
                }
                if (zero1)
                {
                    for (const auto &g : groups)
                    {
                        for (std::uint32_t r = 0; r < g.size(); ++r)
                        {
                            const NodeId n = g.members[r];
                            ParamBuffer grad;
                            grad.role = BufferRole::Gradient;
                            grad.owner_node = n;
                            grad.bytes = random_floats(rng, opt[n].size());
                            sgd_update(opt[n], grad.bytes, spec.protection.eta);
                            if (aor && !crash)
                            {
                                auto &ag = aor_groups[g.group_id];
                                ag.push_gradient(r, std::move(grad));
                                // Host replicas trail by up to two steps.
                                const std::size_t keep = rng.below(std::min<std::size_t>(ag.lag(r), 2) + 1);
                                ag.drain(r, ag.lag(r) - keep);
                            }
                        }
                    }
                }
            }

            // Writes for every node of every group, interleaved in a random order.
            struct Write
            {
                NodeId node;
                std::string id;
                Bytes offset;
                ByteVec data;
            };
            std::vector<Write> writes;
            for (const auto &g : groups)
            {
                std::vector<ByteVec> shards;
                for (NodeId n : g.members)
                {
                    shards.push_back(model[n]);
                }
                const GroupProtection st = protect_group(g, shards, spec.protection);
                for (std::uint32_t r = 0; r < g.size(); ++r)
                {
                    const NodeId n = g.members[r];
                    std::vector<ShardSpec> specs;
                    for (const auto &item : snapshot_items(st, r))
                    {
                        specs.push_back({item.id, item.bytes->size()});
                        Bytes off = 0;
                        while (off < item.bytes->size())
                        {
                            const Bytes len = std::min<Bytes>(item.bytes->size() - off, 1 + rng.below(4096));
                            writes.push_back({n, item.id, off,
                                              ByteVec(item.bytes->begin() + static_cast<std::ptrdiff_t>(off),
                                                      item.bytes->begin() + static_cast<std::ptrdiff_t>(off + len))});
                            off += len;
                        }
                    }
                    stores[n].begin(it, specs);
                }
            }
            for (std::size_t i = writes.size(); i > 1; --i)
            {
                std::swap(writes[i - 1], writes[rng.below(i)]);
            }
            const std::size_t done = crash ? rng.below(writes.size() + 1) : writes.size();
            for (std::size_t i = 0; i < done; ++i)
            {
                stores[writes[i].node].write_shard(writes[i].id, writes[i].offset, writes[i].data);
            }
            if (crash)
            {
                break;
            }
            for (auto &s : stores)
            {
                s.commit();
            }
            ref_model = model;
            ref_opt = opt;
        }
        report.restored_iteration = report.crash_iteration - 1;

        // Hardware failures wipe host memory; software failures leave it in place.
        std::vector<std::set<std::uint32_t>> failed(groups.size());
        std::vector<std::set<std::uint32_t>> lost(groups.size());
        for (NodeId n : spec.kill)
        {
            const auto &g = groups[topo.nodes[n].pp_stage];
            failed[g.group_id].insert(g.rank_of(n));
            if (spec.kind == FailureKind::Hardware)
            {
                lost[g.group_id].insert(g.rank_of(n));
            }
        }
        const LoadModel load{spec.cluster.d2h_bandwidth, spec.cluster.internode_bandwidth,
                             spec.cluster.nfs_bandwidth};
        const std::uint32_t limit = effective_tolerance(spec.protection, m);
        const bool in_memory =
            std::all_of(lost.begin(), lost.end(), [limit](const auto &l) { return l.size() <= limit; });

        if (!in_memory)
        {
            report.path = RecoveryPath::Nfs;
            report.restored_iteration = 0;
            const Checkpoint back = decode_checkpoint(nfs_file);
            report.load_seconds = nfs_load_seconds(nfs_file.size(), load);
            bool same = back.entries.size() == nfs.entries.size();
            for (std::size_t i = 0; same && i < back.entries.size(); ++i)
            {
                same = back.entries[i].bytes == nfs.entries[i].bytes;
            }
            report.model_checked = true;
            report.optimizer_checked = zero1;
            report.bit_exact = same;
            report.detail = "lost members exceed in-memory tolerance " + std::to_string(limit) +
                            "; restarted from the NFS checkpoint of iteration 0";
            return report;
        }

        report.path = RecoveryPath::InMemory;
        report.load_seconds = in_memory_load_seconds(*std::max_element(per_stage.begin(), per_stage.end()), m,
                                                     spec.protection, load);
        bool exact = true;
        bool model_ok_to_check = true;
        for (const auto &g : groups)
        {
            const auto &gl = lost[g.group_id];
            std::vector<std::shared_ptr<const CompletedSnapshot>> snaps;
            for (std::uint32_t r = 0; r < g.size(); ++r)
            {
                const auto &store = stores[g.members[r]];
                if (gl.count(r))
                {
                    snaps.push_back(nullptr);
                    continue;
                }
                const auto loaded = local_load(store, std::nullopt);
                snaps.push_back(loaded ? std::make_shared<const CompletedSnapshot>(*loaded) : nullptr);
                if (!loaded || loaded->iteration != report.restored_iteration)
                {
                    throw StateError("drill: survivor " + std::to_string(g.members[r]) +
                                     " holds no snapshot of the last committed iteration");
                }
            }
            const bool model_redundancy =
                spec.protection.has(Strategy::Arc) || spec.protection.has(Strategy::Aec);
            if (!gl.empty() && !model_redundancy)
            {
                model_ok_to_check = false;
            }
            else
            {
                const GroupProtection st = from_store(g, lengths[g.group_id], snaps, spec.protection);
                std::vector<std::optional<ByteVec>> shards(g.size());
                for (std::uint32_t r = 0; r < g.size(); ++r)
                {
                    if (!gl.count(r))
                    {
                        shards[r] = st.shards[r].bytes;
                    }
                }
                if (!gl.empty())
                {
                    const RecoveredGroup rec = reconstruct_missing(st, gl, spec.cluster.internode_bandwidth);
                    for (std::uint32_t r : gl)
                    {
                        shards[r] = rec.shards[r];
                    }
                    report.bytes_moved += rec.bytes_moved;
                    report.slices_copied += rec.slices_copied;
                    report.slices_decoded += rec.slices_decoded;
                    report.transfer_seconds += rec.transfer_seconds;
                }
                const GatherResult gathered = all_gather_sync(shards, spec.cluster.internode_bandwidth);
                ByteVec expected;
                for (NodeId n : g.members)
                {
                    expected.insert(expected.end(), ref_model[n].begin(), ref_model[n].end());
                }
                exact = exact && gathered.parameters == expected;
            }
            if (aor)
            {
                for (std::uint32_t r : gl)
                {
                    const AorRecovered rec = aor_reconstruct(r, aor_groups[g.group_id], gl);
                    report.aor_lag = std::max(report.aor_lag, rec.lag);
                    exact = exact && rec.shard.bytes == ref_opt[g.members[r]];
                    report.optimizer_checked = true;
                }
            }
        }
        report.model_checked = model_ok_to_check;
        report.bit_exact = exact;
        if (!model_ok_to_check)
        {
            report.detail = "aor alone keeps no model redundancy; only optimizer shards were verified";
        }
        return report;
    }

    void write_drill_report(std::ostream &os, const DrillReport &r)
    {
        os << "path: " << to_string(r.path) << '\n';
        os << "crash iteration: " << r.crash_iteration << '\n';
        os << "restored iteration: " << r.restored_iteration << '\n';
        os << "load time: " << r.load_seconds << " s\n";
        os << "transfer time: " << r.transfer_seconds << " s\n";
        os << "bytes moved: " << r.bytes_moved << '\n';
        os << "sub-slices copied: " << r.slices_copied << ", decoded: " << r.slices_decoded << '\n';
        os << "aor lag replayed: " << r.aor_lag << '\n';
        os << "verified: model=" << (r.model_checked ? "yes" : "no")
           << " optimizer=" << (r.optimizer_checked ? "yes" : "no") << '\n';
        if (!r.detail.empty())
        {
            os << "note: " << r.detail << '\n';
        }
        os << "bit-exact: " << (r.bit_exact ? "true" : "false") << '\n';
    }
}

#include "reft/topology.hpp"
#include "reft/errors.hpp"

#include <algorithm>
#include <sstream>

namespace reft
{
    void ClusterSpec::validate() const
    {
        if (dp_size < 1 || pp_size < 1 || tp_size < 1 || gpus_per_node < 1)
        {
            throw ConfigError("cluster: dp, pp, tp and gpus_per_node must all be >= 1");
        }
        const std::uint64_t gpus = std::uint64_t{dp_size} * pp_size * tp_size;
        if (gpus % gpus_per_node != 0)
        {
            throw ConfigError("cluster: node_count = dp*pp*tp/gpus_per_node = " + std::to_string(gpus) + "/" +
                              std::to_string(gpus_per_node) + " is not an integer");
        }
        if (gpus_per_node != tp_size)
        {
            throw ConfigError("cluster: gpus_per_node must equal tp (each node hosts one pipeline/data-parallel cell)");
        }
        if (!(d2h_bandwidth > 0) || !(internode_bandwidth > 0) || !(nfs_bandwidth > 0))
        {
            throw ConfigError("cluster: all bandwidths must be > 0");
        }
        if (microbatch_compute_time.empty() ||
            (microbatch_compute_time.size() != 1 && microbatch_compute_time.size() != pp_size))
        {
            throw ConfigError("cluster: microbatch_compute_time needs 1 or pp entries");
        }
        for (double c : microbatch_compute_time)
        {
            if (!(c > 0))
            {
                throw ConfigError("cluster: compute times must be > 0");
            }
        }
        if (num_microbatches < 1)
        {
            throw ConfigError("cluster: num_microbatches must be >= 1");
        }
    }

    std::uint32_t ClusterSpec::node_count() const
    {
        return static_cast<std::uint32_t>(std::uint64_t{dp_size} * pp_size * tp_size / gpus_per_node);
    }

    double ClusterSpec::compute_time(std::uint32_t stage) const
    {
        return microbatch_compute_time.size() == 1 ? microbatch_compute_time.front()
                                                   : microbatch_compute_time.at(stage);
    }

    std::string ClusterSpec::canonical() const
    {
        std::ostringstream os;
        os.precision(17);
        os << "dp=" << dp_size << ";pp=" << pp_size << ";tp=" << tp_size << ";gpn=" << gpus_per_node
           << ";d2h=" << d2h_bandwidth << ";net=" << internode_bandwidth << ";nfs=" << nfs_bandwidth << ";c=";
        for (double c : microbatch_compute_time)
        {
            os << c << ',';
        }
        os << ";mb=" << num_microbatches << ";zero1=" << zero1_enabled;
        return os.str();
    }

    NodeId Topology::node_at(std::uint32_t pp_stage, std::uint32_t dp_rank) const
    {
        if (pp_stage >= spec.pp_size || dp_rank >= spec.dp_size)
        {
            throw InvalidArgument("node_at: stage/rank out of range");
        }
        return pp_stage * spec.dp_size + dp_rank;
    }

    std::uint64_t Topology::digest() const
    {
        std::uint64_t h = 0xcbf29ce484222325ull;
        for (unsigned char ch : spec.canonical())
        {
            h ^= ch;
            h *= 0x100000001b3ull;
        }
        return h;
    }

    std::uint32_t ShardingGroup::rank_of(NodeId node) const
    {
        const auto it = std::find(members.begin(), members.end(), node);
        if (it == members.end())
        {
            throw InvalidArgument("node " + std::to_string(node) + " is not a member of group " +
                                  std::to_string(group_id));
        }
        return static_cast<std::uint32_t>(it - members.begin());
    }

    Topology build_topology(const ClusterSpec &spec)
    {
        spec.validate();
        Topology topo;
        topo.spec = spec;
        topo.nodes.reserve(spec.node_count());
        for (std::uint32_t p = 0; p < spec.pp_size; ++p)
        {
            for (std::uint32_t d = 0; d < spec.dp_size; ++d)
            {
                Node n;
                n.id = p * spec.dp_size + d;
                n.pp_stage = p;
                n.dp_rank = d;
                for (std::uint32_t t = 0; t < spec.tp_size; ++t)
                {
                    n.tp_ranks.push_back(t);
                }
                topo.nodes.push_back(std::move(n));
            }
        }
        return topo;
    }

    std::vector<ShardingGroup> form_sharding_groups(const Topology &topology,
                                                    const std::vector<Bytes> &per_stage_bytes)
    {
        if (per_stage_bytes.size() != topology.pp_size())
        {
            throw InvalidArgument("form_sharding_groups: need one byte count per pipeline stage");
        }
        std::vector<ShardingGroup> groups;
        for (std::uint32_t p = 0; p < topology.pp_size(); ++p)
        {
            if (per_stage_bytes[p] == 0)
            {
                throw InvalidArgument("form_sharding_groups: stage byte counts must be > 0");
            }
            ShardingGroup g;
            g.group_id = p;
            g.pp_stage = p;
            g.total_bytes = per_stage_bytes[p];
            for (std::uint32_t d = 0; d < topology.dp_size(); ++d)
            {
                g.members.push_back(topology.node_at(p, d));
            }
            groups.push_back(std::move(g));
        }
        return groups;
    }

    std::vector<ByteRange> ceil_split(Bytes total, std::uint32_t parts)
    {
        if (parts == 0)
        {
            throw InvalidArgument("ceil_split: zero parts");
        }
        const Bytes size = (total + parts - 1) / parts;
        std::vector<ByteRange> out;
        out.reserve(parts);
        for (std::uint32_t i = 0; i < parts; ++i)
        {
            const Bytes begin = std::min(total, size * i);
            const Bytes end = std::min(total, size * (i + 1));
            out.push_back({begin, end - begin});
        }
        return out;
    }

    std::vector<ShardAssignment> assign_shards(const ShardingGroup &group, bool zero1, Bytes optimizer_bytes,
                                               std::uint32_t pp_size)
    {
        if (group.members.empty())
        {
            throw InvalidArgument("assign_shards: empty sharding group");
        }
        if (pp_size == 0)
        {
            throw InvalidArgument("assign_shards: pp_size must be >= 1");
        }
        const std::uint32_t m = group.size();
        const auto ranges = ceil_split(group.total_bytes, m);
        std::vector<ByteRange> opt_ranges;
        if (zero1)
        {
            // Each stage owns optimizer_bytes / n; each member holds its 1/m of that.
            opt_ranges = ceil_split(optimizer_bytes / pp_size, m);
        }

        std::vector<ShardAssignment> out;
        out.reserve(m);
        for (std::uint32_t r = 0; r < m; ++r)
        {
            ShardAssignment a;
            a.node_id = group.members[r];
            a.group_id = group.group_id;
            a.local_range = ranges[r];
            if (zero1)
            {
                a.optimizer_range = opt_ranges[r];
                a.optimizer_non_redundant = true;
            }
            out.push_back(a);
        }
        return out;
    }

    Bytes model_shard_bytes(Bytes model_bytes, std::uint32_t dp_size, std::uint32_t pp_size)
    {
        if (dp_size == 0 || pp_size == 0)
        {
            throw InvalidArgument("model_shard_bytes: sizes must be >= 1");
        }
        return model_bytes / (Bytes{dp_size} * pp_size);
    }
}

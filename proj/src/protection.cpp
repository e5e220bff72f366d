#include "reft/protection.hpp"
#include "reft/errors.hpp"
#include "reft/kernels.hpp"

#include <algorithm>
#include <cctype>
#include <functional>
#include <map>

namespace reft
{
    const char *to_string(BufferRole role) noexcept
    {
        switch (role)
        {
        case BufferRole::Model:
            return "MODEL";
        case BufferRole::Optimizer:
            return "OPTIMIZER";
        case BufferRole::Gradient:
            return "GRADIENT";
        case BufferRole::Parity:
            return "PARITY";
        }
        return "?";
    }

    const char *to_string(Strategy s) noexcept
    {
        switch (s)
        {
        case Strategy::Arc:
            return "arc";
        case Strategy::Aec:
            return "aec";
        case Strategy::Aor:
            return "aor";
        }
        return "?";
    }

    Strategy parse_strategy(const std::string &name)
    {
        std::string lower;
        for (char c : name)
        {
            lower += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        }
        if (lower == "arc")
            return Strategy::Arc;
        if (lower == "aec")
            return Strategy::Aec;
        if (lower == "aor")
            return Strategy::Aor;
        throw ConfigError("protection: unknown strategy '" + name + "' (expected arc, aec or aor)");
    }

    bool ProtectionConfig::has(Strategy s) const noexcept
    {
        return std::find(strategies.begin(), strategies.end(), s) != strategies.end();
    }

    void ProtectionConfig::validate(bool zero1_enabled) const
    {
        for (std::size_t i = 0; i < strategies.size(); ++i)
        {
            for (std::size_t j = i + 1; j < strategies.size(); ++j)
            {
                if (strategies[i] == strategies[j])
                {
                    throw ConfigError(std::string("protection: strategy '") + to_string(strategies[i]) +
                                      "' listed twice");
                }
            }
        }
        if (has(Strategy::Aor) && !zero1_enabled)
        {
            throw ConfigError("protection: aor requires cluster.zero1 = true");
        }
    }

    std::uint32_t tolerance(const ProtectionConfig &config)
    {
        return static_cast<std::uint32_t>(config.strategies.size());
    }

    std::uint32_t effective_tolerance(const ProtectionConfig &config, std::uint32_t m)
    {
        if (m <= 1)
        {
            return 0;
        }
        std::uint32_t model = 0;
        model += config.has(Strategy::Arc) ? 1 : 0;
        model += config.has(Strategy::Aec) ? 1 : 0;
        if (m <= 3)
        {
            model = std::min(model, 1u);
        }
        if (!config.has(Strategy::Aor))
        {
            return model;
        }
        return model == 0 ? 1 : std::min(model, 1u);
    }

    std::uint32_t aec_slice_index(std::uint32_t holder, std::uint32_t owner) noexcept
    {
        return holder > owner ? holder - 1 : holder;
    }

    Bytes aec_slice_length(Bytes max_shard, std::uint32_t m)
    {
        if (m < 2)
        {
            throw ConfigError("aec: a sharding group needs at least 2 members");
        }
        return (max_shard + m - 2) / (m - 1);
    }

    ByteVec sub_slice(const ByteVec &shard, std::uint32_t k, Bytes slice_len)
    {
        ByteVec out(slice_len, 0);
        const Bytes begin = std::min<Bytes>(shard.size(), Bytes{k} * slice_len);
        const Bytes end = std::min<Bytes>(shard.size(), begin + slice_len);
        std::copy(shard.begin() + static_cast<std::ptrdiff_t>(begin), shard.begin() + static_cast<std::ptrdiff_t>(end),
                  out.begin());
        return out;
    }

    namespace
    {
        constexpr std::uint32_t kNone = UINT32_MAX;

        bool circulant_search(std::uint32_t m, std::vector<std::uint32_t> &g)
        {
            // g maps offset d = b - a (1..m-1) to offset g(d); f(a, b) = a + g(b - a).
            g.assign(m, kNone);
            std::vector<bool> used(m, false);
            std::function<bool(std::uint32_t)> place = [&](std::uint32_t d) -> bool {
                if (d == m)
                {
                    return true;
                }
                for (std::uint32_t v = 1; v < m; ++v)
                {
                    if (used[v] || v == d)
                    {
                        continue;
                    }
                    const std::uint32_t md = m - d;
                    if (g[md] != kNone && (v + m - g[md]) % m == d)
                    {
                        continue;
                    }
                    g[d] = v;
                    used[v] = true;
                    if (place(d + 1))
                    {
                        return true;
                    }
                    used[v] = false;
                    g[d] = kNone;
                }
                return false;
            };
            return place(1);
        }

        bool cell_search(std::uint32_t m, std::vector<std::uint32_t> &f)
        {
            f.assign(m * m, kNone);
            std::vector<std::pair<std::uint32_t, std::uint32_t>> cells;
            for (std::uint32_t a = 0; a < m; ++a)
            {
                for (std::uint32_t b = 0; b < m; ++b)
                {
                    if (a != b)
                    {
                        cells.emplace_back(a, b);
                    }
                }
            }
            std::vector<std::vector<bool>> used(m, std::vector<bool>(m, false));
            std::function<bool(std::size_t)> place = [&](std::size_t c) -> bool {
                if (c == cells.size())
                {
                    return true;
                }
                const auto [a, b] = cells[c];
                for (std::uint32_t v = 0; v < m; ++v)
                {
                    if (v == a || v == b || used[a][v] || f[b * m + a] == v)
                    {
                        continue;
                    }
                    f[a * m + b] = v;
                    used[a][v] = true;
                    if (place(c + 1))
                    {
                        return true;
                    }
                    used[a][v] = false;
                    f[a * m + b] = kNone;
                }
                return false;
            };
            return place(0);
        }
    }

    ArcLayout::ArcLayout(std::uint32_t m) : m_m(m), m_table(std::size_t{m} * m, kNone)
    {
        if (m <= 3)
        {
            // Too few ranks for a spread layout; each rank covers the slice its own parity would.
            for (std::uint32_t a = 0; a < m; ++a)
            {
                for (std::uint32_t b = 0; b < m; ++b)
                {
                    if (a != b)
                    {
                        m_table[a * m + b] = b;
                    }
                }
            }
            return;
        }
        std::vector<std::uint32_t> g;
        if (m >= 5 && circulant_search(m, g))
        {
            for (std::uint32_t a = 0; a < m; ++a)
            {
                for (std::uint32_t b = 0; b < m; ++b)
                {
                    if (a != b)
                    {
                        m_table[a * m + b] = (a + g[(b + m - a) % m]) % m;
                    }
                }
            }
            return;
        }
        if (!cell_search(m, m_table))
        {
            throw ConfigError("arc: no spread layout exists for a group of " + std::to_string(m));
        }
    }

    std::uint32_t ArcLayout::parity_holder(std::uint32_t owner, std::uint32_t holder) const
    {
        if (owner >= m_m || holder >= m_m || owner == holder)
        {
            throw InvalidArgument("arc layout: invalid (owner, holder) pair");
        }
        return m_table[owner * m_m + holder];
    }

    std::uint32_t ArcLayout::slice_at(std::uint32_t owner, std::uint32_t holder) const
    {
        return aec_slice_index(parity_holder(owner, holder), owner);
    }

    std::uint32_t ArcLayout::holder_of(std::uint32_t owner, std::uint32_t k) const
    {
        for (std::uint32_t b = 0; b < m_m; ++b)
        {
            if (b != owner && slice_at(owner, b) == k)
            {
                return b;
            }
        }
        throw InvalidArgument("arc layout: sub-slice index out of range");
    }

    std::vector<std::vector<ArcCopy>> arc_redundancy(const std::vector<ShardAssignment> &assignments,
                                                     const ShardingGroup &group)
    {
        const std::uint32_t m = group.size();
        if (m < 2)
        {
            throw ConfigError("arc: group " + std::to_string(group.group_id) + " has no peer to copy from (m = 1)");
        }
        if (assignments.size() != m)
        {
            throw InvalidArgument("arc_redundancy: need one assignment per group member");
        }
        Bytes max_len = 0;
        for (const auto &a : assignments)
        {
            max_len = std::max(max_len, a.local_range.length);
        }
        const Bytes slice = aec_slice_length(max_len, m);
        const ArcLayout layout(m);
        std::vector<std::vector<ArcCopy>> out(m);
        for (std::uint32_t holder = 0; holder < m; ++holder)
        {
            for (std::uint32_t owner = 0; owner < m; ++owner)
            {
                if (owner == holder)
                {
                    continue;
                }
                const auto &r = assignments[owner].local_range;
                const std::uint32_t k = layout.slice_at(owner, holder);
                const Bytes begin = std::min(r.length, Bytes{k} * slice);
                const Bytes end = std::min(r.length, begin + slice);
                out[holder].push_back({owner, k, {r.offset + begin, end - begin}});
            }
        }
        return out;
    }

    ParamBuffer aec_encode(const std::vector<ParamBuffer> &peer_sub_slices)
    {
        if (peer_sub_slices.empty())
        {
            throw InvalidArgument("aec_encode: no inputs");
        }
        ParamBuffer parity;
        parity.role = BufferRole::Parity;
        parity.group_id = peer_sub_slices.front().group_id;
        parity.bytes.assign(peer_sub_slices.front().bytes.size(), 0);
        for (const auto &p : peer_sub_slices)
        {
            if (p.bytes.size() != parity.bytes.size())
            {
                throw InvalidArgument("aec_encode: sub-slices differ in length");
            }
            xor_into(parity.bytes, p.bytes);
            parity.encoded.emplace_back(p.owner_node, p.sub_slice_index.value_or(0));
        }
        return parity;
    }

    ParamBuffer aec_decode(const ParamBuffer &parity, const std::vector<ParamBuffer> &survivors)
    {
        if (parity.role != BufferRole::Parity)
        {
            throw InvalidArgument("aec_decode: first argument is not a parity buffer");
        }
        std::vector<SliceRef> remaining = parity.encoded;
        ParamBuffer out;
        out.bytes = parity.bytes;
        out.group_id = parity.group_id;
        for (const auto &s : survivors)
        {
            if (s.bytes.size() != parity.bytes.size())
            {
                throw InvalidArgument("aec_decode: survivor length differs from parity");
            }
            const SliceRef ref{s.owner_node, s.sub_slice_index.value_or(0)};
            const auto it = std::find(remaining.begin(), remaining.end(), ref);
            if (it == remaining.end())
            {
                throw InvalidArgument("aec_decode: survivor (node " + std::to_string(ref.first) + ", slice " +
                                      std::to_string(ref.second) + ") is not part of this parity");
            }
            remaining.erase(it);
            xor_into(out.bytes, s.bytes);
        }
        if (remaining.size() != 1)
        {
            throw UnrecoverableError("aec_decode: " + std::to_string(remaining.size()) +
                                     " terms missing from the parity; exactly one can be recovered");
        }
        out.owner_node = remaining.front().first;
        out.sub_slice_index = remaining.front().second;
        return out;
    }

    ParamBuffer aor_update(const ParamBuffer &optimizer_shard, const ParamBuffer &gradient_shard, float eta)
    {
        ParamBuffer out = optimizer_shard;
        sgd_update(out.bytes, gradient_shard.bytes, eta);
        return out;
    }

    AorGroup::AorGroup(std::vector<ParamBuffer> initial_optimizer_shards, float eta)
        : m_replicas(std::move(initial_optimizer_shards)), m_steps(m_replicas.size(), 0),
          m_pending(m_replicas.size()), m_eta(eta)
    {
    }

    void AorGroup::push_gradient(std::uint32_t owner, ParamBuffer gradient)
    {
        if (gradient.bytes.size() != m_replicas.at(owner).bytes.size())
        {
            throw InvalidArgument("aor: gradient shard length differs from the optimizer shard");
        }
        m_pending[owner].push_back(std::move(gradient));
    }

    std::size_t AorGroup::drain(std::uint32_t owner, std::size_t max_steps)
    {
        auto &queue = m_pending.at(owner);
        const std::size_t n = std::min(max_steps, queue.size());
        for (std::size_t i = 0; i < n; ++i)
        {
            sgd_update(m_replicas[owner].bytes, queue[i].bytes, m_eta);
        }
        queue.erase(queue.begin(), queue.begin() + static_cast<std::ptrdiff_t>(n));
        m_steps[owner] += n;
        return n;
    }

    AorRecovered aor_reconstruct(std::uint32_t failed, const AorGroup &group, const std::set<std::uint32_t> &lost)
    {
        const std::uint32_t m = group.size();
        if (failed >= m)
        {
            throw InvalidArgument("aor_reconstruct: rank out of range");
        }
        const std::uint32_t holder = AorGroup::holder_of(failed, m);
        if (m < 2 || lost.count(holder))
        {
            throw UnrecoverableError("aor: replica of rank " + std::to_string(failed) + " was held by rank " +
                                     std::to_string(holder) + ", which is also lost");
        }
        AorRecovered out;
        out.shard = group.replica(failed);
        out.lag = group.lag(failed);
        for (const auto &g : group.pending(failed))
        {
            sgd_update(out.shard.bytes, g.bytes, group.eta());
        }
        return out;
    }

    Bytes GroupProtection::arc_bytes(std::uint32_t r) const
    {
        Bytes total = 0;
        if (r < arc_copies.size())
        {
            for (const auto &c : arc_copies[r])
            {
                total += c.bytes.size();
            }
        }
        return total;
    }

    Bytes GroupProtection::parity_bytes(std::uint32_t r) const
    {
        return r < parities.size() ? parities[r].bytes.size() : 0;
    }

    Bytes GroupProtection::snapshot_bytes(std::uint32_t r) const
    {
        return shards.at(r).bytes.size() + arc_bytes(r) + parity_bytes(r);
    }

    GroupProtection protect_group(const ShardingGroup &group, const std::vector<ByteVec> &shards,
                                  const ProtectionConfig &config)
    {
        const std::uint32_t m = group.size();
        if (shards.size() != m)
        {
            throw InvalidArgument("protect_group: need one shard per group member");
        }
        GroupProtection st;
        st.group_id = group.group_id;
        st.members = group.members;
        Bytes max_len = 0;
        for (std::uint32_t r = 0; r < m; ++r)
        {
            ParamBuffer b;
            b.bytes = shards[r];
            b.owner_node = group.members[r];
            b.group_id = group.group_id;
            st.shards.push_back(std::move(b));
            st.shard_lengths.push_back(shards[r].size());
            max_len = std::max<Bytes>(max_len, shards[r].size());
        }
        const bool arc = config.has(Strategy::Arc);
        const bool aec = config.has(Strategy::Aec);
        if ((arc || aec) && m < 2)
        {
            throw ConfigError("protection: group " + std::to_string(group.group_id) +
                              " has a single member, so ARC/AEC have no peer");
        }
        if (!arc && !aec)
        {
            return st;
        }
        st.slice_length = aec_slice_length(max_len, m);
        const Bytes L = st.slice_length;

        auto slice_buffer = [&](std::uint32_t owner, std::uint32_t k, bool padded) {
            ParamBuffer b;
            b.bytes = sub_slice(shards[owner], k, L);
            if (!padded)
            {
                const Bytes begin = std::min<Bytes>(shards[owner].size(), Bytes{k} * L);
                const Bytes end = std::min<Bytes>(shards[owner].size(), begin + L);
                b.bytes.resize(end - begin);
            }
            b.owner_node = group.members[owner];
            b.group_id = group.group_id;
            b.sub_slice_index = k;
            return b;
        };

        if (arc)
        {
            const ArcLayout layout(m);
            st.arc_copies.resize(m);
            for (std::uint32_t holder = 0; holder < m; ++holder)
            {
                for (std::uint32_t owner = 0; owner < m; ++owner)
                {
                    if (owner != holder)
                    {
                        st.arc_copies[holder].push_back(slice_buffer(owner, layout.slice_at(owner, holder), false));
                    }
                }
            }
        }
        if (aec)
        {
            for (std::uint32_t i = 0; i < m; ++i)
            {
                std::vector<ParamBuffer> terms;
                for (std::uint32_t j = 0; j < m; ++j)
                {
                    if (j != i)
                    {
                        terms.push_back(slice_buffer(j, aec_slice_index(i, j), true));
                    }
                }
                ParamBuffer p = aec_encode(terms);
                p.owner_node = group.members[i];
                st.parities.push_back(std::move(p));
            }
        }
        return st;
    }

    ReconstructResult reconstruct_shards(const GroupProtection &state, const std::set<std::uint32_t> &failed)
    {
        const std::uint32_t m = state.size();
        ReconstructResult res;
        if (failed.empty())
        {
            return res;
        }
        for (std::uint32_t f : failed)
        {
            if (f >= m)
            {
                throw InvalidArgument("reconstruct: failed rank out of range");
            }
        }
        if (failed.size() >= m || state.slice_length == 0)
        {
            throw UnrecoverableError("group " + std::to_string(state.group_id) + ": " +
                                     std::to_string(failed.size()) + " lost member(s) and no surviving redundancy");
        }
        const Bytes L = state.slice_length;
        std::map<NodeId, std::uint32_t> rank;
        for (std::uint32_t r = 0; r < m; ++r)
        {
            rank[state.members[r]] = r;
        }
        std::map<std::pair<std::uint32_t, std::uint32_t>, ByteVec> known;
        auto padded = [L](ByteVec v) {
            v.resize(L, 0);
            return v;
        };

        bool progress = true;
        const std::size_t want = failed.size() * (m - 1);
        while (progress && known.size() < want)
        {
            progress = false;
            for (std::uint32_t b = 0; b < state.arc_copies.size(); ++b)
            {
                if (failed.count(b))
                {
                    continue;
                }
                for (const auto &c : state.arc_copies[b])
                {
                    const std::uint32_t owner = rank.at(c.owner_node);
                    const auto key = std::make_pair(owner, c.sub_slice_index.value_or(0));
                    if (failed.count(owner) && !known.count(key))
                    {
                        known[key] = padded(c.bytes);
                        res.bytes_moved += c.bytes.size();
                        ++res.slices_copied;
                        progress = true;
                    }
                }
            }
            for (std::uint32_t i = 0; i < state.parities.size(); ++i)
            {
                if (failed.count(i))
                {
                    continue;
                }
                const auto &p = state.parities[i];
                std::vector<std::pair<std::uint32_t, std::uint32_t>> unknown;
                for (const auto &[node, k] : p.encoded)
                {
                    const std::uint32_t owner = rank.at(node);
                    if (failed.count(owner) && !known.count({owner, k}))
                    {
                        unknown.emplace_back(owner, k);
                    }
                }
                if (unknown.size() != 1)
                {
                    continue;
                }
                ByteVec value = p.bytes;
                for (const auto &[node, k] : p.encoded)
                {
                    const std::uint32_t owner = rank.at(node);
                    if (std::make_pair(owner, k) == unknown.front())
                    {
                        continue;
                    }
                    const ByteVec term =
                        failed.count(owner) ? known.at({owner, k}) : sub_slice(state.shards[owner].bytes, k, L);
                    xor_into(value, term);
                }
                known[unknown.front()] = std::move(value);
                res.bytes_moved += L;
                ++res.slices_decoded;
                progress = true;
            }
        }
        if (known.size() < want)
        {
            throw UnrecoverableError("group " + std::to_string(state.group_id) + ": " +
                                     std::to_string(want - known.size()) +
                                     " sub-slice(s) of the lost shards are not covered by surviving redundancy");
        }
        for (std::uint32_t f : failed)
        {
            ByteVec shard;
            shard.reserve((m - 1) * L);
            for (std::uint32_t k = 0; k + 1 < m; ++k)
            {
                const auto &v = known.at({f, k});
                shard.insert(shard.end(), v.begin(), v.end());
            }
            shard.resize(state.shard_lengths[f]);
            res.shards.emplace_back(f, std::move(shard));
        }
        return res;
    }
}

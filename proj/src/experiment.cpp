#include "reft/experiment.hpp"
#include "reft/errors.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>

namespace reft
{
    std::vector<Bytes> stage_bytes(const ExperimentConfig &config)
    {
        const Bytes total = config.cluster.zero1_enabled ? config.model_bytes
                                                         : config.model_bytes + config.optimizer_bytes;
        std::vector<Bytes> out;
        for (const auto &r : ceil_split(total, config.cluster.pp_size))
        {
            out.push_back(r.length);
        }
        return out;
    }

    std::vector<Bytes> snapshot_volumes(const ExperimentConfig &config, const Topology &topology,
                                        const std::vector<ShardingGroup> &groups)
    {
        std::vector<Bytes> out(topology.nodes.size(), 0);
        const auto &p = config.protection;
        for (const auto &g : groups)
        {
            const auto assignments = assign_shards(g, config.cluster.zero1_enabled, config.optimizer_bytes,
                                                   config.cluster.pp_size);
            std::vector<std::vector<ArcCopy>> arc;
            if (p.has(Strategy::Arc))
            {
                arc = arc_redundancy(assignments, g);
            }
            Bytes max_len = 0;
            for (const auto &a : assignments)
            {
                max_len = std::max(max_len, a.local_range.length);
            }
            for (std::uint32_t r = 0; r < g.size(); ++r)
            {
                const auto &a = assignments[r];
                Bytes bytes = a.local_range.length;
                if (!arc.empty())
                {
                    for (const auto &c : arc[r])
                    {
                        bytes += c.range.length;
                    }
                }
                if (p.has(Strategy::Aec))
                {
                    bytes += aec_slice_length(max_len, g.size());
                }
                if (a.optimizer_range)
                {
                    bytes += a.optimizer_range->length;
                    if (p.has(Strategy::Aor))
                    {
                        bytes += a.optimizer_range->length;
                    }
                }
                out[a.node_id] = bytes;
            }
        }
        return out;
    }

    RecoveryDecision decide_recovery(const ExperimentConfig &config, const Topology &topology,
                                     const std::vector<FailureEvent> &failures)
    {
        std::map<std::uint32_t, std::set<NodeId>> lost;
        for (const auto &f : failures)
        {
            if (f.kind == FailureKind::Hardware)
            {
                lost[topology.nodes.at(f.node).pp_stage].insert(f.node);
            }
        }
        const std::uint32_t m = config.cluster.dp_size;
        const std::uint32_t limit = effective_tolerance(config.protection, m);
        const LoadModel load{config.cluster.d2h_bandwidth, config.cluster.internode_bandwidth,
                             config.cluster.nfs_bandwidth};
        RecoveryDecision d;
        d.in_memory = std::all_of(lost.begin(), lost.end(), [limit](const auto &g) { return g.second.size() <= limit; });
        if (d.in_memory)
        {
            const auto stages = stage_bytes(config);
            d.load_seconds =
                in_memory_load_seconds(*std::max_element(stages.begin(), stages.end()), m, config.protection, load);
        }
        else
        {
            d.load_seconds = nfs_load_seconds(config.model_bytes + config.optimizer_bytes, load);
        }
        return d;
    }

    namespace
    {
        double samples_per_second(const ExperimentConfig &config, const SimulationResult &run)
        {
            if (run.iterations.empty())
            {
                return 0.0;
            }
            double sum = 0.0;
            for (const auto &m : run.iterations)
            {
                sum += m.t_iter;
            }
            return config.batch_size / (sum / static_cast<double>(run.iterations.size()));
        }
    }

    ExperimentResult run_experiment(const ExperimentConfig &config)
    {
        config.validate();
        ExperimentResult res;
        res.topology = build_topology(config.cluster);
        res.groups = form_sharding_groups(res.topology, stage_bytes(config));

        PipelineOptions popts;
        popts.fwd_ratio = config.fwd_ratio;
        if (config.grad_sync)
        {
            for (const auto &r : ceil_split(config.model_bytes, config.cluster.pp_size))
            {
                popts.grad_sync_seconds.push_back(
                    ring_allreduce_seconds(r.length, config.cluster.dp_size, config.cluster.internode_bandwidth));
            }
        }
        res.schedules = generate_1f1b_schedule(config.cluster, popts);
        res.node_bytes = snapshot_volumes(config, res.topology, res.groups);
        if (config.snapshot_enabled)
        {
            res.plans = plan_all(res.topology, res.node_bytes, res.schedules, config.has);
        }

        SimOptions opts;
        opts.alpha_compute = config.alpha_compute;
        opts.alpha_network = config.alpha_network;
        opts.snapshot_interval = config.snapshot_interval;
        opts.nfs_every_snapshots = config.nfs_every_snapshots;
        opts.seed = config.seed;
        const Topology &topo = res.topology;
        opts.recover = [&config, &topo](const std::vector<FailureEvent> &f) { return decide_recovery(config, topo, f); };

        res.baseline = run_simulation(res.topology, res.schedules, {}, {}, config.iterations, opts);
        res.snapshot = res.plans.empty()
                           ? res.baseline
                           : run_simulation(res.topology, res.schedules, res.plans, {}, config.iterations, opts);
        res.overhead = compute_overhead(res.snapshot, res.baseline);

        if (config.inject_failures)
        {
            Rng rng(config.seed);
            // Twice the failure-free run leaves room for the rework that failures cause.
            res.failures =
                inject_failures(res.topology, config.failure, Seconds{2.0 * res.snapshot.total_time}, rng);
            res.resilience =
                run_simulation(res.topology, res.schedules, res.plans, res.failures, config.iterations, opts);
        }
        res.baseline_samples_per_second = samples_per_second(config, res.baseline);
        res.snapshot_samples_per_second = samples_per_second(config, res.snapshot);
        return res;
    }

    void write_summary(std::ostream &os, const ExperimentConfig &config, const ExperimentResult &result)
    {
        const auto flags = os.flags();
        const auto prec = os.precision();
        os << std::setprecision(6);
        const auto &c = config.cluster;
        os << "# reft-sim v1 summary\n";
        os << "cluster: dp=" << c.dp_size << " pp=" << c.pp_size << " tp=" << c.tp_size << " nodes="
           << result.topology.nodes.size() << " microbatches=" << c.num_microbatches << '\n';
        os << "iteration length (baseline): " << iteration_length(result.schedules) << " s\n";
        os << "protection: " << (config.protection.strategies.empty() ? "none" : "");
        for (std::size_t i = 0; i < config.protection.strategies.size(); ++i)
        {
            os << (i ? "+" : "") << to_string(config.protection.strategies[i]);
        }
        os << " (tolerance " << tolerance(config.protection) << ", effective "
           << effective_tolerance(config.protection, c.dp_size) << ")\n\n";

        os << "run        samples/s\n";
        os << "baseline   " << result.baseline_samples_per_second << '\n';
        os << "HAS        " << result.snapshot_samples_per_second << '\n';
        os << "\no_inmem mean " << result.overhead.mean << " s, max " << result.overhead.max << " s\n";

        std::array<Bytes, 3> layers{};
        Bytes overflow = 0;
        double stalls = 0.0;
        for (const auto &m : result.snapshot.iterations)
        {
            for (std::size_t i = 0; i < 3; ++i)
            {
                layers[i] += m.bytes_snapshotted_by_layer[i];
            }
            overflow += m.overflow_bytes;
            stalls += m.stalls;
        }
        os << "bytes by layer: L1=" << layers[0] << " L2=" << layers[1] << " L3=" << layers[2]
           << " overflow=" << overflow << '\n';
        os << "stalls total " << stalls << " s\n";
        std::uint32_t span = 0;
        std::size_t spilled = 0;
        for (const auto &p : result.plans)
        {
            span = std::max(span, p.iterations_spanned);
            spilled += p.spillover ? 1 : 0;
        }
        os << "snapshot span " << span << " iteration(s), " << spilled << " node(s) spill over\n";
        os << "snapshots committed " << result.snapshot.snapshots_committed << '\n';
        if (result.resilience)
        {
            std::size_t in_mem = 0;
            double recompute = 0.0;
            double load = 0.0;
            for (const auto &r : result.resilience->recoveries)
            {
                in_mem += r.in_memory ? 1 : 0;
                recompute += r.recompute_seconds;
                load += r.load_seconds;
            }
            os << "\nfailures injected " << result.failures.size() << ", recoveries "
               << result.resilience->recoveries.size() << " (" << in_mem << " in-memory, "
               << result.resilience->recoveries.size() - in_mem << " NFS)\n";
            os << "recompute total " << recompute << " s, load total " << load << " s, wall time "
               << result.resilience->total_time << " s\n";
        }
        os.precision(prec);
        os.flags(flags);
    }

    void write_outputs(const std::filesystem::path &dir, const ExperimentConfig &config,
                       const ExperimentResult &result)
    {
        std::filesystem::create_directories(dir);
        auto open = [&dir](const char *name) {
            std::ofstream os(dir / name, std::ios::trunc);
            if (!os)
            {
                throw std::runtime_error("cannot write " + (dir / name).string());
            }
            return os;
        };
        {
            auto os = open("metrics.csv");
            write_metrics_csv(os, result.snapshot.iterations);
        }
        {
            auto os = open("trace.csv");
            write_trace_csv(os, result.snapshot.trace);
        }
        {
            auto os = open("plan.csv");
            write_plan_csv(os, result.plans);
        }
        {
            auto os = open("schedule.csv");
            write_schedule_csv(os, result.schedules);
        }
        {
            auto os = open("failures.csv");
            write_failure_csv(os, result.failures);
        }
        {
            auto os = open("config.cfg");
            os << dump_config(config);
        }
        if (result.resilience)
        {
            auto os = open("resilience_metrics.csv");
            write_metrics_csv(os, result.resilience->iterations);
            auto rs = open("recoveries.csv");
            rs.precision(17);
            rs << "failure_time,failed_nodes,path,load_seconds,recompute_seconds,restored_iteration\n";
            for (const auto &r : result.resilience->recoveries)
            {
                rs << r.failure_time << ',';
                for (std::size_t i = 0; i < r.failures.size(); ++i)
                {
                    rs << (i ? " " : "") << r.failures[i].node;
                }
                rs << ',' << (r.in_memory ? "IN_MEMORY" : "NFS") << ',' << r.load_seconds << ','
                   << r.recompute_seconds << ',' << r.restored_iteration << '\n';
            }
        }
        {
            auto os = open("summary.txt");
            write_summary(os, config, result);
        }
    }
}

#include "reft/errors.hpp"
#include "reft/simkernel.hpp"

#include <doctest.h>

#include <sstream>

using namespace reft;

namespace
{
    struct Setup
    {
        Topology topo;
        std::vector<StageSchedule> sched;
    };

    Setup setup(std::uint32_t dp, std::uint32_t pp, std::uint32_t micro, double bw, PipelineOptions o = {})
    {
        ClusterSpec c;
        c.dp_size = dp;
        c.pp_size = pp;
        c.num_microbatches = micro;
        c.d2h_bandwidth = bw;
        Setup s{build_topology(c), {}};
        s.sched = generate_1f1b_schedule(c, o);
        return s;
    }

    std::string csv(const SimulationResult &r)
    {
        std::ostringstream os;
        write_trace_csv(os, r.trace);
        write_metrics_csv(os, r.iterations);
        return os.str();
    }
}

TEST_CASE("empty plan has zero overhead")
{
    auto s = setup(2, 2, 4, 1e9);
    auto base = run_simulation(s.topo, s.sched, {}, {}, 5);
    auto same = run_simulation(s.topo, s.sched, {}, {}, 5);
    const auto o = compute_overhead(same, base);
    REQUIRE(o.per_iteration.size() == 5);
    for (double v : o.per_iteration)
    {
        CHECK(v == 0.0);
    }
    CHECK(base.iterations[0].t_iter == doctest::Approx(iteration_length(s.sched)));
}

TEST_CASE("same inputs give byte-identical traces")
{
    auto s = setup(2, 3, 4, 1e6);
    const auto plans = plan_all(s.topo, std::vector<Bytes>(6, 5000000), s.sched);
    SimOptions o;
    o.seed = 9;
    const auto a = run_simulation(s.topo, s.sched, plans, {}, 6, o);
    const auto b = run_simulation(s.topo, s.sched, plans, {}, 6, o);
    CHECK(csv(a) == csv(b));
}

TEST_CASE("a chunk placed past the iteration end costs its transfer time")
{
    const double bw = double(16ull << 30);
    auto s = setup(1, 1, 1, bw);
    const double len = iteration_length(s.sched);
    SnapshotPlan p;
    p.node_id = 0;
    p.shard_bytes = 16ull << 30;
    p.overflow_bytes = p.shard_bytes;
    p.placements.push_back({Layer::Overflow, 0, len, len + 1.0, 16ull << 30});
    auto base = run_simulation(s.topo, s.sched, {}, {}, 3);
    auto snap = run_simulation(s.topo, s.sched, {p}, {}, 3);
    const auto o = compute_overhead(snap, base);
    CHECK(o.per_iteration[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(snap.iterations[0].overflow_bytes == 16ull << 30);
    CHECK(snap.iterations[0].stalls == doctest::Approx(1.0));
    CHECK(snap.snapshots_committed == 3);
}

TEST_CASE("bubble-only plan with no interference is free")
{
    auto s = setup(2, 4, 8, 1e6);
    HasOptions h;
    h.layer2_enabled = false;
    h.separate_interconnect = false;
    h.spill = SpillPolicy::Block;
    const auto plans = plan_all(s.topo, std::vector<Bytes>(8, 2000000), s.sched, h);
    for (const auto &p : plans)
    {
        REQUIRE(p.layer1_bytes == 2000000);
    }
    auto base = run_simulation(s.topo, s.sched, {}, {}, 4);
    auto snap = run_simulation(s.topo, s.sched, plans, {}, 4);
    const auto o = compute_overhead(snap, base);
    CHECK(o.max == 0.0);
}

TEST_CASE("layer-3 interference adds alpha times copy time")
{
    PipelineOptions po;
    po.grad_sync_seconds = {3.0};
    auto s = setup(1, 1, 1, 1000.0, po);
    HasOptions h;
    h.layer2_enabled = false;
    h.spill = SpillPolicy::Block;
    h.chunk_size = 1 << 30;
    const auto plans = plan_all(s.topo, {2000}, s.sched, h);
    REQUIRE(plans[0].layer3_bytes == 2000);
    SimOptions o;
    o.alpha_network = 0.15;
    auto base = run_simulation(s.topo, s.sched, {}, {}, 2, o);
    auto snap = run_simulation(s.topo, s.sched, plans, {}, 2, o);
    const auto r = compute_overhead(snap, base);
    CHECK(r.per_iteration[0] == doctest::Approx(0.3).epsilon(1e-12));
}

TEST_CASE("layer-2 interference slows compute")
{
    auto s = setup(1, 1, 2, 1000.0);
    HasOptions h;
    h.spill = SpillPolicy::Block;
    h.chunk_size = 1 << 30;
    const auto plans = plan_all(s.topo, {500}, s.sched, h);
    REQUIRE(plans[0].layer2_bytes == 500);
    SimOptions o;
    o.alpha_compute = 0.2;
    auto base = run_simulation(s.topo, s.sched, {}, {}, 1, o);
    auto snap = run_simulation(s.topo, s.sched, plans, {}, 1, o);
    CHECK(compute_overhead(snap, base).max == doctest::Approx(0.1).epsilon(1e-12));
}

TEST_CASE("overhead comparison needs matching runs")
{
    auto s = setup(1, 2, 2, 1e6);
    auto a = run_simulation(s.topo, s.sched, {}, {}, 2);
    auto b = run_simulation(s.topo, s.sched, {}, {}, 3);
    CHECK_THROWS_AS(compute_overhead(a, b), InvalidArgument);
    SimOptions o;
    o.seed = 1;
    auto c = run_simulation(s.topo, s.sched, {}, {}, 2, o);
    CHECK_THROWS_AS(compute_overhead(a, c), InvalidArgument);
}

TEST_CASE("trace-profiled bubbles match the schedule")
{
    auto s = setup(2, 4, 6, 1e6);
    const auto run = run_simulation(s.topo, s.sched, {}, {}, 2);
    const double len = iteration_length(s.sched);
    const auto traced = profile_bubbles(run.trace, s.topo, len, len);
    const auto planned = profile_bubbles(s.sched);
    for (std::size_t p = 0; p < 4; ++p)
    {
        CHECK(traced[p] == doctest::Approx(planned[p]).epsilon(1e-12));
    }
    auto one = setup(1, 1, 3, 1e6);
    const auto r1 = run_simulation(one.topo, one.sched, {}, {}, 1);
    CHECK(profile_bubbles(r1.trace, one.topo, 0.0, iteration_length(one.sched))[0] == doctest::Approx(0.0));
}

TEST_CASE("failure rolls back to the committed snapshot")
{
    auto s = setup(2, 1, 1, 1e9);
    const double len = iteration_length(s.sched);
    const auto plans = plan_all(s.topo, {1000, 1000}, s.sched);
    SimOptions o;
    o.recover = [](const std::vector<FailureEvent> &) { return RecoveryDecision{true, 0.5}; };
    const FailureScript f{{2.5 * len, 1, FailureKind::Hardware}};
    const auto r = run_simulation(s.topo, s.sched, plans, f, 4, o);
    REQUIRE(r.recoveries.size() == 1);
    CHECK(r.recoveries[0].in_memory);
    // The snapshot taken during iteration 1 holds the state at its start; iteration 2's was in flight.
    CHECK(r.recoveries[0].restored_iteration == 1);
    CHECK(r.recoveries[0].recompute_seconds == doctest::Approx(1.5 * len));
    CHECK(r.iterations.size() == 5);
    CHECK(r.total_time == doctest::Approx(2.5 * len + 0.5 + 3 * len));
}

TEST_CASE("beyond-tolerance failures fall back to the NFS point")
{
    auto s = setup(2, 1, 1, 1e9);
    const double len = iteration_length(s.sched);
    const auto plans = plan_all(s.topo, {1000, 1000}, s.sched);
    SimOptions o;
    o.nfs_every_snapshots = 2;
    o.recover = [](const std::vector<FailureEvent> &) { return RecoveryDecision{false, 2.0}; };
    const FailureScript f{{3.5 * len, 0, FailureKind::Hardware}};
    const auto r = run_simulation(s.topo, s.sched, plans, f, 5, o);
    REQUIRE(r.recoveries.size() == 1);
    CHECK_FALSE(r.recoveries[0].in_memory);
    // Snapshots of iterations 0..3 committed; the second one (iteration 1) is the NFS point.
    CHECK(r.recoveries[0].restored_iteration == 1);
    CHECK(r.recoveries[0].recompute_seconds == doctest::Approx(2.5 * len));
}

TEST_CASE("failure csv names and metrics header")
{
    auto s = setup(1, 1, 1, 1e9);
    const auto r = run_simulation(s.topo, s.sched, {}, {}, 1);
    std::ostringstream os;
    write_metrics_csv(os, r.iterations);
    CHECK(os.str().rfind("# reft-sim v1\n", 0) == 0);
    CHECK(std::string(to_string(Stream::D2H)) != std::string(to_string(Stream::Compute)));
    CHECK_THROWS_AS(run_simulation(s.topo, s.sched, {}, {{1.0, 7, FailureKind::Software}}, 1), InvalidArgument);
}

#include "reft/errors.hpp"
#include "reft/has.hpp"

#include <doctest.h>

#include <sstream>

using namespace reft;

namespace
{
    // One forward op [0, 5), a communication op [5, 7), then a 4 s bubble [7, 11).
    StageSchedule handmade()
    {
        StageSchedule s;
        s.pp_stage = 0;
        s.ops.push_back({OpKind::Fwd, 0, 0.0, 5.0});
        s.ops.push_back({OpKind::Comm, 0, 5.0, 2.0});
        s.bubble_windows.push_back({7.0, 11.0});
        s.iteration_length = 11.0;
        return s;
    }

    ClusterSpec bw(double b)
    {
        ClusterSpec c;
        c.d2h_bandwidth = b;
        return c;
    }
}

TEST_CASE("snapshot time")
{
    CHECK(estimate_snapshot_time(16ull << 30, double(16ull << 30)) == 1.0);
    CHECK(estimate_snapshot_time(0, 1e9) == 0.0);
    CHECK(estimate_snapshot_time(4ull << 30, double(16ull << 30)) == 0.25);
}

TEST_CASE("split_parameter")
{
    CHECK(split_parameter(100, 10, 4) == SplitResult{40, 60});
    CHECK(split_parameter(100, 5, 10) == SplitResult{100, 0});
    CHECK(split_parameter(100, 5, 0) == SplitResult{0, 100});
}

TEST_CASE("layer 1 suffices when bubbles outlast the copy")
{
    HasOptions o;
    o.chunk_size = 256;
    const auto p = plan_snapshot(0, 4096, handmade(), bw(1024.0), o);
    CHECK(p.layer1_bytes == 4096);
    CHECK(p.layer2_bytes == 0);
    CHECK(p.layer3_bytes == 0);
    CHECK_FALSE(p.spillover);
}

TEST_CASE("waterfall fills bubble, compute, then communication")
{
    HasOptions o;
    o.chunk_size = 512;
    o.spill = SpillPolicy::Block;
    const auto p = plan_snapshot(0, 10240, handmade(), bw(1024.0), o);
    CHECK(p.layer1_bytes == 4096);
    CHECK(p.layer2_bytes == 5120);
    CHECK(p.layer3_bytes == 1024);
    CHECK(p.overflow_bytes == 0);
    CHECK(p.placed_bytes() == 10240);
    for (const auto &pl : p.placements)
    {
        CHECK(pl.end - pl.start == doctest::Approx(pl.bytes / 1024.0));
    }
}

TEST_CASE("chunks never overrun their window under inexact bandwidths")
{
    HasOptions o;
    o.chunk_size = 256;
    o.spill = SpillPolicy::Block;
    const auto p = plan_snapshot(0, 10000, handmade(), bw(1000.0), o);
    const auto sched = handmade();
    for (const auto &pl : p.placements)
    {
        if (pl.layer == Layer::Bubble)
            CHECK(pl.end <= 11.0);
        if (pl.layer == Layer::Compute)
            CHECK(pl.end <= 5.0);
        if (pl.layer == Layer::Communication)
            CHECK(pl.end <= 7.0);
    }
    // Rounding may cost at most a byte per chunk boundary.
    CHECK(p.layer1_bytes >= 4000 - 16);
    CHECK(p.layer2_bytes >= 5000 - 20);
    CHECK(p.placed_bytes() == 10000);
}

TEST_CASE("layer 3 is off without a separate interconnect")
{
    HasOptions o;
    o.chunk_size = 512;
    o.spill = SpillPolicy::Block;
    o.separate_interconnect = false;
    const auto p = plan_snapshot(0, 10240, handmade(), bw(1024.0), o);
    CHECK(p.layer3_bytes == 0);
    CHECK(p.overflow_bytes == 1024);
    CHECK(p.spillover);
}

TEST_CASE("defer spreads leftovers over later iterations")
{
    HasOptions o;
    o.chunk_size = 512;
    o.layer2_enabled = false;
    o.separate_interconnect = false;
    const auto p = plan_snapshot(0, 10000, handmade(), bw(1000.0), o);
    CHECK(p.overflow_bytes == 0);
    CHECK(p.iterations_spanned == 3);
    CHECK(p.layer1_bytes == 10000);
    o.max_span = 2;
    CHECK_THROWS_AS(plan_snapshot(0, 10000, handmade(), bw(1000.0), o), ConfigError);
}

TEST_CASE("pp = 1 leaves layer 1 empty")
{
    ClusterSpec c = bw(1e9);
    c.num_microbatches = 4;
    const auto sched = generate_1f1b_schedule(c);
    const auto p = plan_snapshot(0, 1 << 20, sched[0], c);
    CHECK(p.layer1_bytes == 0);
    CHECK(p.layer2_bytes + p.layer3_bytes + p.overflow_bytes == 1u << 20);
}

TEST_CASE("closed-form budget is recorded next to the profiled one")
{
    ClusterSpec c = bw(1e6);
    c.pp_size = 4;
    c.num_microbatches = 8;
    const auto sched = generate_1f1b_schedule(c);
    HasOptions profiled, closed;
    closed.mode = BubbleMode::ClosedForm;
    for (std::uint32_t p = 0; p < 4; ++p)
    {
        const auto a = plan_snapshot(p, 1000, sched[p], c, profiled);
        const auto b = plan_snapshot(p, 1000, sched[p], c, closed);
        CHECK(a.bubble_budget_seconds == doctest::Approx(sched[p].bubble_time()));
        CHECK(b.bubble_budget_seconds == doctest::Approx(estimate_bubble_time(p, c)));
        MESSAGE("stage " << p << " profiled " << a.bubble_budget_seconds << " s, closed form "
                         << b.bubble_budget_seconds << " s");
    }
}

TEST_CASE("plan_all and plan csv")
{
    ClusterSpec c = bw(1e6);
    c.pp_size = 2;
    c.dp_size = 2;
    c.num_microbatches = 4;
    const auto topo = build_topology(c);
    const auto sched = generate_1f1b_schedule(c);
    const auto plans = plan_all(topo, {1000, 1000, 2000, 2000}, sched);
    REQUIRE(plans.size() == 4);
    CHECK(plans[2].shard_bytes == 2000);
    CHECK_THROWS_AS(plan_all(topo, {1}, sched), InvalidArgument);
    std::ostringstream os;
    write_plan_csv(os, plans);
    CHECK(os.str().rfind("node,layer,window_start,bytes\n", 0) == 0);
}

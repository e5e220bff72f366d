#include "reft/errors.hpp"
#include "reft/failure.hpp"

#include <doctest.h>

#include <cmath>
#include <sstream>

using namespace reft;

TEST_CASE("Weibull survival")
{
    CHECK(weibull_survival(0.3, 1.7, Days{0}) == 1.0);
    CHECK(weibull_survival(0.1, 1.0, Days{10}) == doctest::Approx(0.367879441).epsilon(1e-9));
    CHECK(weibull_survival(0.0, 2.0, Days{1e6}) == 1.0);
    CHECK_THROWS_AS(weibull_survival(-1, 1, Days{1}), InvalidArgument);
}

TEST_CASE("sampled lifetimes follow the survival function")
{
    Rng rng(21);
    const double lambda = 0.02, shape = 1.4;
    const int n = 40000;
    for (double t : {5.0, 15.0, 30.0})
    {
        Rng local = rng.fork(static_cast<std::uint64_t>(t));
        int alive = 0;
        for (int i = 0; i < n; ++i)
        {
            alive += sample_ttf(lambda, shape, local).value > t ? 1 : 0;
        }
        const double p = weibull_survival(lambda, shape, Days{t});
        const double sigma = std::sqrt(p * (1 - p) / n);
        CHECK(std::abs(alive / double(n) - p) < 3 * sigma);
    }
    Rng r2(1);
    CHECK(std::isinf(sample_ttf(0.0, 1.0, r2).value));
}

TEST_CASE("failure injection")
{
    ClusterSpec c;
    c.dp_size = 4;
    c.pp_size = 4;
    const auto topo = build_topology(c);
    Rng a(5), b(5), z(5);
    CHECK(inject_failures(topo, {0, 0, 1.0}, Seconds{1e9}, z).empty());
    const ReliabilityParams p{50.0, 20.0, 1.0};
    const auto s1 = inject_failures(topo, p, Seconds{86400.0}, a);
    const auto s2 = inject_failures(topo, p, Seconds{86400.0}, b);
    CHECK(s1 == s2);
    CHECK_FALSE(s1.empty());
    for (std::size_t i = 1; i < s1.size(); ++i)
    {
        CHECK(s1[i - 1].time_s <= s1[i].time_s);
    }
    for (const auto &f : s1)
    {
        CHECK(f.time_s < 86400.0);
        CHECK(f.node < 16);
    }
    std::ostringstream os;
    write_failure_csv(os, s1);
    std::istringstream is(os.str());
    CHECK(read_failure_csv(is) == s1);
    Rng d(1);
    CHECK_THROWS_AS(inject_failures(topo, {-1, 0, 1}, Seconds{10}, d), ConfigError);
}

TEST_CASE("signal state machine")
{
    auto s = transition(SignalState::Healthy, SignalEvent::Snap);
    CHECK(s == SignalState::Snap);
    s = transition(s, SignalEvent::ShardsComplete);
    CHECK(s == SignalState::Completed);
    CHECK(transition(s, SignalEvent::Resume) == SignalState::Healthy);
    CHECK(transition(SignalState::Healthy, SignalEvent::HardwareFailure) == SignalState::Offline);
    CHECK(transition(SignalState::Snap, SignalEvent::SoftwareFailure) == SignalState::Unhealthy);
    CHECK(transition(SignalState::Recovering, SignalEvent::RecoverySuccess) == SignalState::Healthy);
    CHECK(transition(SignalState::Recovering, SignalEvent::RecoveryBeyondTolerance) == SignalState::NfsRestart);
    CHECK(transition(SignalState::NfsRestart, SignalEvent::RestartComplete) == SignalState::Healthy);
    CHECK_THROWS_AS(transition(SignalState::Offline, SignalEvent::Snap), StateError);
    CHECK_THROWS_AS(transition(SignalState::Healthy, SignalEvent::ShardsComplete), StateError);
}

TEST_CASE("a hardware failure pulls every node into recovery")
{
    SignalBoard board(4);
    board.apply_all(SignalEvent::Snap);
    board.fail(2, FailureKind::Hardware);
    CHECK(board.state(2) == SignalState::Offline);
    CHECK(board.state(1) == SignalState::Snap);
    CHECK(board.any_down());
    board.begin_recovery();
    for (NodeId n = 0; n < 4; ++n)
    {
        CHECK(board.state(n) == SignalState::Recovering);
    }
    CHECK_FALSE(board.can_commit({0, 1}));
    board.apply_all(SignalEvent::RecoverySuccess);
    CHECK(board.can_commit({0, 1, 2, 3}));
    CHECK_FALSE(board.any_down());
    CHECK(std::string(to_string(SignalState::NfsRestart)) == "NFS_RESTART");
}

#pragma once

#include "reft/topology.hpp"
#include "reft/units.hpp"

#include <iosfwd>
#include <vector>

namespace reft
{
    /// Weibull failure model; rates are per day.
    struct ReliabilityParams
    {
        double lambda_hw = 0.0;
        double lambda_sw = 0.0;
        double shape = 1.0;

        void validate() const;
    };

    /// exp(-lambda * t^c).
    double weibull_survival(double lambda, double shape, Days t);

    /// Inverse-CDF draw t = (-ln u / lambda)^(1/c); +inf when lambda == 0.
    Days sample_ttf(double lambda, double shape, Rng &rng);

    enum class FailureKind : std::uint8_t
    {
        Hardware,
        Software,
    };

    const char *to_string(FailureKind kind) noexcept;

    struct FailureEvent
    {
        double time_s = 0.0;
        NodeId node = 0;
        FailureKind kind = FailureKind::Hardware;

        friend bool operator==(const FailureEvent &, const FailureEvent &) = default;
    };

    using FailureScript = std::vector<FailureEvent>;

    /// One hardware and one software time-to-failure per node, kept when inside the horizon.
    /// Sorted by (time, node, kind).
    FailureScript inject_failures(const Topology &topology, const ReliabilityParams &params, Seconds horizon,
                                  Rng &rng);

    /// `time_s,node,kind`
    void write_failure_csv(std::ostream &os, const FailureScript &script);
    FailureScript read_failure_csv(std::istream &is);

    enum class SignalState : std::uint8_t
    {
        Healthy,
        Snap,
        Completed,
        Unhealthy,
        Offline,
        Recovering,
        NfsRestart,
    };

    enum class SignalEvent : std::uint8_t
    {
        Snap,
        ShardsComplete,
        Resume,
        SoftwareFailure,
        HardwareFailure,
        BeginRecovery,
        RecoverySuccess,
        RecoveryBeyondTolerance,
        RestartComplete,
    };

    const char *to_string(SignalState state) noexcept;
    const char *to_string(SignalEvent event) noexcept;

    /// Legal moves:
    ///   HEALTHY -Snap-> SNAP -ShardsComplete-> COMPLETED -Resume-> HEALTHY
    ///   {HEALTHY, SNAP, COMPLETED} -SoftwareFailure-> UNHEALTHY, -HardwareFailure-> OFFLINE
    ///   {UNHEALTHY, OFFLINE, HEALTHY, SNAP, COMPLETED} -BeginRecovery-> RECOVERING
    ///   RECOVERING -RecoverySuccess-> HEALTHY, -RecoveryBeyondTolerance-> NFS_RESTART
    ///   NFS_RESTART -RestartComplete-> HEALTHY
    /// BeginRecovery from a live state is the broadcast that pulls survivors into recovery.
    /// Anything else throws StateError.
    SignalState transition(SignalState state, SignalEvent event);

    /// Per-node elastic signal states with the broadcast rules applied.
    class SignalBoard
    {
    public:
        explicit SignalBoard(std::uint32_t nodes) : m_states(nodes, SignalState::Healthy) {}

        SignalState state(NodeId node) const { return m_states.at(node); }
        void apply(NodeId node, SignalEvent event);
        void apply_all(SignalEvent event);
        /// Marks `node` OFFLINE (hardware) or UNHEALTHY (software).
        void fail(NodeId node, FailureKind kind);
        /// The failed node's broadcast: every node not yet RECOVERING enters it.
        void begin_recovery();
        bool any_down() const noexcept;
        bool can_commit(const std::vector<NodeId> &members) const;
        std::uint32_t size() const noexcept { return static_cast<std::uint32_t>(m_states.size()); }

    private:
        std::vector<SignalState> m_states;
    };
}

#include "reft/failure.hpp"
#include "reft/errors.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <sstream>
#include <string>

namespace reft
{
    void ReliabilityParams::validate() const
    {
        if (lambda_hw < 0 || lambda_sw < 0)
        {
            throw ConfigError("reliability: failure rates must be >= 0");
        }
        if (!(shape > 0))
        {
            throw ConfigError("reliability: Weibull shape must be > 0");
        }
    }

    double weibull_survival(double lambda, double shape, Days t)
    {
        if (lambda < 0 || !(shape > 0) || t.value < 0)
        {
            throw InvalidArgument("weibull_survival: need lambda >= 0, shape > 0, t >= 0");
        }
        if (lambda == 0.0)
        {
            return 1.0;
        }
        return std::exp(-lambda * std::pow(t.value, shape));
    }

    Days sample_ttf(double lambda, double shape, Rng &rng)
    {
        if (lambda < 0 || !(shape > 0))
        {
            throw InvalidArgument("sample_ttf: need lambda >= 0, shape > 0");
        }
        if (lambda == 0.0)
        {
            return Days{std::numeric_limits<double>::infinity()};
        }
        // u in (0, 1] keeps log finite.
        const double u = 1.0 - rng.uniform();
        return Days{std::pow(-std::log(u) / lambda, 1.0 / shape)};
    }

    const char *to_string(FailureKind kind) noexcept
    {
        return kind == FailureKind::Hardware ? "HARDWARE" : "SOFTWARE";
    }

    FailureScript inject_failures(const Topology &topology, const ReliabilityParams &params, Seconds horizon, Rng &rng)
    {
        params.validate();
        if (!(horizon.value > 0))
        {
            throw InvalidArgument("inject_failures: horizon must be > 0");
        }
        FailureScript script;
        for (const auto &node : topology.nodes)
        {
            // Both draws always happen so the stream stays aligned across parameter changes.
            const Days hw = sample_ttf(params.lambda_hw, params.shape, rng);
            const Days sw = sample_ttf(params.lambda_sw, params.shape, rng);
            const Seconds hw_s = to_seconds(hw);
            const Seconds sw_s = to_seconds(sw);
            if (hw_s < horizon)
            {
                script.push_back({hw_s.value, node.id, FailureKind::Hardware});
            }
            if (sw_s < horizon)
            {
                script.push_back({sw_s.value, node.id, FailureKind::Software});
            }
        }
        std::sort(script.begin(), script.end(), [](const FailureEvent &a, const FailureEvent &b) {
            if (a.time_s != b.time_s)
            {
                return a.time_s < b.time_s;
            }
            if (a.node != b.node)
            {
                return a.node < b.node;
            }
            return a.kind < b.kind;
        });
        return script;
    }

    void write_failure_csv(std::ostream &os, const FailureScript &script)
    {
        const auto old = os.precision(17);
        os << "time_s,node,kind\n";
        for (const auto &f : script)
        {
            os << f.time_s << ',' << f.node << ',' << to_string(f.kind) << '\n';
        }
        os.precision(old);
    }

    FailureScript read_failure_csv(std::istream &is)
    {
        FailureScript script;
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(is, line))
        {
            ++lineno;
            if (line.empty() || line[0] == '#' || line.rfind("time_s", 0) == 0)
            {
                continue;
            }
            std::istringstream row(line);
            std::string time, node, kind;
            if (!std::getline(row, time, ',') || !std::getline(row, node, ',') || !std::getline(row, kind))
            {
                throw ConfigError("failure script line " + std::to_string(lineno) + ": expected time_s,node,kind");
            }
            while (!kind.empty() && (kind.back() == '\r' || kind.back() == ' '))
            {
                kind.pop_back();
            }
            FailureEvent f;
            try
            {
                f.time_s = std::stod(time);
                f.node = static_cast<NodeId>(std::stoul(node));
            }
            catch (const std::exception &)
            {
                throw ConfigError("failure script line " + std::to_string(lineno) + ": bad number");
            }
            if (kind == "HARDWARE")
            {
                f.kind = FailureKind::Hardware;
            }
            else if (kind == "SOFTWARE")
            {
                f.kind = FailureKind::Software;
            }
            else
            {
                throw ConfigError("failure script line " + std::to_string(lineno) + ": unknown kind '" + kind + "'");
            }
            script.push_back(f);
        }
        return script;
    }

    const char *to_string(SignalState state) noexcept
    {
        switch (state)
        {
        case SignalState::Healthy:
            return "HEALTHY";
        case SignalState::Snap:
            return "SNAP";
        case SignalState::Completed:
            return "COMPLETED";
        case SignalState::Unhealthy:
            return "UNHEALTHY";
        case SignalState::Offline:
            return "OFFLINE";
        case SignalState::Recovering:
            return "RECOVERING";
        case SignalState::NfsRestart:
            return "NFS_RESTART";
        }
        return "?";
    }

    const char *to_string(SignalEvent event) noexcept
    {
        switch (event)
        {
        case SignalEvent::Snap:
            return "snap";
        case SignalEvent::ShardsComplete:
            return "shards-complete";
        case SignalEvent::Resume:
            return "resume";
        case SignalEvent::SoftwareFailure:
            return "software-failure";
        case SignalEvent::HardwareFailure:
            return "hardware-failure";
        case SignalEvent::BeginRecovery:
            return "begin-recovery";
        case SignalEvent::RecoverySuccess:
            return "recovery-success";
        case SignalEvent::RecoveryBeyondTolerance:
            return "recovery-beyond-tolerance";
        case SignalEvent::RestartComplete:
            return "restart-complete";
        }
        return "?";
    }

    SignalState transition(SignalState state, SignalEvent event)
    {
        using S = SignalState;
        using E = SignalEvent;
        const bool live = state == S::Healthy || state == S::Snap || state == S::Completed;
        switch (event)
        {
        case E::Snap:
            if (state == S::Healthy)
                return S::Snap;
            break;
        case E::ShardsComplete:
            if (state == S::Snap)
                return S::Completed;
            break;
        case E::Resume:
            if (state == S::Completed)
                return S::Healthy;
            break;
        case E::SoftwareFailure:
            if (live)
                return S::Unhealthy;
            break;
        case E::HardwareFailure:
            if (live)
                return S::Offline;
            break;
        case E::BeginRecovery:
            if (live || state == S::Unhealthy || state == S::Offline)
                return S::Recovering;
            break;
        case E::RecoverySuccess:
            if (state == S::Recovering)
                return S::Healthy;
            break;
        case E::RecoveryBeyondTolerance:
            if (state == S::Recovering)
                return S::NfsRestart;
            break;
        case E::RestartComplete:
            if (state == S::NfsRestart)
                return S::Healthy;
            break;
        }
        throw StateError(std::string("illegal signal transition: ") + to_string(state) + " + " + to_string(event));
    }

    void SignalBoard::apply(NodeId node, SignalEvent event)
    {
        auto &s = m_states.at(node);
        s = transition(s, event);
    }

    void SignalBoard::apply_all(SignalEvent event)
    {
        for (auto &s : m_states)
        {
            s = transition(s, event);
        }
    }

    void SignalBoard::fail(NodeId node, FailureKind kind)
    {
        auto &s = m_states.at(node);
        if (s != SignalState::Recovering)
        {
            s = transition(s, kind == FailureKind::Hardware ? SignalEvent::HardwareFailure
                                                            : SignalEvent::SoftwareFailure);
        }
    }

    void SignalBoard::begin_recovery()
    {
        for (auto &s : m_states)
        {
            if (s != SignalState::Recovering)
            {
                s = transition(s, SignalEvent::BeginRecovery);
            }
        }
    }

    bool SignalBoard::any_down() const noexcept
    {
        return std::any_of(m_states.begin(), m_states.end(), [](SignalState s) {
            return s == SignalState::Offline || s == SignalState::Unhealthy;
        });
    }

    bool SignalBoard::can_commit(const std::vector<NodeId> &members) const
    {
        return std::none_of(members.begin(), members.end(), [this](NodeId n) {
            const auto s = m_states.at(n);
            return s == SignalState::Offline || s == SignalState::Unhealthy || s == SignalState::Recovering ||
                   s == SignalState::NfsRestart;
        });
    }
}

#pragma once

#include <stdexcept>
#include <string>

namespace reft
{
    /// Invalid cluster, experiment or plan configuration.
    class ConfigError : public std::runtime_error
    {
    public:
        using std::runtime_error::runtime_error;
    };

    /// A caller violated an operation's precondition (length mismatch, bad index, ...).
    class InvalidArgument : public std::invalid_argument
    {
    public:
        using std::invalid_argument::invalid_argument;
    };

    /// Illegal state transition or lifecycle misuse (store handles, signal graph).
    class StateError : public std::logic_error
    {
    public:
        using std::logic_error::logic_error;
    };

    /// Lost parameters that the enabled redundancy cannot reconstruct.
    class UnrecoverableError : public std::runtime_error
    {
    public:
        using std::runtime_error::runtime_error;
    };

    /// Host-memory budget for snapshots would be exceeded.
    class CapacityError : public std::runtime_error
    {
    public:
        using std::runtime_error::runtime_error;
    };

    /// Checkpoint payload does not match its recorded checksum.
    class CorruptCheckpointError : public std::runtime_error
    {
    public:
        CorruptCheckpointError(const std::string &shard, const std::string &what)
            : std::runtime_error(what), m_shard(shard)
        {
        }

        const std::string &shard() const noexcept { return m_shard; }

    private:
        std::string m_shard;
    };
}

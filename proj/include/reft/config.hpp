#pragma once

#include "reft/failure.hpp"
#include "reft/has.hpp"
#include "reft/protection.hpp"
#include "reft/topology.hpp"

#include <iosfwd>
#include <string>

namespace reft
{
    /// Everything one experiment needs, as read from a sectioned key = value file:
    ///
    ///     [cluster]
    ///     dp = 4
    ///     compute_time = 0.5, 0.5
    ///
    /// Sections: cluster, model, pipeline, has, protection, sim, failure.
    struct ExperimentConfig
    {
        ClusterSpec cluster;

        Bytes model_bytes = 1ull << 30;
        Bytes optimizer_bytes = 0;
        /// Samples consumed per iteration (for samples/s).
        double batch_size = 1.0;

        double fwd_ratio = 1.0 / 3.0;
        /// Adds a gradient all-reduce at the end of each stage's iteration.
        bool grad_sync = true;

        HasOptions has;
        bool snapshot_enabled = true;

        ProtectionConfig protection;

        std::uint64_t iterations = 10;
        double alpha_compute = 0.0;
        double alpha_network = 0.0;
        std::uint32_t snapshot_interval = 1;
        std::uint32_t nfs_every_snapshots = 0;
        std::uint64_t seed = 0;

        bool inject_failures = false;
        ReliabilityParams failure;

        /// Cross-field checks; throws ConfigError naming the offending field.
        void validate() const;
    };

    /// Parses a config stream. `source` labels error messages. Unknown sections, keys and malformed values
    /// throw ConfigError with the line number and field name.
    ExperimentConfig parse_config(std::istream &is, const std::string &source = "config");
    ExperimentConfig load_config(const std::string &path);

    /// Applies `section.key=value` on top of `config`.
    void apply_override(ExperimentConfig &config, const std::string &assignment);

    /// Every field in canonical form; parsing the dump reproduces the same config.
    std::string dump_config(const ExperimentConfig &config);
}

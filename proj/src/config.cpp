#include "reft/config.hpp"
#include "reft/errors.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

namespace reft
{
    namespace
    {
        std::string trim(const std::string &s)
        {
            const auto b = s.find_first_not_of(" \t\r");
            if (b == std::string::npos)
            {
                return "";
            }
            const auto e = s.find_last_not_of(" \t\r");
            return s.substr(b, e - b + 1);
        }

        std::vector<std::string> split_list(const std::string &s)
        {
            std::vector<std::string> out;
            std::string item;
            std::istringstream is(s);
            while (std::getline(is, item, ','))
            {
                item = trim(item);
                if (!item.empty())
                {
                    out.push_back(item);
                }
            }
            return out;
        }

        std::string fmt(double v)
        {
            char buf[64];
            const auto r = std::to_chars(buf, buf + sizeof buf, v);
            return std::string(buf, r.ptr);
        }

        struct BadValue
        {
            std::string expected;
        };

        std::uint64_t to_u64(const std::string &s)
        {
            std::uint64_t v = 0;
            const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
            if (r.ec != std::errc{} || r.ptr != s.data() + s.size())
            {
                throw BadValue{"an unsigned integer"};
            }
            return v;
        }

        std::uint32_t to_u32(const std::string &s)
        {
            const auto v = to_u64(s);
            if (v > UINT32_MAX)
            {
                throw BadValue{"an unsigned 32-bit integer"};
            }
            return static_cast<std::uint32_t>(v);
        }

        double to_double(const std::string &s)
        {
            double v = 0;
            const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
            if (r.ec != std::errc{} || r.ptr != s.data() + s.size())
            {
                throw BadValue{"a number"};
            }
            return v;
        }

        bool to_bool(const std::string &s)
        {
            if (s == "true" || s == "1" || s == "yes" || s == "on")
                return true;
            if (s == "false" || s == "0" || s == "no" || s == "off")
                return false;
            throw BadValue{"true or false"};
        }

        struct Field
        {
            const char *section;
            const char *key;
            std::function<void(const std::string &)> set;
            std::function<std::string()> get;
        };

        std::vector<Field> fields(ExperimentConfig &c)
        {
            auto u32 = [](const char *sec, const char *key, std::uint32_t &ref) {
                return Field{sec, key, [&ref](const std::string &v) { ref = to_u32(v); },
                             [&ref] { return std::to_string(ref); }};
            };
            auto u64 = [](const char *sec, const char *key, std::uint64_t &ref) {
                return Field{sec, key, [&ref](const std::string &v) { ref = to_u64(v); },
                             [&ref] { return std::to_string(ref); }};
            };
            auto dbl = [](const char *sec, const char *key, double &ref) {
                return Field{sec, key, [&ref](const std::string &v) { ref = to_double(v); },
                             [&ref] { return fmt(ref); }};
            };
            auto boolean = [](const char *sec, const char *key, bool &ref) {
                return Field{sec, key, [&ref](const std::string &v) { ref = to_bool(v); },
                             [&ref] { return std::string(ref ? "true" : "false"); }};
            };

            std::vector<Field> f;
            f.push_back(u32("cluster", "dp", c.cluster.dp_size));
            f.push_back(u32("cluster", "pp", c.cluster.pp_size));
            f.push_back(u32("cluster", "tp", c.cluster.tp_size));
            f.push_back(u32("cluster", "gpus_per_node", c.cluster.gpus_per_node));
            f.push_back(dbl("cluster", "d2h_bandwidth", c.cluster.d2h_bandwidth));
            f.push_back(dbl("cluster", "internode_bandwidth", c.cluster.internode_bandwidth));
            f.push_back(dbl("cluster", "nfs_bandwidth", c.cluster.nfs_bandwidth));
            f.push_back({"cluster", "compute_time",
                         [&c](const std::string &v) {
                             std::vector<double> out;
                             for (const auto &item : split_list(v))
                             {
                                 out.push_back(to_double(item));
                             }
                             if (out.empty())
                             {
                                 throw BadValue{"a comma-separated list of seconds"};
                             }
                             c.cluster.microbatch_compute_time = out;
                         },
                         [&c] {
                             std::string s;
                             for (std::size_t i = 0; i < c.cluster.microbatch_compute_time.size(); ++i)
                             {
                                 s += (i ? ", " : "") + fmt(c.cluster.microbatch_compute_time[i]);
                             }
                             return s;
                         }});
            f.push_back(u32("cluster", "microbatches", c.cluster.num_microbatches));
            f.push_back(boolean("cluster", "zero1", c.cluster.zero1_enabled));

            f.push_back(u64("model", "model_bytes", c.model_bytes));
            f.push_back(u64("model", "optimizer_bytes", c.optimizer_bytes));
            f.push_back(dbl("model", "batch_size", c.batch_size));

            f.push_back(dbl("pipeline", "fwd_ratio", c.fwd_ratio));
            f.push_back(boolean("pipeline", "grad_sync", c.grad_sync));

            f.push_back(boolean("has", "enabled", c.snapshot_enabled));
            f.push_back({"has", "mode",
                         [&c](const std::string &v) {
                             if (v == "profiled")
                                 c.has.mode = BubbleMode::Profiled;
                             else if (v == "closed_form")
                                 c.has.mode = BubbleMode::ClosedForm;
                             else
                                 throw BadValue{"profiled or closed_form"};
                         },
                         [&c] { return std::string(c.has.mode == BubbleMode::Profiled ? "profiled" : "closed_form"); }});
            f.push_back({"has", "spill_policy",
                         [&c](const std::string &v) {
                             if (v == "defer")
                                 c.has.spill = SpillPolicy::Defer;
                             else if (v == "block")
                                 c.has.spill = SpillPolicy::Block;
                             else
                                 throw BadValue{"defer or block"};
                         },
                         [&c] { return std::string(c.has.spill == SpillPolicy::Defer ? "defer" : "block"); }});
            f.push_back(u64("has", "chunk_size", c.has.chunk_size));
            f.push_back(boolean("has", "layer2", c.has.layer2_enabled));
            f.push_back(boolean("has", "separate_interconnect", c.has.separate_interconnect));
            f.push_back(dbl("has", "bubble_utilization", c.has.bubble_utilization));
            f.push_back(u32("has", "max_span", c.has.max_span));

            f.push_back({"protection", "strategies",
                         [&c](const std::string &v) {
                             std::vector<Strategy> out;
                             if (v != "none")
                             {
                                 for (const auto &item : split_list(v))
                                 {
                                     try
                                     {
                                         out.push_back(parse_strategy(item));
                                     }
                                     catch (const ConfigError &)
                                     {
                                         throw BadValue{"a list drawn from arc, aec, aor (or none)"};
                                     }
                                 }
                             }
                             c.protection.strategies = out;
                         },
                         [&c] {
                             if (c.protection.strategies.empty())
                             {
                                 return std::string("none");
                             }
                             std::string s;
                             for (std::size_t i = 0; i < c.protection.strategies.size(); ++i)
                             {
                                 s += std::string(i ? ", " : "") + to_string(c.protection.strategies[i]);
                             }
                             return s;
                         }});
            f.push_back({"protection", "eta",
                         [&c](const std::string &v) { c.protection.eta = static_cast<float>(to_double(v)); },
                         [&c] { return fmt(static_cast<double>(c.protection.eta)); }});

            f.push_back(u64("sim", "iterations", c.iterations));
            f.push_back(dbl("sim", "alpha_compute", c.alpha_compute));
            f.push_back(dbl("sim", "alpha_network", c.alpha_network));
            f.push_back(u32("sim", "snapshot_interval", c.snapshot_interval));
            f.push_back(u32("sim", "nfs_every_snapshots", c.nfs_every_snapshots));
            f.push_back(u64("sim", "seed", c.seed));

            f.push_back(boolean("failure", "inject", c.inject_failures));
            f.push_back(dbl("failure", "lambda_hw_per_day", c.failure.lambda_hw));
            f.push_back(dbl("failure", "lambda_sw_per_day", c.failure.lambda_sw));
            f.push_back(dbl("failure", "shape", c.failure.shape));
            return f;
        }

        void assign(ExperimentConfig &c, const std::string &section, const std::string &key, const std::string &value,
                    const std::string &where)
        {
            for (auto &f : fields(c))
            {
                if (section == f.section && key == f.key)
                {
                    try
                    {
                        f.set(value);
                    }
                    catch (const BadValue &bad)
                    {
                        throw ConfigError(where + ": " + section + "." + key + " expects " + bad.expected +
                                          ", got '" + value + "'");
                    }
                    return;
                }
            }
            throw ConfigError(where + ": unknown field " + section + "." + key);
        }
    }

    void ExperimentConfig::validate() const
    {
        cluster.validate();
        protection.validate(cluster.zero1_enabled);
        if (model_bytes == 0)
        {
            throw ConfigError("model.model_bytes must be > 0");
        }
        if (model_bytes < cluster.pp_size)
        {
            throw ConfigError("model.model_bytes must give every pipeline stage at least one byte");
        }
        if (cluster.zero1_enabled && optimizer_bytes == 0)
        {
            throw ConfigError("model.optimizer_bytes must be > 0 when cluster.zero1 = true");
        }
        if (protection.has(Strategy::Aor) && optimizer_bytes % (4ull * cluster.pp_size * cluster.dp_size) != 0)
        {
            throw ConfigError("model.optimizer_bytes must split into whole float32 shards (multiple of 4*pp*dp) "
                              "when aor is enabled");
        }
        if (!(batch_size > 0))
        {
            throw ConfigError("model.batch_size must be > 0");
        }
        if (!(fwd_ratio > 0) || !(fwd_ratio < 1))
        {
            throw ConfigError("pipeline.fwd_ratio must lie in (0, 1)");
        }
        if (has.chunk_size == 0)
        {
            throw ConfigError("has.chunk_size must be > 0");
        }
        if (!(has.bubble_utilization >= 0) || has.bubble_utilization > 1)
        {
            throw ConfigError("has.bubble_utilization must lie in [0, 1]");
        }
        if (has.max_span == 0)
        {
            throw ConfigError("has.max_span must be >= 1");
        }
        if ((protection.has(Strategy::Arc) || protection.has(Strategy::Aec)) && cluster.dp_size < 2)
        {
            throw ConfigError("protection: arc/aec need cluster.dp >= 2 (a sharding group with a peer)");
        }
        if (iterations == 0)
        {
            throw ConfigError("sim.iterations must be >= 1");
        }
        if (alpha_compute < 0 || alpha_network < 0)
        {
            throw ConfigError("sim.alpha_compute and sim.alpha_network must be >= 0");
        }
        if (snapshot_interval == 0)
        {
            throw ConfigError("sim.snapshot_interval must be >= 1");
        }
        failure.validate();
    }

    ExperimentConfig parse_config(std::istream &is, const std::string &source)
    {
        ExperimentConfig c;
        std::string line;
        std::string section;
        std::size_t lineno = 0;
        while (std::getline(is, line))
        {
            ++lineno;
            const std::string where = source + ":" + std::to_string(lineno);
            const auto hash = line.find_first_of("#;");
            if (hash != std::string::npos)
            {
                line.erase(hash);
            }
            line = trim(line);
            if (line.empty())
            {
                continue;
            }
            if (line.front() == '[')
            {
                if (line.back() != ']')
                {
                    throw ConfigError(where + ": malformed section header");
                }
                section = trim(line.substr(1, line.size() - 2));
                static const char *known[] = {"cluster", "model", "pipeline", "has", "protection", "sim", "failure"};
                if (std::find(std::begin(known), std::end(known), section) == std::end(known))
                {
                    throw ConfigError(where + ": unknown section [" + section + "]");
                }
                continue;
            }
            const auto eq = line.find('=');
            if (eq == std::string::npos)
            {
                throw ConfigError(where + ": expected key = value");
            }
            if (section.empty())
            {
                throw ConfigError(where + ": key outside of any [section]");
            }
            assign(c, section, trim(line.substr(0, eq)), trim(line.substr(eq + 1)), where);
        }
        return c;
    }

    ExperimentConfig load_config(const std::string &path)
    {
        std::ifstream is(path);
        if (!is)
        {
            throw ConfigError("cannot open config file " + path);
        }
        return parse_config(is, path);
    }

    void apply_override(ExperimentConfig &config, const std::string &assignment)
    {
        const auto eq = assignment.find('=');
        const auto dot = assignment.find('.');
        if (eq == std::string::npos || dot == std::string::npos || dot > eq)
        {
            throw ConfigError("--set expects section.key=value, got '" + assignment + "'");
        }
        assign(config, trim(assignment.substr(0, dot)), trim(assignment.substr(dot + 1, eq - dot - 1)),
               trim(assignment.substr(eq + 1)), "--set");
    }

    std::string dump_config(const ExperimentConfig &config)
    {
        ExperimentConfig copy = config;
        std::ostringstream os;
        std::string section;
        for (const auto &f : fields(copy))
        {
            if (section != f.section)
            {
                if (!section.empty())
                {
                    os << '\n';
                }
                section = f.section;
                os << '[' << section << "]\n";
            }
            os << f.key << " = " << f.get() << '\n';
        }
        return os.str();
    }
}

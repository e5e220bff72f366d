#include "reft/config.hpp"
#include "reft/drill.hpp"
#include "reft/errors.hpp"
#include "reft/experiment.hpp"
#include "reft/reliability.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

namespace
{
    reft::ByteVec read_file(const std::string &path)
    {
        std::ifstream is(path, std::ios::binary);
        if (!is)
        {
            throw reft::ConfigError("cannot open " + path);
        }
        return reft::ByteVec((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    }

    void write_file(const std::string &path, const reft::ByteVec &data)
    {
        std::ofstream os(path, std::ios::binary | std::ios::trunc);
        os.write(reinterpret_cast<const char *>(data.data()), static_cast<std::streamsize>(data.size()));
        if (!os)
        {
            throw std::runtime_error("cannot write " + path);
        }
    }

    reft::NodeId parse_node(const std::string &text)
    {
        std::string digits = text.rfind("node", 0) == 0 ? text.substr(4) : text;
        if (digits.empty() || digits.find_first_not_of("0123456789") != std::string::npos)
        {
            throw reft::ConfigError("--kill expects nodeN or N, got '" + text + "'");
        }
        return static_cast<reft::NodeId>(std::stoul(digits));
    }

    std::vector<double> default_shapes() { return {1.0, 1.3, 1.5, 2.0}; }
}

int main(int argc, char **argv)
{
    CLI::App app{"reft_sim: in-memory fault-tolerance simulator for hybrid-parallel training"};
    app.require_subcommand(1);

    // simulate
    auto *sim = app.add_subcommand("simulate", "Run baseline and snapshotting simulations from a config file");
    std::string config_path;
    std::vector<std::string> overrides;
    std::optional<std::uint64_t> seed;
    bool no_snapshot = false;
    bool dump_only = false;
    std::string out_dir = "reft_out";
    sim->add_option("--config", config_path, "Experiment config (sectioned key = value)")->required();
    sim->add_option("--set", overrides, "Override a field: section.key=value (repeatable)");
    sim->add_option("--seed", seed, "Seed for every random draw (overrides sim.seed)");
    sim->add_flag("--no-snapshot", no_snapshot, "Disable snapshotting");
    sim->add_option("--out", out_dir, "Output directory")->capture_default_str();
    sim->add_flag("--dump-config", dump_only, "Print the effective config and exit");

    // analyze
    auto *ana = app.add_subcommand("analyze", "Survival curves and interval planning");
    bool want_curves = false;
    double threshold = 0.9;
    std::uint32_t k = 3072;
    std::uint32_t n = 6;
    double lambda_hw = 1e-4;
    double lambda_sw = 1e-5;
    std::vector<double> shapes = default_shapes();
    double t_max = 40.0;
    std::uint32_t points = 161;
    std::string reading = "recoverable";
    std::string ana_out;
    std::optional<double> t_sn, t_ck, t_comp, lambda_nd;
    ana->add_flag("--curves", want_curves, "Emit the four-shape survival curves and threshold intervals");
    ana->add_option("--threshold", threshold, "Survival threshold for interval solving")->capture_default_str();
    ana->add_option("--k", k, "Failure units in the system")->capture_default_str();
    ana->add_option("--n", n, "Sharding-group size")->capture_default_str();
    ana->add_option("--lambda-hw", lambda_hw, "Hardware failure rate per day")->capture_default_str();
    ana->add_option("--lambda-sw", lambda_sw, "Software failure rate per day")->capture_default_str();
    ana->add_option("--shape", shapes, "Weibull shapes")->delimiter(',');
    ana->add_option("--t-max", t_max, "Curve horizon in days")->capture_default_str();
    ana->add_option("--points", points, "Curve grid points")->capture_default_str();
    ana->add_option("--reading", reading, "Software term in the in-memory curve: recoverable | literal")->capture_default_str();
    ana->add_option("--out", ana_out, "Directory for CSV files (stdout when empty)");
    ana->add_option("--t-sn", t_sn, "Snapshot cost per iteration, seconds");
    ana->add_option("--t-ckpt", t_ck, "Checkpoint cost per iteration, seconds");
    ana->add_option("--t-comp", t_comp, "Overlappable compute time, seconds");
    ana->add_option("--lambda-nd", lambda_nd, "Per-node failure rate per second");

    // recover-drill
    auto *drill = app.add_subcommand("recover-drill", "Kill nodes mid-snapshot and verify in-memory recovery");
    std::vector<std::string> kills;
    std::vector<std::string> strategies;
    std::string kind = "hardware";
    std::string drill_config;
    std::uint32_t dp = 4;
    std::uint32_t pp = 2;
    reft::Bytes stage = 64 * 1024;
    std::uint64_t drill_seed = 0;
    std::uint32_t iterations = 4;
    std::string checkpoint_in;
    std::string checkpoint_out;
    drill->add_option("--kill", kills, "Node to kill, nodeN or N (repeatable)")->required();
    drill->add_option("--strategy", strategies, "arc, aec, aor (repeatable or comma-separated)")->delimiter(',');
    drill->add_option("--kind", kind, "hardware | software")->capture_default_str();
    drill->add_option("--config", drill_config, "Take the cluster layout from this config");
    drill->add_option("--dp", dp, "Data-parallel size when no config is given")->capture_default_str();
    drill->add_option("--pp", pp, "Pipeline stages when no config is given")->capture_default_str();
    drill->add_option("--stage-bytes", stage, "Model bytes per stage")->capture_default_str();
    drill->add_option("--seed", drill_seed, "Random seed")->capture_default_str();
    drill->add_option("--iterations", iterations, "Iterations before the crash point is drawn")->capture_default_str();
    drill->add_option("--checkpoint", checkpoint_in, "Start from the parameters in this checkpoint file");
    drill->add_option("--save-checkpoint", checkpoint_out, "Write the drill's starting checkpoint here");

    // codec
    auto *codec = app.add_subcommand("codec", "XOR parity over equal-length files");
    codec->require_subcommand(1);
    auto *enc = codec->add_subcommand("encode", "inputs... -o parity");
    std::vector<std::string> enc_inputs;
    std::string enc_out;
    enc->add_option("inputs", enc_inputs, "Sub-slice files")->required();
    enc->add_option("-o,--output", enc_out, "Parity file")->required();
    auto *dec = codec->add_subcommand("decode", "parity survivors... [-o missing]");
    std::vector<std::string> dec_inputs;
    std::string dec_out;
    dec->add_option("files", dec_inputs, "Parity file followed by the surviving sub-slices")->required();
    dec->add_option("-o,--output", dec_out, "Recovered file (stdout when absent)");

    CLI11_PARSE(app, argc, argv);

    try
    {
        if (*sim)
        {
            reft::ExperimentConfig cfg = reft::load_config(config_path);
            for (const auto &o : overrides)
            {
                reft::apply_override(cfg, o);
            }
            if (seed)
            {
                cfg.seed = *seed;
            }
            if (no_snapshot)
            {
                cfg.snapshot_enabled = false;
            }
            cfg.validate();
            if (dump_only)
            {
                std::cout << reft::dump_config(cfg);
                return 0;
            }
            const auto result = reft::run_experiment(cfg);
            reft::write_outputs(out_dir, cfg, result);
            reft::write_summary(std::cout, cfg, result);
            std::cout << "\noutputs written to " << out_dir << '\n';
            return 0;
        }
        if (*ana)
        {
            reft::SurvivalSetup setup;
            setup.k = k;
            setup.n = n;
            setup.params = {lambda_hw, lambda_sw, shapes.empty() ? 1.0 : shapes.front()};
            if (reading == "literal")
                setup.reading = reft::SoftwareReading::Literal;
            else if (reading != "recoverable")
                throw reft::ConfigError("--reading expects recoverable or literal");

            const bool interval_mode = t_sn || t_ck || t_comp || lambda_nd;
            if (interval_mode)
            {
                if (!t_comp || !lambda_nd)
                {
                    throw reft::ConfigError("interval planning needs --t-comp and --lambda-nd");
                }
                std::cout << "lambda_re_fail (n=" << n << "): " << reft::lambda_re_fail(*lambda_nd, n) << '\n';
                if (t_sn)
                {
                    std::cout << "T_re_sn: " << reft::t_re_sn(reft::Seconds{*t_sn}, reft::Seconds{*t_comp}, *lambda_nd).value
                              << " s\n";
                    std::cout << "T_re_ckpt: "
                              << reft::t_re_ckpt(reft::Seconds{*t_sn}, reft::Seconds{*t_comp}, *lambda_nd, n).value
                              << " s\n";
                }
                if (t_ck)
                {
                    std::cout << "T_ckpt: " << reft::t_ckpt(reft::Seconds{*t_ck}, reft::Seconds{*t_comp}, *lambda_nd).value
                              << " s\n";
                }
                if (!want_curves)
                {
                    return 0;
                }
            }
            if (!want_curves)
            {
                throw reft::ConfigError("analyze: pass --curves or interval options (--t-comp, --lambda-nd, ...)");
            }
            if (points < 2)
            {
                throw reft::ConfigError("--points must be >= 2");
            }
            std::vector<double> grid;
            for (std::uint32_t i = 0; i < points; ++i)
            {
                grid.push_back(t_max * i / (points - 1));
            }
            const auto rows = reft::generate_survival_curves(setup, shapes, grid);
            const auto intervals = reft::interval_report(setup, shapes, threshold);
            if (ana_out.empty())
            {
                reft::write_survival_csv(std::cout, rows);
                std::cout << '\n';
                reft::write_interval_report(std::cout, intervals, threshold);
            }
            else
            {
                std::filesystem::create_directories(ana_out);
                std::ofstream curves(std::filesystem::path(ana_out) / "survival_curves.csv");
                reft::write_survival_csv(curves, rows);
                std::ofstream report(std::filesystem::path(ana_out) / "threshold_intervals.csv");
                reft::write_interval_report(report, intervals, threshold);
                reft::write_interval_report(std::cout, intervals, threshold);
            }
            return 0;
        }
        if (*drill)
        {
            reft::DrillSpec spec;
            if (!drill_config.empty())
            {
                spec.cluster = reft::load_config(drill_config).cluster;
            }
            else
            {
                spec.cluster.dp_size = dp;
                spec.cluster.pp_size = pp;
            }
            for (const auto &s : strategies)
            {
                spec.protection.strategies.push_back(reft::parse_strategy(s));
            }
            if (spec.protection.has(reft::Strategy::Aor))
            {
                spec.cluster.zero1_enabled = true;
            }
            for (const auto &kill : kills)
            {
                spec.kill.push_back(parse_node(kill));
            }
            if (kind == "software")
                spec.kind = reft::FailureKind::Software;
            else if (kind != "hardware")
                throw reft::ConfigError("--kind expects hardware or software");
            spec.stage_bytes = stage;
            spec.seed = drill_seed;
            spec.iterations = iterations;
            if (!checkpoint_in.empty())
            {
                spec.initial = reft::read_nfs_checkpoint(checkpoint_in);
            }
            const auto report = reft::run_recovery_drill(spec);
            reft::write_drill_report(std::cout, report);
            if (!checkpoint_out.empty())
            {
                reft::write_nfs_checkpoint(checkpoint_out, report.initial);
                std::cout << "starting checkpoint written to " << checkpoint_out << '\n';
            }
            return report.bit_exact ? 0 : 3;
        }
        if (*enc)
        {
            std::vector<reft::ParamBuffer> inputs;
            for (std::size_t i = 0; i < enc_inputs.size(); ++i)
            {
                reft::ParamBuffer b;
                b.bytes = read_file(enc_inputs[i]);
                b.owner_node = static_cast<reft::NodeId>(i);
                b.sub_slice_index = 0;
                inputs.push_back(std::move(b));
            }
            write_file(enc_out, reft::aec_encode(inputs).bytes);
            return 0;
        }
        if (*dec)
        {
            if (dec_inputs.size() < 1)
            {
                throw reft::ConfigError("codec decode: need a parity file");
            }
            reft::ParamBuffer parity;
            parity.role = reft::BufferRole::Parity;
            parity.bytes = read_file(dec_inputs.front());
            std::vector<reft::ParamBuffer> survivors;
            // Term 0 is the missing input; survivors fill terms 1..n.
            parity.encoded.emplace_back(0, 0);
            for (std::size_t i = 1; i < dec_inputs.size(); ++i)
            {
                reft::ParamBuffer b;
                b.bytes = read_file(dec_inputs[i]);
                b.owner_node = static_cast<reft::NodeId>(i);
                b.sub_slice_index = 0;
                parity.encoded.emplace_back(b.owner_node, 0);
                survivors.push_back(std::move(b));
            }
            const auto missing = reft::aec_decode(parity, survivors);
            if (dec_out.empty())
            {
                std::cout.write(reinterpret_cast<const char *>(missing.bytes.data()),
                                static_cast<std::streamsize>(missing.bytes.size()));
            }
            else
            {
                write_file(dec_out, missing.bytes);
            }
            return 0;
        }
    }
    catch (const reft::ConfigError &e)
    {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    catch (const std::exception &e)
    {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}

#pragma once

#include "reft/failure.hpp"
#include "reft/units.hpp"

#include <iosfwd>
#include <vector>

namespace reft
{
    struct SurvivalInputs
    {
        /// Failure units in the system.
        std::uint32_t k = 1;
        /// Sharding-group size.
        std::uint32_t n = 1;
        double p_s = 1.0;
        double p_tr = 1.0;
        double p_re = 1.0;

        void validate() const;
    };

    /// (P_s^n + n (1 - P_s) P_s^(n-1))^(k/n) * P_re^k
    double p_re_survive(const SurvivalInputs &in);
    /// P_s^k * P_tr^k
    double p_ck_survive(const SurvivalInputs &in);

    /// max(T_ft - T_comp, 0), written as (|T_ft - T_comp| + T_ft - T_comp) / 2.
    Seconds o_save(Seconds t_ft, Seconds t_comp);

    /// Probability that more than one of n nodes fails in an interval where each fails with lambda_nd.
    double lambda_re_fail(double lambda_nd, std::uint32_t n);

    /// sqrt(2 O_save / lambda). lambda == 0 gives +inf; O_save == 0 gives 0 (save every iteration).
    Seconds optimal_interval(Seconds o_save_value, double lambda_per_second);
    /// Snapshot interval with in-memory protection, from the single-node rate.
    Seconds t_re_sn(Seconds t_sn, Seconds t_comp, double lambda_nd);
    /// Checkpoint interval without in-memory protection.
    Seconds t_ckpt(Seconds t_ckpt_overhead, Seconds t_comp, double lambda_nd);
    /// Checkpoint interval when only multi-failure groups force a restart.
    Seconds t_re_ckpt(Seconds t_sn, Seconds t_comp, double lambda_nd, std::uint32_t n);

    /// O_total = O_save * T_total / T_save + O_restart * T_total * lambda, with
    /// O_restart = T_save / 2 + restart_constant.
    double total_overhead(Seconds t_save, Seconds o_save_value, Seconds t_total, double lambda_per_second,
                          Seconds restart_constant);

    enum class SurvivalMode
    {
        Reft,
        Ckpt,
    };

    /// How software failures enter the in-memory survival term.
    enum class SoftwareReading
    {
        /// Software faults are recovered from host memory, so P_re = 1.
        Recoverable,
        /// P_re = exp(-lambda_sw t^c), the formula taken at face value.
        Literal,
    };

    struct SurvivalSetup
    {
        std::uint32_t k = 3072;
        std::uint32_t n = 6;
        ReliabilityParams params{1e-4, 1e-5, 1.3};
        SoftwareReading reading = SoftwareReading::Recoverable;
    };

    SurvivalInputs survival_inputs_at(const SurvivalSetup &setup, Days t);
    double survival_at(const SurvivalSetup &setup, Days t, SurvivalMode mode);

    /// Time at which survival drops to `threshold`, by bisection on [0, 1e6] days (expanded when needed),
    /// relative tolerance 1e-6, at most 200 halvings. threshold >= 1 returns 0. Throws InvalidArgument when
    /// the threshold is never reached.
    Days solve_interval_for_threshold(const SurvivalSetup &setup, double threshold, SurvivalMode mode);

    struct SurvivalRow
    {
        double shape = 0.0;
        double t_days = 0.0;
        double p_re = 0.0;
        double p_ck = 0.0;
    };

    /// Both curves for every shape over `t_grid` days. Grid points are evaluated in parallel.
    std::vector<SurvivalRow> generate_survival_curves(const SurvivalSetup &base, const std::vector<double> &shapes,
                                                      const std::vector<double> &t_grid);
    /// `c,t_days,p_re_survive,p_ck_survive`
    void write_survival_csv(std::ostream &os, const std::vector<SurvivalRow> &rows);

    struct IntervalRow
    {
        double shape = 0.0;
        double ckpt_days = 0.0;
        double reft_days = 0.0;
        double reft_literal_days = 0.0;
    };

    /// Threshold intervals for each shape, under both software readings.
    std::vector<IntervalRow> interval_report(const SurvivalSetup &base, const std::vector<double> &shapes,
                                             double threshold);
    void write_interval_report(std::ostream &os, const std::vector<IntervalRow> &rows, double threshold);
}

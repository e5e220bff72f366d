#include "reft/reliability.hpp"
#include "reft/errors.hpp"
#include "reft/kernels.hpp"

#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>

namespace reft
{
    namespace
    {
        bool is_probability(double p) { return p >= 0.0 && p <= 1.0; }
    }

    void SurvivalInputs::validate() const
    {
        if (n == 0)
        {
            throw InvalidArgument("survival: sharding-group size n must be >= 1");
        }
        if (k % n != 0)
        {
            throw InvalidArgument("survival: k = " + std::to_string(k) + " is not divisible by n = " +
                                  std::to_string(n));
        }
        if (!is_probability(p_s) || !is_probability(p_tr) || !is_probability(p_re))
        {
            throw InvalidArgument("survival: probabilities must lie in [0, 1]");
        }
    }

    double p_re_survive(const SurvivalInputs &in)
    {
        in.validate();
        const double n = in.n;
        const double group = std::pow(in.p_s, n) + n * (1.0 - in.p_s) * std::pow(in.p_s, n - 1.0);
        return std::pow(group, static_cast<double>(in.k / in.n)) * std::pow(in.p_re, static_cast<double>(in.k));
    }

    double p_ck_survive(const SurvivalInputs &in)
    {
        in.validate();
        return std::pow(in.p_s, static_cast<double>(in.k)) * std::pow(in.p_tr, static_cast<double>(in.k));
    }

    Seconds o_save(Seconds t_ft, Seconds t_comp)
    {
        const double d = t_ft.value - t_comp.value;
        return Seconds{0.5 * (std::abs(d) + d)};
    }

    double lambda_re_fail(double lambda_nd, std::uint32_t n)
    {
        if (!is_probability(lambda_nd) || n == 0)
        {
            throw InvalidArgument("lambda_re_fail: need 0 <= lambda <= 1 and n >= 1");
        }
        // Summing the j >= 2 terms avoids the cancellation in 1 - q^n - n*l*q^(n-1) for small rates.
        const double q = 1.0 - lambda_nd;
        double sum = 0.0;
        double binom = 1.0;
        for (std::uint32_t j = 1; j <= n; ++j)
        {
            binom = binom * (n - j + 1) / j;
            if (j >= 2)
            {
                sum += binom * std::pow(lambda_nd, j) * std::pow(q, static_cast<double>(n - j));
            }
        }
        return sum;
    }

    Seconds optimal_interval(Seconds o_save_value, double lambda_per_second)
    {
        if (o_save_value.value < 0 || lambda_per_second < 0)
        {
            throw InvalidArgument("optimal_interval: O_save and lambda must be >= 0");
        }
        if (lambda_per_second == 0.0)
        {
            return Seconds{std::numeric_limits<double>::infinity()};
        }
        return Seconds{std::sqrt(2.0 * o_save_value.value / lambda_per_second)};
    }

    Seconds t_re_sn(Seconds t_sn, Seconds t_comp, double lambda_nd)
    {
        return optimal_interval(o_save(t_sn, t_comp), lambda_nd);
    }

    Seconds t_ckpt(Seconds t_ckpt_overhead, Seconds t_comp, double lambda_nd)
    {
        return optimal_interval(o_save(t_ckpt_overhead, t_comp), lambda_nd);
    }

    Seconds t_re_ckpt(Seconds t_sn, Seconds t_comp, double lambda_nd, std::uint32_t n)
    {
        return optimal_interval(o_save(t_sn, t_comp), lambda_re_fail(lambda_nd, n));
    }

    double total_overhead(Seconds t_save, Seconds o_save_value, Seconds t_total, double lambda_per_second,
                          Seconds restart_constant)
    {
        if (!(t_save.value > 0))
        {
            throw InvalidArgument("total_overhead: T_save must be > 0");
        }
        const double restart = t_save.value / 2.0 + restart_constant.value;
        return o_save_value.value * t_total.value / t_save.value + restart * t_total.value * lambda_per_second;
    }

    SurvivalInputs survival_inputs_at(const SurvivalSetup &setup, Days t)
    {
        setup.params.validate();
        SurvivalInputs in;
        in.k = setup.k;
        in.n = setup.n;
        in.p_s = weibull_survival(setup.params.lambda_hw, setup.params.shape, t);
        in.p_tr = weibull_survival(setup.params.lambda_sw, setup.params.shape, t);
        in.p_re = setup.reading == SoftwareReading::Literal ? in.p_tr : 1.0;
        return in;
    }

    double survival_at(const SurvivalSetup &setup, Days t, SurvivalMode mode)
    {
        const auto in = survival_inputs_at(setup, t);
        return mode == SurvivalMode::Reft ? p_re_survive(in) : p_ck_survive(in);
    }

    Days solve_interval_for_threshold(const SurvivalSetup &setup, double threshold, SurvivalMode mode)
    {
        if (!(threshold > 0))
        {
            throw InvalidArgument("solve_interval_for_threshold: threshold must be > 0");
        }
        if (threshold >= 1.0)
        {
            return Days{0.0};
        }
        double lo = 0.0;
        double hi = 1e6;
        int expansions = 0;
        while (survival_at(setup, Days{hi}, mode) > threshold)
        {
            if (++expansions > 60)
            {
                throw InvalidArgument("solve_interval_for_threshold: survival never falls to " +
                                      std::to_string(threshold));
            }
            lo = hi;
            hi *= 2.0;
        }
        for (int i = 0; i < 200 && (hi - lo) > 1e-6 * hi; ++i)
        {
            const double mid = 0.5 * (lo + hi);
            if (survival_at(setup, Days{mid}, mode) > threshold)
            {
                lo = mid;
            }
            else
            {
                hi = mid;
            }
        }
        return Days{0.5 * (lo + hi)};
    }

    std::vector<SurvivalRow> generate_survival_curves(const SurvivalSetup &base, const std::vector<double> &shapes,
                                                      const std::vector<double> &t_grid)
    {
        const std::size_t per = t_grid.size();
        std::vector<SurvivalRow> rows(shapes.size() * per);
        for (double t : t_grid)
        {
            if (t < 0)
            {
                throw InvalidArgument("generate_survival_curves: negative time in grid");
            }
        }
        for (double c : shapes)
        {
            SurvivalSetup s = base;
            s.params.shape = c;
            s.params.validate();
        }
        const std::ptrdiff_t total = static_cast<std::ptrdiff_t>(rows.size());
#pragma omp parallel for schedule(static) num_threads(kernel_threads())
        for (std::ptrdiff_t i = 0; i < total; ++i)
        {
            SurvivalSetup s = base;
            s.params.shape = shapes[static_cast<std::size_t>(i) / per];
            const double t = t_grid[static_cast<std::size_t>(i) % per];
            const auto in = survival_inputs_at(s, Days{t});
            rows[i] = {s.params.shape, t, p_re_survive(in), p_ck_survive(in)};
        }
        return rows;
    }

    void write_survival_csv(std::ostream &os, const std::vector<SurvivalRow> &rows)
    {
        const auto old = os.precision(17);
        os << "c,t_days,p_re_survive,p_ck_survive\n";
        for (const auto &r : rows)
        {
            os << r.shape << ',' << r.t_days << ',' << r.p_re << ',' << r.p_ck << '\n';
        }
        os.precision(old);
    }

    std::vector<IntervalRow> interval_report(const SurvivalSetup &base, const std::vector<double> &shapes,
                                             double threshold)
    {
        std::vector<IntervalRow> rows;
        for (double c : shapes)
        {
            SurvivalSetup s = base;
            s.params.shape = c;
            IntervalRow r;
            r.shape = c;
            r.ckpt_days = solve_interval_for_threshold(s, threshold, SurvivalMode::Ckpt).value;
            s.reading = SoftwareReading::Recoverable;
            r.reft_days = solve_interval_for_threshold(s, threshold, SurvivalMode::Reft).value;
            s.reading = SoftwareReading::Literal;
            r.reft_literal_days = solve_interval_for_threshold(s, threshold, SurvivalMode::Reft).value;
            rows.push_back(r);
        }
        return rows;
    }

    void write_interval_report(std::ostream &os, const std::vector<IntervalRow> &rows, double threshold)
    {
        const auto flags = os.flags();
        const auto old = os.precision(6);
        os << "# survival threshold " << threshold << '\n';
        os << "c,ckpt_days,reft_days,reft_literal_days,ratio\n";
        for (const auto &r : rows)
        {
            os << r.shape << ',' << r.ckpt_days << ',' << r.reft_days << ',' << r.reft_literal_days << ','
               << r.reft_days / r.ckpt_days << '\n';
        }
        os.precision(old);
        os.flags(flags);
    }
}

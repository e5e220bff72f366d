#include "oracles.hpp"

#include "reft/errors.hpp"
#include "reft/reliability.hpp"

#include <doctest.h>

#include <sstream>

using namespace reft;

namespace
{
    SurvivalInputs in(std::uint32_t k, std::uint32_t n, double ps, double ptr, double pre)
    {
        SurvivalInputs s;
        s.k = k;
        s.n = n;
        s.p_s = ps;
        s.p_tr = ptr;
        s.p_re = pre;
        return s;
    }
}

TEST_CASE("survival formulas by hand")
{
    CHECK(p_re_survive(in(6, 3, 1.0, 1.0, 1.0)) == 1.0);
    CHECK(p_re_survive(in(4, 2, 0.9, 1.0, 1.0)) == doctest::Approx(0.9801).epsilon(1e-12));
    CHECK(p_re_survive(in(5, 1, 0.3, 1.0, 0.9)) == doctest::Approx(std::pow(0.9, 5)).epsilon(1e-12));
    CHECK(p_ck_survive(in(2, 1, 0.99, 1.0, 1.0)) == doctest::Approx(0.9801).epsilon(1e-12));
    CHECK(p_ck_survive(in(0, 1, 0.5, 0.5, 1.0)) == 1.0);
    CHECK_THROWS_AS(p_re_survive(in(5, 2, 0.9, 1, 1)), InvalidArgument);
    CHECK_THROWS_AS(p_re_survive(in(4, 2, 1.1, 1, 1)), InvalidArgument);
}

TEST_CASE("survival formulas match pattern enumeration")
{
    std::mt19937_64 gen(31);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const std::vector<std::pair<unsigned, unsigned>> shapes{{12, 6}, {12, 4}, {12, 3}, {10, 2}, {8, 4}, {9, 3}};
    for (int i = 0; i < 100; ++i)
    {
        const auto [k, n] = shapes[i % shapes.size()];
        const double ps = 0.5 + 0.5 * u(gen), ptr = 0.8 + 0.2 * u(gen), pre = 0.9 + 0.1 * u(gen);
        const double got = p_re_survive(in(k, n, ps, ptr, pre));
        const double want = oracle::brute_p_re(k, n, ps, pre);
        CHECK(got == doctest::Approx(want).epsilon(1e-10));
        CHECK(p_ck_survive(in(k, n, ps, ptr, pre)) == doctest::Approx(oracle::brute_p_ck(k, ps, ptr)).epsilon(1e-10));
    }
}

TEST_CASE("saving overhead and multi-failure rate")
{
    CHECK(o_save(Seconds{5}, Seconds{3}).value == 2.0);
    CHECK(o_save(Seconds{2}, Seconds{3}).value == 0.0);
    CHECK(o_save(Seconds{3}, Seconds{3}).value == 0.0);
    CHECK(lambda_re_fail(0.1, 2) == doctest::Approx(0.01).epsilon(1e-12));
    CHECK(lambda_re_fail(0.0, 6) == 0.0);
    CHECK(lambda_re_fail(0.3, 1) == 0.0);
}

TEST_CASE("optimal intervals")
{
    CHECK(optimal_interval(Seconds{2}, 1e-4).value == doctest::Approx(200.0).epsilon(1e-12));
    CHECK(std::isinf(optimal_interval(Seconds{2}, 0.0).value));
    CHECK(t_re_sn(Seconds{1.0}, Seconds{3.0}, 1e-5).value == 0.0);
    CHECK(t_re_ckpt(Seconds{5.0}, Seconds{3.0}, 1e-3, 6).value >
          t_re_sn(Seconds{5.0}, Seconds{3.0}, 1e-3).value);
}

TEST_CASE("closed-form intervals minimise the overhead on a grid")
{
    std::mt19937_64 gen(32);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 100; ++i)
    {
        const double t_save = 0.5 + 30.0 * u(gen);
        const double t_comp = 20.0 * u(gen);
        const double lambda = std::pow(10.0, -7.0 + 4.0 * u(gen));
        const std::uint32_t n = 2 + static_cast<std::uint32_t>(u(gen) * 7);
        const double os = o_save(Seconds{t_save}, Seconds{t_comp}).value;
        if (os <= 0.0)
        {
            CHECK(t_re_sn(Seconds{t_save}, Seconds{t_comp}, lambda).value == 0.0);
            continue;
        }
        const double total = 1e6, restart = 60.0 * u(gen);
        CHECK(t_re_sn(Seconds{t_save}, Seconds{t_comp}, lambda).value ==
              doctest::Approx(oracle::grid_argmin(os, lambda, total, restart)).epsilon(0.01));
        CHECK(t_ckpt(Seconds{t_save}, Seconds{t_comp}, lambda).value ==
              doctest::Approx(oracle::grid_argmin(os, lambda, total, restart)).epsilon(0.01));
        const double lre = lambda_re_fail(std::min(1.0, lambda * 1e3), n);
        if (lre > 0)
        {
            CHECK(t_re_ckpt(Seconds{t_save}, Seconds{t_comp}, std::min(1.0, lambda * 1e3), n).value ==
                  doctest::Approx(oracle::grid_argmin(os, lre, total, restart)).epsilon(0.01));
        }
        const double T = t_re_sn(Seconds{t_save}, Seconds{t_comp}, lambda).value;
        CHECK(total_overhead(Seconds{T}, Seconds{os}, Seconds{total}, lambda, Seconds{restart}) ==
              doctest::Approx(oracle::overhead(T, os, total, lambda, restart)).epsilon(1e-12));
    }
}

TEST_CASE("Monte-Carlo failure injection agrees with the formulas")
{
    const double lhw = 0.05, lsw = 0.01;
    for (auto [k, n] : std::vector<std::pair<unsigned, unsigned>>{{16, 4}, {12, 6}, {8, 2}})
    {
        for (double c : {1.0, 1.5})
        {
            SurvivalSetup s;
            s.k = k;
            s.n = n;
            s.params = {lhw, lsw, c};
            s.reading = SoftwareReading::Literal;
            const double t = 1.5;
            const int trials = 20000;
            const auto mc = oracle::monte_carlo(k, n, lhw, lsw, c, t, true, trials, 100 + k + n);
            const double pck = survival_at(s, Days{t}, SurvivalMode::Ckpt);
            const double pre = survival_at(s, Days{t}, SurvivalMode::Reft);
            CHECK(std::abs(mc.ckpt - pck) <= 3 * std::sqrt(pck * (1 - pck) / trials));
            CHECK(std::abs(mc.reft - pre) <= 3 * std::sqrt(pre * (1 - pre) / trials));
        }
    }
}

TEST_CASE("threshold solver")
{
    SurvivalSetup s;
    CHECK(solve_interval_for_threshold(s, 1.0, SurvivalMode::Ckpt).value == 0.0);
    const double ck = solve_interval_for_threshold(s, 0.9, SurvivalMode::Ckpt).value;
    CHECK(ck == doctest::Approx(0.408).epsilon(0.01));
    CHECK(survival_at(s, Days{ck}, SurvivalMode::Ckpt) == doctest::Approx(0.9).epsilon(1e-5));
    // Direct scan oracle: the first grid time below the threshold brackets the solution.
    double scan = 0.0;
    while (survival_at(s, Days{scan}, SurvivalMode::Ckpt) > 0.9)
        scan += 1e-4;
    CHECK(ck <= scan);
    CHECK(ck >= scan - 1e-4);
    SurvivalSetup never;
    never.params = {0.0, 0.0, 1.0};
    CHECK_THROWS_AS(solve_interval_for_threshold(never, 0.9, SurvivalMode::Reft), InvalidArgument);
}

TEST_CASE("curves and report")
{
    SurvivalSetup s;
    const auto rows = generate_survival_curves(s, {1.0, 2.0}, {0.0, 1.0, 2.0});
    REQUIRE(rows.size() == 6);
    CHECK(rows[0].p_re == 1.0);
    CHECK(rows[0].p_ck == 1.0);
    CHECK(rows[4].shape == 2.0);
    CHECK(rows[4].t_days == 1.0);
    std::ostringstream os;
    write_survival_csv(os, rows);
    CHECK(os.str().rfind("c,t_days,p_re_survive,p_ck_survive\n", 0) == 0);
    const auto rep = interval_report(s, {1.3}, 0.9);
    CHECK(rep[0].reft_days > rep[0].reft_literal_days);
    CHECK(rep[0].reft_literal_days > rep[0].ckpt_days);
}

#include <catch2/catch_amalgamated.hpp>

#include "support.hpp"
#include "troughcal/diagnostics.hpp"
#include "troughcal/error.hpp"

#include <random>
#include <set>

using namespace troughcal;
using Catch::Matchers::WithinAbs;

namespace {

ErrorKind kind_of(const std::function<void()>& fn)
{
    try {
        fn();
    } catch (const Error& e) {
        return e.kind();
    }
    return ErrorKind::ConfigError;
}

std::vector<HpgValue> grid(std::size_t loops, std::size_t spans, double value)
{
    std::vector<HpgValue> v;
    for (std::size_t l = 0; l < loops; ++l) {
        for (std::size_t s = 0; s < spans; ++s) {
            v.push_back({"p", std::to_string(l + 1), s, value});
        }
    }
    return v;
}

} // namespace

TEST_CASE("rmse examples", "[diagnostics]")
{
    const std::vector<double> a{3.0, 4.5, -1.0};
    REQUIRE(rmse(a, a) == 0.0);
    const std::vector<double> b{5.0, 6.5, 1.0};
    REQUIRE_THAT(rmse(b, a), WithinAbs(2.0, 1e-15));
    REQUIRE_THAT(rmse(std::vector<double>{0.0, 0.0}, std::vector<double>{1.0, -1.0}), WithinAbs(1.0, 1e-15));
    REQUIRE(kind_of([] { rmse(std::vector<double>{1.0}, std::vector<double>{1.0, 2.0}); }) ==
            ErrorKind::LengthMismatch);
    REQUIRE(kind_of([] { rmse(std::vector<double>{}, std::vector<double>{}); }) == ErrorKind::EmptySeries);
}

TEST_CASE("rmse symmetry and shift invariance", "[diagnostics][property]")
{
    std::mt19937_64 rng(1);
    std::normal_distribution<double> n(450.0, 30.0);
    for (int t = 0; t < 100; ++t) {
        std::vector<double> x(50), y(50);
        for (std::size_t i = 0; i < 50; ++i) {
            x[i] = n(rng);
            y[i] = n(rng);
        }
        const double c = n(rng) - 450.0;
        auto xs = x, ys = y;
        for (std::size_t i = 0; i < 50; ++i) {
            xs[i] += c;
            ys[i] += c;
        }
        REQUIRE(rmse(x, y) == rmse(y, x));
        REQUIRE_THAT(rmse(xs, ys), WithinAbs(rmse(x, y), 1e-9));
        REQUIRE(rmse(x, y) >= 0.0);
    }
}

TEST_CASE("r_squared examples", "[diagnostics]")
{
    const std::vector<double> x{1.0, 2.0, 3.0, 4.5};
    REQUIRE_THAT(r_squared(x, x), WithinAbs(1.0, 1e-15));
    std::vector<double> y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        y[i] = 2.0 * x[i] + 3.0;
    }
    REQUIRE_THAT(r_squared(x, y), WithinAbs(1.0, 1e-15));
    REQUIRE_THAT(r_squared(std::vector<double>{1, 2, 3}, std::vector<double>{1, 2, 2}), WithinAbs(0.75, 1e-15));
    REQUIRE(kind_of([] { r_squared(std::vector<double>{2, 2, 2}, std::vector<double>{1, 2, 3}); }) ==
            ErrorKind::DegenerateInput);
    REQUIRE(kind_of([] { r_squared(std::vector<double>{1}, std::vector<double>{1}); }) ==
            ErrorKind::DegenerateInput);
    REQUIRE(kind_of([] { r_squared(std::vector<double>{1, 2}, std::vector<double>{1}); }) ==
            ErrorKind::LengthMismatch);
}

TEST_CASE("r_squared matches 1 - SS_res / SS_tot and is affine invariant", "[diagnostics][property]")
{
    std::mt19937_64 rng(2);
    std::normal_distribution<double> n(0.0, 1.0);
    for (int t = 0; t < 100; ++t) {
        const std::size_t len = 3 + t % 20;
        std::vector<double> x(len), y(len);
        for (std::size_t i = 0; i < len; ++i) {
            x[i] = n(rng);
            y[i] = 0.7 * x[i] + n(rng);
        }
        // Least-squares oracle.
        double mx = 0, my = 0;
        for (std::size_t i = 0; i < len; ++i) {
            mx += x[i] / static_cast<double>(len);
            my += y[i] / static_cast<double>(len);
        }
        double sxy = 0, sxx = 0;
        for (std::size_t i = 0; i < len; ++i) {
            sxy += (x[i] - mx) * (y[i] - my);
            sxx += (x[i] - mx) * (x[i] - mx);
        }
        const double slope = sxy / sxx, icpt = my - slope * mx;
        double ss_res = 0, ss_tot = 0;
        for (std::size_t i = 0; i < len; ++i) {
            const double r = y[i] - (slope * x[i] + icpt);
            ss_res += r * r;
            ss_tot += (y[i] - my) * (y[i] - my);
        }
        const double r2 = r_squared(x, y);
        REQUIRE_THAT(r2, WithinAbs(1.0 - ss_res / ss_tot, 1e-12));
        REQUIRE(r2 <= 1.0);
        auto z = y;
        for (double& v : z) {
            v = -3.0 * v + 11.0;
        }
        REQUIRE_THAT(r_squared(x, z), WithinAbs(r2, 1e-12));
    }
}

TEST_CASE("equal heat losses flag nothing", "[diagnostics]")
{
    const auto v = grid(8, 4, 1.0);
    const auto r = rank_heat_loss(v);
    REQUIRE(r.entries.size() == 32);
    REQUIRE(r.flagged_count() == 0);
    REQUIRE(r.iqr == 0.0);
}

TEST_CASE("quartiles and threshold", "[diagnostics]")
{
    std::vector<HpgValue> v;
    for (int i = 1; i <= 8; ++i) {
        v.push_back({"p", std::to_string(i), 0, static_cast<double>(i)});
    }
    v.push_back({"p", "9", 0, 40.0});
    // Sorted 1..8, 40: q1 = 3, median = 5, q3 = 7 with linear interpolation.
    const auto r = rank_heat_loss(v, 3.0);
    REQUIRE_THAT(r.median, WithinAbs(5.0, 1e-15));
    REQUIRE_THAT(r.iqr, WithinAbs(4.0, 1e-15));
    REQUIRE_THAT(r.threshold, WithinAbs(17.0, 1e-15));
    REQUIRE(r.flagged_count() == 1);
    REQUIRE(r.entries.front().loop_id == "9");
    REQUIRE(r.entries.front().flagged);
}

TEST_CASE("period values are averaged per span", "[diagnostics]")
{
    std::vector<HpgValue> v{{"n1", "1", 0, 1.0}, {"n2", "1", 0, 3.0}, {"n1", "2", 0, 5.0}};
    const auto r = rank_heat_loss(v);
    REQUIRE(r.entries.size() == 2);
    REQUIRE(r.entries[0].loop_id == "2");
    REQUIRE_THAT(r.entries[1].h_pg, WithinAbs(2.0, 1e-15));
}

TEST_CASE("ranking is a permutation and flags are above threshold", "[diagnostics][property]")
{
    std::mt19937_64 rng(3);
    std::lognormal_distribution<double> d(0.0, 0.5);
    for (int t = 0; t < 50; ++t) {
        auto v = grid(8, 4, 0.0);
        for (auto& x : v) {
            x.value = d(rng);
        }
        const auto r = rank_heat_loss(v, 1.5);
        std::set<std::pair<std::string, std::size_t>> seen;
        for (std::size_t i = 0; i < r.entries.size(); ++i) {
            seen.insert({r.entries[i].loop_id, r.entries[i].span});
            if (i > 0) {
                REQUIRE(r.entries[i - 1].h_pg >= r.entries[i].h_pg);
            }
            REQUIRE(r.entries[i].flagged == (r.entries[i].h_pg > r.threshold));
        }
        REQUIRE(seen.size() == 32);
    }
}

TEST_CASE("planted degraded spans in generator truth rank first", "[diagnostics]")
{
    auto sc = testsupport::scenario(8, 1, 600.0, 0.0, 4);
    SECTION("one span")
    {
        sc.degraded = {{"6", 2, 5.0}};
        const auto r = rank_heat_loss(hpg_values(generate(sc).truth));
        REQUIRE(r.entries[0].loop_id == "6");
        REQUIRE(r.entries[0].span == 2);
        REQUIRE(r.flagged_count() == 1);
    }
    SECTION("two spans keep their planted order")
    {
        sc.degraded = {{"3", 0, 3.0}, {"7", 3, 5.0}};
        const auto r = rank_heat_loss(hpg_values(generate(sc).truth));
        REQUIRE(r.entries[0].loop_id == "7");
        REQUIRE(r.entries[1].loop_id == "3");
        REQUIRE(r.flagged_count() == 2);
    }
}

TEST_CASE("report at truth has noise-level RMSE", "[diagnostics]")
{
    const auto sc = testsupport::scenario(3, 2, 900.0, 0.5, 8);
    const auto data = generate(sc);
    const FitReport r = build_report(data.truth, data.sequences, sc.field);
    REQUIRE(r.sensor_rmse.size() == 15);
    // The initial profile is built from the noisy first row, so short nights
    // carry that noise on top of the measurement noise.
    REQUIRE(r.rmse_overall > 0.45);
    REQUIRE(r.rmse_overall < 0.75);
    double sum = 0.0;
    for (const auto& b : r.beta) {
        sum += b.beta;
    }
    REQUIRE_THAT(sum, WithinAbs(1.0, 1e-12));
    REQUIRE(r.beta_series.size() == 2);
    REQUIRE(r.h_pg.size() == 2 * 3 * 4);
}

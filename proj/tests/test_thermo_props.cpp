#include <catch2/catch_amalgamated.hpp>

#include "troughcal/error.hpp"
#include "troughcal/thermo_props.hpp"

#include <cmath>
#include <limits>

using namespace troughcal;
using Catch::Approx;

TEST_CASE("density at the polynomial reference is the constant term", "[thermo]")
{
    // The shipped fit is referenced to 0 degC, outside its valid range, so
    // the check uses a table referenced inside the range.
    const FluidPropertyTable t(Polynomial({913.9664, -0.87, 4e-4}, 473.15), Polynomial({1.9e6}, 0.0),
                               FluidPropertyTable::HeatCapacityMode::Constant, 285.15, 673.15);
    REQUIRE(t.density(473.15).value == 913.9664);
    REQUIRE_FALSE(t.density(473.15).clamped);
}

TEST_CASE("density decreases with temperature", "[thermo]")
{
    const auto oil = FluidPropertyTable::synthetic_oil();
    REQUIRE(oil.density(293.15).value > oil.density(573.15).value);
    for (double t = oil.t_min(); t < oil.t_max(); t += 1.0) {
        REQUIRE(oil.density(t + 1.0).value < oil.density(t).value);
        REQUIRE(oil.density(t).value > 0.0);
        REQUIRE(oil.heat_capacity(t).value > 0.0);
    }
}

TEST_CASE("default density golden values", "[thermo]")
{
    // Hand evaluation at 200 degC and 180 degC of
    // 1083.25 - 0.90797 x + 7.8116e-4 x^2 - 2.367e-6 x^3.
    const double rho_200 = 1083.25 - 181.594 + 31.2464 - 18.936;          // 913.9664
    const double rho_180 = 1083.25 - 163.4346 + 25.309584 - 13.804344;    // 931.32064
    const auto oil = FluidPropertyTable::synthetic_oil();
    REQUIRE(oil.density(473.15).value == Approx(913.9664).epsilon(1e-12));
    REQUIRE(oil.density(473.15).value == Approx(rho_200).epsilon(1e-12));
    REQUIRE(oil.density_ratio(473.15, 453.15) == Approx(rho_200 / rho_180).epsilon(1e-12));
}

TEST_CASE("density ratio identities", "[thermo]")
{
    const auto oil = FluidPropertyTable::synthetic_oil();
    REQUIRE(oil.density_ratio(400.0, 400.0) == 1.0);
    REQUIRE(oil.density_ratio(560.0, 470.0) < 1.0);
    for (double a = 300.0; a < 660.0; a += 37.0) {
        for (double b = 300.0; b < 660.0; b += 41.0) {
            REQUIRE(oil.density_ratio(a, b) * oil.density_ratio(b, a) == Approx(1.0).epsilon(1e-15));
        }
    }
}

TEST_CASE("analytic derivatives match finite differences", "[thermo]")
{
    const FluidPropertyTable poly(Polynomial({1083.25, -0.90797, 7.8116e-4, -2.367e-6}, 273.15),
                                  Polynomial({1.6e6, 3.1e3, -1.2}, 273.15),
                                  FluidPropertyTable::HeatCapacityMode::Polynomial, 285.15, 673.15);
    for (double t = 300.0; t < 660.0; t += 23.0) {
        const double h = 1e-3;
        const double fd_rho = (poly.density(t + h).value - poly.density(t - h).value) / (2.0 * h);
        const double fd_cv = (poly.heat_capacity(t + h).value - poly.heat_capacity(t - h).value) / (2.0 * h);
        REQUIRE(std::abs(poly.density(t).derivative - fd_rho) <= 1e-8 * std::abs(fd_rho));
        REQUIRE(std::abs(poly.heat_capacity(t).derivative - fd_cv) <= 1e-8 * std::abs(fd_cv));
    }
}

TEST_CASE("out-of-range temperatures clamp and flag", "[thermo]")
{
    const auto oil = FluidPropertyTable::synthetic_oil();
    const auto lo = oil.density(200.0);
    REQUIRE(lo.clamped);
    REQUIRE(lo.value == oil.density(oil.t_min()).value);
    REQUIRE(lo.derivative == 0.0);
    const auto hi = oil.density(800.0);
    REQUIRE(hi.clamped);
    REQUIRE(hi.value == oil.density(oil.t_max()).value);
    REQUIRE_FALSE(oil.density(500.0).clamped);
}

TEST_CASE("non-finite temperatures are rejected", "[thermo]")
{
    const auto oil = FluidPropertyTable::synthetic_oil();
    const double nan = std::numeric_limits<double>::quiet_NaN();
    try {
        (void)oil.density(nan);
        FAIL("expected an error");
    } catch (const Error& e) {
        REQUIRE(e.kind() == ErrorKind::NonFiniteInput);
    }
    REQUIRE_THROWS_AS(oil.density_ratio(std::numeric_limits<double>::infinity(), 400.0), Error);
}

TEST_CASE("fluid tables round-trip through JSON", "[thermo]")
{
    const auto oil = FluidPropertyTable::synthetic_oil();
    const auto back = fluid_from_json(fluid_to_json(oil));
    for (double t = 290.0; t < 670.0; t += 17.0) {
        REQUIRE(back.density(t).value == oil.density(t).value);
        REQUIRE(back.heat_capacity(t).value == oil.heat_capacity(t).value);
    }
}

TEST_CASE("invalid fluid tables are rejected", "[thermo]")
{
    nlohmann::json increasing = {{"density", {{"reference_k", 273.15}, {"coefficients", {900.0, 0.5}}}}};
    REQUIRE_THROWS_AS(fluid_from_json(increasing), Error);
    nlohmann::json negative_cv = {{"heat_capacity", {{"mode", "constant"}, {"value", -1.0}}}};
    REQUIRE_THROWS_AS(fluid_from_json(negative_cv), Error);
    nlohmann::json constant = {{"density", {{"reference_k", 0.0}, {"coefficients", {900.0}}}}};
    REQUIRE(fluid_from_json(constant).density(500.0).value == 900.0);
}

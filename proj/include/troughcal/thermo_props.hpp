#pragma once

#include <json.hpp>

#include <vector>

namespace troughcal {

/// Polynomial in (T - reference), coefficients in ascending order.
class Polynomial {
public:
    Polynomial() = default;
    Polynomial(std::vector<double> coefficients, double reference);

    double value(double t) const noexcept;
    double derivative(double t) const noexcept;

    const std::vector<double>& coefficients() const noexcept { return coefficients_; }
    double reference() const noexcept { return reference_; }

private:
    std::vector<double> coefficients_{0.0};
    double reference_ = 0.0;
};

/// Value of a property correlation at a temperature together with its
/// temperature derivative. `clamped` is set when the input was outside the
/// valid range and the endpoint value was used (the derivative is then zero).
struct PropertyValue {
    double value = 0.0;
    double derivative = 0.0;
    bool clamped = false;
};

/// Density and volumetric heat capacity of the heat-transfer fluid.
/// Temperatures in K, density in kg/m^3, heat capacity in J/(m^3 K).
class FluidPropertyTable {
public:
    enum class HeatCapacityMode { Constant, Polynomial };

    FluidPropertyTable(Polynomial density, Polynomial heat_capacity,
                       HeatCapacityMode mode, double t_min, double t_max);

    /// Synthetic-oil defaults: a cubic density fit over 12..400 degC and a
    /// constant volumetric heat capacity of 1.9 MJ/(m^3 K).
    static FluidPropertyTable synthetic_oil();

    PropertyValue density(double t) const;
    PropertyValue heat_capacity(double t) const;
    double density_ratio(double t_header, double t_local) const;

    double t_min() const noexcept { return t_min_; }
    double t_max() const noexcept { return t_max_; }
    HeatCapacityMode heat_capacity_mode() const noexcept { return mode_; }
    const Polynomial& density_polynomial() const noexcept { return density_; }
    const Polynomial& heat_capacity_polynomial() const noexcept { return heat_capacity_; }

private:
    PropertyValue evaluate(const Polynomial& p, double t) const;

    Polynomial density_;
    Polynomial heat_capacity_;
    HeatCapacityMode mode_;
    double t_min_;
    double t_max_;
};

FluidPropertyTable fluid_from_json(const nlohmann::json& j);
nlohmann::json fluid_to_json(const FluidPropertyTable& table);

} // namespace troughcal

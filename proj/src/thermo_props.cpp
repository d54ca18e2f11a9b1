#include "troughcal/thermo_props.hpp"

#include "troughcal/error.hpp"

#include <algorithm>
#include <cmath>

namespace troughcal {

Polynomial::Polynomial(std::vector<double> coefficients, double reference)
    : coefficients_(std::move(coefficients)), reference_(reference)
{
    if (coefficients_.empty()) {
        coefficients_.push_back(0.0);
    }
}

double Polynomial::value(double t) const noexcept
{
    const double x = t - reference_;
    double acc = 0.0;
    for (auto it = coefficients_.rbegin(); it != coefficients_.rend(); ++it) {
        acc = acc * x + *it;
    }
    return acc;
}

double Polynomial::derivative(double t) const noexcept
{
    const double x = t - reference_;
    double acc = 0.0;
    for (std::size_t k = coefficients_.size(); k-- > 1;) {
        acc = acc * x + static_cast<double>(k) * coefficients_[k];
    }
    return acc;
}

FluidPropertyTable::FluidPropertyTable(Polynomial density, Polynomial heat_capacity,
                                       HeatCapacityMode mode, double t_min, double t_max)
    : density_(std::move(density)), heat_capacity_(std::move(heat_capacity)),
      mode_(mode), t_min_(t_min), t_max_(t_max)
{
    if (!std::isfinite(t_min_) || !std::isfinite(t_max_) || !(t_min_ > 0.0) || !(t_max_ > t_min_)) {
        throw Error(ErrorKind::ConfigError, "fluid property range must satisfy 0 < t_min < t_max");
    }
    if (mode_ == HeatCapacityMode::Constant) {
        heat_capacity_ = Polynomial({heat_capacity_.value(heat_capacity_.reference())}, 0.0);
    }
    constexpr int samples = 1000;
    for (int i = 0; i <= samples; ++i) {
        const double t = t_min_ + (t_max_ - t_min_) * i / samples;
        if (!(density_.value(t) > 0.0)) {
            throw Error(ErrorKind::ConfigError, "fluid density must be positive over the valid range");
        }
        if (!(density_.derivative(t) < 0.0) && density_.coefficients().size() > 1) {
            throw Error(ErrorKind::ConfigError, "fluid density must decrease with temperature");
        }
        if (!(heat_capacity_.value(t) > 0.0)) {
            throw Error(ErrorKind::ConfigError, "fluid heat capacity must be positive over the valid range");
        }
    }
}

FluidPropertyTable FluidPropertyTable::synthetic_oil()
{
    Polynomial density({1083.25, -0.90797, 7.8116e-4, -2.367e-6}, 273.15);
    Polynomial capacity({1.9e6}, 0.0);
    return FluidPropertyTable(std::move(density), std::move(capacity),
                              HeatCapacityMode::Constant, 285.15, 673.15);
}

PropertyValue FluidPropertyTable::evaluate(const Polynomial& p, double t) const
{
    if (!std::isfinite(t)) {
        throw Error(ErrorKind::NonFiniteInput, "non-finite temperature passed to fluid properties");
    }
    if (t < t_min_) {
        return {p.value(t_min_), 0.0, true};
    }
    if (t > t_max_) {
        return {p.value(t_max_), 0.0, true};
    }
    return {p.value(t), p.derivative(t), false};
}

PropertyValue FluidPropertyTable::density(double t) const
{
    return evaluate(density_, t);
}

PropertyValue FluidPropertyTable::heat_capacity(double t) const
{
    if (mode_ == HeatCapacityMode::Constant) {
        if (!std::isfinite(t)) {
            throw Error(ErrorKind::NonFiniteInput, "non-finite temperature passed to fluid properties");
        }
        return {heat_capacity_.coefficients().front(), 0.0, false};
    }
    return evaluate(heat_capacity_, t);
}

double FluidPropertyTable::density_ratio(double t_header, double t_local) const
{
    return density(t_header).value / density(t_local).value;
}

namespace {

Polynomial polynomial_from_json(const nlohmann::json& j)
{
    return Polynomial(j.at("coefficients").get<std::vector<double>>(), j.value("reference_k", 0.0));
}

nlohmann::json polynomial_to_json(const Polynomial& p)
{
    return {{"reference_k", p.reference()}, {"coefficients", p.coefficients()}};
}

} // namespace

FluidPropertyTable fluid_from_json(const nlohmann::json& j)
{
    const FluidPropertyTable defaults = FluidPropertyTable::synthetic_oil();
    try {
        Polynomial density = j.contains("density") ? polynomial_from_json(j.at("density"))
                                                    : defaults.density_polynomial();
        Polynomial capacity = defaults.heat_capacity_polynomial();
        auto mode = FluidPropertyTable::HeatCapacityMode::Constant;
        if (j.contains("heat_capacity")) {
            const auto& hc = j.at("heat_capacity");
            const std::string m = hc.value("mode", std::string("constant"));
            if (m == "constant") {
                capacity = Polynomial({hc.at("value").get<double>()}, 0.0);
            } else if (m == "polynomial") {
                capacity = polynomial_from_json(hc);
                mode = FluidPropertyTable::HeatCapacityMode::Polynomial;
            } else {
                throw Error(ErrorKind::ConfigError, "unknown heat_capacity mode '" + m + "'");
            }
        }
        return FluidPropertyTable(std::move(density), std::move(capacity), mode,
                                  j.value("t_min_k", defaults.t_min()),
                                  j.value("t_max_k", defaults.t_max()));
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::ConfigError, std::string("fluid config: ") + e.what());
    }
}

nlohmann::json fluid_to_json(const FluidPropertyTable& table)
{
    nlohmann::json hc;
    if (table.heat_capacity_mode() == FluidPropertyTable::HeatCapacityMode::Constant) {
        hc = {{"mode", "constant"}, {"value", table.heat_capacity_polynomial().coefficients().front()}};
    } else {
        hc = polynomial_to_json(table.heat_capacity_polynomial());
        hc["mode"] = "polynomial";
    }
    return {{"t_min_k", table.t_min()},
            {"t_max_k", table.t_max()},
            {"density", polynomial_to_json(table.density_polynomial())},
            {"heat_capacity", hc}};
}

} // namespace troughcal

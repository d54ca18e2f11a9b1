#pragma once

#include "troughcal/thermo_props.hpp"

#include <span>
#include <vector>

namespace troughcal {

/// Global valve-model coefficients and flow-meter bias.
struct AllocationParams {
    double a = 0.0;     ///< 1/K
    double b = 1.0;
    double alpha = 1.0; ///< > 0
};

/// beta = softmax((a * T_mu + b) o omega). Entries positive, summing to one.
std::vector<double> mass_flow_ratios(std::span<const double> t_mu, std::span<const double> omega,
                                     const AllocationParams& params);

/// Vector-Jacobian product of the softmax: given dL/dbeta returns dL/dlogits.
std::vector<double> softmax_backward(std::span<const double> beta, std::span<const double> d_beta);

struct AllocationGradient {
    double d_a = 0.0;
    double d_b = 0.0;
    std::vector<double> d_omega;
};

/// Pulls dL/dbeta back to (a, b, omega).
AllocationGradient mass_flow_ratios_backward(std::span<const double> t_mu,
                                             std::span<const double> omega,
                                             const AllocationParams& params,
                                             std::span<const double> beta,
                                             std::span<const double> d_beta);

struct FlowFlags {
    bool negative_flow = false;
    bool property_clamped = false;
};

/// Volume flows below this are treated as meter noise and clamp silently.
inline constexpr double kFlowNoiseFloor = 1e-6;

/// u = beta_i * rho(T_header)/rho(T_local) * alpha * V_dot / A_f, in m/s.
double loop_velocity(double beta_i, double v_dot_h, double t_header, double t_local, double alpha,
                     double fluid_area, const FluidPropertyTable& fluid, FlowFlags* flags = nullptr);

/// Header mass flow rho(T_header) * V_dot, in kg/s.
double subfield_mass_flow(double v_dot_h, double t_header, const FluidPropertyTable& fluid,
                          FlowFlags* flags = nullptr);

} // namespace troughcal

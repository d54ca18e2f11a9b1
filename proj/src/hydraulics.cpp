#include "troughcal/hydraulics.hpp"

#include "troughcal/error.hpp"

#include <algorithm>
#include <cmath>

namespace troughcal {

namespace {

void check_inputs(std::span<const double> t_mu, std::span<const double> omega)
{
    if (t_mu.size() != omega.size()) {
        throw Error(ErrorKind::LengthMismatch, "T_mu and omega lengths differ");
    }
    if (t_mu.empty()) {
        throw Error(ErrorKind::LengthMismatch, "mass-flow allocation needs at least one loop");
    }
    for (std::size_t i = 0; i < t_mu.size(); ++i) {
        if (!std::isfinite(t_mu[i]) || !std::isfinite(omega[i])) {
            throw Error(ErrorKind::NonFiniteInput, "non-finite T_mu or omega entry");
        }
    }
}

double clamp_flow(double v_dot_h, FlowFlags* flags)
{
    if (!std::isfinite(v_dot_h)) {
        throw Error(ErrorKind::NonFiniteInput, "non-finite volume flow");
    }
    if (v_dot_h < 0.0) {
        if (v_dot_h < -kFlowNoiseFloor && flags != nullptr) {
            flags->negative_flow = true;
        }
        return 0.0;
    }
    return v_dot_h;
}

} // namespace

std::vector<double> mass_flow_ratios(std::span<const double> t_mu, std::span<const double> omega,
                                     const AllocationParams& params)
{
    check_inputs(t_mu, omega);
    std::vector<double> beta(t_mu.size());
    for (std::size_t i = 0; i < beta.size(); ++i) {
        beta[i] = (params.a * t_mu[i] + params.b) * omega[i];
    }
    const double peak = *std::max_element(beta.begin(), beta.end());
    double total = 0.0;
    for (double& z : beta) {
        z = std::exp(z - peak);
        total += z;
    }
    for (double& z : beta) {
        z /= total;
    }
    return beta;
}

std::vector<double> softmax_backward(std::span<const double> beta, std::span<const double> d_beta)
{
    if (beta.size() != d_beta.size()) {
        throw Error(ErrorKind::LengthMismatch, "beta and d_beta lengths differ");
    }
    double weighted = 0.0;
    for (std::size_t i = 0; i < beta.size(); ++i) {
        weighted += beta[i] * d_beta[i];
    }
    std::vector<double> d_logits(beta.size());
    for (std::size_t i = 0; i < beta.size(); ++i) {
        d_logits[i] = beta[i] * (d_beta[i] - weighted);
    }
    return d_logits;
}

AllocationGradient mass_flow_ratios_backward(std::span<const double> t_mu,
                                             std::span<const double> omega,
                                             const AllocationParams& params,
                                             std::span<const double> beta,
                                             std::span<const double> d_beta)
{
    check_inputs(t_mu, omega);
    const std::vector<double> d_logits = softmax_backward(beta, d_beta);
    AllocationGradient g;
    g.d_omega.resize(omega.size());
    for (std::size_t i = 0; i < omega.size(); ++i) {
        g.d_a += d_logits[i] * omega[i] * t_mu[i];
        g.d_b += d_logits[i] * omega[i];
        g.d_omega[i] = d_logits[i] * (params.a * t_mu[i] + params.b);
    }
    return g;
}

double loop_velocity(double beta_i, double v_dot_h, double t_header, double t_local, double alpha,
                     double fluid_area, const FluidPropertyTable& fluid, FlowFlags* flags)
{
    if (!std::isfinite(beta_i) || !std::isfinite(alpha) || !std::isfinite(fluid_area)) {
        throw Error(ErrorKind::NonFiniteInput, "non-finite loop velocity input");
    }
    const double flow = clamp_flow(v_dot_h, flags);
    if (flow == 0.0) {
        return 0.0;
    }
    const PropertyValue rho_h = fluid.density(t_header);
    const PropertyValue rho_l = fluid.density(t_local);
    if (flags != nullptr && (rho_h.clamped || rho_l.clamped)) {
        flags->property_clamped = true;
    }
    return beta_i * (rho_h.value / rho_l.value) * alpha * flow / fluid_area;
}

double subfield_mass_flow(double v_dot_h, double t_header, const FluidPropertyTable& fluid,
                          FlowFlags* flags)
{
    const double flow = clamp_flow(v_dot_h, flags);
    const PropertyValue rho = fluid.density(t_header);
    if (flags != nullptr && rho.clamped) {
        flags->property_clamped = true;
    }
    return rho.value * flow;
}

} // namespace troughcal

#pragma once

#include "troughcal/thermal_pde.hpp"

#include <cstddef>
#include <span>
#include <vector>

namespace troughcal {

/// Weighted sensor misfit of one loop over one sequence:
///   J = sum_{n >= 1} sum_m weights[m] * (T_f^n[cell_m] - measured[n][m])^2
/// `measured` is step-major with drives.size() + 1 rows; row 0 is not scored.
struct LoopProblem {
    const LoopModel* model = nullptr;
    ThermalState initial;
    std::vector<BoundaryDrive> drives;
    std::vector<double> h_pg; ///< per cell
    std::span<const double> measured;
    std::span<const double> weights;
};

double loop_objective(const LoopProblem& problem);

struct LoopAdjoint {
    double objective = 0.0;
    std::vector<double> d_velocity; ///< dJ/d drives[n].velocity
    std::vector<double> d_h_pg;     ///< dJ/d h_pg[cell]
};

/// Reverse sweep of the explicit scheme. States are checkpointed every
/// `checkpoint_interval` steps and recomputed blockwise during the sweep.
/// `objective` is bitwise equal to loop_objective().
LoopAdjoint loop_adjoint(const LoopProblem& problem, std::size_t checkpoint_interval = 64);

/// Transpose of one explicit step. Given adjoints of the next state, writes
/// adjoints of `state` and accumulates parameter sensitivities.
void step_adjoint(const ThermalState& state, const BoundaryDrive& drive,
                  std::span<const double> h_pg, const LoopModel& model,
                  std::span<const double> next_fluid, std::span<const double> next_pipe,
                  std::span<const double> next_glass, std::span<double> fluid,
                  std::span<double> pipe, std::span<double> glass, double& d_velocity,
                  std::span<double> d_h_pg);

} // namespace troughcal

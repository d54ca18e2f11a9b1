#pragma once

#include "troughcal/thermo_props.hpp"
#include "troughcal/topology.hpp"

#include <cstddef>
#include <span>
#include <vector>

namespace troughcal {

inline constexpr double kStefanBoltzmann = 5.670374419e-8;

/// Per-segment temperatures (K) of fluid, absorber pipe and glass envelope.
struct ThermalState {
    std::vector<double> fluid;
    std::vector<double> pipe;
    std::vector<double> glass;
    double time_s = 0.0;

    ThermalState() = default;
    explicit ThermalState(std::size_t n, double t = 0.0)
        : fluid(n, t), pipe(n, t), glass(n, t) {}

    std::size_t size() const noexcept { return fluid.size(); }
};

/// Boundary inputs for one explicit step. `velocity` is the loop velocity at
/// header density (beta * alpha * V_dot / A_f); each cell rescales it by
/// rho(T_header) / rho(T_f).
struct BoundaryDrive {
    double inlet_k = 0.0;
    double ambient_k = 0.0;
    double sky_k = 0.0;
    double header_k = 0.0;
    double velocity = 0.0;
};

inline double sky_temperature(double ambient_k, double offset_k) noexcept
{
    return ambient_k - offset_k;
}

/// Immutable discretization of one loop.
struct LoopModel {
    GeometrySpec geometry;
    const FluidPropertyTable* fluid = nullptr;
    double dt = 5.0;
    double dx = 10.0;
    std::size_t n_segments = 0;
    std::vector<std::size_t> sensor_cells;
    std::vector<std::size_t> span_of_cell;
    std::size_t n_spans = 1;

    /// Fails with DiffusionStabilityViolation when dt > dx^2 c_vp / (2 k_p).
    /// The model keeps a pointer to the fluid table, which must outlive it.
    static LoopModel make(const LoopSpec& loop, const FieldModel& field);
    static LoopModel make(const GeometrySpec& geometry, const FluidPropertyTable& fluid,
                          std::size_t n_segments, std::vector<std::size_t> sensor_cells,
                          double dt, double dx);
    static LoopModel make(const LoopSpec&, FieldModel&&) = delete;
    static LoopModel make(const GeometrySpec&, FluidPropertyTable&&, std::size_t, std::vector<std::size_t>,
                          double, double) = delete;
};

/// Each step_* writes the next-step temperatures of one body into `out`.
/// step_fluid throws CflViolation when any cell exceeds unit Courant number.
void step_fluid(const ThermalState& state, const BoundaryDrive& drive, const LoopModel& model,
                std::span<double> out);
void step_pipe(const ThermalState& state, std::span<const double> h_pg, const LoopModel& model,
               std::span<double> out);
void step_glass(const ThermalState& state, const BoundaryDrive& drive, std::span<const double> h_pg,
                const LoopModel& model, std::span<double> out);

/// Full explicit step of all three bodies; `next` is resized as needed.
void step(const ThermalState& state, const BoundaryDrive& drive, std::span<const double> h_pg,
          const LoopModel& model, ThermalState& next);

struct Trajectory {
    std::vector<ThermalState> states;        ///< empty unless requested
    std::vector<std::vector<double>> sensors; ///< [step][sensor] fluid temperature
};

/// Runs drives.size() steps from `initial`. Step errors are rethrown with the
/// failing timestep index attached.
Trajectory simulate_loop(const ThermalState& initial, std::span<const BoundaryDrive> drives,
                         std::span<const double> h_pg, const LoopModel& model,
                         bool keep_states = true);

/// Initial condition from the first sensor row: fluid linearly interpolated
/// between sensor cells (held flat upstream of the first sensor), pipe equal
/// to fluid, glass at the fluid/ambient midpoint.
ThermalState initial_state_from_sensors(std::span<const double> readings,
                                        std::span<const std::size_t> sensor_cells,
                                        std::size_t n_segments, double ambient_k);

/// Broadcasts per-span values to cells.
std::vector<double> cells_from_spans(std::span<const double> span_values, const LoopModel& model);

} // namespace troughcal

#include "troughcal/thermal_pde.hpp"

#include "troughcal/error.hpp"

#include <cmath>
#include <sstream>

namespace troughcal {

namespace {

// Small slack so that a Courant number computed as exactly 1 still passes.
constexpr double kCourantSlack = 1e-12;

double pow4(double t) noexcept
{
    const double t2 = t * t;
    return t2 * t2;
}

} // namespace

LoopModel LoopModel::make(const GeometrySpec& geometry, const FluidPropertyTable& fluid,
                          std::size_t n_segments, std::vector<std::size_t> sensor_cells, double dt,
                          double dx)
{
    validate_geometry(geometry, "loop model");
    if (!(dt > 0.0) || !(dx > 0.0) || n_segments < 1) {
        throw Error(ErrorKind::InvalidGeometry, "loop model needs dt > 0, dx > 0, n_segments >= 1");
    }
    if (dt > diffusion_max_timestep(geometry, dx)) {
        throw Error(ErrorKind::DiffusionStabilityViolation, "timestep exceeds dx^2 c_vp / (2 k_p)");
    }
    for (std::size_t k = 0; k < sensor_cells.size(); ++k) {
        if (sensor_cells[k] >= n_segments || (k > 0 && sensor_cells[k] <= sensor_cells[k - 1])) {
            throw Error(ErrorKind::SensorOutOfRange, "sensor cells must be increasing and < n_segments");
        }
    }
    LoopModel m;
    m.geometry = geometry;
    m.fluid = &fluid;
    m.dt = dt;
    m.dx = dx;
    m.n_segments = n_segments;
    m.sensor_cells = std::move(sensor_cells);
    m.n_spans = m.sensor_cells.size() > 1 ? m.sensor_cells.size() - 1 : 1;
    m.span_of_cell.assign(n_segments, 0);
    for (std::size_t j = 0; j < n_segments; ++j) {
        for (std::size_t k = 1; k + 1 < m.sensor_cells.size(); ++k) {
            if (j > m.sensor_cells[k]) {
                m.span_of_cell[j] = k;
            }
        }
    }
    return m;
}

LoopModel LoopModel::make(const LoopSpec& loop, const FieldModel& field)
{
    return make(loop.geometry, field.fluid, loop.n_segments, loop.sensor_cells(),
                field.topology.timestep_s, field.topology.segment_length_m);
}

void step_fluid(const ThermalState& state, const BoundaryDrive& drive, const LoopModel& model,
                std::span<double> out)
{
    const auto& g = model.geometry;
    const auto& fluid = *model.fluid;
    const std::size_t n = state.size();
    if (!std::isfinite(drive.velocity) || drive.velocity < 0.0) {
        throw Error(ErrorKind::CflViolation, "loop velocity must be finite and non-negative");
    }
    const double rho_header = fluid.density(drive.header_k).value;
    const double advect = drive.velocity * rho_header * model.dt / model.dx;
    const double exchange = model.dt * g.h_fluid_pipe * g.pipe_perimeter / g.fluid_area;
    for (std::size_t j = 0; j < n; ++j) {
        const double tf = state.fluid[j];
        const double upstream = j == 0 ? drive.inlet_k : state.fluid[j - 1];
        const double courant = advect / fluid.density(tf).value;
        if (courant > 1.0 + kCourantSlack) {
            std::ostringstream msg;
            msg << "Courant number " << courant << " > 1 in cell " << j << " (u = "
                << courant * model.dx / model.dt << " m/s, limit " << model.dx / model.dt << " m/s)";
            throw Error(ErrorKind::CflViolation, msg.str());
        }
        const double kf = exchange / fluid.heat_capacity(tf).value;
        out[j] = tf - courant * (tf - upstream) + kf * (state.pipe[j] - tf);
    }
}

void step_pipe(const ThermalState& state, std::span<const double> h_pg, const LoopModel& model,
               std::span<double> out)
{
    const auto& g = model.geometry;
    const std::size_t n = state.size();
    const double gamma = model.dt / (g.pipe_heat_capacity * g.pipe_area);
    const double conduction = g.pipe_conductivity * g.pipe_area / (model.dx * model.dx);
    const double radiation = g.pipe_emissivity * kStefanBoltzmann * g.pipe_perimeter;
    for (std::size_t j = 0; j < n; ++j) {
        const double tp = state.pipe[j];
        const double tg = state.glass[j];
        // Zero-flux ends: mirrored ghost cells.
        const double left = j == 0 ? tp : state.pipe[j - 1];
        const double right = j + 1 == n ? tp : state.pipe[j + 1];
        const double q = -g.h_fluid_pipe * g.pipe_perimeter * (tp - state.fluid[j]) +
                         h_pg[j] * g.pipe_perimeter * (tg - tp) +
                         radiation * (pow4(tg) - pow4(tp)) +
                         conduction * (right - 2.0 * tp + left);
        out[j] = tp + gamma * q;
    }
}

void step_glass(const ThermalState& state, const BoundaryDrive& drive, std::span<const double> h_pg,
                const LoopModel& model, std::span<double> out)
{
    const auto& g = model.geometry;
    const std::size_t n = state.size();
    const double gamma = model.dt / (g.glass_heat_capacity * g.glass_area);
    const double radiation = g.glass_emissivity * kStefanBoltzmann * g.glass_perimeter;
    const double sky4 = pow4(drive.sky_k);
    for (std::size_t j = 0; j < n; ++j) {
        const double tg = state.glass[j];
        const double q = -h_pg[j] * g.pipe_perimeter * (tg - state.pipe[j]) +
                         g.h_glass_ambient * g.glass_perimeter * (drive.ambient_k - tg) +
                         radiation * (sky4 - pow4(tg));
        out[j] = tg + gamma * q;
    }
}

void step(const ThermalState& state, const BoundaryDrive& drive, std::span<const double> h_pg,
          const LoopModel& model, ThermalState& next)
{
    const std::size_t n = state.size();
    next.fluid.resize(n);
    next.pipe.resize(n);
    next.glass.resize(n);
    step_fluid(state, drive, model, next.fluid);
    step_pipe(state, h_pg, model, next.pipe);
    step_glass(state, drive, h_pg, model, next.glass);
    next.time_s = state.time_s + model.dt;
}

Trajectory simulate_loop(const ThermalState& initial, std::span<const BoundaryDrive> drives,
                         std::span<const double> h_pg, const LoopModel& model, bool keep_states)
{
    if (initial.size() != model.n_segments || h_pg.size() != model.n_segments) {
        throw Error(ErrorKind::LengthMismatch, "state or h_pg length differs from segment count");
    }
    Trajectory traj;
    auto sample = [&](const ThermalState& s) {
        std::vector<double> row;
        row.reserve(model.sensor_cells.size());
        for (std::size_t c : model.sensor_cells) {
            row.push_back(s.fluid[c]);
        }
        traj.sensors.push_back(std::move(row));
    };
    ThermalState current = initial;
    ThermalState next(model.n_segments);
    if (keep_states) {
        traj.states.reserve(drives.size() + 1);
        traj.states.push_back(current);
    }
    traj.sensors.reserve(drives.size() + 1);
    sample(current);
    for (std::size_t n = 0; n < drives.size(); ++n) {
        try {
            step(current, drives[n], h_pg, model, next);
        } catch (const Error& e) {
            throw Error(e.kind(), e.message(), n);
        }
        std::swap(current, next);
        sample(current);
        if (keep_states) {
            traj.states.push_back(current);
        }
    }
    return traj;
}

ThermalState initial_state_from_sensors(std::span<const double> readings,
                                        std::span<const std::size_t> sensor_cells,
                                        std::size_t n_segments, double ambient_k)
{
    if (readings.size() != sensor_cells.size() || readings.empty()) {
        throw Error(ErrorKind::LengthMismatch, "one reading per sensor cell required");
    }
    ThermalState s(n_segments);
    std::size_t k = 0;
    for (std::size_t j = 0; j < n_segments; ++j) {
        while (k + 1 < sensor_cells.size() && j > sensor_cells[k + 1]) {
            ++k;
        }
        double t;
        if (j == sensor_cells[k] || (k + 1 < sensor_cells.size() && j == sensor_cells[k + 1])) {
            t = j == sensor_cells[k] ? readings[k] : readings[k + 1];
        } else if (j <= sensor_cells.front()) {
            t = readings.front();
        } else if (k + 1 >= sensor_cells.size()) {
            t = readings.back();
        } else {
            const double w = static_cast<double>(j - sensor_cells[k]) /
                             static_cast<double>(sensor_cells[k + 1] - sensor_cells[k]);
            t = readings[k] + w * (readings[k + 1] - readings[k]);
        }
        s.fluid[j] = t;
        s.pipe[j] = t;
        s.glass[j] = 0.5 * (t + ambient_k);
    }
    return s;
}

std::vector<double> cells_from_spans(std::span<const double> span_values, const LoopModel& model)
{
    if (span_values.size() != model.n_spans) {
        throw Error(ErrorKind::LengthMismatch, "one value per span required");
    }
    std::vector<double> cells(model.n_segments);
    for (std::size_t j = 0; j < model.n_segments; ++j) {
        cells[j] = span_values[model.span_of_cell[j]];
    }
    return cells;
}

} // namespace troughcal

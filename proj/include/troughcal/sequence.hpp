#pragma once

#include "troughcal/topology.hpp"

#include <cstddef>
#include <string>
#include <vector>

namespace troughcal {

/// Sensor readings of one loop, step-major: values[step * n_sensors + sensor].
struct LoopReadings {
    std::string loop_id;
    std::size_t n_sensors = 0;
    std::vector<double> values;

    double at(std::size_t step, std::size_t sensor) const noexcept
    {
        return values[step * n_sensors + sensor];
    }
    std::size_t steps() const noexcept { return n_sensors == 0 ? 0 : values.size() / n_sensors; }
};

/// One nighttime circulation period resampled to the model timestep.
/// Temperatures in K, flow in m^3/s, times in seconds since the epoch.
struct HomogenizationSequence {
    std::string id;
    std::string subfield_id;
    std::string period_id; ///< h_pg period; defaults to the sequence id
    int valve_era = 0;
    double t_start = 0.0;
    double dt = 5.0;
    std::vector<double> v_dot_h;
    std::vector<double> t_header;
    std::vector<double> t_ambient;
    std::vector<LoopReadings> loops;

    std::size_t steps() const noexcept { return v_dot_h.size(); }
    double t_end() const noexcept
    {
        return steps() == 0 ? t_start : t_start + dt * static_cast<double>(steps() - 1);
    }
    const LoopReadings* find_loop(const std::string& loop_id) const noexcept;
};

/// Checks lengths, finiteness, timestep and that the loop set matches the subfield.
void validate_sequence(const HomogenizationSequence& seq, const FieldTopology& topology);

/// Readings of each subfield loop in topology order.
std::vector<const LoopReadings*> readings_in_topology_order(const HomogenizationSequence& seq,
                                                            const SubfieldSpec& subfield);

} // namespace troughcal

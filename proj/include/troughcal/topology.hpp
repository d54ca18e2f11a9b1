#pragma once

#include "troughcal/thermo_props.hpp"

#include <json.hpp>

#include <cstddef>
#include <string>
#include <vector>

namespace troughcal {

/// Receiver cross-section and material data for one loop. Areas in m^2,
/// perimeters in m, heat capacities volumetric in J/(m^3 K), convective
/// coefficients in W/(m^2 K), conductivity in W/(m K).
struct GeometrySpec {
    double fluid_area = 3.4212e-3;
    double pipe_area = 4.2726e-4;
    double glass_area = 1.1498e-3;
    double pipe_perimeter = 0.21991;
    double glass_perimeter = 0.39270;
    double pipe_emissivity = 0.10;
    double glass_emissivity = 0.86;
    double pipe_conductivity = 20.0;
    double pipe_heat_capacity = 3.925e6;
    double glass_heat_capacity = 1.784e6;
    double h_fluid_pipe = 300.0;
    double h_glass_ambient = 10.0;
};

struct SensorSpec {
    double fraction = 1.0; ///< position along the loop, (0, 1]
    std::size_t cell = 0;
};

struct LoopSpec {
    std::string id;
    double length_m = 600.0;
    std::size_t n_segments = 0;
    std::vector<SensorSpec> sensors;
    GeometrySpec geometry;

    /// Sensor-to-sensor spans; cells upstream of the first sensor belong to span 0.
    std::size_t n_spans() const noexcept { return sensors.size() > 1 ? sensors.size() - 1 : 1; }
    std::size_t span_of_cell(std::size_t cell) const noexcept;
    std::vector<std::size_t> sensor_cells() const;
};

struct SubfieldSpec {
    std::string id;
    std::vector<LoopSpec> loops;
};

struct FieldTopology {
    std::vector<SubfieldSpec> subfields;
    double segment_length_m = 10.0;
    double timestep_s = 5.0;

    std::size_t loop_count() const noexcept;
    const SubfieldSpec& subfield(const std::string& id) const;
    std::size_t subfield_index(const std::string& id) const;
    const LoopSpec* find_loop(const std::string& id) const noexcept;
    /// Loop ids in field order (subfield-major).
    std::vector<std::string> loop_ids() const;
};

enum class TMuMode { Instantaneous, PeriodMean };
enum class AlphaMode { PerSubfield, Global };

/// Everything the forward model needs besides learnable parameters.
struct FieldModel {
    FieldTopology topology;
    FluidPropertyTable fluid = FluidPropertyTable::synthetic_oil();
    double sky_offset_k = 20.0;
    TMuMode t_mu_mode = TMuMode::Instantaneous;
    AlphaMode alpha_mode = AlphaMode::PerSubfield;
};

/// Parsed but unvalidated topology input; see docs/config.md for the schema.
struct TopologyConfig {
    nlohmann::json tree;
};

FieldTopology build_topology(const TopologyConfig& config);

/// Builds topology, fluid table and model options from one config tree.
FieldModel build_field_model(const TopologyConfig& config);
FieldModel load_field_model(const std::string& path);
TopologyConfig read_topology_config(const std::string& path);

/// Serializes a model back into a config tree that rebuilds it exactly.
nlohmann::json field_model_to_json(const FieldModel& model);

/// Largest fluid speed admissible by the explicit upwind scheme.
double cfl_max_velocity(const FieldTopology& topology) noexcept;

/// Explicit diffusion bound dx^2 c_vp / (2 k_p); infinite when k_p = 0.
double diffusion_max_timestep(const GeometrySpec& geometry, double dx) noexcept;

void validate_geometry(const GeometrySpec& geometry, const std::string& where);

} // namespace troughcal

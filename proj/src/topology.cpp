#include "troughcal/topology.hpp"

#include "troughcal/error.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <set>

namespace troughcal {

std::size_t LoopSpec::span_of_cell(std::size_t cell) const noexcept
{
    std::size_t span = 0;
    // Span k covers cells (sensor[k], sensor[k+1]].
    for (std::size_t k = 1; k + 1 < sensors.size(); ++k) {
        if (cell > sensors[k].cell) {
            span = k;
        }
    }
    return span;
}

std::vector<std::size_t> LoopSpec::sensor_cells() const
{
    std::vector<std::size_t> cells;
    cells.reserve(sensors.size());
    for (const auto& s : sensors) {
        cells.push_back(s.cell);
    }
    return cells;
}

std::size_t FieldTopology::loop_count() const noexcept
{
    std::size_t n = 0;
    for (const auto& sf : subfields) {
        n += sf.loops.size();
    }
    return n;
}

std::size_t FieldTopology::subfield_index(const std::string& id) const
{
    for (std::size_t i = 0; i < subfields.size(); ++i) {
        if (subfields[i].id == id) {
            return i;
        }
    }
    throw Error(ErrorKind::ConfigError, "unknown subfield '" + id + "'");
}

const SubfieldSpec& FieldTopology::subfield(const std::string& id) const
{
    return subfields[subfield_index(id)];
}

const LoopSpec* FieldTopology::find_loop(const std::string& id) const noexcept
{
    for (const auto& sf : subfields) {
        for (const auto& loop : sf.loops) {
            if (loop.id == id) {
                return &loop;
            }
        }
    }
    return nullptr;
}

std::vector<std::string> FieldTopology::loop_ids() const
{
    std::vector<std::string> ids;
    for (const auto& sf : subfields) {
        for (const auto& loop : sf.loops) {
            ids.push_back(loop.id);
        }
    }
    return ids;
}

double cfl_max_velocity(const FieldTopology& topology) noexcept
{
    return topology.segment_length_m / topology.timestep_s;
}

double diffusion_max_timestep(const GeometrySpec& geometry, double dx) noexcept
{
    if (geometry.pipe_conductivity <= 0.0) {
        return std::numeric_limits<double>::infinity();
    }
    return dx * dx * geometry.pipe_heat_capacity / (2.0 * geometry.pipe_conductivity);
}

void validate_geometry(const GeometrySpec& g, const std::string& where)
{
    auto positive = [&](double v, const char* name) {
        if (!std::isfinite(v) || !(v > 0.0)) {
            throw Error(ErrorKind::InvalidGeometry, where + ": " + name + " must be > 0");
        }
    };
    auto non_negative = [&](double v, const char* name) {
        if (!std::isfinite(v) || v < 0.0) {
            throw Error(ErrorKind::InvalidGeometry, where + ": " + name + " must be >= 0");
        }
    };
    positive(g.fluid_area, "A_f");
    positive(g.pipe_area, "A_p");
    positive(g.glass_area, "A_g");
    positive(g.pipe_perimeter, "P_p");
    positive(g.glass_perimeter, "P_g");
    positive(g.pipe_heat_capacity, "c_vp");
    positive(g.glass_heat_capacity, "c_vg");
    // Zero exchange coefficients are admitted for adiabatic test setups.
    non_negative(g.pipe_conductivity, "k_p");
    non_negative(g.h_fluid_pipe, "h_fp");
    non_negative(g.h_glass_ambient, "h_ge");
    non_negative(g.pipe_emissivity, "eps_p");
    non_negative(g.glass_emissivity, "eps_g");
    if (g.pipe_emissivity > 1.0 || g.glass_emissivity > 1.0) {
        throw Error(ErrorKind::InvalidGeometry, where + ": emissivities must be <= 1");
    }
}

namespace {

const std::vector<double> kDefaultSensorFractions{0.125, 0.375, 0.625, 0.875, 1.0};

GeometrySpec geometry_from_json(const nlohmann::json& j, GeometrySpec g)
{
    g.fluid_area = j.value("A_f", g.fluid_area);
    g.pipe_area = j.value("A_p", g.pipe_area);
    g.glass_area = j.value("A_g", g.glass_area);
    g.pipe_perimeter = j.value("P_p", g.pipe_perimeter);
    g.glass_perimeter = j.value("P_g", g.glass_perimeter);
    g.pipe_emissivity = j.value("eps_p", g.pipe_emissivity);
    g.glass_emissivity = j.value("eps_g", g.glass_emissivity);
    g.pipe_conductivity = j.value("k_p", g.pipe_conductivity);
    g.pipe_heat_capacity = j.value("c_vp", g.pipe_heat_capacity);
    g.glass_heat_capacity = j.value("c_vg", g.glass_heat_capacity);
    g.h_fluid_pipe = j.value("h_fp", g.h_fluid_pipe);
    g.h_glass_ambient = j.value("h_ge", g.h_glass_ambient);
    return g;
}

nlohmann::json geometry_to_json(const GeometrySpec& g)
{
    return {{"A_f", g.fluid_area},          {"A_p", g.pipe_area},
            {"A_g", g.glass_area},          {"P_p", g.pipe_perimeter},
            {"P_g", g.glass_perimeter},     {"eps_p", g.pipe_emissivity},
            {"eps_g", g.glass_emissivity},  {"k_p", g.pipe_conductivity},
            {"c_vp", g.pipe_heat_capacity}, {"c_vg", g.glass_heat_capacity},
            {"h_fp", g.h_fluid_pipe},       {"h_ge", g.h_glass_ambient}};
}

struct LoopDefaults {
    double length_m = 600.0;
    std::vector<double> sensor_fractions = kDefaultSensorFractions;
    GeometrySpec geometry;
};

LoopSpec make_loop(const std::string& id, double length_m, const std::vector<double>& fractions,
                   const GeometrySpec& geometry, double dx, double dt)
{
    const std::string where = "loop " + id;
    if (!std::isfinite(length_m) || !(length_m > 0.0)) {
        throw Error(ErrorKind::InvalidGeometry, where + ": length_m must be > 0");
    }
    validate_geometry(geometry, where);
    if (dt > diffusion_max_timestep(geometry, dx)) {
        throw Error(ErrorKind::DiffusionStabilityViolation,
                    where + ": timestep exceeds dx^2 c_vp / (2 k_p)");
    }
    LoopSpec loop;
    loop.id = id;
    loop.length_m = length_m;
    loop.geometry = geometry;
    const double n = std::round(length_m / dx);
    if (n < 2.0) {
        throw Error(ErrorKind::InvalidGeometry, where + ": fewer than 2 segments");
    }
    loop.n_segments = static_cast<std::size_t>(n);
    if (fractions.empty()) {
        throw Error(ErrorKind::SensorOutOfRange, where + ": no sensors");
    }
    for (double f : fractions) {
        if (!std::isfinite(f) || !(f > 0.0) || f > 1.0) {
            throw Error(ErrorKind::SensorOutOfRange,
                        where + ": sensor fraction " + std::to_string(f) + " outside (0, 1]");
        }
        const double raw = std::floor(f * static_cast<double>(loop.n_segments));
        const std::size_t cell = std::min(loop.n_segments - 1, static_cast<std::size_t>(raw));
        if (!loop.sensors.empty() && cell <= loop.sensors.back().cell) {
            throw Error(ErrorKind::SensorOutOfRange, where + ": sensor cells must be strictly increasing");
        }
        loop.sensors.push_back({f, cell});
    }
    if (loop.sensors.back().cell != loop.n_segments - 1) {
        throw Error(ErrorKind::SensorOutOfRange, where + ": last sensor must sit at the outlet cell");
    }
    return loop;
}

} // namespace

FieldTopology build_topology(const TopologyConfig& config)
{
    const auto& j = config.tree;
    FieldTopology topo;
    try {
        topo.segment_length_m = j.value("segment_length_m", 10.0);
        topo.timestep_s = j.value("timestep_s", 5.0);
        if (!std::isfinite(topo.segment_length_m) || !(topo.segment_length_m > 0.0) ||
            !std::isfinite(topo.timestep_s) || !(topo.timestep_s > 0.0)) {
            throw Error(ErrorKind::InvalidGeometry, "segment_length_m and timestep_s must be > 0");
        }
        LoopDefaults defaults;
        if (j.contains("loop_defaults")) {
            const auto& d = j.at("loop_defaults");
            defaults.length_m = d.value("length_m", defaults.length_m);
            defaults.sensor_fractions = d.value("sensor_fractions", defaults.sensor_fractions);
            if (d.contains("geometry")) {
                defaults.geometry = geometry_from_json(d.at("geometry"), defaults.geometry);
            }
        }

        nlohmann::json subfields = j.value("subfields", nlohmann::json::array());
        if (!j.contains("subfields")) {
            for (int k = 1; k <= 4; ++k) {
                subfields.push_back({{"id", "SF" + std::to_string(k)}, {"n_loops", 38}});
            }
        }
        if (subfields.empty()) {
            throw Error(ErrorKind::ConfigError, "topology has no subfields");
        }

        std::size_t next_auto_id = 1;
        std::set<std::string> seen_loops;
        std::set<std::string> seen_subfields;
        for (const auto& sj : subfields) {
            SubfieldSpec sf;
            sf.id = sj.at("id").get<std::string>();
            if (!seen_subfields.insert(sf.id).second) {
                throw Error(ErrorKind::ConfigError, "duplicate subfield id '" + sf.id + "'");
            }
            auto add = [&](const std::string& id, double length, const std::vector<double>& fr,
                           const GeometrySpec& g) {
                if (!seen_loops.insert(id).second) {
                    throw Error(ErrorKind::ConfigError, "duplicate loop id '" + id + "'");
                }
                sf.loops.push_back(make_loop(id, length, fr, g, topo.segment_length_m, topo.timestep_s));
            };
            if (sj.contains("loops")) {
                for (const auto& lj : sj.at("loops")) {
                    GeometrySpec g = defaults.geometry;
                    if (lj.contains("geometry")) {
                        g = geometry_from_json(lj.at("geometry"), g);
                    }
                    const std::string id = lj.contains("id") ? lj.at("id").get<std::string>()
                                                             : std::to_string(next_auto_id);
                    ++next_auto_id;
                    add(id, lj.value("length_m", defaults.length_m),
                        lj.value("sensor_fractions", defaults.sensor_fractions), g);
                }
            } else {
                const long n_loops = sj.value("n_loops", 38L);
                if (n_loops < 1) {
                    throw Error(ErrorKind::ConfigError, "subfield '" + sf.id + "' needs at least 1 loop");
                }
                for (long k = 0; k < n_loops; ++k) {
                    add(std::to_string(next_auto_id++), defaults.length_m, defaults.sensor_fractions,
                        defaults.geometry);
                }
            }
            if (sf.loops.empty()) {
                throw Error(ErrorKind::ConfigError, "subfield '" + sf.id + "' needs at least 1 loop");
            }
            topo.subfields.push_back(std::move(sf));
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::ConfigError, std::string("topology config: ") + e.what());
    }
    return topo;
}

FieldModel build_field_model(const TopologyConfig& config)
{
    FieldModel model;
    model.topology = build_topology(config);
    const auto& j = config.tree;
    try {
        if (j.contains("fluid")) {
            model.fluid = fluid_from_json(j.at("fluid"));
        }
        model.sky_offset_k = j.value("sky_offset_k", 20.0);
        const std::string tmu = j.value("t_mu_mode", std::string("instantaneous"));
        if (tmu == "instantaneous") {
            model.t_mu_mode = TMuMode::Instantaneous;
        } else if (tmu == "period_mean") {
            model.t_mu_mode = TMuMode::PeriodMean;
        } else {
            throw Error(ErrorKind::ConfigError, "unknown t_mu_mode '" + tmu + "'");
        }
        const std::string am = j.value("alpha_mode", std::string("per_subfield"));
        if (am == "per_subfield") {
            model.alpha_mode = AlphaMode::PerSubfield;
        } else if (am == "global") {
            model.alpha_mode = AlphaMode::Global;
        } else {
            throw Error(ErrorKind::ConfigError, "unknown alpha_mode '" + am + "'");
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::ConfigError, std::string("model config: ") + e.what());
    }
    return model;
}

TopologyConfig read_topology_config(const std::string& path)
{
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorKind::IoError, "cannot open '" + path + "'");
    }
    try {
        return TopologyConfig{nlohmann::json::parse(in)};
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::ConfigError, "'" + path + "': " + e.what());
    }
}

FieldModel load_field_model(const std::string& path)
{
    return build_field_model(read_topology_config(path));
}

nlohmann::json field_model_to_json(const FieldModel& model)
{
    nlohmann::json subfields = nlohmann::json::array();
    for (const auto& sf : model.topology.subfields) {
        nlohmann::json loops = nlohmann::json::array();
        for (const auto& loop : sf.loops) {
            std::vector<double> fractions;
            for (const auto& s : loop.sensors) {
                fractions.push_back(s.fraction);
            }
            loops.push_back({{"id", loop.id},
                             {"length_m", loop.length_m},
                             {"sensor_fractions", fractions},
                             {"geometry", geometry_to_json(loop.geometry)}});
        }
        subfields.push_back({{"id", sf.id}, {"loops", loops}});
    }
    return {{"segment_length_m", model.topology.segment_length_m},
            {"timestep_s", model.topology.timestep_s},
            {"sky_offset_k", model.sky_offset_k},
            {"t_mu_mode", model.t_mu_mode == TMuMode::Instantaneous ? "instantaneous" : "period_mean"},
            {"alpha_mode", model.alpha_mode == AlphaMode::PerSubfield ? "per_subfield" : "global"},
            {"fluid", fluid_to_json(model.fluid)},
            {"subfields", subfields}};
}

} // namespace troughcal

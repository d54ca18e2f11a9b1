#pragma once

#include "troughcal/data_io.hpp"
#include "troughcal/params.hpp"
#include "troughcal/sequence.hpp"
#include "troughcal/topology.hpp"

#include <json.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace troughcal {

/// Boundary drives of one synthetic night, relative to the start of circulation.
struct DriveProfile {
    double duration_s = 4500.0;
    double flow_m3s = 0.0137;
    double flow_ramp_s = 120.0;
    double header_start_k = 480.0;
    double header_peak_k = 563.0;
    double header_rise_s = 900.0;
    double header_decay_k_per_h = 6.0;
    double ambient_k = 288.15;
    double ambient_drift_k_per_h = -1.0;
    /// Initial loop temperatures: mean, spread across loops, rise along each loop.
    double loop_mean_k = 470.0;
    double loop_spread_k = 6.0;
    double loop_gradient_k = 8.0;

    double flow(double tau) const noexcept;
    double header(double tau) const noexcept;
    double ambient(double tau) const noexcept;
};

struct SyntheticNight {
    double start_s = 0.0; ///< circulation start, seconds since the epoch
    int era = 0;
    DriveProfile drive;
};

struct OmegaTruth {
    std::string subfield_id;
    int era = 0;
    std::vector<double> values;
};

/// Multiplier on nominal h_pg for one span of one loop.
struct HpgFactor {
    std::string loop_id;
    std::size_t span = 0;
    double factor = 1.0;
};

struct SyntheticScenario {
    FieldModel field;
    double a = 1e-3;
    double b = 0.5;
    double alpha = 0.95;
    std::vector<OmegaTruth> omega;
    double h_pg_nominal = 1.0;
    std::vector<HpgFactor> degraded;
    std::vector<SyntheticNight> nights;
    double noise_sigma_k = 0.0;
    std::uint64_t seed = 0;
    double margin_s = 600.0; ///< zero-flow samples written before and after each night

    /// Throws ConfigError on inconsistent input.
    void validate() const;
};

SyntheticScenario scenario_from_json(const nlohmann::json& j);
nlohmann::json scenario_to_json(const SyntheticScenario& s);

/// Sampled series of one subfield over one night including the zero-flow margins.
struct NightRecord {
    std::string subfield_id;
    std::string sequence_id;
    std::vector<double> times;
    std::vector<double> flow;
    std::vector<double> header;
    std::vector<double> ambient;
    std::vector<std::vector<double>> sensors; ///< [loop] step-major, noisy
};

struct GeneratedData {
    ParamSet truth;
    std::vector<HomogenizationSequence> sequences; ///< circulation windows, noisy readings
    std::vector<std::vector<std::vector<double>>> beta; ///< per sequence [step][loop]
    std::vector<NightRecord> records;
    std::vector<EraLabel> eras;
};

/// Runs the forward model at the scenario truth. Fails with CflViolation
/// naming the step when a drive is too fast.
GeneratedData generate(const SyntheticScenario& scenario);

/// Writes <subfield>_<YYYY-MM-DD>.csv files, truth.json and eras.json.
/// Returns the written paths.
std::vector<std::string> write_generated(const GeneratedData& data, const SyntheticScenario& scenario,
                                         const std::string& dir);

} // namespace troughcal

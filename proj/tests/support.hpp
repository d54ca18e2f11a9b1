#pragma once

#include "troughcal/synth.hpp"
#include "troughcal/time_util.hpp"
#include "troughcal/topology.hpp"

#include <json.hpp>

#include <cmath>
#include <string>
#include <vector>

namespace testsupport {

/// One subfield "SF1" with loops "1".."n".
inline nlohmann::json field_config(std::size_t n_loops, double length_m = 600.0)
{
    return {{"segment_length_m", 10.0},
            {"timestep_s", 5.0},
            {"loop_defaults", {{"length_m", length_m}}},
            {"subfields", nlohmann::json::array({{{"id", "SF1"}, {"n_loops", n_loops}}})}};
}

inline troughcal::FieldModel field(std::size_t n_loops, double length_m = 600.0)
{
    return troughcal::build_field_model(troughcal::TopologyConfig{field_config(n_loops, length_m)});
}

/// Omega spread evenly over [lo, hi] across loops.
inline std::vector<double> omega_spread(std::size_t n, double lo = 0.6, double hi = 1.4)
{
    std::vector<double> w(n);
    for (std::size_t i = 0; i < n; ++i) {
        w[i] = n > 1 ? lo + (hi - lo) * static_cast<double>((i * 5) % n) / static_cast<double>(n - 1) : 1.0;
    }
    return w;
}

/// Nights of `duration_s` circulation, one per day starting 2024-03-01 01:00 UTC.
inline troughcal::SyntheticScenario scenario(std::size_t n_loops, std::size_t n_nights, double duration_s,
                                             double sigma, std::uint64_t seed, std::size_t first_day = 0)
{
    troughcal::SyntheticScenario s;
    s.field = field(n_loops);
    s.omega.push_back({"SF1", 0, omega_spread(n_loops)});
    s.noise_sigma_k = sigma;
    s.seed = seed;
    const double t0 = troughcal::parse_iso8601("2024-03-01T01:00:00Z");
    for (std::size_t k = 0; k < n_nights; ++k) {
        troughcal::SyntheticNight night;
        night.start_s = t0 + 86400.0 * static_cast<double>(first_day + k);
        night.drive.duration_s = duration_s;
        night.drive.flow_m3s = 0.0017125 * static_cast<double>(n_loops);
        // Mild night-to-night variation keeps the drives from being identical.
        const double v = static_cast<double>((first_day + k) % 5);
        night.drive.loop_mean_k = 466.0 + 2.0 * v;
        night.drive.header_peak_k = 558.0 + 2.5 * v;
        night.drive.ambient_k = 285.0 + v;
        s.nights.push_back(night);
    }
    return s;
}

inline double max_abs(const std::vector<double>& v)
{
    double m = 0.0;
    for (double x : v) {
        m = std::max(m, std::abs(x));
    }
    return m;
}

} // namespace testsupport

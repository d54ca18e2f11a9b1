#pragma once

#include "troughcal/params.hpp"
#include "troughcal/synth.hpp"
#include "troughcal/topology.hpp"

#include <json.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace troughcal::cli {

/// Process exit codes.
enum ExitCode : int {
    kOk = 0,
    kGradCheckFailed = 1,
    kConfigError = 2,
    kSimulationError = 3,
    kIoError = 4,
};

inline constexpr const char* kArtifactVersion = "0.1.0";

/// Parses argv and runs one subcommand. Messages go to stdout/stderr.
int run(int argc, const char* const* argv);
int run(const std::vector<std::string>& args);

/// One subfield "SF1" with two 600 m loops of 60 cells.
FieldModel miniature_field();

/// One noisy night of `steps` samples over `field`, with one degraded span.
SyntheticScenario miniature_scenario(const FieldModel& field, std::size_t steps, std::uint64_t seed);

/// Gaussian perturbation of every block, scaled per block.
ParamSet perturb(const ParamSet& truth, std::uint64_t seed);

std::string sha256_file(const std::string& path);

/// {command, config, inputs: {path: sha256}, seed, threads, version, out}.
nlohmann::json make_manifest(const std::string& command, const nlohmann::json& config_paths,
                             const std::vector<std::string>& inputs, std::uint64_t seed,
                             std::size_t threads, const std::string& out_dir);

} // namespace troughcal::cli

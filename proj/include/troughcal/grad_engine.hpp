#pragma once

#include "troughcal/params.hpp"
#include "troughcal/sequence.hpp"
#include "troughcal/topology.hpp"

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace troughcal {

struct EvalOptions {
    std::size_t checkpoint_interval = 64;
    std::size_t threads = 1;
    /// Per-sensor weights (normalized to mean 1); empty means uniform.
    std::vector<double> sensor_weights;
};

/// Mean squared sensor error in K^2, averaged over loops of the sequence.
double loss(const ParamSet& params, const HomogenizationSequence& sequence, const FieldModel& field,
            const EvalOptions& options = {});

/// Mean of per-sequence losses.
double loss(const ParamSet& params, std::span<const HomogenizationSequence> sequences,
            const FieldModel& field, const EvalOptions& options = {});

struct BlockNorm {
    ParamBlock block;
    double norm = 0.0;
};

struct GradientReport {
    double loss = 0.0;
    std::vector<double> gradient; ///< aligned with ParamSet::flatten()
    std::vector<BlockNorm> block_norms;
};

GradientReport grad(const ParamSet& params, const HomogenizationSequence& sequence,
                    const FieldModel& field, const EvalOptions& options = {});
GradientReport grad(const ParamSet& params, std::span<const HomogenizationSequence> sequences,
                    const FieldModel& field, const EvalOptions& options = {});

struct LoopPrediction {
    std::string loop_id;
    std::vector<double> beta;      ///< per step (last step repeats the previous value)
    std::vector<double> predicted; ///< step-major, n_sensors per step; row 0 is the initial state
    std::size_t n_sensors = 0;
};

struct SequencePrediction {
    std::string sequence_id;
    std::vector<LoopPrediction> loops; ///< topology order
};

SequencePrediction predict(const ParamSet& params, const HomogenizationSequence& sequence,
                           const FieldModel& field);

/// Per-step mass-flow ratios [step][loop in topology order] for steps 0..S-2.
std::vector<std::vector<double>> sequence_beta(const ParamSet& params,
                                               const HomogenizationSequence& sequence,
                                               const FieldModel& field);

struct ProbeResult {
    std::optional<ParamBlock> block; ///< set when the direction was restricted to one block
    double analytic = 0.0;
    double numeric = 0.0;
    double rel_error = 0.0;
    bool pass = false;
};

struct GradCheckReport {
    std::vector<ProbeResult> probes;
    double max_rel_error = 0.0;
    double tolerance = 0.0;
    bool passed = false;
};

struct GradCheckOptions {
    std::size_t n_probes = 20;
    std::uint64_t seed = 0;
    double rel_step = 1e-4;
    double tolerance = 1e-5;
    std::optional<ParamBlock> block;
};

using ObjectiveFn = std::function<double(std::span<const double>)>;
using GradientFn = std::function<std::vector<double>(std::span<const double>)>;

/// Compares g(x0) . d against (f(x0 + e d) - f(x0 - e d)) / (2 e) along
/// random unit directions d, with e = rel_step * max(1, |x0|_inf).
/// `mask` restricts directions to the flagged coordinates when non-empty.
GradCheckReport check_directional(const ObjectiveFn& f, const GradientFn& g,
                                  std::span<const double> x0, const GradCheckOptions& options,
                                  std::span<const char> mask = {});

/// Directional derivative check of grad() against loss() on the full model.
GradCheckReport check_gradients(const ParamSet& params,
                                std::span<const HomogenizationSequence> sequences,
                                const FieldModel& field, const GradCheckOptions& options,
                                const EvalOptions& eval = {});

} // namespace troughcal

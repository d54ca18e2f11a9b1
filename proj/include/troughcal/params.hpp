#pragma once

#include "troughcal/sequence.hpp"
#include "troughcal/topology.hpp"

#include <json.hpp>

#include <array>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace troughcal {

struct AlphaEntry {
    std::string subfield_id; ///< "*" when alpha is shared field-wide
    double log_alpha = 0.0;
};

/// Valve-state vector of one subfield during one valve era.
struct OmegaBlock {
    std::string subfield_id;
    int era = 0;
    std::vector<double> values;
};

/// Pipe-glass coefficients of one loop for one period, one entry per span,
/// stored as softplus pre-images.
struct HpgBlock {
    std::string period_id;
    std::string loop_id;
    std::vector<double> raw;
};

enum class ParamBlock { Scale, Bias, Alpha, Omega, Hpg };

inline constexpr std::array<ParamBlock, 5> kAllParamBlocks{
    ParamBlock::Scale, ParamBlock::Bias, ParamBlock::Alpha, ParamBlock::Omega, ParamBlock::Hpg};

std::string_view to_string(ParamBlock block) noexcept;

struct BlockRange {
    ParamBlock block;
    std::size_t offset = 0;
    std::size_t count = 0;
};

/// Complete learnable set. Flattened order:
///   a, b, log_alpha (subfield order),
///   omega (era-major, subfield, loop-minor),
///   h_pg raw (period-major, loop-major, span-minor).
struct ParamSet {
    double a = 0.0;
    double b = 1.0;
    std::vector<AlphaEntry> log_alpha;
    std::vector<OmegaBlock> omega;
    std::vector<HpgBlock> h_pg;

    std::size_t size() const noexcept;
    std::vector<double> flatten() const;
    void assign(std::span<const double> flat);
    std::array<BlockRange, 5> blocks() const noexcept;

    std::size_t alpha_index(const std::string& subfield_id) const;
    double alpha(const std::string& subfield_id) const;
    const OmegaBlock* find_omega(const std::string& subfield_id, int era) const noexcept;
    const HpgBlock* find_hpg(const std::string& period_id, const std::string& loop_id) const noexcept;

    /// Sorts blocks into the documented flattening order.
    void canonicalize(const FieldTopology& topology);
};

double softplus(double x) noexcept;
double softplus_inverse(double y);
double sigmoid(double x) noexcept;

struct InitOptions {
    double h_pg_init = 1.0; ///< W/(m^2 K)
    bool create_hpg_blocks = true;
};

/// Neutral start: a = 0, b = 1, alpha = 1, omega = 1, h_pg = h_pg_init.
/// Blocks are allocated for every (subfield, era) and (period, loop) in
/// `sequences`.
ParamSet make_initial_params(const FieldModel& field,
                             std::span<const HomogenizationSequence> sequences,
                             const InitOptions& options = {});

/// Adds any omega / h_pg blocks `sequences` need but `params` lacks.
void ensure_blocks(ParamSet& params, const FieldModel& field,
                   std::span<const HomogenizationSequence> sequences, const InitOptions& options);

nlohmann::json params_to_json(const ParamSet& params);
ParamSet params_from_json(const nlohmann::json& j);

} // namespace troughcal

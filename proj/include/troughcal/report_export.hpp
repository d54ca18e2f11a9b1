#pragma once

#include "troughcal/diagnostics.hpp"
#include "troughcal/params.hpp"
#include "troughcal/sequence.hpp"
#include "troughcal/topology.hpp"

#include <span>
#include <string>
#include <vector>

namespace troughcal {

struct ExportOptions {
    bool csv = true;
    bool series = true; ///< per-sequence measured/predicted and beta series
    bool svg = true;
};

/// Writes report tables into `dir`:
///   loss_curve.csv, beta.csv, hpg.csv, hpg_map.csv, rmse.csv,
///   heat_loss_ranking.csv, self_consistency.csv,
///   series/<sequence>.csv, beta_series/<sequence>.csv,
///   loss_curve.svg, beta.svg, hpg_map.svg.
/// Returns the written paths. Fails with IoError.
std::vector<std::string> export_report(const FitReport& report, const ParamSet& params,
                                       std::span<const HomogenizationSequence> sequences,
                                       const FieldModel& field, const std::string& dir,
                                       const ExportOptions& options = {});

/// File-name-safe form of a sequence id.
std::string safe_file_name(const std::string& id);

} // namespace troughcal

#pragma once

#include "troughcal/grad_engine.hpp"
#include "troughcal/params.hpp"
#include "troughcal/sequence.hpp"
#include "troughcal/topology.hpp"

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace troughcal {

/// Root mean squared difference, in the unit of the inputs.
double rmse(std::span<const double> predicted, std::span<const double> measured);

/// Coefficient of determination of y regressed on x by least squares.
double r_squared(std::span<const double> x, std::span<const double> y);

/// Fitted pipe-glass coefficient of one span in one period (W/(m^2 K)).
struct HpgValue {
    std::string period_id;
    std::string loop_id;
    std::size_t span = 0;
    double value = 0.0;
};

struct HeatLossEntry {
    std::string loop_id;
    std::size_t span = 0;
    double h_pg = 0.0; ///< mean over the fitted periods
    bool flagged = false;
};

struct HeatLossRanking {
    std::vector<HeatLossEntry> entries; ///< descending by h_pg
    double median = 0.0;
    double iqr = 0.0;
    double threshold = 0.0;
    std::size_t flagged_count() const noexcept;
};

/// Ranks (loop, span) by period-mean h_pg and flags values above
/// median + k * IQR. Quartiles use linear interpolation between order statistics.
HeatLossRanking rank_heat_loss(std::span<const HpgValue> values, double k = 3.0);

/// Softplus-mapped h_pg of every fitted block.
std::vector<HpgValue> hpg_values(const ParamSet& params);

struct BetaEntry {
    std::string subfield_id;
    int era = 0;
    std::string loop_id;
    double beta = 0.0;
};

/// Era-mean mass-flow ratios: average of per-step beta over all steps of all
/// sequences sharing (subfield, era). Rows follow subfield then loop order.
std::vector<BetaEntry> era_beta(const ParamSet& params, std::span<const HomogenizationSequence> sequences,
                                const FieldModel& field);

struct SensorRmse {
    std::string loop_id;
    std::size_t sensor = 0;
    double rmse = 0.0;
};

struct ConsistencyScore {
    std::string subfield_id;
    int era = 0;
    double r_squared = 0.0;
};

struct BetaSeries {
    std::string sequence_id;
    double t_start = 0.0;
    double dt = 0.0;
    std::vector<std::string> loop_ids;
    std::vector<std::vector<double>> beta; ///< [step][loop]
};

struct FitReport {
    std::vector<double> loss_curve; ///< entry 0 is the initial loss
    std::size_t clip_events = 0;
    double rmse_overall = 0.0;      ///< over all scored samples (steps >= 1)
    std::vector<SensorRmse> sensor_rmse;
    std::vector<BetaEntry> beta;
    std::vector<BetaSeries> beta_series;
    std::vector<HpgValue> h_pg;
    std::vector<ConsistencyScore> consistency;
    HeatLossRanking heat_loss;
};

/// Evaluates `params` on `sequences` and fills everything but loss_curve,
/// clip_events and consistency.
FitReport build_report(const ParamSet& params, std::span<const HomogenizationSequence> sequences,
                       const FieldModel& field, double flag_k = 3.0);

/// Sensor RMSE over the scored samples of one set of predictions.
std::vector<SensorRmse> sensor_rmse(std::span<const SequencePrediction> predictions,
                                    std::span<const HomogenizationSequence> sequences,
                                    double* overall = nullptr);

} // namespace troughcal

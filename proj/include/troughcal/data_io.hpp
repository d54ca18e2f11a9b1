#pragma once

#include "troughcal/sequence.hpp"
#include "troughcal/topology.hpp"

#include <json.hpp>

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace troughcal {

enum class Unit { Kelvin, Celsius, CubicMetersPerSecond, Fraction };

/// Closed vocabulary: "K", "degC", "m3_per_s", "fraction". Throws UnknownUnit.
Unit parse_unit(const std::string& tag);
std::string to_string(Unit unit);

enum class ChannelRole { Flow, Header, Ambient, Sensor, Other };

/// Binding of one CSV column to a physical quantity.
struct ChannelBinding {
    ChannelRole role = ChannelRole::Other;
    std::string loop_id;     ///< sensor channels only
    std::size_t sensor = 0;  ///< zero-based sensor index
    std::optional<Unit> unit;
};

/// Column bindings. Columns without an explicit entry are bound by name:
/// v_dot_h, t_header, t_ambient and loop<ID>_s<k> (k one-based).
struct ChannelMap {
    std::optional<std::string> subfield_id; ///< otherwise taken from "<subfield>_<date>.csv"
    std::map<std::string, ChannelBinding> columns;
};

ChannelMap channel_map_from_json(const nlohmann::json& j);

/// One measured quantity; values are converted to K for temperatures.
struct RawChannel {
    std::string id; ///< column name without unit suffix
    std::string subfield_id;
    ChannelBinding binding;
    Unit source_unit = Unit::Kelvin;
    std::vector<double> times; ///< seconds since the epoch, strictly increasing
    std::vector<double> values;
};

struct RawChannelSet {
    std::vector<RawChannel> channels;

    const RawChannel* find(const std::string& subfield_id, ChannelRole role,
                           const std::string& loop_id = {}, std::size_t sensor = 0) const noexcept;
    std::vector<std::string> subfields() const;
};

/// Plain comma-separated table with a mandatory header row.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

CsvTable read_csv(const std::string& path);

/// Reads CSV files in the documented schema. Files of one subfield are
/// concatenated in time order. Empty cells are missing samples. Fails with
/// SchemaError, NonMonotoneTime (naming file and row) or UnknownUnit.
RawChannelSet ingest(std::span<const std::string> files, const ChannelMap& map = {},
                     std::size_t threads = 1);

/// Explicit valve-era label covering [t_start, t_end] of one subfield ("*" for all).
struct EraLabel {
    std::string subfield_id;
    int era = 0;
    double t_start = 0.0;
    double t_end = 0.0;
};

std::vector<EraLabel> era_labels_from_json(const nlohmann::json& j);
nlohmann::json era_labels_to_json(std::span<const EraLabel> labels);

struct NightWindow {
    enum class Mode { Clock, Solar };
    Mode mode = Mode::Clock;
    double start_hour = 18.0; ///< local clock, inclusive
    double end_hour = 6.0;    ///< local clock, exclusive; wraps past midnight
    double utc_offset_h = 0.0;
    double latitude_deg = 37.2;
    double longitude_deg = -3.1;
    double max_elevation_deg = 0.0;

    bool contains(double epoch_s) const noexcept;
};

/// Approximate solar elevation (degrees) at a site; accurate to a fraction of a degree.
double solar_elevation_deg(double epoch_s, double latitude_deg, double longitude_deg) noexcept;

struct PeriodCriteria {
    NightWindow night;
    double min_flow_m3s = 1e-4;
    double min_duration_s = 1800.0;
    double max_gap_s = 60.0;
    double dt_s = 5.0;
    std::vector<EraLabel> eras; ///< empty: every sample is era 0
};

PeriodCriteria period_criteria_from_json(const nlohmann::json& j, double dt_s);

/// Maximal runs of qualifying samples (night, flow >= min, era labeled, all
/// channels available), joined across gaps <= max_gap and split at era
/// changes, resampled to dt by linear interpolation.
std::vector<HomogenizationSequence> extract_periods(const RawChannelSet& channels,
                                                    const FieldTopology& topology,
                                                    const PeriodCriteria& criteria);

/// Every *.csv in `dir` (sorted by name) plus eras.json when present.
struct DataDir {
    std::vector<std::string> csv_files;
    std::vector<EraLabel> eras;
    bool has_era_file = false;
};

DataDir scan_data_dir(const std::string& dir);

/// ingest + extract_periods over a data directory, with the era labels found there.
std::vector<HomogenizationSequence> load_sequences(const std::string& dir, const FieldModel& field,
                                                   PeriodCriteria criteria, const ChannelMap& map = {},
                                                   std::size_t threads = 1);

} // namespace troughcal

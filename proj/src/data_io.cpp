#include "troughcal/data_io.hpp"

#include "troughcal/error.hpp"
#include "troughcal/parallel.hpp"
#include "troughcal/time_util.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include <set>
#include <sstream>

namespace troughcal {

Unit parse_unit(const std::string& tag)
{
    if (tag == "K") {
        return Unit::Kelvin;
    }
    if (tag == "degC") {
        return Unit::Celsius;
    }
    if (tag == "m3_per_s") {
        return Unit::CubicMetersPerSecond;
    }
    if (tag == "fraction") {
        return Unit::Fraction;
    }
    throw Error(ErrorKind::UnknownUnit, "unknown unit tag '" + tag + "'");
}

std::string to_string(Unit unit)
{
    switch (unit) {
    case Unit::Kelvin: return "K";
    case Unit::Celsius: return "degC";
    case Unit::CubicMetersPerSecond: return "m3_per_s";
    case Unit::Fraction: return "fraction";
    }
    return "K";
}

namespace {

ChannelRole role_from_name(const std::string& s)
{
    if (s == "flow") {
        return ChannelRole::Flow;
    }
    if (s == "header") {
        return ChannelRole::Header;
    }
    if (s == "ambient") {
        return ChannelRole::Ambient;
    }
    if (s == "sensor") {
        return ChannelRole::Sensor;
    }
    if (s == "other") {
        return ChannelRole::Other;
    }
    throw Error(ErrorKind::ConfigError, "unknown channel role '" + s + "'");
}

/// Name-based binding; nullopt for columns that are not part of the schema.
std::optional<ChannelBinding> default_binding(const std::string& name)
{
    ChannelBinding b;
    if (name == "v_dot_h") {
        b.role = ChannelRole::Flow;
        return b;
    }
    if (name == "t_header") {
        b.role = ChannelRole::Header;
        return b;
    }
    if (name == "t_ambient") {
        b.role = ChannelRole::Ambient;
        return b;
    }
    if (name.rfind("loop", 0) == 0) {
        const auto pos = name.rfind("_s");
        if (pos != std::string::npos && pos > 4) {
            unsigned k = 0;
            const char* first = name.data() + pos + 2;
            const char* last = name.data() + name.size();
            auto r = std::from_chars(first, last, k);
            if (r.ec == std::errc{} && r.ptr == last && k >= 1) {
                b.role = ChannelRole::Sensor;
                b.loop_id = name.substr(4, pos - 4);
                b.sensor = k - 1;
                return b;
            }
        }
    }
    return std::nullopt;
}

Unit default_unit(ChannelRole role)
{
    switch (role) {
    case ChannelRole::Flow: return Unit::CubicMetersPerSecond;
    case ChannelRole::Other: return Unit::Fraction;
    default: return Unit::Kelvin;
    }
}

bool is_temperature(ChannelRole role)
{
    return role == ChannelRole::Header || role == ChannelRole::Ambient || role == ChannelRole::Sensor;
}

std::vector<std::string> split_line(const std::string& line)
{
    std::vector<std::string> out;
    std::string cell;
    std::istringstream is(line);
    while (std::getline(is, cell, ',')) {
        out.push_back(cell);
    }
    if (!line.empty() && line.back() == ',') {
        out.emplace_back();
    }
    return out;
}

std::string trim(std::string s)
{
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

double parse_number(const std::string& s, const std::string& where)
{
    double v = 0.0;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    if (first != last && *first == '+') {
        ++first;
    }
    auto r = std::from_chars(first, last, v);
    if (r.ec != std::errc{} || r.ptr != last) {
        throw Error(ErrorKind::SchemaError, "non-numeric value '" + s + "' at " + where);
    }
    return v;
}

struct FileChannels {
    std::string subfield_id;
    std::vector<RawChannel> channels;
    double first_time = 0.0;
};

FileChannels ingest_file(const std::string& path, const ChannelMap& map)
{
    const CsvTable table = read_csv(path);
    FileChannels out;
    if (map.subfield_id) {
        out.subfield_id = *map.subfield_id;
    } else {
        const std::string stem = std::filesystem::path(path).stem().string();
        const auto pos = stem.rfind('_');
        out.subfield_id = pos == std::string::npos ? stem : stem.substr(0, pos);
    }
    std::size_t time_col = table.header.size();
    for (std::size_t c = 0; c < table.header.size(); ++c) {
        if (table.header[c] == "timestamp") {
            time_col = c;
        }
    }
    if (time_col == table.header.size()) {
        throw Error(ErrorKind::SchemaError, path + ": missing 'timestamp' column");
    }
    std::vector<std::size_t> columns;
    std::set<std::string> seen;
    for (std::size_t c = 0; c < table.header.size(); ++c) {
        if (c == time_col) {
            continue;
        }
        std::string name = table.header[c];
        std::optional<Unit> unit;
        const auto lb = name.find('[');
        if (lb != std::string::npos) {
            if (name.back() != ']') {
                throw Error(ErrorKind::SchemaError, path + ": malformed column header '" + name + "'");
            }
            unit = parse_unit(name.substr(lb + 1, name.size() - lb - 2));
            name = name.substr(0, lb);
        }
        if (!seen.insert(name).second) {
            throw Error(ErrorKind::SchemaError, path + ": duplicate column '" + name + "'");
        }
        std::optional<ChannelBinding> binding;
        if (auto it = map.columns.find(name); it != map.columns.end()) {
            binding = it->second;
        } else {
            binding = default_binding(name);
        }
        if (!binding) {
            continue;
        }
        RawChannel ch;
        ch.id = name;
        ch.subfield_id = out.subfield_id;
        ch.binding = *binding;
        ch.source_unit = binding->unit ? *binding->unit : unit ? *unit : default_unit(binding->role);
        if (is_temperature(binding->role) && ch.source_unit != Unit::Kelvin &&
            ch.source_unit != Unit::Celsius) {
            throw Error(ErrorKind::UnknownUnit, path + ": column '" + name + "' needs a temperature unit");
        }
        if (binding->role == ChannelRole::Flow && ch.source_unit != Unit::CubicMetersPerSecond) {
            throw Error(ErrorKind::UnknownUnit, path + ": column '" + name + "' needs unit m3_per_s");
        }
        columns.push_back(c);
        out.channels.push_back(std::move(ch));
    }
    double previous = -std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        const std::string where = path + " row " + std::to_string(r + 2);
        if (row.size() != table.header.size()) {
            throw Error(ErrorKind::SchemaError, where + ": expected " + std::to_string(table.header.size()) +
                                                    " fields, found " + std::to_string(row.size()));
        }
        const double t = parse_iso8601(row[time_col]);
        if (!(t > previous)) {
            throw Error(ErrorKind::NonMonotoneTime, where + ": timestamp " + row[time_col] +
                                                       " does not increase");
        }
        if (r == 0) {
            out.first_time = t;
        }
        previous = t;
        for (std::size_t k = 0; k < columns.size(); ++k) {
            const std::string& cell = row[columns[k]];
            if (cell.empty()) {
                continue;
            }
            double v = parse_number(cell, where);
            RawChannel& ch = out.channels[k];
            if (ch.source_unit == Unit::Celsius) {
                v += 273.15;
            }
            ch.times.push_back(t);
            ch.values.push_back(v);
        }
    }
    return out;
}

} // namespace

ChannelMap channel_map_from_json(const nlohmann::json& j)
{
    ChannelMap map;
    try {
        if (j.contains("subfield")) {
            map.subfield_id = j.at("subfield").get<std::string>();
        }
        if (j.contains("columns")) {
            for (const auto& [name, spec] : j.at("columns").items()) {
                ChannelBinding b;
                b.role = role_from_name(spec.at("role").get<std::string>());
                b.loop_id = spec.value("loop", std::string());
                const std::size_t one_based = spec.value("sensor", std::size_t{1});
                if (b.role == ChannelRole::Sensor && (b.loop_id.empty() || one_based < 1)) {
                    throw Error(ErrorKind::ConfigError, "sensor column '" + name + "' needs loop and sensor >= 1");
                }
                b.sensor = one_based - 1;
                if (spec.contains("unit")) {
                    b.unit = parse_unit(spec.at("unit").get<std::string>());
                }
                map.columns[name] = b;
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::ConfigError, std::string("channel map: ") + e.what());
    }
    return map;
}

const RawChannel* RawChannelSet::find(const std::string& subfield_id, ChannelRole role,
                                      const std::string& loop_id, std::size_t sensor) const noexcept
{
    for (const auto& ch : channels) {
        if (ch.subfield_id != subfield_id || ch.binding.role != role) {
            continue;
        }
        if (role == ChannelRole::Sensor && (ch.binding.loop_id != loop_id || ch.binding.sensor != sensor)) {
            continue;
        }
        return &ch;
    }
    return nullptr;
}

std::vector<std::string> RawChannelSet::subfields() const
{
    std::vector<std::string> out;
    for (const auto& ch : channels) {
        if (std::find(out.begin(), out.end(), ch.subfield_id) == out.end()) {
            out.push_back(ch.subfield_id);
        }
    }
    return out;
}

CsvTable read_csv(const std::string& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw Error(ErrorKind::IoError, "cannot open " + path);
    }
    CsvTable t;
    std::string line;
    bool have_header = false;
    while (std::getline(is, line)) {
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        auto cells = split_line(line);
        for (auto& c : cells) {
            c = trim(c);
        }
        if (!have_header) {
            t.header = std::move(cells);
            have_header = true;
        } else {
            t.rows.push_back(std::move(cells));
        }
    }
    if (!have_header) {
        throw Error(ErrorKind::SchemaError, path + ": missing header row");
    }
    return t;
}

RawChannelSet ingest(std::span<const std::string> files, const ChannelMap& map, std::size_t threads)
{
    std::vector<FileChannels> parsed(files.size());
    parallel_for(files.size(), threads, [&](std::size_t i) { parsed[i] = ingest_file(files[i], map); });

    std::vector<std::size_t> order(parsed.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        order[i] = i;
    }
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
        if (parsed[x].subfield_id != parsed[y].subfield_id) {
            return parsed[x].subfield_id < parsed[y].subfield_id;
        }
        return parsed[x].first_time < parsed[y].first_time;
    });
    RawChannelSet set;
    for (std::size_t idx : order) {
        for (auto& ch : parsed[idx].channels) {
            auto it = std::find_if(set.channels.begin(), set.channels.end(), [&](const RawChannel& c) {
                return c.subfield_id == ch.subfield_id && c.id == ch.id;
            });
            if (it == set.channels.end()) {
                set.channels.push_back(std::move(ch));
                continue;
            }
            if (!ch.times.empty() && !it->times.empty() && !(ch.times.front() > it->times.back())) {
                throw Error(ErrorKind::NonMonotoneTime, files[idx] + ": channel '" + ch.id +
                                                            "' overlaps earlier data of subfield '" +
                                                            ch.subfield_id + "'");
            }
            it->times.insert(it->times.end(), ch.times.begin(), ch.times.end());
            it->values.insert(it->values.end(), ch.values.begin(), ch.values.end());
        }
    }
    return set;
}

std::vector<EraLabel> era_labels_from_json(const nlohmann::json& j)
{
    std::vector<EraLabel> out;
    try {
        const auto& arr = j.is_object() ? j.at("eras") : j;
        for (const auto& e : arr) {
            EraLabel l;
            l.subfield_id = e.value("subfield", std::string("*"));
            l.era = e.at("era").get<int>();
            l.t_start = parse_iso8601(e.at("start").get<std::string>());
            l.t_end = parse_iso8601(e.at("end").get<std::string>());
            if (!(l.t_end >= l.t_start)) {
                throw Error(ErrorKind::ConfigError, "era label ends before it starts");
            }
            out.push_back(l);
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::ConfigError, std::string("era labels: ") + e.what());
    }
    return out;
}

nlohmann::json era_labels_to_json(std::span<const EraLabel> labels)
{
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& l : labels) {
        arr.push_back({{"subfield", l.subfield_id},
                       {"era", l.era},
                       {"start", format_iso8601(l.t_start)},
                       {"end", format_iso8601(l.t_end)}});
    }
    return {{"eras", arr}};
}

double solar_elevation_deg(double epoch_s, double latitude_deg, double longitude_deg) noexcept
{
    constexpr double deg = std::numbers::pi / 180.0;
    const double d = epoch_s / 86400.0 - 10957.5; // days since J2000.0
    const double g = (357.529 + 0.98560028 * d) * deg;
    const double q = 280.459 + 0.98564736 * d;
    const double lambda = (q + 1.915 * std::sin(g) + 0.020 * std::sin(2.0 * g)) * deg;
    const double e = (23.439 - 0.00000036 * d) * deg;
    const double ra = std::atan2(std::cos(e) * std::sin(lambda), std::cos(lambda));
    const double dec = std::asin(std::sin(e) * std::sin(lambda));
    const double gmst_h = std::fmod(18.697374558 + 24.06570982441908 * d, 24.0);
    const double ha = (gmst_h * 15.0 + longitude_deg) * deg - ra;
    const double lat = latitude_deg * deg;
    const double s = std::sin(lat) * std::sin(dec) + std::cos(lat) * std::cos(dec) * std::cos(ha);
    return std::asin(std::clamp(s, -1.0, 1.0)) / deg;
}

bool NightWindow::contains(double epoch_s) const noexcept
{
    if (mode == Mode::Solar) {
        return solar_elevation_deg(epoch_s, latitude_deg, longitude_deg) < max_elevation_deg;
    }
    double h = std::fmod(epoch_s / 3600.0 + utc_offset_h, 24.0);
    if (h < 0.0) {
        h += 24.0;
    }
    if (start_hour == end_hour) {
        return true;
    }
    if (start_hour > end_hour) {
        return h >= start_hour || h < end_hour;
    }
    return h >= start_hour && h < end_hour;
}

PeriodCriteria period_criteria_from_json(const nlohmann::json& j, double dt_s)
{
    PeriodCriteria c;
    c.dt_s = dt_s;
    if (j.is_null()) {
        return c;
    }
    try {
        c.min_flow_m3s = j.value("min_flow_m3s", c.min_flow_m3s);
        c.min_duration_s = j.value("min_duration_s", c.min_duration_s);
        c.max_gap_s = j.value("max_gap_s", c.max_gap_s);
        if (j.contains("night")) {
            const auto& n = j.at("night");
            const std::string mode = n.value("mode", std::string("clock"));
            if (mode == "clock") {
                c.night.mode = NightWindow::Mode::Clock;
            } else if (mode == "solar") {
                c.night.mode = NightWindow::Mode::Solar;
            } else {
                throw Error(ErrorKind::ConfigError, "night mode must be 'clock' or 'solar'");
            }
            c.night.start_hour = n.value("start_hour", c.night.start_hour);
            c.night.end_hour = n.value("end_hour", c.night.end_hour);
            c.night.utc_offset_h = n.value("utc_offset_h", c.night.utc_offset_h);
            c.night.latitude_deg = n.value("latitude_deg", c.night.latitude_deg);
            c.night.longitude_deg = n.value("longitude_deg", c.night.longitude_deg);
            c.night.max_elevation_deg = n.value("max_elevation_deg", c.night.max_elevation_deg);
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::ConfigError, std::string("period criteria: ") + e.what());
    }
    if (!(c.max_gap_s >= 0.0) || !(c.min_duration_s >= 0.0) || !(c.dt_s > 0.0)) {
        throw Error(ErrorKind::ConfigError, "period criteria must be non-negative with dt > 0");
    }
    return c;
}

namespace {

/// Linear interpolation of one channel; false when t is not bracketed by
/// samples at most max_gap apart.
bool sample_at(const std::vector<double>& times, const std::vector<double>& values, double t,
               double max_gap, double& out)
{
    auto it = std::lower_bound(times.begin(), times.end(), t);
    if (it != times.end() && *it == t) {
        out = values[static_cast<std::size_t>(it - times.begin())];
        return true;
    }
    if (it == times.begin() || it == times.end()) {
        return false;
    }
    const auto hi = static_cast<std::size_t>(it - times.begin());
    const std::size_t lo = hi - 1;
    if (times[hi] - times[lo] > max_gap) {
        return false;
    }
    const double w = (t - times[lo]) / (times[hi] - times[lo]);
    out = values[lo] + w * (values[hi] - values[lo]);
    return true;
}

std::optional<int> era_at(const PeriodCriteria& c, const std::string& subfield, double t)
{
    if (c.eras.empty()) {
        return 0;
    }
    for (const auto& l : c.eras) {
        if ((l.subfield_id == "*" || l.subfield_id == subfield) && t >= l.t_start && t <= l.t_end) {
            return l.era;
        }
    }
    return std::nullopt;
}

struct SubfieldChannels {
    const RawChannel* flow = nullptr;
    const RawChannel* header = nullptr;
    const RawChannel* ambient = nullptr;
    std::vector<std::vector<const RawChannel*>> sensors; // [loop][sensor]
};

std::string join(const std::vector<std::string>& v)
{
    std::string s;
    for (const auto& x : v) {
        s += (s.empty() ? "" : ", ") + x;
    }
    return s.empty() ? "none" : s;
}

SubfieldChannels bind_subfield(const RawChannelSet& set, const SubfieldSpec& sf)
{
    SubfieldChannels b;
    b.flow = set.find(sf.id, ChannelRole::Flow);
    b.header = set.find(sf.id, ChannelRole::Header);
    b.ambient = set.find(sf.id, ChannelRole::Ambient);
    if (b.flow == nullptr || b.header == nullptr || b.ambient == nullptr) {
        throw Error(ErrorKind::SchemaError, "subfield '" + sf.id + "' lacks v_dot_h, t_header or t_ambient data");
    }
    std::set<std::string> data_loops;
    for (const auto& ch : set.channels) {
        if (ch.subfield_id == sf.id && ch.binding.role == ChannelRole::Sensor) {
            data_loops.insert(ch.binding.loop_id);
        }
    }
    std::vector<std::string> missing, extra;
    for (const auto& loop : sf.loops) {
        if (data_loops.erase(loop.id) == 0) {
            missing.push_back(loop.id);
        }
    }
    extra.assign(data_loops.begin(), data_loops.end());
    if (!missing.empty() || !extra.empty()) {
        throw Error(ErrorKind::ConfigError,
                    "topology/data mismatch in subfield '" + sf.id + "': topology has " +
                        std::to_string(sf.loops.size()) + " loops, data has " +
                        std::to_string(sf.loops.size() - missing.size() + extra.size()) +
                        "; missing in data: " + join(missing) + "; not in topology: " + join(extra));
    }
    for (const auto& loop : sf.loops) {
        auto& row = b.sensors.emplace_back();
        for (std::size_t k = 0; k < loop.sensors.size(); ++k) {
            const RawChannel* ch = set.find(sf.id, ChannelRole::Sensor, loop.id, k);
            if (ch == nullptr) {
                throw Error(ErrorKind::SchemaError, "loop " + loop.id + " lacks sensor column s" +
                                                        std::to_string(k + 1));
            }
            row.push_back(ch);
        }
    }
    return b;
}

struct Run {
    std::vector<double> times;   // qualifying flow sample times
    std::vector<double> flows;
    int era = 0;
};

void emit_segment(const SubfieldSpec& sf, const SubfieldChannels& ch, const Run& run,
                  const std::vector<double>& grid, std::size_t begin, std::size_t end,
                  const PeriodCriteria& c, std::vector<HomogenizationSequence>& out)
{
    if (end - begin < 2 || grid[end - 1] - grid[begin] < c.min_duration_s) {
        return;
    }
    HomogenizationSequence seq;
    seq.subfield_id = sf.id;
    seq.t_start = grid[begin];
    seq.dt = c.dt_s;
    seq.id = sf.id + "_" + format_iso8601(seq.t_start);
    seq.period_id = seq.id;
    seq.valve_era = run.era;
    const double gap = c.max_gap_s;
    for (std::size_t g = begin; g < end; ++g) {
        double v = 0.0;
        sample_at(run.times, run.flows, grid[g], gap, v);
        seq.v_dot_h.push_back(v);
        sample_at(ch.header->times, ch.header->values, grid[g], gap, v);
        seq.t_header.push_back(v);
        sample_at(ch.ambient->times, ch.ambient->values, grid[g], gap, v);
        seq.t_ambient.push_back(v);
    }
    for (std::size_t i = 0; i < sf.loops.size(); ++i) {
        LoopReadings r;
        r.loop_id = sf.loops[i].id;
        r.n_sensors = ch.sensors[i].size();
        r.values.reserve((end - begin) * r.n_sensors);
        for (std::size_t g = begin; g < end; ++g) {
            for (const RawChannel* s : ch.sensors[i]) {
                double v = 0.0;
                sample_at(s->times, s->values, grid[g], gap, v);
                r.values.push_back(v);
            }
        }
        seq.loops.push_back(std::move(r));
    }
    out.push_back(std::move(seq));
}

bool all_available(const SubfieldChannels& ch, double t, double gap)
{
    double v = 0.0;
    if (!sample_at(ch.header->times, ch.header->values, t, gap, v) ||
        !sample_at(ch.ambient->times, ch.ambient->values, t, gap, v)) {
        return false;
    }
    for (const auto& loop : ch.sensors) {
        for (const RawChannel* s : loop) {
            if (!sample_at(s->times, s->values, t, gap, v)) {
                return false;
            }
        }
    }
    return true;
}

} // namespace

std::vector<HomogenizationSequence> extract_periods(const RawChannelSet& channels,
                                                    const FieldTopology& topology,
                                                    const PeriodCriteria& criteria)
{
    if (!(criteria.dt_s > 0.0)) {
        throw Error(ErrorKind::ConfigError, "resampling step must be positive");
    }
    for (const auto& id : channels.subfields()) {
        bool known = false;
        for (const auto& sf : topology.subfields) {
            known = known || sf.id == id;
        }
        if (!known) {
            throw Error(ErrorKind::ConfigError, "data subfield '" + id + "' is not in the topology");
        }
    }
    std::vector<HomogenizationSequence> out;
    const double gap = criteria.max_gap_s;
    for (const auto& sf : topology.subfields) {
        bool present = false;
        for (const auto& ch : channels.channels) {
            present = present || ch.subfield_id == sf.id;
        }
        if (!present) {
            continue;
        }
        const SubfieldChannels ch = bind_subfield(channels, sf);
        const RawChannel& flow = *ch.flow;

        // Qualifying flow samples grouped into runs.
        std::vector<Run> runs;
        Run current;
        for (std::size_t k = 0; k < flow.times.size(); ++k) {
            const double t = flow.times[k];
            const auto era = era_at(criteria, sf.id, t);
            const bool ok = criteria.night.contains(t) && flow.values[k] >= criteria.min_flow_m3s &&
                            era.has_value() && all_available(ch, t, gap);
            if (!ok) {
                continue;
            }
            const bool joins = !current.times.empty() && t - current.times.back() <= gap &&
                               *era == current.era;
            if (!joins && !current.times.empty()) {
                runs.push_back(std::move(current));
                current = Run{};
            }
            current.era = *era;
            current.times.push_back(t);
            current.flows.push_back(flow.values[k]);
        }
        if (!current.times.empty()) {
            runs.push_back(std::move(current));
        }

        for (const Run& run : runs) {
            const double t0 = run.times.front();
            const double span = run.times.back() - t0;
            const auto n = static_cast<std::size_t>(std::floor(span / criteria.dt_s + 1e-9)) + 1;
            std::vector<double> grid(n);
            for (std::size_t g = 0; g < n; ++g) {
                grid[g] = t0 + static_cast<double>(g) * criteria.dt_s;
            }
            // Grid points where some channel has no coverage split the run.
            std::size_t begin = 0;
            for (std::size_t g = 0; g <= n; ++g) {
                double v = 0.0;
                const bool ok = g < n && sample_at(run.times, run.flows, grid[g], gap, v) &&
                                all_available(ch, grid[g], gap);
                if (!ok) {
                    emit_segment(sf, ch, run, grid, begin, g, criteria, out);
                    begin = g + 1;
                }
            }
        }
    }
    return out;
}

DataDir scan_data_dir(const std::string& dir)
{
    namespace fs = std::filesystem;
    DataDir d;
    std::error_code ec;
    if (!fs::is_directory(dir, ec)) {
        throw Error(ErrorKind::IoError, "data directory '" + dir + "' does not exist");
    }
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".csv") {
            d.csv_files.push_back(entry.path().string());
        }
    }
    std::sort(d.csv_files.begin(), d.csv_files.end());
    const fs::path eras = fs::path(dir) / "eras.json";
    if (fs::exists(eras)) {
        std::ifstream is(eras);
        nlohmann::json j;
        try {
            is >> j;
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorKind::ConfigError, "eras.json: " + std::string(e.what()));
        }
        d.eras = era_labels_from_json(j);
        d.has_era_file = true;
    }
    return d;
}

std::vector<HomogenizationSequence> load_sequences(const std::string& dir, const FieldModel& field,
                                                   PeriodCriteria criteria, const ChannelMap& map,
                                                   std::size_t threads)
{
    const DataDir d = scan_data_dir(dir);
    if (d.csv_files.empty()) {
        throw Error(ErrorKind::IoError, "no CSV files in '" + dir + "'");
    }
    if (d.has_era_file) {
        criteria.eras = d.eras;
    }
    criteria.dt_s = field.topology.timestep_s;
    const RawChannelSet channels = ingest(d.csv_files, map, threads);
    return extract_periods(channels, field.topology, criteria);
}

} // namespace troughcal

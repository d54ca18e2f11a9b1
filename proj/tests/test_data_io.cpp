#include <catch2/catch_amalgamated.hpp>

#include "support.hpp"
#include "troughcal/calibration.hpp"
#include "troughcal/data_io.hpp"
#include "troughcal/error.hpp"
#include "troughcal/grad_engine.hpp"
#include "troughcal/report_export.hpp"
#include "troughcal/synth.hpp"
#include "troughcal/time_util.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace troughcal;
namespace fs = std::filesystem;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinAbs;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name)
        : path(fs::temp_directory_path() / ("troughcal_" + name))
    {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& name, const std::string& content) const
    {
        const fs::path p = path / name;
        std::ofstream(p) << content;
        return p.string();
    }
};

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Error error_of(const std::function<void()>& fn)
{
    try {
        fn();
    } catch (const Error& e) {
        return e;
    }
    FAIL("expected an error");
    return Error(ErrorKind::ConfigError, "");
}

// Two-loop subfield feed with one sensor column per loop sensor.
std::string feed(double t0, std::size_t rows, double step, const std::function<double(double)>& flow)
{
    std::ostringstream out;
    out << "timestamp,v_dot_h,t_header,t_ambient";
    for (int l = 1; l <= 2; ++l) {
        for (int s = 1; s <= 5; ++s) {
            out << ",loop" << l << "_s" << s;
        }
    }
    out << "\n";
    for (std::size_t r = 0; r < rows; ++r) {
        const double t = t0 + step * static_cast<double>(r);
        out << format_iso8601(t) << "," << format_double(flow(t)) << ",550,288";
        for (int l = 1; l <= 2; ++l) {
            for (int s = 1; s <= 5; ++s) {
                out << "," << 500 - s;
            }
        }
        out << "\n";
    }
    return out.str();
}

} // namespace

TEST_CASE("minimal file gives one channel with two samples", "[data_io]")
{
    TempDir d("ingest_min");
    const auto f = d.file("SF1_2024-03-01.csv", "timestamp,t_ambient\n2024-03-01T00:00:00Z,290\n2024-03-01T00:00:05Z,291\n");
    const RawChannelSet set = ingest(std::vector<std::string>{f});
    REQUIRE(set.channels.size() == 1);
    REQUIRE(set.channels[0].subfield_id == "SF1");
    REQUIRE(set.channels[0].binding.role == ChannelRole::Ambient);
    REQUIRE(set.channels[0].values == std::vector<double>{290.0, 291.0});
    REQUIRE(set.channels[0].times[1] - set.channels[0].times[0] == 5.0);
}

TEST_CASE("duplicate timestamps name the row", "[data_io]")
{
    TempDir d("ingest_dup");
    const auto f = d.file("SF1_2024-03-01.csv",
                          "timestamp,t_ambient\n2024-03-01T00:00:00Z,290\n2024-03-01T00:00:05Z,291\n"
                          "2024-03-01T00:00:05Z,292\n");
    const Error e = error_of([&] { ingest(std::vector<std::string>{f}); });
    REQUIRE(e.kind() == ErrorKind::NonMonotoneTime);
    REQUIRE_THAT(e.message(), ContainsSubstring("row 4"));
    REQUIRE_THAT(e.message(), ContainsSubstring("SF1_2024-03-01.csv"));
}

TEST_CASE("degC columns are converted to K", "[data_io]")
{
    TempDir d("ingest_degc");
    const auto f = d.file("SF1_2024-03-01.csv", "timestamp,t_ambient[degC]\n2024-03-01T00:00:00Z,20.0\n");
    const RawChannelSet set = ingest(std::vector<std::string>{f});
    REQUIRE(set.channels[0].values[0] == 293.15);
    REQUIRE(set.channels[0].source_unit == Unit::Celsius);
}

TEST_CASE("schema and unit errors", "[data_io]")
{
    TempDir d("ingest_err");
    const auto unit = d.file("SF1_2024-03-01.csv", "timestamp,t_ambient[F]\n2024-03-01T00:00:00Z,20.0\n");
    REQUIRE(error_of([&] { ingest(std::vector<std::string>{unit}); }).kind() == ErrorKind::UnknownUnit);
    const auto nots = d.file("SF1_2024-03-02.csv", "time,t_ambient\n2024-03-01T00:00:00Z,20.0\n");
    REQUIRE(error_of([&] { ingest(std::vector<std::string>{nots}); }).kind() == ErrorKind::SchemaError);
    const auto badts = d.file("SF1_2024-03-03.csv", "timestamp,t_ambient\nyesterday,20.0\n");
    REQUIRE(error_of([&] { ingest(std::vector<std::string>{badts}); }).kind() == ErrorKind::SchemaError);
    REQUIRE(error_of([] { parse_unit("kelvin"); }).kind() == ErrorKind::UnknownUnit);
    for (const char* tag : {"K", "degC", "m3_per_s", "fraction"}) {
        REQUIRE(to_string(parse_unit(tag)) == tag);
    }
}

TEST_CASE("files of one subfield are concatenated in time order", "[data_io]")
{
    TempDir d("ingest_concat");
    const auto a = d.file("SF1_2024-03-01.csv", "timestamp,t_ambient\n2024-03-01T23:59:55Z,290\n");
    const auto b = d.file("SF1_2024-03-02.csv", "timestamp,t_ambient\n2024-03-02T00:00:00Z,291\n");
    const auto c = d.file("SF2_2024-03-02.csv", "timestamp,t_ambient\n2024-03-02T00:00:00Z,280\n");
    const RawChannelSet set = ingest(std::vector<std::string>{b, c, a}, {}, 2);
    REQUIRE(set.subfields() == std::vector<std::string>{"SF1", "SF2"});
    const RawChannel* sf1 = set.find("SF1", ChannelRole::Ambient);
    REQUIRE(sf1->values == std::vector<double>{290.0, 291.0});
}

TEST_CASE("continuous night gives one sequence, a long dip splits it", "[data_io]")
{
    const FieldTopology topo = testsupport::field(2).topology;
    const double t0 = parse_iso8601("2024-03-01T00:00:00Z");
    PeriodCriteria crit;
    SECTION("continuous")
    {
        TempDir d("extract_one");
        const auto f = d.file("SF1_2024-03-01.csv", feed(t0, 1441, 5.0, [](double) { return 0.01; }));
        const auto seqs = extract_periods(ingest(std::vector<std::string>{f}), topo, crit);
        REQUIRE(seqs.size() == 1);
        REQUIRE(seqs[0].steps() == 1441);
        REQUIRE(seqs[0].id == "SF1_2024-03-01T00:00:00Z");
    }
    SECTION("dip longer than max_gap")
    {
        TempDir d("extract_two");
        const double dip = t0 + 3600.0;
        const auto f = d.file("SF1_2024-03-01.csv", feed(t0, 1441 * 2, 5.0, [&](double t) {
                                  return t >= dip && t < dip + 120.0 ? 0.0 : 0.01;
                              }));
        const auto seqs = extract_periods(ingest(std::vector<std::string>{f}), topo, crit);
        REQUIRE(seqs.size() == 2);
        REQUIRE(seqs[0].t_end() < dip);
        REQUIRE(seqs[1].t_start >= dip + 120.0);
    }
    SECTION("short dip is bridged")
    {
        TempDir d("extract_bridge");
        const double dip = t0 + 3600.0;
        const auto f = d.file("SF1_2024-03-01.csv", feed(t0, 1441 * 2, 5.0, [&](double t) {
                                  return t >= dip && t < dip + 30.0 ? 0.0 : 0.01;
                              }));
        REQUIRE(extract_periods(ingest(std::vector<std::string>{f}), topo, crit).size() == 1);
    }
    SECTION("daytime samples never qualify")
    {
        TempDir d("extract_day");
        const double noon = parse_iso8601("2024-03-01T10:00:00Z");
        const auto f = d.file("SF1_2024-03-01.csv", feed(noon, 1441, 5.0, [](double) { return 0.01; }));
        REQUIRE(extract_periods(ingest(std::vector<std::string>{f}), topo, crit).empty());
        crit.night.mode = NightWindow::Mode::Solar;
        REQUIRE(extract_periods(ingest(std::vector<std::string>{f}), topo, crit).empty());
    }
}

TEST_CASE("solar elevation is negative at local midnight and positive at noon", "[data_io]")
{
    const double midnight = parse_iso8601("2024-06-21T00:12:00Z");
    const double noon = parse_iso8601("2024-06-21T12:12:00Z");
    REQUIRE(solar_elevation_deg(midnight, 37.2, -3.1) < -20.0);
    // Summer-solstice noon elevation at 37.2 N is about 90 - 37.2 + 23.44.
    REQUIRE_THAT(solar_elevation_deg(noon, 37.2, -3.1), WithinAbs(76.24, 0.5));
}

TEST_CASE("one-year feed with 176 qualifying nights", "[data_io]")
{
    // Coarse 60 s samples keep the feed small; nights qualify on a fixed
    // pattern, the others run too briefly or not at all.
    const FieldTopology topo = testsupport::field(2).topology;
    RawChannelSet set;
    auto channel = [&](ChannelRole role, const std::string& loop, std::size_t sensor) {
        RawChannel c;
        c.id = "x";
        c.subfield_id = "SF1";
        c.binding.role = role;
        c.binding.loop_id = loop;
        c.binding.sensor = sensor;
        return c;
    };
    std::vector<RawChannel> ch{channel(ChannelRole::Flow, "", 0), channel(ChannelRole::Header, "", 0),
                               channel(ChannelRole::Ambient, "", 0)};
    for (const char* loop : {"1", "2"}) {
        for (std::size_t s = 0; s < 5; ++s) {
            ch.push_back(channel(ChannelRole::Sensor, loop, s));
        }
    }
    const double t0 = parse_iso8601("2024-01-01T00:00:00Z");
    std::size_t planned = 0;
    for (int day = 0; day < 366; ++day) {
        const bool qualifies = (day * 176) / 366 != ((day + 1) * 176) / 366;
        planned += qualifies;
        for (int m = 0; m < 180; ++m) {
            const double t = t0 + 86400.0 * day + 3600.0 + 60.0 * m;
            const double flow = (qualifies || m < 20) ? 0.01 : 0.0;
            for (std::size_t k = 0; k < ch.size(); ++k) {
                ch[k].times.push_back(t);
                ch[k].values.push_back(k == 0 ? flow : 500.0);
            }
        }
    }
    REQUIRE(planned == 176);
    set.channels = ch;
    PeriodCriteria crit;
    const auto seqs = extract_periods(set, topo, crit);
    REQUIRE(seqs.size() == 176);
    for (std::size_t i = 1; i < seqs.size(); ++i) {
        REQUIRE(seqs[i - 1].t_end() < seqs[i].t_start);
    }
}

TEST_CASE("extracted periods are disjoint and satisfy every criterion", "[data_io][property]")
{
    auto sc = testsupport::scenario(2, 4, 2400.0, 0.3, 3);
    sc.nights[1].drive.duration_s = 1200.0; // too short to qualify
    const GeneratedData data = generate(sc);
    TempDir d("extract_prop");
    write_generated(data, sc, d.path.string());
    PeriodCriteria crit;
    const auto seqs = load_sequences(d.path.string(), sc.field, crit);
    REQUIRE(seqs.size() == 3);
    for (std::size_t i = 0; i < seqs.size(); ++i) {
        const auto& s = seqs[i];
        REQUIRE(s.t_end() - s.t_start >= crit.min_duration_s);
        for (std::size_t k = 0; k < s.steps(); ++k) {
            REQUIRE(crit.night.contains(s.t_start + s.dt * static_cast<double>(k)));
            REQUIRE(s.v_dot_h[k] >= crit.min_flow_m3s);
        }
        if (i > 0) {
            REQUIRE(seqs[i - 1].t_end() < s.t_start);
        }
    }
}

TEST_CASE("generate, write, ingest, simulate closes the loop", "[data_io]")
{
    const auto sc = testsupport::scenario(3, 2, 1800.0, 0.0, 6);
    const GeneratedData data = generate(sc);
    TempDir d("roundtrip");
    write_generated(data, sc, d.path.string());
    const auto seqs = load_sequences(d.path.string(), sc.field, PeriodCriteria{});
    REQUIRE(seqs.size() == data.sequences.size());
    for (std::size_t i = 0; i < seqs.size(); ++i) {
        REQUIRE(seqs[i].id == data.sequences[i].id);
        REQUIRE(seqs[i].steps() == data.sequences[i].steps());
        for (std::size_t k = 0; k < seqs[i].steps(); ++k) {
            REQUIRE_THAT(seqs[i].v_dot_h[k], WithinAbs(data.sequences[i].v_dot_h[k], 1e-12));
            REQUIRE_THAT(seqs[i].t_header[k], WithinAbs(data.sequences[i].t_header[k], 1e-9));
        }
        for (std::size_t l = 0; l < seqs[i].loops.size(); ++l) {
            for (std::size_t q = 0; q < seqs[i].loops[l].values.size(); ++q) {
                REQUIRE_THAT(seqs[i].loops[l].values[q], WithinAbs(data.sequences[i].loops[l].values[q], 1e-9));
            }
        }
    }
    REQUIRE(loss(data.truth, seqs, sc.field) < 1e-10);
}

TEST_CASE("same scenario and seed produce identical bytes", "[data_io][determinism]")
{
    auto sc = testsupport::scenario(2, 2, 900.0, 0.5, 42);
    TempDir a("bytes_a"), b("bytes_b");
    const auto fa = write_generated(generate(sc), sc, a.path.string());
    const auto fb = write_generated(generate(sc), sc, b.path.string());
    REQUIRE(fa.size() == fb.size());
    for (std::size_t i = 0; i < fa.size(); ++i) {
        REQUIRE(fs::path(fa[i]).filename() == fs::path(fb[i]).filename());
        REQUIRE(slurp(fa[i]) == slurp(fb[i]));
    }
    sc.seed = 43;
    TempDir c("bytes_c");
    const auto fc = write_generated(generate(sc), sc, c.path.string());
    REQUIRE(slurp(fc[0]) != slurp(fa[0]));
}

TEST_CASE("noise floor of generated data", "[data_io]")
{
    const auto sc = testsupport::scenario(2, 1, 1800.0, 0.5, 9);
    const GeneratedData noisy = generate(sc);
    auto clean_sc = sc;
    clean_sc.noise_sigma_k = 0.0;
    const GeneratedData clean = generate(clean_sc);
    double s2 = 0.0;
    std::size_t n = 0;
    for (std::size_t l = 0; l < noisy.sequences[0].loops.size(); ++l) {
        const auto& a = noisy.sequences[0].loops[l].values;
        const auto& b = clean.sequences[0].loops[l].values;
        for (std::size_t q = 0; q < a.size(); ++q) {
            s2 += (a[q] - b[q]) * (a[q] - b[q]);
            ++n;
        }
    }
    REQUIRE_THAT(std::sqrt(s2 / static_cast<double>(n)), WithinAbs(0.5, 0.02));
}

TEST_CASE("topology and data loop sets must agree", "[data_io]")
{
    const auto sc = testsupport::scenario(3, 1, 1800.0, 0.0, 6);
    TempDir d("mismatch");
    write_generated(generate(sc), sc, d.path.string());
    const FieldModel wrong = testsupport::field(4);
    const Error e = error_of([&] { load_sequences(d.path.string(), wrong, PeriodCriteria{}); });
    REQUIRE(e.kind() == ErrorKind::ConfigError);
    REQUIRE_THAT(e.message(), ContainsSubstring("4"));
}

TEST_CASE("era labels assign eras and split periods", "[data_io]")
{
    auto sc = testsupport::scenario(2, 2, 1800.0, 0.0, 6);
    sc.nights[1].era = 5;
    auto omega5 = sc.omega.front();
    omega5.era = 5;
    sc.omega.push_back(omega5);
    const GeneratedData data = generate(sc);
    TempDir d("eras");
    write_generated(data, sc, d.path.string());
    const DataDir dir = scan_data_dir(d.path.string());
    REQUIRE(dir.has_era_file);
    const auto seqs = load_sequences(d.path.string(), sc.field, PeriodCriteria{});
    REQUIRE(seqs.size() == 2);
    REQUIRE(seqs[0].valve_era == 0);
    REQUIRE(seqs[1].valve_era == 5);
    const auto back = era_labels_from_json(era_labels_to_json(dir.eras));
    REQUIRE(back.size() == dir.eras.size());
}

TEST_CASE("report export", "[data_io][export]")
{
    auto sc = testsupport::scenario(3, 1, 900.0, 0.0, 6);
    sc.degraded = {{"2", 3, 5.0}};
    const GeneratedData data = generate(sc);
    TempDir d("export");
    SECTION("zero-epoch report has headers and the initial loss")
    {
        TrainConfig c;
        c.epochs = 0;
        const FitResult r = fit(data.sequences, sc.field, c);
        export_report(r.report, r.params, data.sequences, sc.field, d.path.string());
        const CsvTable lc = read_csv((d.path / "loss_curve.csv").string());
        REQUIRE(lc.header == std::vector<std::string>{"epoch", "loss_k2"});
        REQUIRE(lc.rows.size() == 1);
        REQUIRE(std::stod(lc.rows[0][1]) == r.report.loss_curve[0]);
        for (const char* f : {"beta.csv", "hpg.csv", "hpg_map.csv", "rmse.csv", "heat_loss_ranking.csv",
                              "self_consistency.csv", "loss_curve.svg", "beta.svg", "hpg_map.svg"}) {
            REQUIRE(fs::exists(d.path / f));
        }
    }
    SECTION("beta rows sum to one and the degraded span is the map maximum")
    {
        const FitReport r = build_report(data.truth, data.sequences, sc.field);
        export_report(r, data.truth, data.sequences, sc.field, d.path.string());
        const CsvTable beta = read_csv((d.path / "beta.csv").string());
        double sum = 0.0;
        for (const auto& row : beta.rows) {
            sum += std::stod(row.back());
        }
        REQUIRE_THAT(sum, WithinAbs(1.0, 1e-9));
        const CsvTable map = read_csv((d.path / "hpg_map.csv").string());
        REQUIRE(map.header == std::vector<std::string>{"loop", "span1", "span2", "span3", "span4"});
        for (const auto& row : map.rows) {
            if (row[0] == "2") {
                const double v4 = std::stod(row[4]);
                for (std::size_t c = 1; c < 4; ++c) {
                    REQUIRE(v4 > std::stod(row[c]));
                }
            }
        }
        // Series files re-parse with the ingest reader.
        const auto series = d.path / "series" / (safe_file_name(data.sequences[0].id) + ".csv");
        const CsvTable t = read_csv(series.string());
        REQUIRE(t.header.front() == "timestamp");
        REQUIRE(t.rows.size() == data.sequences[0].steps() * 3 * 5);
    }
}

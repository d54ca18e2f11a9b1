#include "troughcal/synth.hpp"

#include "troughcal/error.hpp"
#include "troughcal/hydraulics.hpp"
#include "troughcal/thermal_pde.hpp"
#include "troughcal/time_util.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>

namespace troughcal {

double DriveProfile::flow(double tau) const noexcept
{
    if (tau < 0.0 || tau > duration_s) {
        return 0.0;
    }
    // Ramps are offset by one step so both window ends carry non-zero flow.
    const double step = 5.0;
    const double up = flow_ramp_s > 0.0 ? (tau + step) / flow_ramp_s : 1.0;
    const double down = flow_ramp_s > 0.0 ? (duration_s - tau + step) / flow_ramp_s : 1.0;
    return flow_m3s * std::min({1.0, up, down});
}

double DriveProfile::header(double tau) const noexcept
{
    const double x = header_rise_s > 0.0 ? std::clamp(tau / header_rise_s, 0.0, 1.0) : 1.0;
    const double smooth = x * x * (3.0 - 2.0 * x);
    return header_start_k + (header_peak_k - header_start_k) * smooth -
           header_decay_k_per_h * std::max(0.0, tau) / 3600.0;
}

double DriveProfile::ambient(double tau) const noexcept
{
    return ambient_k + ambient_drift_k_per_h * tau / 3600.0;
}

void SyntheticScenario::validate() const
{
    if (!(noise_sigma_k >= 0.0)) {
        throw Error(ErrorKind::ConfigError, "noise sigma must be non-negative");
    }
    if (!(alpha > 0.0) || !(h_pg_nominal > 0.0)) {
        throw Error(ErrorKind::ConfigError, "alpha and nominal h_pg must be positive");
    }
    if (!(margin_s >= 0.0)) {
        throw Error(ErrorKind::ConfigError, "margin must be non-negative");
    }
    const double dt = field.topology.timestep_s;
    for (const auto& n : nights) {
        const double steps = n.drive.duration_s / dt;
        if (!(n.drive.duration_s >= dt) || std::abs(steps - std::round(steps)) > 1e-9) {
            throw Error(ErrorKind::ConfigError, "night duration must be a positive multiple of the timestep");
        }
        if (n.drive.flow_m3s < 0.0) {
            throw Error(ErrorKind::ConfigError, "night flow must be non-negative");
        }
        for (const auto& sf : field.topology.subfields) {
            auto it = std::find_if(omega.begin(), omega.end(), [&](const OmegaTruth& o) {
                return o.subfield_id == sf.id && o.era == n.era;
            });
            if (it == omega.end()) {
                throw Error(ErrorKind::ConfigError, "no true omega for subfield '" + sf.id + "' era " +
                                                        std::to_string(n.era));
            }
            if (it->values.size() != sf.loops.size()) {
                throw Error(ErrorKind::ConfigError, "true omega length differs from loop count in '" + sf.id + "'");
            }
        }
    }
    for (std::size_t i = 0; i < nights.size(); ++i) {
        for (std::size_t k = i + 1; k < nights.size(); ++k) {
            const auto& x = nights[i];
            const auto& y = nights[k];
            if (x.start_s - margin_s <= y.start_s + y.drive.duration_s + margin_s &&
                y.start_s - margin_s <= x.start_s + x.drive.duration_s + margin_s) {
                throw Error(ErrorKind::ConfigError, "synthetic nights overlap");
            }
        }
    }
    for (const auto& d : degraded) {
        const LoopSpec* loop = field.topology.find_loop(d.loop_id);
        if (loop == nullptr || d.span >= loop->n_spans() || !(d.factor > 0.0)) {
            throw Error(ErrorKind::ConfigError, "invalid degraded span for loop '" + d.loop_id + "'");
        }
    }
}

namespace {

DriveProfile drive_from_json(const nlohmann::json& j, DriveProfile d)
{
    d.duration_s = j.value("duration_s", d.duration_s);
    d.flow_m3s = j.value("flow_m3s", d.flow_m3s);
    d.flow_ramp_s = j.value("flow_ramp_s", d.flow_ramp_s);
    d.header_start_k = j.value("header_start_k", d.header_start_k);
    d.header_peak_k = j.value("header_peak_k", d.header_peak_k);
    d.header_rise_s = j.value("header_rise_s", d.header_rise_s);
    d.header_decay_k_per_h = j.value("header_decay_k_per_h", d.header_decay_k_per_h);
    d.ambient_k = j.value("ambient_k", d.ambient_k);
    d.ambient_drift_k_per_h = j.value("ambient_drift_k_per_h", d.ambient_drift_k_per_h);
    d.loop_mean_k = j.value("loop_mean_k", d.loop_mean_k);
    d.loop_spread_k = j.value("loop_spread_k", d.loop_spread_k);
    d.loop_gradient_k = j.value("loop_gradient_k", d.loop_gradient_k);
    return d;
}

nlohmann::json drive_to_json(const DriveProfile& d)
{
    return {{"duration_s", d.duration_s},
            {"flow_m3s", d.flow_m3s},
            {"flow_ramp_s", d.flow_ramp_s},
            {"header_start_k", d.header_start_k},
            {"header_peak_k", d.header_peak_k},
            {"header_rise_s", d.header_rise_s},
            {"header_decay_k_per_h", d.header_decay_k_per_h},
            {"ambient_k", d.ambient_k},
            {"ambient_drift_k_per_h", d.ambient_drift_k_per_h},
            {"loop_mean_k", d.loop_mean_k},
            {"loop_spread_k", d.loop_spread_k},
            {"loop_gradient_k", d.loop_gradient_k}};
}

} // namespace

SyntheticScenario scenario_from_json(const nlohmann::json& j)
{
    SyntheticScenario s;
    try {
        s.field = build_field_model(TopologyConfig{j.value("field", nlohmann::json::object())});
        const auto truth = j.value("truth", nlohmann::json::object());
        s.a = truth.value("a", s.a);
        s.b = truth.value("b", s.b);
        s.alpha = truth.value("alpha", s.alpha);
        s.h_pg_nominal = truth.value("h_pg_nominal", s.h_pg_nominal);
        for (const auto& o : truth.value("omega", nlohmann::json::array())) {
            s.omega.push_back({o.at("subfield").get<std::string>(), o.value("era", 0),
                               o.at("values").get<std::vector<double>>()});
        }
        for (const auto& d : truth.value("degraded", nlohmann::json::array())) {
            s.degraded.push_back({d.at("loop").get<std::string>(), d.at("span").get<std::size_t>(),
                                  d.value("factor", 5.0)});
        }
        const DriveProfile base = drive_from_json(j.value("drive", nlohmann::json::object()), DriveProfile{});
        for (const auto& n : j.value("nights", nlohmann::json::array())) {
            const DriveProfile drive = drive_from_json(n.value("drive", nlohmann::json::object()), base);
            const int era = n.value("era", 0);
            if (n.contains("count")) {
                const double first = parse_iso8601(n.at("first").get<std::string>());
                const double every = n.value("every_s", 86400.0);
                const std::size_t count = n.at("count").get<std::size_t>();
                for (std::size_t k = 0; k < count; ++k) {
                    s.nights.push_back({first + every * static_cast<double>(k), era, drive});
                }
            } else {
                s.nights.push_back({parse_iso8601(n.at("start").get<std::string>()), era, drive});
            }
        }
        s.noise_sigma_k = j.value("noise_sigma_k", s.noise_sigma_k);
        s.seed = j.value("seed", s.seed);
        s.margin_s = j.value("margin_s", s.margin_s);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::ConfigError, std::string("scenario: ") + e.what());
    }
    s.validate();
    return s;
}

nlohmann::json scenario_to_json(const SyntheticScenario& s)
{
    nlohmann::json omega = nlohmann::json::array();
    for (const auto& o : s.omega) {
        omega.push_back({{"subfield", o.subfield_id}, {"era", o.era}, {"values", o.values}});
    }
    nlohmann::json degraded = nlohmann::json::array();
    for (const auto& d : s.degraded) {
        degraded.push_back({{"loop", d.loop_id}, {"span", d.span}, {"factor", d.factor}});
    }
    nlohmann::json nights = nlohmann::json::array();
    for (const auto& n : s.nights) {
        nights.push_back({{"start", format_iso8601(n.start_s)}, {"era", n.era}, {"drive", drive_to_json(n.drive)}});
    }
    return {{"field", field_model_to_json(s.field)},
            {"truth",
             {{"a", s.a},
              {"b", s.b},
              {"alpha", s.alpha},
              {"h_pg_nominal", s.h_pg_nominal},
              {"omega", omega},
              {"degraded", degraded}}},
            {"nights", nights},
            {"noise_sigma_k", s.noise_sigma_k},
            {"seed", s.seed},
            {"margin_s", s.margin_s}};
}

namespace {

std::string sequence_id(const std::string& subfield, double start)
{
    return subfield + "_" + format_iso8601(start);
}

ParamSet build_truth(const SyntheticScenario& s)
{
    ParamSet p;
    p.a = s.a;
    p.b = s.b;
    if (s.field.alpha_mode == AlphaMode::Global) {
        p.log_alpha.push_back({"*", std::log(s.alpha)});
    } else {
        for (const auto& sf : s.field.topology.subfields) {
            p.log_alpha.push_back({sf.id, std::log(s.alpha)});
        }
    }
    std::set<int> eras;
    for (const auto& n : s.nights) {
        eras.insert(n.era);
    }
    for (const auto& o : s.omega) {
        if (eras.count(o.era) != 0) {
            p.omega.push_back({o.subfield_id, o.era, o.values});
        }
    }
    for (const auto& n : s.nights) {
        for (const auto& sf : s.field.topology.subfields) {
            for (const auto& loop : sf.loops) {
                std::vector<double> raw(loop.n_spans());
                for (std::size_t k = 0; k < raw.size(); ++k) {
                    double factor = 1.0;
                    for (const auto& d : s.degraded) {
                        if (d.loop_id == loop.id && d.span == k) {
                            factor = d.factor;
                        }
                    }
                    raw[k] = softplus_inverse(s.h_pg_nominal * factor);
                }
                p.h_pg.push_back({sequence_id(sf.id, n.start_s), loop.id, std::move(raw)});
            }
        }
    }
    p.canonicalize(s.field.topology);
    return p;
}

struct LoopSim {
    LoopModel model;
    std::vector<double> h_pg;
    ThermalState state;
    ThermalState next;
};

void sample_sensors(const LoopSim& sim, std::vector<double>& out)
{
    for (std::size_t c : sim.model.sensor_cells) {
        out.push_back(sim.state.fluid[c]);
    }
}

} // namespace

GeneratedData generate(const SyntheticScenario& scenario)
{
    scenario.validate();
    const FieldModel& field = scenario.field;
    const double dt = field.topology.timestep_s;
    GeneratedData data;
    data.truth = build_truth(scenario);
    std::mt19937_64 rng(scenario.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    const double sigma = scenario.noise_sigma_k;
    auto noisy = [&](double v) { return sigma > 0.0 ? v + sigma * normal(rng) : v; };

    const auto margin_steps = static_cast<std::size_t>(std::floor(scenario.margin_s / dt + 1e-9));
    std::vector<std::size_t> order(scenario.nights.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        order[i] = i;
    }
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
        return scenario.nights[x].start_s < scenario.nights[y].start_s;
    });

    for (const auto& sf : field.topology.subfields) {
        const std::size_t n_loops = sf.loops.size();
        for (std::size_t night_index : order) {
            const SyntheticNight& night = scenario.nights[night_index];
            const DriveProfile& drive = night.drive;
            const std::string id = sequence_id(sf.id, night.start_s);
            const auto window = static_cast<std::size_t>(std::llround(drive.duration_s / dt)) + 1;
            const OmegaBlock* omega = data.truth.find_omega(sf.id, night.era);
            const AllocationParams alloc{data.truth.a, data.truth.b,
                                         std::exp(data.truth.log_alpha[data.truth.alpha_index(sf.id)].log_alpha)};

            std::vector<LoopSim> sims;
            sims.reserve(n_loops);
            for (std::size_t i = 0; i < n_loops; ++i) {
                const LoopSpec& loop = sf.loops[i];
                LoopSim sim{LoopModel::make(loop, field), {}, {}, {}};
                const HpgBlock* block = data.truth.find_hpg(id, loop.id);
                std::vector<double> spans(block->raw.size());
                for (std::size_t k = 0; k < spans.size(); ++k) {
                    spans[k] = softplus(block->raw[k]);
                }
                sim.h_pg = cells_from_spans(spans, sim.model);
                const double pos = n_loops > 1 ? static_cast<double>(i) / static_cast<double>(n_loops - 1) - 0.5 : 0.0;
                std::vector<double> first(loop.sensors.size());
                for (std::size_t k = 0; k < first.size(); ++k) {
                    first[k] = drive.loop_mean_k + drive.loop_spread_k * pos +
                               drive.loop_gradient_k * (loop.sensors[k].fraction - 0.5);
                }
                sim.state = initial_state_from_sensors(first, sim.model.sensor_cells, sim.model.n_segments,
                                                       drive.ambient(0.0));
                sim.next = ThermalState(sim.model.n_segments);
                sims.push_back(std::move(sim));
            }

            NightRecord rec;
            rec.subfield_id = sf.id;
            rec.sequence_id = id;
            rec.sensors.assign(n_loops, {});
            HomogenizationSequence seq;
            seq.id = id;
            seq.subfield_id = sf.id;
            seq.period_id = id;
            seq.valve_era = night.era;
            seq.t_start = night.start_s;
            seq.dt = dt;
            for (const auto& loop : sf.loops) {
                seq.loops.push_back({loop.id, loop.sensors.size(), {}});
            }
            std::vector<std::vector<double>> beta_series;

            const std::size_t total = margin_steps + window + margin_steps;
            std::vector<double> clean;
            for (std::size_t g = 0; g < total; ++g) {
                const double tau = (static_cast<double>(g) - static_cast<double>(margin_steps)) * dt;
                const bool in_window = g >= margin_steps && g < margin_steps + window;
                const double flow = in_window ? drive.flow(tau) : 0.0;
                const double header = drive.header(tau);
                const double ambient = drive.ambient(tau);
                rec.times.push_back(night.start_s + tau);
                rec.flow.push_back(flow);
                rec.header.push_back(header);
                rec.ambient.push_back(ambient);

                std::vector<double> t_mu(n_loops);
                for (std::size_t i = 0; i < n_loops; ++i) {
                    clean.clear();
                    sample_sensors(sims[i], clean);
                    double acc = 0.0;
                    for (double v : clean) {
                        acc += v;
                    }
                    t_mu[i] = acc / static_cast<double>(clean.size());
                    for (double v : clean) {
                        const double m = noisy(v);
                        rec.sensors[i].push_back(m);
                        if (in_window) {
                            seq.loops[i].values.push_back(m);
                        }
                    }
                }
                if (in_window) {
                    seq.v_dot_h.push_back(flow);
                    seq.t_header.push_back(header);
                    seq.t_ambient.push_back(ambient);
                }
                // Held state upstream of circulation; simulated after it.
                if (g + 1 < margin_steps || g + 1 == total) {
                    continue;
                }
                if (g + 1 == margin_steps) {
                    continue;
                }
                const std::vector<double> beta = mass_flow_ratios(t_mu, omega->values, alloc);
                if (in_window && g + 1 < margin_steps + window) {
                    beta_series.push_back(beta);
                }
                for (std::size_t i = 0; i < n_loops; ++i) {
                    BoundaryDrive d;
                    d.inlet_k = header;
                    d.header_k = header;
                    d.ambient_k = ambient;
                    d.sky_k = sky_temperature(ambient, field.sky_offset_k);
                    d.velocity = beta[i] * alloc.alpha * std::max(0.0, flow) / sf.loops[i].geometry.fluid_area;
                    try {
                        step(sims[i].state, d, sims[i].h_pg, sims[i].model, sims[i].next);
                    } catch (const Error& e) {
                        const std::size_t n = g - margin_steps;
                        throw Error(e.kind(), "night " + id + " loop " + sf.loops[i].id + ": " + e.message(), n);
                    }
                    std::swap(sims[i].state, sims[i].next);
                }
            }
            data.sequences.push_back(std::move(seq));
            data.beta.push_back(std::move(beta_series));
            data.records.push_back(std::move(rec));
            data.eras.push_back({sf.id, night.era, night.start_s - scenario.margin_s,
                                 night.start_s + drive.duration_s + scenario.margin_s});
        }
    }
    return data;
}

namespace {

void write_text(const std::string& path, const std::string& text)
{
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) {
        throw Error(ErrorKind::IoError, "cannot write " + path);
    }
    os << text;
    if (!os) {
        throw Error(ErrorKind::IoError, "failed writing " + path);
    }
}

} // namespace

std::vector<std::string> write_generated(const GeneratedData& data, const SyntheticScenario& scenario,
                                         const std::string& dir)
{
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) {
        throw Error(ErrorKind::IoError, "cannot create " + dir + ": " + ec.message());
    }
    std::vector<std::string> written;

    // Rows grouped by (subfield, UTC day) keep one file per subfield per day.
    std::map<std::pair<std::string, std::string>, std::vector<std::pair<const NightRecord*, std::size_t>>> files;
    for (const auto& rec : data.records) {
        for (std::size_t g = 0; g < rec.times.size(); ++g) {
            files[{rec.subfield_id, format_date(rec.times[g])}].push_back({&rec, g});
        }
    }
    for (const auto& [key, rows] : files) {
        const SubfieldSpec& sf = scenario.field.topology.subfield(key.first);
        std::string text = "timestamp,v_dot_h,t_header,t_ambient";
        for (const auto& loop : sf.loops) {
            for (std::size_t k = 0; k < loop.sensors.size(); ++k) {
                text += ",loop" + loop.id + "_s" + std::to_string(k + 1);
            }
        }
        text += '\n';
        for (const auto& [rec, g] : rows) {
            text += format_iso8601(rec->times[g]);
            text += ',' + format_double(rec->flow[g]);
            text += ',' + format_double(rec->header[g]);
            text += ',' + format_double(rec->ambient[g]);
            for (std::size_t i = 0; i < sf.loops.size(); ++i) {
                const std::size_t m = sf.loops[i].sensors.size();
                for (std::size_t k = 0; k < m; ++k) {
                    text += ',' + format_double(rec->sensors[i][g * m + k]);
                }
            }
            text += '\n';
        }
        const std::string path = (fs::path(dir) / (key.first + "_" + key.second + ".csv")).string();
        write_text(path, text);
        written.push_back(path);
    }

    nlohmann::json truth;
    truth["scenario"] = scenario_to_json(scenario);
    truth["params"] = params_to_json(data.truth);
    nlohmann::json seqs = nlohmann::json::array();
    for (std::size_t q = 0; q < data.sequences.size(); ++q) {
        const auto& seq = data.sequences[q];
        const SubfieldSpec& sf = scenario.field.topology.subfield(seq.subfield_id);
        const auto& beta = data.beta[q];
        std::vector<double> mean(sf.loops.size(), 0.0);
        for (const auto& row : beta) {
            for (std::size_t i = 0; i < row.size(); ++i) {
                mean[i] += row[i] / static_cast<double>(beta.size());
            }
        }
        nlohmann::json h = nlohmann::json::object();
        for (const auto& loop : sf.loops) {
            const HpgBlock* b = data.truth.find_hpg(seq.period_id, loop.id);
            std::vector<double> v;
            for (double r : b->raw) {
                v.push_back(softplus(r));
            }
            h[loop.id] = v;
        }
        std::vector<std::string> ids;
        for (const auto& loop : sf.loops) {
            ids.push_back(loop.id);
        }
        seqs.push_back({{"id", seq.id},
                        {"subfield", seq.subfield_id},
                        {"era", seq.valve_era},
                        {"start", format_iso8601(seq.t_start)},
                        {"steps", seq.steps()},
                        {"loops", ids},
                        {"beta_mean", mean},
                        {"beta", beta},
                        {"h_pg", h}});
    }
    truth["sequences"] = seqs;
    const std::string truth_path = (fs::path(dir) / "truth.json").string();
    write_text(truth_path, truth.dump(1) + "\n");
    written.push_back(truth_path);
    const std::string era_path = (fs::path(dir) / "eras.json").string();
    write_text(era_path, era_labels_to_json(data.eras).dump(1) + "\n");
    written.push_back(era_path);
    return written;
}

} // namespace troughcal

#include "cli.hpp"

#include "troughcal/calibration.hpp"
#include "troughcal/data_io.hpp"
#include "troughcal/error.hpp"
#include "troughcal/grad_engine.hpp"
#include "troughcal/parallel.hpp"
#include "troughcal/report_export.hpp"
#include "troughcal/synth.hpp"
#include "troughcal/time_util.hpp"

#include <CLI11.hpp>
#include <openssl/evp.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <random>
#include <set>
#include <sstream>

namespace troughcal::cli {

namespace fs = std::filesystem;

namespace {

struct Common {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> threads;
    std::string data;
    std::string topology;
    std::string resume;
    std::string checkpoint;
    std::optional<std::size_t> epochs;
    std::size_t probes = 20;
};

int exit_code_for(ErrorKind kind)
{
    switch (kind) {
    case ErrorKind::CflViolation:
    case ErrorKind::DivergedLoss:
    case ErrorKind::NonFiniteGradient:
    case ErrorKind::NonFiniteInput:
        return kSimulationError;
    case ErrorKind::IoError:
    case ErrorKind::SchemaError:
    case ErrorKind::NonMonotoneTime:
    case ErrorKind::UnknownUnit:
    case ErrorKind::EmptySeries:
        return kIoError;
    default:
        return kConfigError;
    }
}

nlohmann::json read_json(const std::string& path)
{
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorKind::IoError, "cannot open '" + path + "'");
    }
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::ConfigError, "'" + path + "': " + e.what());
    }
}

void write_text(const fs::path& path, const std::string& text)
{
    fs::create_directories(path.parent_path());
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        out << text;
        if (!out) {
            throw Error(ErrorKind::IoError, "cannot write '" + path.string() + "'");
        }
    }
    fs::rename(tmp, path);
}

void write_json(const fs::path& path, const nlohmann::json& j)
{
    write_text(path, j.dump(2) + "\n");
}

std::size_t thread_cap(const Common& c)
{
    return c.threads ? std::max<std::size_t>(1, *c.threads) : default_thread_count();
}

nlohmann::json section(const nlohmann::json& config, const char* key)
{
    return config.is_object() && config.contains(key) ? config.at(key) : nlohmann::json::object();
}

using LoopKey = std::pair<std::string, std::string>; // subfield, loop

std::set<LoopKey> topology_loops(const FieldTopology& t)
{
    std::set<LoopKey> out;
    for (const auto& sf : t.subfields) {
        for (const auto& l : sf.loops) {
            out.insert({sf.id, l.id});
        }
    }
    return out;
}

std::set<LoopKey> data_loops(const RawChannelSet& set)
{
    std::set<LoopKey> out;
    for (const auto& c : set.channels) {
        if (c.binding.role == ChannelRole::Sensor) {
            out.insert({c.subfield_id, c.binding.loop_id});
        }
    }
    return out;
}

std::string join(const std::vector<LoopKey>& keys)
{
    std::string s;
    for (const auto& k : keys) {
        s += (s.empty() ? "" : ", ") + k.first + "/" + k.second;
    }
    return s;
}

/// Throws ConfigError with a diff summary when the loop sets differ.
void require_same_loops(const std::set<LoopKey>& expected, const std::set<LoopKey>& actual,
                        const std::string& expected_name, const std::string& actual_name)
{
    if (expected == actual) {
        return;
    }
    std::vector<LoopKey> missing, extra;
    std::set_difference(expected.begin(), expected.end(), actual.begin(), actual.end(), std::back_inserter(missing));
    std::set_difference(actual.begin(), actual.end(), expected.begin(), expected.end(), std::back_inserter(extra));
    std::ostringstream msg;
    msg << "loop mismatch: " << expected_name << " has " << expected.size() << " loops, " << actual_name << " has "
        << actual.size();
    if (!missing.empty()) {
        msg << "\n  only in " << expected_name << " (" << missing.size() << "): " << join(missing);
    }
    if (!extra.empty()) {
        msg << "\n  only in " << actual_name << " (" << extra.size() << "): " << join(extra);
    }
    throw Error(ErrorKind::ConfigError, msg.str());
}


std::vector<std::string> data_inputs(const std::string& dir)
{
    const DataDir d = scan_data_dir(dir);
    std::vector<std::string> files = d.csv_files;
    if (d.has_era_file) {
        files.push_back((fs::path(dir) / "eras.json").string());
    }
    return files;
}

std::vector<HomogenizationSequence> load_checked(const std::string& dir, const FieldModel& field,
                                                 const nlohmann::json& config, std::size_t threads)
{
    const DataDir d = scan_data_dir(dir);
    if (d.csv_files.empty()) {
        throw Error(ErrorKind::IoError, "no CSV files in '" + dir + "'");
    }
    PeriodCriteria criteria = period_criteria_from_json(section(config, "periods"), field.topology.timestep_s);
    if (d.has_era_file) {
        criteria.eras = d.eras;
    }
    const ChannelMap map = channel_map_from_json(section(config, "channels"));
    const RawChannelSet channels = ingest(d.csv_files, map, threads);
    require_same_loops(topology_loops(field.topology), data_loops(channels), "topology", "data");
    auto seqs = extract_periods(channels, field.topology, criteria);
    if (seqs.empty()) {
        throw Error(ErrorKind::NoSequences, "no qualifying homogenization periods in '" + dir + "'");
    }
    return seqs;
}

nlohmann::json beta_json(const std::vector<BetaEntry>& beta)
{
    nlohmann::json out = nlohmann::json::array();
    for (const auto& e : beta) {
        out.push_back({{"subfield", e.subfield_id}, {"era", e.era}, {"loop", e.loop_id}, {"beta", e.beta}});
    }
    return out;
}

nlohmann::json metrics_json(const FitReport& r, double loss_value)
{
    nlohmann::json flagged = nlohmann::json::array();
    for (const auto& s : r.heat_loss.entries) {
        if (s.flagged) {
            flagged.push_back({{"loop", s.loop_id}, {"span", s.span + 1}, {"h_pg", s.h_pg}});
        }
    }
    return {{"loss_k2", loss_value},
            {"rmse_overall_k", r.rmse_overall},
            {"beta", beta_json(r.beta)},
            {"flagged_spans", flagged}};
}

std::string hex(const unsigned char* p, unsigned n)
{
    std::ostringstream s;
    for (unsigned i = 0; i < n; ++i) {
        s << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(p[i]);
    }
    return s.str();
}

void print_error(const Error& e)
{
    std::cerr << "error: " << e.what() << "\n";
}

// ---------------------------------------------------------------------------

int cmd_synth(const Common& c)
{
    nlohmann::json j = read_json(c.config);
    if (c.seed) {
        j["seed"] = *c.seed;
    }
    const std::uint64_t seed = j.is_object() ? j.value("seed", std::uint64_t{0}) : 0;
    write_json(fs::path(c.out) / "manifest.json",
               make_manifest("synth", {{"scenario", c.config}}, {c.config}, seed, thread_cap(c), c.out));
    const SyntheticScenario sc = scenario_from_json(j);
    const GeneratedData data = generate(sc);
    const auto files = write_generated(data, sc, c.out);
    write_json(fs::path(c.out) / "topology.json", field_model_to_json(sc.field));
    std::cout << "wrote " << files.size() + 1 << " files for " << data.sequences.size() << " nights to " << c.out
              << "\n";
    return kOk;
}

int cmd_fit(const Common& c)
{
    if (c.topology.empty() && c.resume.empty()) {
        throw Error(ErrorKind::ConfigError, "fit needs --topology (or --resume)");
    }
    std::vector<std::string> inputs;
    for (const auto* p : {&c.topology, &c.config, &c.resume}) {
        if (!p->empty()) {
            inputs.push_back(*p);
        }
    }
    for (const auto& f : data_inputs(c.data)) {
        inputs.push_back(f);
    }
    const nlohmann::json config_paths{{"topology", c.topology}, {"train", c.config}, {"resume", c.resume},
                                      {"data", c.data}};
    const nlohmann::json config = c.config.empty() ? nlohmann::json::object() : read_json(c.config);

    std::optional<Checkpoint> ckpt;
    if (!c.resume.empty()) {
        ckpt = read_checkpoint(c.resume);
    }
    FieldModel field = ckpt ? ckpt->field : load_field_model(c.topology);
    if (ckpt && !c.topology.empty()) {
        require_same_loops(topology_loops(ckpt->field.topology), topology_loops(load_field_model(c.topology).topology),
                           "checkpoint", "topology");
    }
    TrainConfig train = ckpt && c.config.empty() ? ckpt->config : train_config_from_json(section(config, "train"));
    if (c.epochs) {
        train.epochs = *c.epochs;
    }
    if (c.seed) {
        train.seed = *c.seed;
    }
    train.threads = thread_cap(c);
    train.validate();
    write_json(fs::path(c.out) / "manifest.json",
               make_manifest("fit", config_paths, inputs, train.seed, train.threads, c.out));

    const auto seqs = load_checked(c.data, field, config, train.threads);
    const EraRegistry eras = era_registry(seqs);
    const fs::path ckpt_path = fs::path(c.out) / "checkpoint.json";

    FitOptions opts;
    if (ckpt) {
        opts.resume = ckpt->state;
    }
    opts.log = [](const std::string& line) { std::cerr << line << "\n"; };
    opts.on_epoch = [&](const TrainerState& s) {
        write_text(ckpt_path, checkpoint_to_json(field, train, s, eras).dump() + "\n");
        return true;
    };
    const FitResult r = fit(seqs, field, train, opts);
    write_text(ckpt_path, checkpoint_to_json(field, train, r.state, r.eras).dump() + "\n");

    nlohmann::json m = metrics_json(r.report, r.report.loss_curve.back());
    m["initial_loss_k2"] = r.report.loss_curve.front();
    m["best_loss_k2"] = r.state.best_loss;
    m["epochs_completed"] = r.state.epoch;
    m["clip_events"] = r.report.clip_events;
    m["stopped_early"] = r.state.stopped_early;
    m["sequences"] = seqs.size();
    write_json(fs::path(c.out) / "metrics.json", m);
    export_report(r.report, r.params, seqs, field, (fs::path(c.out) / "report").string());
    std::cout << "fit: " << r.state.epoch << " epochs, loss " << format_double(r.report.loss_curve.back())
              << " K^2, rmse " << format_double(r.report.rmse_overall) << " K\n";
    return kOk;
}

int cmd_eval(const Common& c)
{
    std::vector<std::string> inputs{c.checkpoint};
    for (const auto* p : {&c.topology, &c.config}) {
        if (!p->empty()) {
            inputs.push_back(*p);
        }
    }
    for (const auto& f : data_inputs(c.data)) {
        inputs.push_back(f);
    }
    const std::size_t threads = thread_cap(c);
    write_json(fs::path(c.out) / "manifest.json",
               make_manifest("eval",
                             {{"checkpoint", c.checkpoint}, {"topology", c.topology}, {"config", c.config},
                              {"data", c.data}},
                             inputs, 0, threads, c.out));
    const Checkpoint ckpt = read_checkpoint(c.checkpoint);
    if (!c.topology.empty()) {
        require_same_loops(topology_loops(ckpt.field.topology), topology_loops(load_field_model(c.topology).topology),
                           "checkpoint", "topology");
    }
    const nlohmann::json config = c.config.empty() ? nlohmann::json::object() : read_json(c.config);
    const auto seqs = load_checked(c.data, ckpt.field, config, threads);
    const ParamSet& params = ckpt.state.params;
    EvalOptions eval = ckpt.config.eval_options();
    eval.threads = threads;
    FitReport report = build_report(params, seqs, ckpt.field, ckpt.config.flag_k);
    const double l = loss(params, seqs, ckpt.field, eval);
    report.loss_curve = {l};
    nlohmann::json m = metrics_json(report, l);
    m["sequences"] = seqs.size();
    nlohmann::json per_sensor = nlohmann::json::array();
    for (const auto& s : report.sensor_rmse) {
        per_sensor.push_back({{"loop", s.loop_id}, {"sensor", s.sensor + 1}, {"rmse_k", s.rmse}});
    }
    m["sensor_rmse"] = per_sensor;
    write_json(fs::path(c.out) / "metrics.json", m);
    export_report(report, params, seqs, ckpt.field, (fs::path(c.out) / "report").string());
    std::cout << "eval: " << seqs.size() << " sequences, rmse " << format_double(report.rmse_overall) << " K\n";
    return kOk;
}

int cmd_check_grad(const Common& c)
{
    if (c.probes == 0) {
        throw Error(ErrorKind::InvalidProbeCount, "--probes must be at least 1");
    }
    const std::uint64_t seed = c.seed.value_or(0);
    const std::size_t threads = thread_cap(c);
    if (!c.out.empty()) {
        write_json(fs::path(c.out) / "manifest.json",
                   make_manifest("check-grad", {{"topology", c.topology}},
                                 c.topology.empty() ? std::vector<std::string>{} : std::vector<std::string>{c.topology},
                                 seed, threads, c.out));
    }
    const FieldModel field = c.topology.empty() ? miniature_field() : load_field_model(c.topology);
    const GeneratedData data = generate(miniature_scenario(field, 200, seed));
    const ParamSet point = perturb(data.truth, seed + 1);
    EvalOptions eval;
    eval.threads = threads;

    nlohmann::json report{{"seed", seed}, {"probes_per_block", c.probes}, {"steps", data.sequences[0].steps()}};
    nlohmann::json blocks = nlohmann::json::array();
    bool passed = true;
    double worst = 0.0;
    std::ostringstream text;
    for (ParamBlock b : kAllParamBlocks) {
        GradCheckOptions o;
        o.n_probes = c.probes;
        o.seed = seed + 100 + static_cast<std::uint64_t>(b);
        o.block = b;
        const GradCheckReport g = check_gradients(point, data.sequences, field, o, eval);
        passed = passed && g.passed;
        worst = std::max(worst, g.max_rel_error);
        blocks.push_back({{"block", std::string(to_string(b))},
                          {"max_rel_error", g.max_rel_error},
                          {"tolerance", g.tolerance},
                          {"passed", g.passed}});
        text << "block " << std::left << std::setw(10) << to_string(b) << " max rel error "
             << format_double(g.max_rel_error) << (g.passed ? "  pass" : "  FAIL") << "\n";
    }
    report["blocks"] = blocks;
    report["max_rel_error"] = worst;
    report["passed"] = passed;
    text << (passed ? "PASS" : "FAIL") << " max rel error " << format_double(worst) << "\n";
    std::cout << text.str();
    if (!c.out.empty()) {
        write_json(fs::path(c.out) / "grad_check.json", report);
    }
    return passed ? kOk : kGradCheckFailed;
}

} // namespace

FieldModel miniature_field()
{
    const nlohmann::json cfg{{"segment_length_m", 10.0},
                             {"timestep_s", 5.0},
                             {"loop_defaults", {{"length_m", 600.0}}},
                             {"subfields", nlohmann::json::array({{{"id", "SF1"}, {"n_loops", 2}}})}};
    return build_field_model(TopologyConfig{cfg});
}

SyntheticScenario miniature_scenario(const FieldModel& field, std::size_t steps, std::uint64_t seed)
{
    SyntheticScenario s;
    s.field = field;
    s.seed = seed;
    s.noise_sigma_k = 0.3;
    std::size_t widest = 1;
    for (const auto& sf : field.topology.subfields) {
        const std::size_t n = sf.loops.size();
        widest = std::max(widest, n);
        std::vector<double> w(n, 1.0);
        for (std::size_t i = 0; i < n && n > 1; ++i) {
            w[i] = 0.7 + 0.6 * static_cast<double>(i) / static_cast<double>(n - 1);
        }
        s.omega.push_back({sf.id, 0, w});
    }
    const auto& first = field.topology.subfields.front().loops.front();
    s.degraded = {{first.id, first.n_spans() - 1, 3.0}};
    SyntheticNight night;
    night.start_s = parse_iso8601("2024-03-01T01:00:00Z");
    night.drive.duration_s = field.topology.timestep_s * static_cast<double>(steps - 1);
    night.drive.flow_m3s = 0.0017125 * static_cast<double>(widest);
    night.drive.flow_ramp_s = 0.0;
    s.nights.push_back(night);
    return s;
}

ParamSet perturb(const ParamSet& truth, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, 1.0);
    ParamSet p = truth;
    p.a += 2e-4 * n(rng);
    p.b += 0.05 * n(rng);
    for (auto& la : p.log_alpha) {
        la.log_alpha += 0.03 * n(rng);
    }
    for (auto& w : p.omega) {
        for (double& v : w.values) {
            v += 0.1 * n(rng);
        }
    }
    for (auto& h : p.h_pg) {
        for (double& v : h.raw) {
            v += 0.3 * n(rng);
        }
    }
    return p;
}

std::string sha256_file(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorKind::IoError, "cannot open '" + path + "'");
    }
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
    std::vector<char> buf(1 << 16);
    while (in) {
        in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
        EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(in.gcount()));
    }
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned len = 0;
    EVP_DigestFinal_ex(ctx, md, &len);
    EVP_MD_CTX_free(ctx);
    return hex(md, len);
}

nlohmann::json make_manifest(const std::string& command, const nlohmann::json& config_paths,
                             const std::vector<std::string>& inputs, std::uint64_t seed, std::size_t threads,
                             const std::string& out_dir)
{
    nlohmann::json hashes = nlohmann::json::object();
    for (const auto& p : inputs) {
        hashes[p] = sha256_file(p);
    }
    return {{"command", command},
            {"config", config_paths},
            {"inputs", hashes},
            {"seed", seed},
            {"threads", threads},
            {"version", kArtifactVersion},
            {"out", out_dir}};
}

int run(int argc, const char* const* argv)
{
    CLI::App app{"Inverse calibration of parabolic-trough loop models from night homogenization data"};
    app.set_version_flag("--version", kArtifactVersion);
    app.require_subcommand(1);
    Common c;

    auto add_threads = [&](CLI::App* sub) {
        sub->add_option("--threads", c.threads, "worker cap (default: $TROUGHCAL_THREADS or 1)")
            ->check(CLI::PositiveNumber);
    };

    auto* synth = app.add_subcommand("synth", "generate a synthetic data directory");
    synth->add_option("--config", c.config, "scenario JSON")->required()->check(CLI::ExistingFile);
    synth->add_option("--out", c.out, "output directory")->required();
    synth->add_option("--seed", c.seed, "overrides the scenario seed");
    add_threads(synth);

    auto* fitc = app.add_subcommand("fit", "calibrate parameters on a data directory");
    fitc->add_option("--data", c.data, "data directory")->required()->check(CLI::ExistingDirectory);
    fitc->add_option("--topology", c.topology, "field topology JSON")->check(CLI::ExistingFile);
    fitc->add_option("--config", c.config, "training config JSON")->check(CLI::ExistingFile);
    fitc->add_option("--out", c.out, "output directory")->required();
    fitc->add_option("--seed", c.seed, "shuffling seed");
    fitc->add_option("--epochs", c.epochs, "overrides the configured epoch count");
    fitc->add_option("--resume", c.resume, "checkpoint to continue from")->check(CLI::ExistingFile);
    add_threads(fitc);

    auto* evalc = app.add_subcommand("eval", "evaluate a checkpoint on a data directory");
    evalc->add_option("--checkpoint", c.checkpoint, "checkpoint JSON")->required()->check(CLI::ExistingFile);
    evalc->add_option("--data", c.data, "data directory")->required()->check(CLI::ExistingDirectory);
    evalc->add_option("--topology", c.topology, "field topology JSON to compare against")->check(CLI::ExistingFile);
    evalc->add_option("--config", c.config, "period/channel config JSON")->check(CLI::ExistingFile);
    evalc->add_option("--out", c.out, "output directory")->required();
    add_threads(evalc);

    auto* grad = app.add_subcommand("check-grad", "compare adjoint gradients with finite differences");
    grad->add_option("--topology", c.topology, "field topology JSON (default: 2 loops x 60 cells)")
        ->check(CLI::ExistingFile);
    grad->add_option("--seed", c.seed, "problem and probe seed");
    grad->add_option("--probes", c.probes, "random directions per parameter block");
    grad->add_option("--out", c.out, "optional output directory for grad_check.json");
    add_threads(grad);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kConfigError;
    }

    try {
        if (*synth) {
            return cmd_synth(c);
        }
        if (*fitc) {
            return cmd_fit(c);
        }
        if (*evalc) {
            return cmd_eval(c);
        }
        return cmd_check_grad(c);
    } catch (const Error& e) {
        print_error(e);
        return exit_code_for(e.kind());
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kIoError;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kConfigError;
    }
}

int run(const std::vector<std::string>& args)
{
    std::vector<const char*> argv{"troughcal"};
    for (const auto& a : args) {
        argv.push_back(a.c_str());
    }
    return run(static_cast<int>(argv.size()), argv.data());
}

} // namespace troughcal::cli

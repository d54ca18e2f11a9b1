#include "troughcal/calibration.hpp"

#include "troughcal/error.hpp"
#include "troughcal/time_util.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

namespace troughcal {

double LearningRates::of(ParamBlock block) const noexcept
{
    switch (block) {
    case ParamBlock::Scale: return scale;
    case ParamBlock::Bias: return bias;
    case ParamBlock::Alpha: return alpha;
    case ParamBlock::Omega: return omega;
    case ParamBlock::Hpg: return hpg;
    }
    return 0.0;
}

void TrainConfig::validate() const
{
    for (ParamBlock b : kAllParamBlocks) {
        const double r = learning_rates.of(b);
        if (!(r > 0.0) || !std::isfinite(r)) {
            throw Error(ErrorKind::ConfigError,
                        "learning rate for " + std::string(to_string(b)) + " must be positive");
        }
    }
    if (batch_size < 1) {
        throw Error(ErrorKind::ConfigError, "batch_size must be at least 1");
    }
    if (optimizer == Optimizer::Momentum && !(momentum >= 0.0 && momentum < 1.0)) {
        throw Error(ErrorKind::ConfigError, "momentum must lie in [0, 1)");
    }
    if (!(h_pg_init > 0.0)) {
        throw Error(ErrorKind::ConfigError, "h_pg_init must be positive");
    }
}

EvalOptions TrainConfig::eval_options() const
{
    EvalOptions e;
    e.checkpoint_interval = checkpoint_interval;
    e.threads = threads;
    e.sensor_weights = sensor_weights;
    return e;
}

namespace {

std::optional<ParamBlock> block_from_name(const std::string& name)
{
    for (ParamBlock b : kAllParamBlocks) {
        if (to_string(b) == name) {
            return b;
        }
    }
    return std::nullopt;
}

std::size_t block_position(ParamBlock b)
{
    return static_cast<std::size_t>(b);
}

} // namespace

TrainConfig train_config_from_json(const nlohmann::json& j)
{
    TrainConfig c;
    if (!j.is_object()) {
        throw Error(ErrorKind::ConfigError, "train config must be an object");
    }
    try {
        if (j.contains("learning_rates")) {
            const auto& lr = j.at("learning_rates");
            c.learning_rates.scale = lr.value("a", c.learning_rates.scale);
            c.learning_rates.bias = lr.value("b", c.learning_rates.bias);
            c.learning_rates.alpha = lr.value("log_alpha", c.learning_rates.alpha);
            c.learning_rates.omega = lr.value("omega", c.learning_rates.omega);
            c.learning_rates.hpg = lr.value("h_pg", c.learning_rates.hpg);
        }
        c.epochs = j.value("epochs", c.epochs);
        c.batch_size = j.value("batch_size", c.batch_size);
        const std::string opt = j.value("optimizer", std::string("momentum"));
        if (opt == "sgd") {
            c.optimizer = Optimizer::Sgd;
        } else if (opt == "momentum") {
            c.optimizer = Optimizer::Momentum;
        } else {
            throw Error(ErrorKind::ConfigError, "unknown optimizer '" + opt + "'");
        }
        c.momentum = j.value("momentum", c.momentum);
        c.seed = j.value("seed", c.seed);
        c.patience = j.value("patience", c.patience);
        c.min_delta = j.value("min_delta", c.min_delta);
        c.clip_norm = j.value("clip_norm", c.clip_norm);
        c.checkpoint_interval = j.value("checkpoint_interval", c.checkpoint_interval);
        c.threads = j.value("threads", c.threads);
        c.h_pg_init = j.value("h_pg_init", c.h_pg_init);
        c.create_hpg_blocks = j.value("create_hpg_blocks", c.create_hpg_blocks);
        c.sensor_weights = j.value("sensor_weights", c.sensor_weights);
        c.flag_k = j.value("flag_k", c.flag_k);
        c.hpg_warmup_epochs = j.value("hpg_warmup_epochs", c.hpg_warmup_epochs);
        if (j.contains("frozen")) {
            for (const auto& name : j.at("frozen")) {
                auto b = block_from_name(name.get<std::string>());
                if (!b) {
                    throw Error(ErrorKind::ConfigError, "unknown parameter block '" + name.get<std::string>() + "'");
                }
                c.frozen[block_position(*b)] = true;
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::ConfigError, std::string("train config: ") + e.what());
    }
    c.validate();
    return c;
}

nlohmann::json train_config_to_json(const TrainConfig& c)
{
    nlohmann::json j;
    j["learning_rates"] = {{"a", c.learning_rates.scale},
                           {"b", c.learning_rates.bias},
                           {"log_alpha", c.learning_rates.alpha},
                           {"omega", c.learning_rates.omega},
                           {"h_pg", c.learning_rates.hpg}};
    j["epochs"] = c.epochs;
    j["batch_size"] = c.batch_size;
    j["optimizer"] = c.optimizer == Optimizer::Sgd ? "sgd" : "momentum";
    j["momentum"] = c.momentum;
    j["seed"] = c.seed;
    j["patience"] = c.patience;
    j["min_delta"] = c.min_delta;
    j["clip_norm"] = c.clip_norm;
    j["checkpoint_interval"] = c.checkpoint_interval;
    j["threads"] = c.threads;
    j["h_pg_init"] = c.h_pg_init;
    j["create_hpg_blocks"] = c.create_hpg_blocks;
    j["sensor_weights"] = c.sensor_weights;
    j["flag_k"] = c.flag_k;
    j["hpg_warmup_epochs"] = c.hpg_warmup_epochs;
    auto frozen = nlohmann::json::array();
    for (ParamBlock b : kAllParamBlocks) {
        if (c.frozen[block_position(b)]) {
            frozen.push_back(std::string(to_string(b)));
        }
    }
    j["frozen"] = frozen;
    return j;
}

int EraRegistry::compact(int raw) const
{
    auto it = std::lower_bound(raw_ids.begin(), raw_ids.end(), raw);
    if (it == raw_ids.end() || *it != raw) {
        throw Error(ErrorKind::ConfigError, "era " + std::to_string(raw) + " is not registered");
    }
    return static_cast<int>(it - raw_ids.begin());
}

std::size_t EraRegistry::omega_block_count() const noexcept
{
    std::size_t n = 0;
    for (const auto& [sf, eras] : eras_by_subfield) {
        n += eras.size();
    }
    return n;
}

EraRegistry era_registry(std::span<const HomogenizationSequence> sequences)
{
    EraRegistry reg;
    std::set<int> raw;
    struct SpanInfo {
        double start = 0.0;
        double end = 0.0;
    };
    std::map<std::pair<std::string, int>, SpanInfo> spans;
    for (const auto& s : sequences) {
        raw.insert(s.valve_era);
        auto [it, inserted] = spans.try_emplace({s.subfield_id, s.valve_era}, SpanInfo{s.t_start, s.t_end()});
        if (!inserted) {
            it->second.start = std::min(it->second.start, s.t_start);
            it->second.end = std::max(it->second.end, s.t_end());
        }
    }
    reg.raw_ids.assign(raw.begin(), raw.end());
    for (auto it = spans.begin(); it != spans.end(); ++it) {
        for (auto jt = std::next(it); jt != spans.end() && jt->first.first == it->first.first; ++jt) {
            if (it->second.start <= jt->second.end && jt->second.start <= it->second.end) {
                throw Error(ErrorKind::OverlappingEras,
                            "eras " + std::to_string(it->first.second) + " and " +
                                std::to_string(jt->first.second) + " of subfield '" + it->first.first +
                                "' overlap in time");
            }
        }
    }
    for (const auto& [key, info] : spans) {
        reg.eras_by_subfield[key.first].push_back(reg.compact(key.second));
    }
    for (const auto& s : sequences) {
        reg.sequence_era[s.id] = reg.compact(s.valve_era);
    }
    return reg;
}

nlohmann::json era_registry_to_json(const EraRegistry& r)
{
    nlohmann::json j;
    j["raw_ids"] = r.raw_ids;
    j["sequence_era"] = r.sequence_era;
    j["eras_by_subfield"] = r.eras_by_subfield;
    return j;
}

EraRegistry era_registry_from_json(const nlohmann::json& j)
{
    EraRegistry r;
    r.raw_ids = j.at("raw_ids").get<std::vector<int>>();
    r.sequence_era = j.at("sequence_era").get<std::map<std::string, int>>();
    r.eras_by_subfield = j.at("eras_by_subfield").get<std::map<std::string, std::vector<int>>>();
    return r;
}

nlohmann::json trainer_state_to_json(const TrainerState& s)
{
    nlohmann::json j;
    j["params"] = params_to_json(s.params);
    j["velocity"] = s.velocity;
    j["epoch"] = s.epoch;
    j["rng_state"] = s.rng_state;
    j["best_loss"] = s.best_loss;
    j["since_best"] = s.since_best;
    j["stopped_early"] = s.stopped_early;
    j["loss_curve"] = s.loss_curve;
    j["clip_events"] = s.clip_events;
    return j;
}

TrainerState trainer_state_from_json(const nlohmann::json& j)
{
    TrainerState s;
    try {
        s.params = params_from_json(j.at("params"));
        s.velocity = j.at("velocity").get<std::vector<double>>();
        s.epoch = j.at("epoch").get<std::size_t>();
        s.rng_state = j.at("rng_state").get<std::string>();
        s.best_loss = j.at("best_loss").get<double>();
        s.since_best = j.at("since_best").get<std::size_t>();
        s.stopped_early = j.value("stopped_early", false);
        s.loss_curve = j.at("loss_curve").get<std::vector<double>>();
        s.clip_events = j.at("clip_events").get<std::size_t>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::ConfigError, std::string("trainer state: ") + e.what());
    }
    if (s.velocity.size() != s.params.size()) {
        throw Error(ErrorKind::ConfigError, "optimizer state length differs from parameter count");
    }
    return s;
}

namespace {

std::string rng_to_string(const std::mt19937_64& rng)
{
    std::ostringstream os;
    os << rng;
    return os.str();
}

std::mt19937_64 rng_from_string(const std::string& text)
{
    std::mt19937_64 rng;
    std::istringstream is(text);
    is >> rng;
    if (!is) {
        throw Error(ErrorKind::ConfigError, "corrupt RNG state in checkpoint");
    }
    return rng;
}

void shuffle(std::vector<std::size_t>& v, std::mt19937_64& rng)
{
    // Fisher-Yates with a plain modulo so the order does not depend on the
    // standard library's distribution implementation.
    for (std::size_t i = v.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng() % i);
        std::swap(v[i - 1], v[j]);
    }
}

void check_loss(double value, std::size_t epoch)
{
    if (!std::isfinite(value)) {
        throw Error(ErrorKind::DivergedLoss, "loss became non-finite in epoch " + std::to_string(epoch));
    }
}

void log_line(const FitOptions& options, const std::string& text)
{
    if (options.log) {
        options.log(text);
    }
}

} // namespace

FitResult fit(std::span<const HomogenizationSequence> sequences, const FieldModel& field,
              const TrainConfig& config, const FitOptions& options)
{
    if (sequences.empty()) {
        throw Error(ErrorKind::NoSequences, "fit needs at least one sequence");
    }
    config.validate();
    FitResult result;
    result.eras = era_registry(sequences);
    const EvalOptions eval = config.eval_options();
    const InitOptions init{config.h_pg_init, config.create_hpg_blocks};

    TrainerState& st = result.state;
    std::mt19937_64 rng(config.seed);
    if (options.resume) {
        st = *options.resume;
        rng = rng_from_string(st.rng_state);
        if (st.velocity.size() != st.params.size()) {
            throw Error(ErrorKind::ConfigError, "resume state length differs from parameter count");
        }
    } else {
        st.params = options.init ? *options.init : make_initial_params(field, sequences, init);
        ensure_blocks(st.params, field, sequences, init);
        st.velocity.assign(st.params.size(), 0.0);
        const double l0 = loss(st.params, sequences, field, eval);
        check_loss(l0, 0);
        st.loss_curve = {l0};
        st.best_loss = l0;
        st.rng_state = rng_to_string(rng);
    }

    const auto ranges = st.params.blocks();
    std::vector<double> rate(st.params.size(), 0.0);
    std::vector<char> active(st.params.size(), 0);
    std::vector<char> is_hpg(st.params.size(), 0);
    for (const auto& r : ranges) {
        for (std::size_t q = r.offset; q < r.offset + r.count; ++q) {
            rate[q] = config.learning_rates.of(r.block);
            active[q] = config.frozen[block_position(r.block)] ? 0 : 1;
            is_hpg[q] = r.block == ParamBlock::Hpg ? 1 : 0;
        }
    }

    std::vector<std::size_t> order(sequences.size());
    std::vector<HomogenizationSequence> batch;
    while (st.epoch < config.epochs && !st.stopped_early) {
        const std::size_t epoch = st.epoch + 1;
        const bool hold_hpg = epoch <= config.hpg_warmup_epochs;
        for (std::size_t i = 0; i < order.size(); ++i) {
            order[i] = i;
        }
        shuffle(order, rng);
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t stop = std::min(order.size(), start + config.batch_size);
            batch.clear();
            for (std::size_t i = start; i < stop; ++i) {
                batch.push_back(sequences[order[i]]);
            }
            GradientReport g = grad(st.params, batch, field, eval);
            check_loss(g.loss, epoch);
            double norm2 = 0.0;
            for (std::size_t q = 0; q < g.gradient.size(); ++q) {
                if (!active[q] || (hold_hpg && is_hpg[q])) {
                    g.gradient[q] = 0.0;
                }
                norm2 += g.gradient[q] * g.gradient[q];
            }
            const double norm = std::sqrt(norm2);
            if (config.clip_norm > 0.0 && norm > config.clip_norm) {
                const double s = config.clip_norm / norm;
                for (double& v : g.gradient) {
                    v *= s;
                }
                ++st.clip_events;
                log_line(options, "epoch " + std::to_string(epoch) + ": gradient norm " +
                                      std::to_string(norm) + " clipped to " + std::to_string(config.clip_norm));
            }
            std::vector<double> x = st.params.flatten();
            const double mu = config.optimizer == Optimizer::Momentum ? config.momentum : 0.0;
            for (std::size_t q = 0; q < x.size(); ++q) {
                st.velocity[q] = mu * st.velocity[q] + g.gradient[q];
                // Each h_pg block sees only its own sequence, so its step is
                // taken against that sequence's loss rather than the batch mean.
                const double r = is_hpg[q] ? rate[q] * static_cast<double>(stop - start) : rate[q];
                x[q] -= r * st.velocity[q];
                if (!std::isfinite(x[q])) {
                    throw Error(ErrorKind::DivergedLoss,
                                "parameter update became non-finite in epoch " + std::to_string(epoch));
                }
            }
            st.params.assign(x);
        }
        const double l = loss(st.params, sequences, field, eval);
        check_loss(l, epoch);
        st.loss_curve.push_back(l);
        st.epoch = epoch;
        if (l < st.best_loss * (1.0 - config.min_delta)) {
            st.best_loss = l;
            st.since_best = 0;
        } else {
            ++st.since_best;
        }
        if (config.patience > 0 && st.since_best >= config.patience) {
            st.stopped_early = true;
            log_line(options, "early stop after epoch " + std::to_string(epoch));
        }
        st.rng_state = rng_to_string(rng);
        log_line(options, "epoch " + std::to_string(epoch) + " loss " + format_double(l));
        if (options.on_epoch && !options.on_epoch(st)) {
            break;
        }
    }

    result.params = st.params;
    if (options.build_report) {
        result.report = build_report(st.params, sequences, field, config.flag_k);
    }
    result.report.loss_curve = st.loss_curve;
    result.report.clip_events = st.clip_events;
    return result;
}

SelfConsistency self_consistency(std::span<const HomogenizationSequence> a,
                                 std::span<const HomogenizationSequence> b, const FieldModel& field,
                                 const TrainConfig& config, const ParamSet& prior)
{
    if (a.empty() || b.empty()) {
        throw Error(ErrorKind::NoSequences, "self-consistency needs sequences in both sets");
    }
    auto era_set = [](std::span<const HomogenizationSequence> s) {
        std::set<std::pair<std::string, int>> out;
        for (const auto& q : s) {
            out.insert({q.subfield_id, q.valve_era});
        }
        return out;
    };
    if (era_set(a) != era_set(b)) {
        throw Error(ErrorKind::EraMismatch, "the two sequence sets do not cover the same valve eras");
    }
    TrainConfig cfg = config;
    cfg.frozen = {};
    for (ParamBlock blk : kAllParamBlocks) {
        cfg.frozen[block_position(blk)] = blk != ParamBlock::Omega;
    }
    cfg.create_hpg_blocks = false;

    auto fit_omega = [&](std::span<const HomogenizationSequence> set) {
        ParamSet start = prior;
        for (auto& o : start.omega) {
            std::fill(o.values.begin(), o.values.end(), 1.0);
        }
        FitOptions opts;
        opts.init = start;
        opts.build_report = false;
        return fit(set, field, cfg, opts).params;
    };
    SelfConsistency out;
    out.beta_a = era_beta(fit_omega(a), a, field);
    out.beta_b = era_beta(fit_omega(b), b, field);

    std::vector<double> pooled_a, pooled_b;
    for (const auto& [sf, era] : era_set(a)) {
        std::vector<double> xa, yb;
        for (const auto& e : out.beta_a) {
            if (e.subfield_id == sf && e.era == era) {
                xa.push_back(e.beta);
            }
        }
        for (const auto& e : out.beta_b) {
            if (e.subfield_id == sf && e.era == era) {
                yb.push_back(e.beta);
            }
        }
        out.per_era.push_back({sf, era, r_squared(xa, yb)});
        pooled_a.insert(pooled_a.end(), xa.begin(), xa.end());
        pooled_b.insert(pooled_b.end(), yb.begin(), yb.end());
    }
    double sum = 0.0;
    for (const auto& s : out.per_era) {
        sum += s.r_squared;
    }
    out.mean_r_squared = sum / static_cast<double>(out.per_era.size());
    out.pooled_r_squared = r_squared(pooled_a, pooled_b);
    return out;
}

nlohmann::json checkpoint_to_json(const FieldModel& field, const TrainConfig& config,
                                  const TrainerState& state, const EraRegistry& eras)
{
    nlohmann::json j;
    j["format"] = "troughcal-checkpoint";
    j["version"] = 1;
    j["field"] = field_model_to_json(field);
    j["train_config"] = train_config_to_json(config);
    j["state"] = trainer_state_to_json(state);
    j["eras"] = era_registry_to_json(eras);
    return j;
}

Checkpoint checkpoint_from_json(const nlohmann::json& j)
{
    if (!j.is_object() || j.value("format", std::string()) != "troughcal-checkpoint") {
        throw Error(ErrorKind::ConfigError, "not a checkpoint file");
    }
    Checkpoint c;
    c.field = build_field_model(TopologyConfig{j.at("field")});
    c.config = train_config_from_json(j.at("train_config"));
    c.state = trainer_state_from_json(j.at("state"));
    try {
        c.eras = era_registry_from_json(j.at("eras"));
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::ConfigError, std::string("checkpoint eras: ") + e.what());
    }
    return c;
}

void write_checkpoint(const std::string& path, const nlohmann::json& checkpoint)
{
    const std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) {
            throw Error(ErrorKind::IoError, "cannot write checkpoint " + tmp);
        }
        os << checkpoint.dump(1) << '\n';
        if (!os) {
            throw Error(ErrorKind::IoError, "failed writing checkpoint " + tmp);
        }
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) {
        throw Error(ErrorKind::IoError, "cannot move checkpoint into place at " + path);
    }
}

Checkpoint read_checkpoint(const std::string& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw Error(ErrorKind::IoError, "cannot open checkpoint " + path);
    }
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::ConfigError, "checkpoint " + path + " is not valid JSON: " + e.what());
    }
    return checkpoint_from_json(j);
}

} // namespace troughcal

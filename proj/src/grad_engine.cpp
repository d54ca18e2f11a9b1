#include "troughcal/grad_engine.hpp"

#include "troughcal/adjoint.hpp"
#include "troughcal/error.hpp"
#include "troughcal/hydraulics.hpp"
#include "troughcal/parallel.hpp"
#include "troughcal/thermal_pde.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <numeric>
#include <random>
#include <utility>

namespace troughcal {

namespace {

/// Flat offsets of every block, built once per evaluation.
struct ParamIndex {
    std::size_t omega_base = 0;
    std::size_t hpg_base = 0;
    std::map<std::pair<std::string, int>, std::size_t> omega;           // -> flat offset
    std::map<std::pair<std::string, std::string>, std::size_t> hpg;     // (period, loop) -> offset
    std::map<std::string, std::vector<std::size_t>> hpg_by_loop;        // loop -> offsets

    explicit ParamIndex(const ParamSet& p)
    {
        const auto blocks = p.blocks();
        omega_base = blocks[3].offset;
        hpg_base = blocks[4].offset;
        std::size_t k = omega_base;
        for (const auto& o : p.omega) {
            omega[{o.subfield_id, o.era}] = k;
            k += o.values.size();
        }
        k = hpg_base;
        for (const auto& h : p.h_pg) {
            hpg[{h.period_id, h.loop_id}] = k;
            hpg_by_loop[h.loop_id].push_back(k);
            k += h.raw.size();
        }
    }
};

struct LoopSetup {
    std::unique_ptr<LoopModel> model;
    LoopProblem problem;
    double fluid_area = 0.0;
    /// Raw-parameter offsets feeding each span; more than one entry means the
    /// period has no block of its own and the mean over periods is used.
    std::vector<std::size_t> hpg_sources;
    std::vector<double> weights;
};

struct SequenceSetup {
    const HomogenizationSequence* seq = nullptr;
    const SubfieldSpec* subfield = nullptr;
    std::vector<std::vector<double>> t_mu; // [step][loop]
    std::vector<std::vector<double>> beta; // [step][loop]
    std::vector<double> flow;              // clamped V_dot per step
    AllocationParams allocation;
    std::size_t alpha_offset = 0;
    std::size_t omega_offset = 0;
    std::span<const double> omega;
    std::vector<LoopSetup> loops;
};

std::vector<double> normalized_weights(const EvalOptions& options, std::size_t n_sensors)
{
    std::vector<double> w(n_sensors, 1.0);
    if (!options.sensor_weights.empty()) {
        if (options.sensor_weights.size() != n_sensors) {
            throw Error(ErrorKind::LengthMismatch, "sensor_weights length differs from sensor count");
        }
        const double total = std::accumulate(options.sensor_weights.begin(),
                                             options.sensor_weights.end(), 0.0);
        if (!(total > 0.0)) {
            throw Error(ErrorKind::ConfigError, "sensor weights must have a positive sum");
        }
        for (std::size_t k = 0; k < n_sensors; ++k) {
            w[k] = options.sensor_weights[k] * static_cast<double>(n_sensors) / total;
        }
    }
    return w;
}

SequenceSetup prepare(const ParamSet& params, const ParamIndex& index,
                      const HomogenizationSequence& seq, const FieldModel& field,
                      const EvalOptions& options, const std::vector<double>& flat)
{
    validate_sequence(seq, field.topology);
    SequenceSetup s;
    s.seq = &seq;
    s.subfield = &field.topology.subfield(seq.subfield_id);
    const auto readings = readings_in_topology_order(seq, *s.subfield);
    const std::size_t n_loops = s.subfield->loops.size();
    const std::size_t n_steps = seq.steps() - 1;

    auto omega_it = index.omega.find({seq.subfield_id, seq.valve_era});
    if (omega_it == index.omega.end()) {
        throw Error(ErrorKind::ConfigError, "no omega block for subfield '" + seq.subfield_id +
                                                "' era " + std::to_string(seq.valve_era));
    }
    s.omega_offset = omega_it->second;
    s.omega = std::span<const double>(flat).subspan(s.omega_offset, n_loops);
    s.alpha_offset = 2 + params.alpha_index(seq.subfield_id);
    s.allocation = {params.a, params.b, std::exp(flat[s.alpha_offset])};

    // Loop-average temperature from the sensors.
    s.t_mu.assign(n_steps, std::vector<double>(n_loops, 0.0));
    if (field.t_mu_mode == TMuMode::PeriodMean) {
        for (std::size_t i = 0; i < n_loops; ++i) {
            const auto& v = readings[i]->values;
            const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
            for (auto& row : s.t_mu) {
                row[i] = mean;
            }
        }
    } else {
        for (std::size_t n = 0; n < n_steps; ++n) {
            for (std::size_t i = 0; i < n_loops; ++i) {
                const LoopReadings& r = *readings[i];
                double acc = 0.0;
                for (std::size_t m = 0; m < r.n_sensors; ++m) {
                    acc += r.at(n, m);
                }
                s.t_mu[n][i] = acc / static_cast<double>(r.n_sensors);
            }
        }
    }
    s.beta.resize(n_steps);
    s.flow.resize(n_steps);
    for (std::size_t n = 0; n < n_steps; ++n) {
        s.beta[n] = mass_flow_ratios(s.t_mu[n], s.omega, s.allocation);
        s.flow[n] = std::max(0.0, seq.v_dot_h[n]);
    }

    const std::string& period = seq.period_id.empty() ? seq.id : seq.period_id;
    s.loops.resize(n_loops);
    for (std::size_t i = 0; i < n_loops; ++i) {
        const LoopSpec& spec = s.subfield->loops[i];
        LoopSetup& ls = s.loops[i];
        ls.model = std::make_unique<LoopModel>(LoopModel::make(spec, field));
        ls.fluid_area = spec.geometry.fluid_area;
        const LoopReadings& r = *readings[i];
        const std::size_t n_sensors = spec.sensors.size();

        auto direct = index.hpg.find({period, spec.id});
        if (direct != index.hpg.end()) {
            ls.hpg_sources = {direct->second};
        } else {
            auto fallback = index.hpg_by_loop.find(spec.id);
            if (fallback == index.hpg_by_loop.end()) {
                throw Error(ErrorKind::ConfigError, "no h_pg block available for loop " + spec.id);
            }
            ls.hpg_sources = fallback->second;
        }
        std::vector<double> span_values(ls.model->n_spans, 0.0);
        for (std::size_t sp = 0; sp < span_values.size(); ++sp) {
            double acc = 0.0;
            for (std::size_t src : ls.hpg_sources) {
                acc += softplus(flat[src + sp]);
            }
            span_values[sp] = acc / static_cast<double>(ls.hpg_sources.size());
        }

        LoopProblem& p = ls.problem;
        p.model = ls.model.get();
        std::vector<double> first(n_sensors);
        for (std::size_t m = 0; m < n_sensors; ++m) {
            first[m] = r.at(0, m);
        }
        p.initial = initial_state_from_sensors(first, ls.model->sensor_cells, ls.model->n_segments,
                                               seq.t_ambient[0]);
        p.h_pg = cells_from_spans(span_values, *ls.model);
        p.drives.resize(n_steps);
        for (std::size_t n = 0; n < n_steps; ++n) {
            BoundaryDrive& d = p.drives[n];
            d.inlet_k = seq.t_header[n];
            d.header_k = seq.t_header[n];
            d.ambient_k = seq.t_ambient[n];
            d.sky_k = sky_temperature(seq.t_ambient[n], field.sky_offset_k);
            d.velocity = s.beta[n][i] * s.allocation.alpha * s.flow[n] / ls.fluid_area;
        }
        p.measured = r.values;
        const double scale = 1.0 / (static_cast<double>(n_loops) * static_cast<double>(n_steps) *
                                    static_cast<double>(n_sensors));
        ls.weights = normalized_weights(options, n_sensors);
        for (double& x : ls.weights) {
            x *= scale;
        }
        p.weights = ls.weights;
    }
    return s;
}

struct TaskResult {
    double objective = 0.0;
    LoopAdjoint adjoint;
};

struct BatchEvaluation {
    double loss = 0.0;
    std::vector<double> gradient;
};

std::vector<SequenceSetup> prepare_all(const ParamSet& params, const ParamIndex& index,
                                       std::span<const HomogenizationSequence> sequences,
                                       const FieldModel& field, const EvalOptions& options,
                                       const std::vector<double>& flat)
{
    std::vector<SequenceSetup> setups;
    setups.reserve(sequences.size());
    for (const auto& seq : sequences) {
        setups.push_back(prepare(params, index, seq, field, options, flat));
    }
    return setups;
}

std::vector<std::pair<std::size_t, std::size_t>> task_list(const std::vector<SequenceSetup>& setups)
{
    std::vector<std::pair<std::size_t, std::size_t>> tasks;
    for (std::size_t s = 0; s < setups.size(); ++s) {
        for (std::size_t i = 0; i < setups[s].loops.size(); ++i) {
            tasks.emplace_back(s, i);
        }
    }
    return tasks;
}

double combine_losses(const std::vector<SequenceSetup>& setups, const std::vector<TaskResult>& results)
{
    double total = 0.0;
    std::size_t k = 0;
    for (const auto& s : setups) {
        double seq_loss = 0.0;
        for (std::size_t i = 0; i < s.loops.size(); ++i) {
            seq_loss += results[k++].objective;
        }
        total += seq_loss;
    }
    return total / static_cast<double>(setups.size());
}

void check_sequences(std::span<const HomogenizationSequence> sequences)
{
    if (sequences.empty()) {
        throw Error(ErrorKind::NoSequences, "no sequences to evaluate");
    }
}

BatchEvaluation evaluate(const ParamSet& params, std::span<const HomogenizationSequence> sequences,
                         const FieldModel& field, const EvalOptions& options, bool with_gradient)
{
    check_sequences(sequences);
    const std::vector<double> flat = params.flatten();
    const ParamIndex index(params);
    std::vector<SequenceSetup> setups = prepare_all(params, index, sequences, field, options, flat);
    const auto tasks = task_list(setups);
    std::vector<TaskResult> results(tasks.size());
    parallel_for(tasks.size(), options.threads, [&](std::size_t t) {
        const LoopProblem& p = setups[tasks[t].first].loops[tasks[t].second].problem;
        if (with_gradient) {
            results[t].adjoint = loop_adjoint(p, options.checkpoint_interval);
            results[t].objective = results[t].adjoint.objective;
        } else {
            results[t].objective = loop_objective(p);
        }
    });

    BatchEvaluation out;
    out.loss = combine_losses(setups, results);
    if (!with_gradient) {
        return out;
    }

    out.gradient.assign(flat.size(), 0.0);
    std::size_t k = 0;
    for (const auto& s : setups) {
        const std::size_t n_loops = s.loops.size();
        const std::size_t n_steps = s.beta.size();
        std::vector<std::vector<double>> d_beta(n_steps, std::vector<double>(n_loops, 0.0));
        double d_alpha = 0.0;
        for (std::size_t i = 0; i < n_loops; ++i) {
            const LoopSetup& ls = s.loops[i];
            const LoopAdjoint& adj = results[k++].adjoint;
            for (std::size_t n = 0; n < n_steps; ++n) {
                if (!std::isfinite(adj.d_velocity[n])) {
                    throw Error(ErrorKind::NonFiniteGradient,
                                "sequence '" + s.seq->id + "' loop " + s.subfield->loops[i].id +
                                    ": non-finite velocity sensitivity (block omega/log_alpha)",
                                n);
                }
                const double coeff = s.flow[n] / ls.fluid_area;
                d_beta[n][i] = adj.d_velocity[n] * s.allocation.alpha * coeff;
                d_alpha += adj.d_velocity[n] * s.beta[n][i] * coeff;
            }
            const auto& model = *ls.model;
            std::vector<double> d_span(model.n_spans, 0.0);
            for (std::size_t j = 0; j < model.n_segments; ++j) {
                d_span[model.span_of_cell[j]] += adj.d_h_pg[j];
            }
            const double share = 1.0 / static_cast<double>(ls.hpg_sources.size());
            for (std::size_t src : ls.hpg_sources) {
                for (std::size_t sp = 0; sp < d_span.size(); ++sp) {
                    out.gradient[src + sp] += d_span[sp] * share * sigmoid(flat[src + sp]);
                }
            }
        }
        for (std::size_t n = 0; n < n_steps; ++n) {
            const AllocationGradient g =
                mass_flow_ratios_backward(s.t_mu[n], s.omega, s.allocation, s.beta[n], d_beta[n]);
            out.gradient[0] += g.d_a;
            out.gradient[1] += g.d_b;
            for (std::size_t i = 0; i < n_loops; ++i) {
                out.gradient[s.omega_offset + i] += g.d_omega[i];
            }
        }
        out.gradient[s.alpha_offset] += d_alpha * s.allocation.alpha;
    }
    const double inv = 1.0 / static_cast<double>(setups.size());
    for (double& g : out.gradient) {
        g *= inv;
    }
    for (const auto& range : params.blocks()) {
        for (std::size_t q = range.offset; q < range.offset + range.count; ++q) {
            if (!std::isfinite(out.gradient[q])) {
                throw Error(ErrorKind::NonFiniteGradient,
                            "non-finite gradient in block " + std::string(to_string(range.block)) +
                                " at flat index " + std::to_string(q));
            }
        }
    }
    return out;
}

GradientReport make_report(const ParamSet& params, BatchEvaluation&& eval)
{
    GradientReport r;
    r.loss = eval.loss;
    r.gradient = std::move(eval.gradient);
    for (const auto& range : params.blocks()) {
        double acc = 0.0;
        for (std::size_t q = range.offset; q < range.offset + range.count; ++q) {
            acc += r.gradient[q] * r.gradient[q];
        }
        r.block_norms.push_back({range.block, std::sqrt(acc)});
    }
    return r;
}

} // namespace

double loss(const ParamSet& params, const HomogenizationSequence& sequence, const FieldModel& field,
            const EvalOptions& options)
{
    return evaluate(params, std::span<const HomogenizationSequence>(&sequence, 1), field, options, false).loss;
}

double loss(const ParamSet& params, std::span<const HomogenizationSequence> sequences,
            const FieldModel& field, const EvalOptions& options)
{
    return evaluate(params, sequences, field, options, false).loss;
}

GradientReport grad(const ParamSet& params, const HomogenizationSequence& sequence,
                    const FieldModel& field, const EvalOptions& options)
{
    return make_report(params, evaluate(params, std::span<const HomogenizationSequence>(&sequence, 1),
                                        field, options, true));
}

GradientReport grad(const ParamSet& params, std::span<const HomogenizationSequence> sequences,
                    const FieldModel& field, const EvalOptions& options)
{
    return make_report(params, evaluate(params, sequences, field, options, true));
}

std::vector<std::vector<double>> sequence_beta(const ParamSet& params,
                                               const HomogenizationSequence& sequence,
                                               const FieldModel& field)
{
    const std::vector<double> flat = params.flatten();
    const ParamIndex index(params);
    return prepare(params, index, sequence, field, {}, flat).beta;
}

SequencePrediction predict(const ParamSet& params, const HomogenizationSequence& sequence,
                           const FieldModel& field)
{
    const std::vector<double> flat = params.flatten();
    const ParamIndex index(params);
    const SequenceSetup s = prepare(params, index, sequence, field, {}, flat);
    SequencePrediction out;
    out.sequence_id = sequence.id;
    for (std::size_t i = 0; i < s.loops.size(); ++i) {
        const LoopProblem& p = s.loops[i].problem;
        const Trajectory traj = simulate_loop(p.initial, p.drives, p.h_pg, *p.model, false);
        LoopPrediction lp;
        lp.loop_id = s.subfield->loops[i].id;
        lp.n_sensors = p.model->sensor_cells.size();
        for (const auto& row : traj.sensors) {
            lp.predicted.insert(lp.predicted.end(), row.begin(), row.end());
        }
        lp.beta.reserve(s.beta.size() + 1);
        for (const auto& row : s.beta) {
            lp.beta.push_back(row[i]);
        }
        lp.beta.push_back(lp.beta.empty() ? 1.0 : lp.beta.back());
        out.loops.push_back(std::move(lp));
    }
    return out;
}

GradCheckReport check_directional(const ObjectiveFn& f, const GradientFn& g,
                                  std::span<const double> x0, const GradCheckOptions& options,
                                  std::span<const char> mask)
{
    if (options.n_probes == 0) {
        throw Error(ErrorKind::InvalidProbeCount, "n_probes must be at least 1");
    }
    if (!mask.empty() && mask.size() != x0.size()) {
        throw Error(ErrorKind::LengthMismatch, "probe mask length differs from parameter count");
    }
    auto active = [&](std::size_t q) { return mask.empty() || mask[q] != 0; };

    double scale = 1.0;
    for (std::size_t q = 0; q < x0.size(); ++q) {
        if (active(q)) {
            scale = std::max(scale, std::abs(x0[q]));
        }
    }
    const double eps = options.rel_step * scale;
    const std::vector<double> grad0 = g(x0);
    const double f0 = f(x0);
    const double floor = 1e-12 * std::max(1.0, std::abs(f0));

    std::mt19937_64 rng(options.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    GradCheckReport report;
    report.tolerance = options.tolerance;
    report.passed = true;
    std::vector<double> x(x0.begin(), x0.end());
    for (std::size_t probe = 0; probe < options.n_probes; ++probe) {
        std::vector<double> d(x0.size(), 0.0);
        double norm = 0.0;
        for (std::size_t q = 0; q < d.size(); ++q) {
            if (active(q)) {
                d[q] = normal(rng);
                norm += d[q] * d[q];
            }
        }
        norm = std::sqrt(norm);
        if (norm > 0.0) {
            for (double& v : d) {
                v /= norm;
            }
        }
        auto central = [&](double h) {
            for (std::size_t q = 0; q < x.size(); ++q) {
                x[q] = x0[q] + h * d[q];
            }
            const double up = f(x);
            for (std::size_t q = 0; q < x.size(); ++q) {
                x[q] = x0[q] - h * d[q];
            }
            const double down = f(x);
            return (up - down) / (2.0 * h);
        };
        // One Richardson step cancels the O(h^2) truncation term.
        const double numeric = (4.0 * central(0.5 * eps) - central(eps)) / 3.0;
        double analytic = 0.0;
        for (std::size_t q = 0; q < d.size(); ++q) {
            analytic += grad0[q] * d[q];
        }
        ProbeResult r;
        r.analytic = analytic;
        r.numeric = numeric;
        r.rel_error = std::abs(analytic - numeric) /
                      std::max({std::abs(analytic), std::abs(numeric), floor});
        r.pass = r.rel_error < options.tolerance;
        report.max_rel_error = std::max(report.max_rel_error, r.rel_error);
        report.passed = report.passed && r.pass;
        report.probes.push_back(r);
    }
    return report;
}

GradCheckReport check_gradients(const ParamSet& params,
                                std::span<const HomogenizationSequence> sequences,
                                const FieldModel& field, const GradCheckOptions& options,
                                const EvalOptions& eval)
{
    ParamSet work = params;
    auto f = [&](std::span<const double> x) {
        work.assign(x);
        return loss(work, sequences, field, eval);
    };
    auto g = [&](std::span<const double> x) {
        work.assign(x);
        return grad(work, sequences, field, eval).gradient;
    };
    std::vector<char> mask;
    if (options.block) {
        mask.assign(params.size(), 0);
        for (const auto& range : params.blocks()) {
            if (range.block == *options.block) {
                std::fill(mask.begin() + static_cast<std::ptrdiff_t>(range.offset),
                          mask.begin() + static_cast<std::ptrdiff_t>(range.offset + range.count), 1);
            }
        }
    }
    const std::vector<double> x0 = params.flatten();
    GradCheckReport report = check_directional(f, g, x0, options, mask);
    for (auto& p : report.probes) {
        p.block = options.block;
    }
    return report;
}

} // namespace troughcal

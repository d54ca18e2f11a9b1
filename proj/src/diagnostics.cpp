#include "troughcal/diagnostics.hpp"

#include "troughcal/error.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

namespace troughcal {

double rmse(std::span<const double> predicted, std::span<const double> measured)
{
    if (predicted.size() != measured.size()) {
        throw Error(ErrorKind::LengthMismatch, "rmse inputs differ in length");
    }
    if (predicted.empty()) {
        throw Error(ErrorKind::EmptySeries, "rmse of empty series");
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        const double d = predicted[i] - measured[i];
        acc += d * d;
    }
    return std::sqrt(acc / static_cast<double>(predicted.size()));
}

double r_squared(std::span<const double> x, std::span<const double> y)
{
    if (x.size() != y.size()) {
        throw Error(ErrorKind::LengthMismatch, "r_squared inputs differ in length");
    }
    if (x.size() < 2) {
        throw Error(ErrorKind::DegenerateInput, "r_squared needs at least two points");
    }
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (!(sxx > 0.0)) {
        throw Error(ErrorKind::DegenerateInput, "r_squared with constant x");
    }
    if (!(syy > 0.0)) {
        throw Error(ErrorKind::DegenerateInput, "r_squared with constant y");
    }
    // SS_res of the least-squares line is syy - sxy^2 / sxx.
    const double r2 = sxy * sxy / (sxx * syy);
    return std::min(1.0, r2);
}

namespace {

double quantile(const std::vector<double>& sorted, double q)
{
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

} // namespace

std::size_t HeatLossRanking::flagged_count() const noexcept
{
    return static_cast<std::size_t>(
        std::count_if(entries.begin(), entries.end(), [](const HeatLossEntry& e) { return e.flagged; }));
}

HeatLossRanking rank_heat_loss(std::span<const HpgValue> values, double k)
{
    HeatLossRanking out;
    std::map<std::pair<std::string, std::size_t>, std::pair<double, std::size_t>> acc;
    std::vector<std::pair<std::string, std::size_t>> order;
    for (const auto& v : values) {
        auto key = std::make_pair(v.loop_id, v.span);
        auto [it, inserted] = acc.try_emplace(key, 0.0, 0);
        if (inserted) {
            order.push_back(key);
        }
        it->second.first += v.value;
        ++it->second.second;
    }
    if (order.empty()) {
        return out;
    }
    for (const auto& key : order) {
        const auto& [sum, count] = acc[key];
        out.entries.push_back({key.first, key.second, sum / static_cast<double>(count), false});
    }
    std::vector<double> sorted;
    for (const auto& e : out.entries) {
        sorted.push_back(e.h_pg);
    }
    std::sort(sorted.begin(), sorted.end());
    out.median = quantile(sorted, 0.5);
    out.iqr = quantile(sorted, 0.75) - quantile(sorted, 0.25);
    out.threshold = out.median + k * out.iqr;
    for (auto& e : out.entries) {
        e.flagged = e.h_pg > out.threshold;
    }
    std::stable_sort(out.entries.begin(), out.entries.end(),
                     [](const HeatLossEntry& x, const HeatLossEntry& y) { return x.h_pg > y.h_pg; });
    return out;
}

std::vector<HpgValue> hpg_values(const ParamSet& params)
{
    std::vector<HpgValue> out;
    for (const auto& block : params.h_pg) {
        for (std::size_t s = 0; s < block.raw.size(); ++s) {
            out.push_back({block.period_id, block.loop_id, s, softplus(block.raw[s])});
        }
    }
    return out;
}

std::vector<BetaEntry> era_beta(const ParamSet& params, std::span<const HomogenizationSequence> sequences,
                                const FieldModel& field)
{
    struct Acc {
        std::vector<double> sum;
        std::size_t steps = 0;
    };
    std::map<std::pair<std::size_t, int>, Acc> acc;
    for (const auto& seq : sequences) {
        const auto beta = sequence_beta(params, seq, field);
        auto& a = acc[{field.topology.subfield_index(seq.subfield_id), seq.valve_era}];
        if (a.sum.empty() && !beta.empty()) {
            a.sum.assign(beta.front().size(), 0.0);
        }
        for (const auto& row : beta) {
            for (std::size_t i = 0; i < row.size(); ++i) {
                a.sum[i] += row[i];
            }
            ++a.steps;
        }
    }
    std::vector<BetaEntry> out;
    for (const auto& [key, a] : acc) {
        const SubfieldSpec& sf = field.topology.subfields[key.first];
        for (std::size_t i = 0; i < a.sum.size(); ++i) {
            out.push_back({sf.id, key.second, sf.loops[i].id, a.sum[i] / static_cast<double>(a.steps)});
        }
    }
    return out;
}

std::vector<SensorRmse> sensor_rmse(std::span<const SequencePrediction> predictions,
                                    std::span<const HomogenizationSequence> sequences, double* overall)
{
    if (predictions.size() != sequences.size()) {
        throw Error(ErrorKind::LengthMismatch, "prediction and sequence counts differ");
    }
    std::map<std::pair<std::string, std::size_t>, std::pair<double, std::size_t>> acc;
    std::vector<std::pair<std::string, std::size_t>> order;
    double total = 0.0;
    std::size_t total_n = 0;
    for (std::size_t q = 0; q < sequences.size(); ++q) {
        for (const auto& lp : predictions[q].loops) {
            const LoopReadings* r = sequences[q].find_loop(lp.loop_id);
            if (r == nullptr) {
                throw Error(ErrorKind::LengthMismatch, "prediction for unknown loop " + lp.loop_id);
            }
            const std::size_t m = lp.n_sensors;
            const std::size_t steps = lp.predicted.size() / m;
            for (std::size_t s = 0; s < m; ++s) {
                auto key = std::make_pair(lp.loop_id, s);
                auto [it, inserted] = acc.try_emplace(key, 0.0, 0);
                if (inserted) {
                    order.push_back(key);
                }
                for (std::size_t n = 1; n < steps; ++n) {
                    const double d = lp.predicted[n * m + s] - r->at(n, s);
                    it->second.first += d * d;
                    ++it->second.second;
                    total += d * d;
                    ++total_n;
                }
            }
        }
    }
    std::vector<SensorRmse> out;
    for (const auto& key : order) {
        const auto& [sum, count] = acc[key];
        out.push_back({key.first, key.second, count == 0 ? 0.0 : std::sqrt(sum / static_cast<double>(count))});
    }
    if (overall != nullptr) {
        *overall = total_n == 0 ? 0.0 : std::sqrt(total / static_cast<double>(total_n));
    }
    return out;
}

FitReport build_report(const ParamSet& params, std::span<const HomogenizationSequence> sequences,
                       const FieldModel& field, double flag_k)
{
    FitReport report;
    std::vector<SequencePrediction> predictions;
    predictions.reserve(sequences.size());
    for (const auto& seq : sequences) {
        predictions.push_back(predict(params, seq, field));
        BetaSeries bs;
        bs.sequence_id = seq.id;
        bs.t_start = seq.t_start;
        bs.dt = seq.dt;
        const SubfieldSpec& sf = field.topology.subfield(seq.subfield_id);
        for (const auto& loop : sf.loops) {
            bs.loop_ids.push_back(loop.id);
        }
        bs.beta = sequence_beta(params, seq, field);
        report.beta_series.push_back(std::move(bs));
    }
    report.sensor_rmse = sensor_rmse(predictions, sequences, &report.rmse_overall);
    report.beta = era_beta(params, sequences, field);
    report.h_pg = hpg_values(params);
    report.heat_loss = rank_heat_loss(report.h_pg, flag_k);
    return report;
}

} // namespace troughcal

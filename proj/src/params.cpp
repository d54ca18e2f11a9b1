#include "troughcal/params.hpp"

#include "troughcal/error.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <tuple>

namespace troughcal {

std::string_view to_string(ParamBlock block) noexcept
{
    switch (block) {
    case ParamBlock::Scale: return "a";
    case ParamBlock::Bias: return "b";
    case ParamBlock::Alpha: return "log_alpha";
    case ParamBlock::Omega: return "omega";
    case ParamBlock::Hpg: return "h_pg";
    }
    return "?";
}

double softplus(double x) noexcept
{
    if (x > 0.0) {
        return x + std::log1p(std::exp(-x));
    }
    return std::log1p(std::exp(x));
}

double softplus_inverse(double y)
{
    if (!(y > 0.0) || !std::isfinite(y)) {
        throw Error(ErrorKind::NonFiniteInput, "softplus inverse needs a positive finite value");
    }
    if (y > 30.0) {
        return y + std::log1p(-std::exp(-y));
    }
    return std::log(std::expm1(y));
}

double sigmoid(double x) noexcept
{
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

std::size_t ParamSet::size() const noexcept
{
    std::size_t n = 2 + log_alpha.size();
    for (const auto& o : omega) {
        n += o.values.size();
    }
    for (const auto& h : h_pg) {
        n += h.raw.size();
    }
    return n;
}

std::array<BlockRange, 5> ParamSet::blocks() const noexcept
{
    std::size_t n_omega = 0;
    for (const auto& o : omega) {
        n_omega += o.values.size();
    }
    std::size_t n_hpg = 0;
    for (const auto& h : h_pg) {
        n_hpg += h.raw.size();
    }
    const std::size_t na = log_alpha.size();
    return {BlockRange{ParamBlock::Scale, 0, 1}, BlockRange{ParamBlock::Bias, 1, 1},
            BlockRange{ParamBlock::Alpha, 2, na}, BlockRange{ParamBlock::Omega, 2 + na, n_omega},
            BlockRange{ParamBlock::Hpg, 2 + na + n_omega, n_hpg}};
}

std::vector<double> ParamSet::flatten() const
{
    std::vector<double> flat;
    flat.reserve(size());
    flat.push_back(a);
    flat.push_back(b);
    for (const auto& e : log_alpha) {
        flat.push_back(e.log_alpha);
    }
    for (const auto& o : omega) {
        flat.insert(flat.end(), o.values.begin(), o.values.end());
    }
    for (const auto& h : h_pg) {
        flat.insert(flat.end(), h.raw.begin(), h.raw.end());
    }
    return flat;
}

void ParamSet::assign(std::span<const double> flat)
{
    if (flat.size() != size()) {
        throw Error(ErrorKind::LengthMismatch, "flat parameter vector has wrong length");
    }
    std::size_t k = 0;
    a = flat[k++];
    b = flat[k++];
    for (auto& e : log_alpha) {
        e.log_alpha = flat[k++];
    }
    for (auto& o : omega) {
        for (double& v : o.values) {
            v = flat[k++];
        }
    }
    for (auto& h : h_pg) {
        for (double& v : h.raw) {
            v = flat[k++];
        }
    }
}

std::size_t ParamSet::alpha_index(const std::string& subfield_id) const
{
    if (log_alpha.size() == 1 && log_alpha.front().subfield_id == "*") {
        return 0;
    }
    for (std::size_t i = 0; i < log_alpha.size(); ++i) {
        if (log_alpha[i].subfield_id == subfield_id) {
            return i;
        }
    }
    throw Error(ErrorKind::ConfigError, "no alpha parameter for subfield '" + subfield_id + "'");
}

double ParamSet::alpha(const std::string& subfield_id) const
{
    return std::exp(log_alpha[alpha_index(subfield_id)].log_alpha);
}

const OmegaBlock* ParamSet::find_omega(const std::string& subfield_id, int era) const noexcept
{
    for (const auto& o : omega) {
        if (o.subfield_id == subfield_id && o.era == era) {
            return &o;
        }
    }
    return nullptr;
}

const HpgBlock* ParamSet::find_hpg(const std::string& period_id, const std::string& loop_id) const noexcept
{
    for (const auto& h : h_pg) {
        if (h.period_id == period_id && h.loop_id == loop_id) {
            return &h;
        }
    }
    return nullptr;
}

void ParamSet::canonicalize(const FieldTopology& topology)
{
    std::map<std::string, std::size_t> loop_order;
    std::map<std::string, std::size_t> subfield_order;
    std::size_t k = 0;
    for (std::size_t s = 0; s < topology.subfields.size(); ++s) {
        subfield_order[topology.subfields[s].id] = s;
        for (const auto& loop : topology.subfields[s].loops) {
            loop_order[loop.id] = k++;
        }
    }
    auto rank = [](const std::map<std::string, std::size_t>& m, const std::string& id) {
        auto it = m.find(id);
        return it == m.end() ? m.size() : it->second;
    };
    std::stable_sort(log_alpha.begin(), log_alpha.end(), [&](const auto& x, const auto& y) {
        return rank(subfield_order, x.subfield_id) < rank(subfield_order, y.subfield_id);
    });
    std::stable_sort(omega.begin(), omega.end(), [&](const OmegaBlock& x, const OmegaBlock& y) {
        return std::make_tuple(x.era, rank(subfield_order, x.subfield_id)) <
               std::make_tuple(y.era, rank(subfield_order, y.subfield_id));
    });
    std::stable_sort(h_pg.begin(), h_pg.end(), [&](const HpgBlock& x, const HpgBlock& y) {
        return std::make_tuple(x.period_id, rank(loop_order, x.loop_id)) <
               std::make_tuple(y.period_id, rank(loop_order, y.loop_id));
    });
}

void ensure_blocks(ParamSet& params, const FieldModel& field,
                   std::span<const HomogenizationSequence> sequences, const InitOptions& options)
{
    const FieldTopology& topo = field.topology;
    if (params.log_alpha.empty()) {
        if (field.alpha_mode == AlphaMode::Global) {
            params.log_alpha.push_back({"*", 0.0});
        } else {
            for (const auto& sf : topo.subfields) {
                params.log_alpha.push_back({sf.id, 0.0});
            }
        }
    }
    const double raw_init = softplus_inverse(options.h_pg_init);
    for (const auto& seq : sequences) {
        const SubfieldSpec& sf = topo.subfield(seq.subfield_id);
        if (params.find_omega(sf.id, seq.valve_era) == nullptr) {
            params.omega.push_back({sf.id, seq.valve_era, std::vector<double>(sf.loops.size(), 1.0)});
        }
        if (!options.create_hpg_blocks) {
            continue;
        }
        const std::string& period = seq.period_id.empty() ? seq.id : seq.period_id;
        for (const auto& loop : sf.loops) {
            if (params.find_hpg(period, loop.id) == nullptr) {
                params.h_pg.push_back({period, loop.id, std::vector<double>(loop.n_spans(), raw_init)});
            }
        }
    }
    params.canonicalize(topo);
}

ParamSet make_initial_params(const FieldModel& field,
                             std::span<const HomogenizationSequence> sequences,
                             const InitOptions& options)
{
    ParamSet p;
    ensure_blocks(p, field, sequences, options);
    return p;
}

nlohmann::json params_to_json(const ParamSet& params)
{
    nlohmann::json alpha = nlohmann::json::array();
    for (const auto& e : params.log_alpha) {
        alpha.push_back({{"subfield", e.subfield_id}, {"log_alpha", e.log_alpha}});
    }
    nlohmann::json omega = nlohmann::json::array();
    for (const auto& o : params.omega) {
        omega.push_back({{"subfield", o.subfield_id}, {"era", o.era}, {"values", o.values}});
    }
    nlohmann::json hpg = nlohmann::json::array();
    for (const auto& h : params.h_pg) {
        hpg.push_back({{"period", h.period_id}, {"loop", h.loop_id}, {"raw", h.raw}});
    }
    return {{"a", params.a}, {"b", params.b}, {"log_alpha", alpha}, {"omega", omega}, {"h_pg", hpg}};
}

ParamSet params_from_json(const nlohmann::json& j)
{
    try {
        ParamSet p;
        p.a = j.at("a").get<double>();
        p.b = j.at("b").get<double>();
        for (const auto& e : j.at("log_alpha")) {
            p.log_alpha.push_back({e.at("subfield").get<std::string>(), e.at("log_alpha").get<double>()});
        }
        for (const auto& o : j.at("omega")) {
            p.omega.push_back({o.at("subfield").get<std::string>(), o.at("era").get<int>(),
                               o.at("values").get<std::vector<double>>()});
        }
        for (const auto& h : j.at("h_pg")) {
            p.h_pg.push_back({h.at("period").get<std::string>(), h.at("loop").get<std::string>(),
                              h.at("raw").get<std::vector<double>>()});
        }
        return p;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::ConfigError, std::string("parameter set: ") + e.what());
    }
}

} // namespace troughcal

#include "troughcal/sequence.hpp"

#include "troughcal/error.hpp"

#include <cmath>
#include <set>

namespace troughcal {

const LoopReadings* HomogenizationSequence::find_loop(const std::string& loop_id) const noexcept
{
    for (const auto& l : loops) {
        if (l.loop_id == loop_id) {
            return &l;
        }
    }
    return nullptr;
}

void validate_sequence(const HomogenizationSequence& seq, const FieldTopology& topology)
{
    const std::string where = "sequence '" + seq.id + "'";
    const std::size_t n = seq.steps();
    if (n < 2) {
        throw Error(ErrorKind::SchemaError, where + ": needs at least 2 samples");
    }
    if (seq.t_header.size() != n || seq.t_ambient.size() != n) {
        throw Error(ErrorKind::LengthMismatch, where + ": channel lengths differ");
    }
    if (std::abs(seq.dt - topology.timestep_s) > 1e-9 * topology.timestep_s) {
        throw Error(ErrorKind::SchemaError, where + ": sample interval differs from model timestep");
    }
    for (std::size_t k = 0; k < n; ++k) {
        if (!std::isfinite(seq.v_dot_h[k]) || !std::isfinite(seq.t_header[k]) ||
            !std::isfinite(seq.t_ambient[k])) {
            throw Error(ErrorKind::NonFiniteInput, where + ": non-finite subfield channel", k);
        }
    }
    const SubfieldSpec& sf = topology.subfield(seq.subfield_id);
    if (seq.loops.size() != sf.loops.size()) {
        throw Error(ErrorKind::SchemaError, where + ": loop count " + std::to_string(seq.loops.size()) +
                                                " differs from subfield's " +
                                                std::to_string(sf.loops.size()));
    }
    for (const auto& spec : sf.loops) {
        const LoopReadings* r = seq.find_loop(spec.id);
        if (r == nullptr) {
            throw Error(ErrorKind::SchemaError, where + ": missing loop " + spec.id);
        }
        if (r->n_sensors != spec.sensors.size() || r->values.size() != n * r->n_sensors) {
            throw Error(ErrorKind::LengthMismatch, where + ": loop " + spec.id + " readings malformed");
        }
        for (double v : r->values) {
            if (!std::isfinite(v)) {
                throw Error(ErrorKind::NonFiniteInput, where + ": loop " + spec.id + " non-finite reading");
            }
        }
    }
}

std::vector<const LoopReadings*> readings_in_topology_order(const HomogenizationSequence& seq,
                                                            const SubfieldSpec& subfield)
{
    std::vector<const LoopReadings*> out;
    out.reserve(subfield.loops.size());
    for (const auto& spec : subfield.loops) {
        const LoopReadings* r = seq.find_loop(spec.id);
        if (r == nullptr) {
            throw Error(ErrorKind::SchemaError, "sequence '" + seq.id + "': missing loop " + spec.id);
        }
        out.push_back(r);
    }
    return out;
}

} // namespace troughcal

#include "troughcal/error.hpp"

namespace troughcal {

std::string_view to_string(ErrorKind kind) noexcept
{
    switch (kind) {
    case ErrorKind::ConfigError: return "ConfigError";
    case ErrorKind::InvalidGeometry: return "InvalidGeometry";
    case ErrorKind::SensorOutOfRange: return "SensorOutOfRange";
    case ErrorKind::DiffusionStabilityViolation: return "DiffusionStabilityViolation";
    case ErrorKind::NonFiniteInput: return "NonFiniteInput";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::CflViolation: return "CflViolation";
    case ErrorKind::NonFiniteGradient: return "NonFiniteGradient";
    case ErrorKind::InvalidProbeCount: return "InvalidProbeCount";
    case ErrorKind::DivergedLoss: return "DivergedLoss";
    case ErrorKind::NoSequences: return "NoSequences";
    case ErrorKind::EraMismatch: return "EraMismatch";
    case ErrorKind::OverlappingEras: return "OverlappingEras";
    case ErrorKind::SchemaError: return "SchemaError";
    case ErrorKind::NonMonotoneTime: return "NonMonotoneTime";
    case ErrorKind::UnknownUnit: return "UnknownUnit";
    case ErrorKind::IoError: return "IoError";
    case ErrorKind::EmptySeries: return "EmptySeries";
    case ErrorKind::DegenerateInput: return "DegenerateInput";
    }
    return "Unknown";
}

namespace {

std::string decorate(ErrorKind kind, const std::string& message,
                     std::optional<std::size_t> timestep)
{
    std::string out(to_string(kind));
    out += ": ";
    out += message;
    if (timestep) {
        out += " (timestep " + std::to_string(*timestep) + ")";
    }
    return out;
}

} // namespace

Error::Error(ErrorKind kind, const std::string& message,
             std::optional<std::size_t> timestep)
    : std::runtime_error(decorate(kind, message, timestep)),
      kind_(kind), message_(message), timestep_(timestep)
{
}

} // namespace troughcal

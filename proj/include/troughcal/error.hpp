#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace troughcal {

enum class ErrorKind {
    ConfigError,
    InvalidGeometry,
    SensorOutOfRange,
    DiffusionStabilityViolation,
    NonFiniteInput,
    LengthMismatch,
    CflViolation,
    NonFiniteGradient,
    InvalidProbeCount,
    DivergedLoss,
    NoSequences,
    EraMismatch,
    OverlappingEras,
    SchemaError,
    NonMonotoneTime,
    UnknownUnit,
    IoError,
    EmptySeries,
    DegenerateInput,
};

std::string_view to_string(ErrorKind kind) noexcept;

/// Library-wide exception. `timestep()` is set when the failure happened
/// inside a time-stepping loop.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message,
          std::optional<std::size_t> timestep = std::nullopt);

    ErrorKind kind() const noexcept { return kind_; }
    std::optional<std::size_t> timestep() const noexcept { return timestep_; }
    /// Message without the kind prefix and timestep suffix.
    const std::string& message() const noexcept { return message_; }

private:
    ErrorKind kind_;
    std::string message_;
    std::optional<std::size_t> timestep_;
};

} // namespace troughcal

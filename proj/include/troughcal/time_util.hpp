#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace troughcal {

/// Days since 1970-01-01 of a proleptic Gregorian date.
std::int64_t days_from_civil(int year, unsigned month, unsigned day) noexcept;

/// Parses "YYYY-MM-DDTHH:MM:SS[.fff]Z" to seconds since the epoch (UTC).
/// Throws SchemaError on malformed input.
double parse_iso8601(std::string_view text);

/// Formats whole seconds as "YYYY-MM-DDTHH:MM:SSZ"; fractional seconds are
/// appended with millisecond resolution when present.
std::string format_iso8601(double epoch_s);

/// "YYYY-MM-DD" of the UTC day containing epoch_s.
std::string format_date(double epoch_s);

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

} // namespace troughcal

#include "troughcal/time_util.hpp"

#include "troughcal/error.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>

namespace troughcal {

std::int64_t days_from_civil(int year, unsigned month, unsigned day) noexcept
{
    // Hinnant's civil-from-days inverse.
    const int y = year - (month <= 2 ? 1 : 0);
    const int era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153 * (month + (month > 2 ? -3 : 9)) + 2) / 5 + day - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return static_cast<std::int64_t>(era) * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

namespace {

void civil_from_days(std::int64_t z, int& year, unsigned& month, unsigned& day) noexcept
{
    z += 719468;
    const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const int y = static_cast<int>(yoe) + static_cast<int>(era) * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    day = doy - (153 * mp + 2) / 5 + 1;
    month = mp < 10 ? mp + 3 : mp - 9;
    year = y + (month <= 2 ? 1 : 0);
}

bool parse_uint(std::string_view s, unsigned& out)
{
    if (s.empty()) {
        return false;
    }
    for (char c : s) {
        if (c < '0' || c > '9') {
            return false;
        }
    }
    auto r = std::from_chars(s.data(), s.data() + s.size(), out);
    return r.ec == std::errc{};
}

[[noreturn]] void bad_time(std::string_view text)
{
    throw Error(ErrorKind::SchemaError, "malformed ISO-8601 UTC timestamp '" + std::string(text) + "'");
}

} // namespace

double parse_iso8601(std::string_view text)
{
    // YYYY-MM-DDTHH:MM:SS, optional fraction, then Z.
    if (text.size() < 20 || text[4] != '-' || text[7] != '-' || (text[10] != 'T' && text[10] != ' ') ||
        text[13] != ':' || text[16] != ':' || text.back() != 'Z') {
        bad_time(text);
    }
    unsigned y = 0, mo = 0, d = 0, h = 0, mi = 0, s = 0;
    if (!parse_uint(text.substr(0, 4), y) || !parse_uint(text.substr(5, 2), mo) ||
        !parse_uint(text.substr(8, 2), d) || !parse_uint(text.substr(11, 2), h) ||
        !parse_uint(text.substr(14, 2), mi) || !parse_uint(text.substr(17, 2), s)) {
        bad_time(text);
    }
    if (mo < 1 || mo > 12 || d < 1 || d > 31 || h > 23 || mi > 59 || s > 60) {
        bad_time(text);
    }
    double frac = 0.0;
    const std::string_view rest = text.substr(19, text.size() - 20);
    if (!rest.empty()) {
        if (rest[0] != '.' || rest.size() < 2) {
            bad_time(text);
        }
        unsigned digits = 0;
        if (!parse_uint(rest.substr(1), digits)) {
            bad_time(text);
        }
        frac = static_cast<double>(digits) / std::pow(10.0, static_cast<double>(rest.size() - 1));
    }
    const std::int64_t days = days_from_civil(static_cast<int>(y), mo, d);
    return static_cast<double>(days * 86400 + h * 3600 + mi * 60 + s) + frac;
}

std::string format_iso8601(double epoch_s)
{
    const double whole = std::floor(epoch_s);
    const auto secs = static_cast<std::int64_t>(whole);
    std::int64_t days = secs / 86400;
    std::int64_t rem = secs % 86400;
    if (rem < 0) {
        rem += 86400;
        --days;
    }
    int y = 0;
    unsigned mo = 0, d = 0;
    civil_from_days(days, y, mo, d);
    std::array<char, 40> buf{};
    const long long h = rem / 3600, mi = rem % 3600 / 60, s = rem % 60;
    const long long ms = std::llround((epoch_s - whole) * 1000.0);
    if (ms > 0 && ms < 1000) {
        std::snprintf(buf.data(), buf.size(), "%04d-%02u-%02uT%02lld:%02lld:%02lld.%03lldZ", y, mo, d, h,
                      mi, s, ms);
    } else {
        std::snprintf(buf.data(), buf.size(), "%04d-%02u-%02uT%02lld:%02lld:%02lldZ", y, mo, d, h, mi, s);
    }
    return buf.data();
}

std::string format_date(double epoch_s)
{
    return format_iso8601(epoch_s).substr(0, 10);
}

std::string format_double(double v)
{
    std::array<char, 64> buf{};
    auto r = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), r.ptr);
}

} // namespace troughcal

#pragma once

#include <cmath>
#include <cstdint>
#include <string>

namespace surgonair {

// Media timestamps are kept as integer milliseconds. Sub-millisecond input is
// rounded half-up so that equal inputs always compare equal downstream.
using Ms = std::int64_t;

inline Ms ms_from_seconds(double seconds) {
    return static_cast<Ms>(std::floor(seconds * 1000.0 + 0.5));
}

inline double seconds_from_ms(Ms ms) {
    return static_cast<double>(ms) / 1000.0;
}

// Fixed three-decimal rendering ("1.300"); millisecond-exact, so serialized
// timestamps round-trip without float drift.
std::string format_seconds(Ms ms);

} // namespace surgonair

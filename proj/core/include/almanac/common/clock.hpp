#pragma once

#include "almanac/fhir/datetime.hpp"

#include <cstdint>
#include <functional>

namespace almanac {

/// Source of "now" for audit records and default order timestamps.
using Clock = std::function<fhir::DateTime()>;

Clock system_clock();
Clock fixed_clock(fhir::DateTime at);
/// Returns `start`, `start + step`, `start + 2*step`, ... on successive calls.
Clock stepping_clock(fhir::DateTime start, std::int64_t step_seconds);

}  // namespace almanac

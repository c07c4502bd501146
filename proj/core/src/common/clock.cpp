#include "almanac/common/clock.hpp"

#include <atomic>
#include <chrono>
#include <memory>

namespace almanac {

Clock system_clock() {
    return [] {
        auto now = std::chrono::system_clock::now();
        auto secs = std::chrono::duration_cast<std::chrono::seconds>(now.time_since_epoch());
        return fhir::DateTime::from_epoch_seconds(secs.count());
    };
}

Clock fixed_clock(fhir::DateTime at) {
    return [at] { return at; };
}

Clock stepping_clock(fhir::DateTime start, std::int64_t step_seconds) {
    auto counter = std::make_shared<std::atomic<std::int64_t>>(0);
    return [start, step_seconds, counter] {
        return start.plus_seconds(step_seconds * counter->fetch_add(1));
    };
}

}  // namespace almanac

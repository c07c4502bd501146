#pragma once

#include "almanac/store/store.hpp"

#include <cstddef>
#include <string>

namespace almanac::store {

/// One-line human-readable summary of a resource, e.g. `Observation obs-3: Potassium 4.1 mmol/L`.
std::string summarize(const FhirResource& resource);

/**
 * @brief Renders a history as text of at most `budget` characters.
 *
 * Encounter blocks appear newest first, each holding its events newest first;
 * events without an encounter form a trailing block. When the text exceeds
 * the budget the oldest events are dropped first and an omission line is
 * added. A budget too small for even the patient line truncates that line.
 */
std::string render_history_digest(const PatientHistory& history, std::size_t budget);

}  // namespace almanac::store

#pragma once

#include "almanac/fhir/model.hpp"

#include <cstddef>
#include <cstdint>
#include <vector>

namespace almanac::synth {

struct FixtureConfig {
    std::uint64_t seed = 2150;
    std::size_t patients = 6;
};

/**
 * @brief Deterministic synthetic patient records.
 *
 * Ids are eight digits with a per-type leading digit (patients 1xxxxxxx,
 * encounters 2xxxxxxx and so on). Dates fall in 2150-2160. Output order is
 * patients first, then each patient's encounters with their linked
 * resources, so the list ingests as one bundle.
 */
std::vector<fhir::FhirResource> generate_fixture(const FixtureConfig& config = {});

}  // namespace almanac::synth

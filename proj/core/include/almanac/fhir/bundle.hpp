#pragma once

#include "almanac/fhir/model.hpp"

#include <string>
#include <string_view>
#include <vector>

namespace almanac::fhir {

/**
 * Parses a `Bundle` document (`entry[].resource`) or a bare JSON array of
 * resources. Throws MalformedJson, or the entry's own parse error with the
 * entry index prefixed to the detail.
 */
std::vector<FhirResource> parse_bundle(std::string_view json_text);

/// `{"resourceType":"Bundle","type":"collection","entry":[...]}` in input order.
json bundle_to_json(const std::vector<FhirResource>& resources);

}  // namespace almanac::fhir

#include "almanac/fhir/bundle.hpp"

#include "almanac/common/error.hpp"

namespace almanac::fhir {

std::vector<FhirResource> parse_bundle(std::string_view json_text) {
    json doc = json::parse(json_text, nullptr, false);
    if (doc.is_discarded()) throw Error(Errc::MalformedJson, "bundle is not valid JSON");

    const json* entries = &doc;
    json resources = json::array();
    if (doc.is_object()) {
        if (doc.value("resourceType", "") != "Bundle") throw Error(Errc::MalformedJson, "expected a Bundle resource");
        if (!doc.contains("entry")) return {};
        if (!doc["entry"].is_array()) throw Error(Errc::MalformedJson, "Bundle.entry must be an array");
        for (const auto& e : doc["entry"]) {
            if (!e.is_object() || !e.contains("resource")) throw Error(Errc::MalformedJson, "Bundle entry without resource");
            resources.push_back(e["resource"]);
        }
        entries = &resources;
    } else if (!doc.is_array()) {
        throw Error(Errc::MalformedJson, "expected a Bundle or an array of resources");
    }

    std::vector<FhirResource> out;
    out.reserve(entries->size());
    for (std::size_t i = 0; i < entries->size(); ++i) {
        try {
            out.push_back(from_json((*entries)[i]));
        } catch (const Error& e) {
            throw Error(e.code(), "entry " + std::to_string(i) + ": " + e.detail());
        }
    }
    return out;
}

json bundle_to_json(const std::vector<FhirResource>& resources) {
    json entries = json::array();
    for (const auto& r : resources) entries.push_back({{"resource", to_json(r)}});
    return {{"resourceType", "Bundle"}, {"type", "collection"}, {"entry", std::move(entries)}};
}

}  // namespace almanac::fhir

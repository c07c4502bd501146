#include "almanac/tools/registry.hpp"

#include "almanac/common/error.hpp"
#include "almanac/common/text.hpp"

#include <algorithm>
#include <set>
#include <sstream>

namespace almanac::tools {

using fhir::ResourceType;
using nlohmann::json;

namespace {

bool is_identifier(std::string_view s) {
    if (s.empty() || !(std::islower(static_cast<unsigned char>(s[0])) || s[0] == '_')) return false;
    return std::all_of(s.begin(), s.end(), [](char c) {
        return std::islower(static_cast<unsigned char>(c)) || std::isdigit(static_cast<unsigned char>(c)) || c == '_';
    });
}

bool single_line(std::string_view s) {
    return s.find('\n') == std::string_view::npos && s.find('\r') == std::string_view::npos;
}

[[noreturn]] void malformed(const std::string& what) {
    throw Error(Errc::MalformedSchema, what);
}

void check_schema(const ToolSchema& s) {
    if (!is_identifier(s.name)) malformed("tool name '" + s.name + "' is not an identifier");
    if (trim(s.description).empty() || !single_line(s.description)) {
        malformed(s.name + ": description must be one non-empty line");
    }
    std::set<std::string> seen;
    for (const auto& p : s.params) {
        std::string where = s.name + "." + p.name;
        if (!is_identifier(p.name)) malformed(where + ": parameter name is not an identifier");
        if (!seen.insert(p.name).second) malformed(where + ": duplicate parameter");
        if (trim(p.description).empty() || !single_line(p.description)) {
            malformed(where + ": description must be one non-empty line");
        }
        if (p.kind == ParamKind::Enum) {
            if (p.values.empty()) malformed(where + ": enum needs at least one value");
            std::set<std::string> vs(p.values.begin(), p.values.end());
            if (vs.size() != p.values.size()) malformed(where + ": duplicate enum value");
            for (const auto& v : p.values) {
                if (v.empty() || v.find_first_of("|,[] ") != std::string::npos) {
                    malformed(where + ": enum value '" + v + "' has reserved characters");
                }
            }
        } else if (!p.values.empty()) {
            malformed(where + ": only enum parameters carry values");
        }
        if ((p.kind == ParamKind::ResourceRef) != p.resource_type.has_value()) {
            malformed(where + ": resource_ref parameters, and only they, name a resource type");
        }
    }
    bool resource_return = s.returns.kind == ReturnKind::Resource || s.returns.kind == ReturnKind::ResourceList;
    if (resource_return == s.returns.resource_types.empty()) {
        malformed(s.name + ": resource returns, and only they, list resource types");
    }
    if (trim(s.returns.description).empty() || !single_line(s.returns.description)) {
        malformed(s.name + ": return description must be one non-empty line");
    }
}

ParamSpec param(std::string name, ParamKind kind, bool required, std::string description) {
    return {std::move(name), kind, {}, std::nullopt, required, std::move(description)};
}

ParamSpec enum_param(std::string name, std::vector<std::string> values, bool required, std::string description) {
    return {std::move(name), ParamKind::Enum, std::move(values), std::nullopt, required, std::move(description)};
}

ParamSpec ref_param(std::string name, ResourceType type, bool required, std::string description) {
    return {std::move(name), ParamKind::ResourceRef, {}, type, required, std::move(description)};
}

Registry make_builtin() {
    using fhir::enum_names;
    std::vector<ToolSchema> s;

    s.push_back({"search_medical_literature",
                 "Answers a clinical question about diseases, treatments or symptoms from the indexed literature corpus.",
                 {param("query", ParamKind::String, true, "Question to answer, in plain language.")},
                 {ReturnKind::String, {}, "Answer text followed by the cited document ids."},
                 false});

    s.push_back({"create_medication_request_order",
                 "Places a new medication order (a MedicationRequest) for the patient.",
                 {enum_param("status", enum_names<fhir::MedicationRequestStatus>(), true,
                             "Lifecycle state of the new order; normally active."),
                  enum_param("intent", enum_names<fhir::MedicationRequestIntent>(), true,
                             "Kind of request: proposal, plan or an actual order."),
                  param("name", ParamKind::String, true, "Medication name."),
                  param("dosage", ParamKind::String, true, "Dose with units, e.g. 5 mg."),
                  param("frequency", ParamKind::String, true, "How often to give it, e.g. twice daily."),
                  ref_param("subject", ResourceType::Patient, true, "Id of the patient the order is for."),
                  ref_param("encounter_id", ResourceType::Encounter, false, "Encounter the order belongs to."),
                  param("authored_on", ParamKind::Date, false, "Order date; defaults to now."),
                  param("reason", ParamKind::String, false, "Indication for the medication.")},
                 {ReturnKind::Resource, {ResourceType::MedicationRequest}, "The created MedicationRequest."},
                 true});

    s.push_back({"search_medication_request_database",
                 "Looks up a patient's MedicationRequests, optionally narrowed to one encounter or day.",
                 {param("query", ParamKind::String, true,
                        "Medication name or indication to match; '*' or empty matches every request."),
                  ref_param("patient_id", ResourceType::Patient, true, "Id of the patient."),
                  ref_param("encounter_id", ResourceType::Encounter, false,
                            "Only requests made during this encounter."),
                  param("date", ParamKind::Date, false, "Only requests authored on this calendar day."),
                  enum_param("status", enum_names<fhir::MedicationRequestStatus>(), false,
                             "Only requests in this state.")},
                 {ReturnKind::ResourceList, {ResourceType::MedicationRequest}, "Matching requests, best text match first, then newest."},
                 false});

    s.push_back({"search_observation_database",
                 "Looks up a patient's lab results, vital signs, imaging reports and social history.",
                 {ref_param("patient_id", ResourceType::Patient, true, "Id of the patient."),
                  param("query", ParamKind::String, false, "Test or finding name to match."),
                  enum_param("category", enum_names<fhir::ObservationCategory>(), false,
                             "Only observations of this category."),
                  enum_param("status", enum_names<fhir::ObservationStatus>(), false,
                             "Only observations in this state; registered means still pending."),
                  param("date", ParamKind::Date, false, "Only observations taken on this calendar day."),
                  ref_param("encounter_id", ResourceType::Encounter, false,
                            "Only observations from this encounter.")},
                 {ReturnKind::ResourceList, {ResourceType::Observation}, "Matching observations, best text match first, then newest."},
                 false});

    s.push_back({"search_encounter_database",
                 "Looks up a patient's visits and admissions, including specialty, department and discharge notes.",
                 {ref_param("patient_id", ResourceType::Patient, true, "Id of the patient."),
                  param("query", ParamKind::String, false, "Specialty, department or reason to match."),
                  param("date", ParamKind::Date, false, "Only encounters starting on this calendar day."),
                  ref_param("encounter_id", ResourceType::Encounter, false, "One specific encounter.")},
                 {ReturnKind::ResourceList, {ResourceType::Encounter}, "Matching encounters, best text match first, then newest."},
                 false});

    s.push_back({"search_condition_database",
                 "Looks up a patient's diagnoses, allergies and past procedures such as screenings.",
                 {ref_param("patient_id", ResourceType::Patient, true, "Id of the patient."),
                  param("query", ParamKind::String, false, "Diagnosis, substance or procedure name to match."),
                  enum_param("kind", {"condition", "allergy", "procedure"}, false,
                             "Restrict to one kind of entry.")},
                 {ReturnKind::ResourceList,
                  {ResourceType::Condition, ResourceType::AllergyIntolerance, ResourceType::Procedure},
                  "Matching entries, best text match first, then newest."},
                 false});

    s.push_back({"create_service_request_order",
                 "Places a non-medication order: labs, imaging, consults, vitals, discharge, transfer, NPO or consent.",
                 {ref_param("subject", ResourceType::Patient, true, "Id of the patient the order is for."),
                  enum_param("category", fhir::enum_names<fhir::OrderCategory>(), true, "Kind of order."),
                  param("code", ParamKind::String, true,
                        "What is ordered: test, study, specialty, destination or consent type."),
                  param("reason", ParamKind::String, false, "Indication for the order."),
                  param("frequency", ParamKind::String, false, "Repetition, e.g. every 4 hours."),
                  ref_param("encounter_id", ResourceType::Encounter, false, "Encounter the order belongs to."),
                  param("authored_on", ParamKind::Date, false, "Order date; defaults to now.")},
                 {ReturnKind::Resource, {ResourceType::ServiceRequest}, "The created ServiceRequest."},
                 true});

    s.push_back({"create_nursing_communication",
                 "Sends a message to the nursing team about the patient.",
                 {ref_param("subject", ResourceType::Patient, true, "Id of the patient concerned."),
                  param("message", ParamKind::String, true, "Text for the nurse."),
                  enum_param("priority", enum_names<fhir::CommunicationPriority>(), false,
                             "Urgency; defaults to routine."),
                  ref_param("encounter_id", ResourceType::Encounter, false, "Encounter the message belongs to.")},
                 {ReturnKind::Resource, {ResourceType::CommunicationRequest}, "The created CommunicationRequest."},
                 true});

    s.push_back({"run_clinical_calculator",
                 "Evaluates a bundled clinical calculator such as BMI or shock index.",
                 {param("calculator_id", ParamKind::String, true, "Calculator id, e.g. bmi."),
                  param("inputs", ParamKind::String, true,
                        "Comma-separated name=value pairs, e.g. weight=70, height=1.75.")},
                 {ReturnKind::Number, {}, "The computed score."},
                 false});

    return Registry(std::move(s));
}

std::string kind_label(const ParamSpec& p) {
    switch (p.kind) {
        case ParamKind::Enum: {
            std::string out = "enum[";
            for (std::size_t i = 0; i < p.values.size(); ++i) out += (i ? "|" : "") + p.values[i];
            return out + "]";
        }
        case ParamKind::ResourceRef: return "resource_ref[" + std::string(fhir::to_string(*p.resource_type)) + "]";
        default: return std::string(to_string(p.kind));
    }
}

std::string return_label(const ReturnSpec& r) {
    std::string out(to_string(r.kind));
    if (!r.resource_types.empty()) {
        out += "[";
        for (std::size_t i = 0; i < r.resource_types.size(); ++i) {
            out += (i ? "|" : "") + std::string(fhir::to_string(r.resource_types[i]));
        }
        out += "]";
    }
    return out;
}

/// Splits `base[a|b]` into base and items.
std::pair<std::string, std::vector<std::string>> split_bracket(std::string_view label) {
    auto open = label.find('[');
    if (open == std::string_view::npos) return {std::string(label), {}};
    if (label.back() != ']') malformed("unterminated '[' in '" + std::string(label) + "'");
    return {std::string(label.substr(0, open)), split(label.substr(open + 1, label.size() - open - 2), '|')};
}

ResourceType resource_type_or_throw(const std::string& name) {
    auto t = fhir::resource_type_from_string(name);
    if (!t) malformed("unknown resource type '" + name + "'");
    return *t;
}

}  // namespace

// =============================================================================
// Kinds
// =============================================================================

std::string_view to_string(ParamKind kind) noexcept {
    switch (kind) {
        case ParamKind::String: return "string";
        case ParamKind::Number: return "number";
        case ParamKind::Boolean: return "boolean";
        case ParamKind::Date: return "date";
        case ParamKind::Enum: return "enum";
        case ParamKind::ResourceRef: return "resource_ref";
    }
    return "string";
}

std::optional<ParamKind> param_kind_from_string(std::string_view text) noexcept {
    for (auto k : {ParamKind::String, ParamKind::Number, ParamKind::Boolean, ParamKind::Date, ParamKind::Enum,
                   ParamKind::ResourceRef}) {
        if (to_string(k) == text) return k;
    }
    return std::nullopt;
}

std::string_view to_string(ReturnKind kind) noexcept {
    switch (kind) {
        case ReturnKind::String: return "string";
        case ReturnKind::Resource: return "resource";
        case ReturnKind::ResourceList: return "resource-list";
        case ReturnKind::Number: return "number";
    }
    return "string";
}

std::optional<ReturnKind> return_kind_from_string(std::string_view text) noexcept {
    for (auto k : {ReturnKind::String, ReturnKind::Resource, ReturnKind::ResourceList, ReturnKind::Number}) {
        if (to_string(k) == text) return k;
    }
    return std::nullopt;
}

// =============================================================================
// Registry
// =============================================================================

const ParamSpec* ToolSchema::param(std::string_view param_name) const noexcept {
    for (const auto& p : params) {
        if (p.name == param_name) return &p;
    }
    return nullptr;
}

Registry::Registry(std::vector<ToolSchema> schemas) : schemas_(std::move(schemas)) {
    std::set<std::string> names;
    for (const auto& s : schemas_) {
        check_schema(s);
        if (!names.insert(s.name).second) malformed("duplicate tool '" + s.name + "'");
    }
}

const ToolSchema* Registry::find(std::string_view name) const noexcept {
    for (const auto& s : schemas_) {
        if (s.name == name) return &s;
    }
    return nullptr;
}

const Registry& builtin_registry() {
    static const Registry registry = make_builtin();
    return registry;
}

// =============================================================================
// Schema file
// =============================================================================

json registry_to_json(const Registry& registry) {
    json tools = json::array();
    for (const auto& s : registry.schemas()) {
        json params = json::array();
        for (const auto& p : s.params) {
            json jp{{"name", p.name},
                    {"kind", to_string(p.kind)},
                    {"required", p.required},
                    {"description", p.description}};
            if (p.kind == ParamKind::Enum) jp["values"] = p.values;
            if (p.resource_type) jp["resource_type"] = fhir::to_string(*p.resource_type);
            params.push_back(jp);
        }
        json types = json::array();
        for (auto t : s.returns.resource_types) types.push_back(fhir::to_string(t));
        tools.push_back({{"name", s.name},
                         {"description", s.description},
                         {"mutating", s.mutating},
                         {"params", params},
                         {"returns",
                          {{"kind", to_string(s.returns.kind)},
                           {"resource_types", types},
                           {"description", s.returns.description}}}});
    }
    return {{"schema_version", kSchemaVersion}, {"tools", tools}};
}

Registry registry_from_json(const json& document) {
    try {
        if (!document.is_object()) malformed("schema document must be an object");
        if (document.at("schema_version") != kSchemaVersion) malformed("unsupported schema_version");
        std::vector<ToolSchema> schemas;
        for (const auto& jt : document.at("tools")) {
            ToolSchema s;
            s.name = jt.at("name").get<std::string>();
            s.description = jt.at("description").get<std::string>();
            s.mutating = jt.at("mutating").get<bool>();
            for (const auto& jp : jt.at("params")) {
                ParamSpec p;
                p.name = jp.at("name").get<std::string>();
                auto kind = param_kind_from_string(jp.at("kind").get<std::string>());
                if (!kind) malformed(s.name + "." + p.name + ": unknown kind");
                p.kind = *kind;
                p.required = jp.at("required").get<bool>();
                p.description = jp.at("description").get<std::string>();
                if (jp.contains("values")) p.values = jp.at("values").get<std::vector<std::string>>();
                if (jp.contains("resource_type")) {
                    p.resource_type = resource_type_or_throw(jp.at("resource_type").get<std::string>());
                }
                s.params.push_back(std::move(p));
            }
            const auto& jr = jt.at("returns");
            auto rk = return_kind_from_string(jr.at("kind").get<std::string>());
            if (!rk) malformed(s.name + ": unknown return kind");
            s.returns.kind = *rk;
            for (const auto& t : jr.at("resource_types")) {
                s.returns.resource_types.push_back(resource_type_or_throw(t.get<std::string>()));
            }
            s.returns.description = jr.at("description").get<std::string>();
            schemas.push_back(std::move(s));
        }
        return Registry(std::move(schemas));
    } catch (const Error&) {
        throw;
    } catch (const json::exception& e) {
        malformed(e.what());
    }
}

Registry load_registry(const std::filesystem::path& path) {
    json doc = json::parse(read_file(path), nullptr, false);
    if (doc.is_discarded()) malformed(path.string() + " is not JSON");
    return registry_from_json(doc);
}

void save_registry(const Registry& registry, const std::filesystem::path& path) {
    write_file(path, registry_to_json(registry).dump(2) + "\n");
}

// =============================================================================
// Prompt rendering
// =============================================================================

std::string render_for_prompt(const Registry& registry) {
    std::string out;
    for (const auto& s : registry.schemas()) {
        out += "### " + s.name + "\n";
        out += s.description + "\n";
        out += std::string("Mutates the record: ") + (s.mutating ? "yes" : "no") + "\n";
        if (s.params.empty()) {
            out += "Parameters: none\n";
        } else {
            out += "Parameters:\n";
            for (const auto& p : s.params) {
                out += "- " + p.name + " (" + kind_label(p) + ", " + (p.required ? "required" : "optional") +
                       "): " + p.description + "\n";
            }
        }
        out += "Returns: " + return_label(s.returns) + ". " + s.returns.description + "\n\n";
    }
    return out;
}

Registry parse_prompt_rendering(std::string_view text) {
    std::vector<std::string> lines;
    {
        std::istringstream in{std::string(text)};
        std::string line;
        while (std::getline(in, line)) lines.push_back(line);
    }
    std::vector<ToolSchema> schemas;
    std::size_t i = 0;
    auto expect = [&](bool ok, const std::string& what) {
        if (!ok) malformed("line " + std::to_string(i + 1) + ": expected " + what);
    };
    while (i < lines.size()) {
        if (lines[i].empty()) {
            ++i;
            continue;
        }
        ToolSchema s;
        expect(starts_with(lines[i], "### "), "'### <name>'");
        s.name = lines[i++].substr(4);
        expect(i < lines.size(), "description");
        s.description = lines[i++];
        expect(i < lines.size() && starts_with(lines[i], "Mutates the record: "), "'Mutates the record:'");
        std::string mut = lines[i++].substr(20);
        expect(mut == "yes" || mut == "no", "yes or no");
        s.mutating = mut == "yes";
        expect(i < lines.size(), "'Parameters:'");
        if (lines[i] == "Parameters: none") {
            ++i;
        } else {
            expect(lines[i] == "Parameters:", "'Parameters:'");
            ++i;
            while (i < lines.size() && starts_with(lines[i], "- ")) {
                std::string_view l = lines[i];
                auto open = l.find(" (");
                auto close = l.find("): ", open);
                expect(open != std::string_view::npos && close != std::string_view::npos, "'- name (kind, req): text'");
                ParamSpec p;
                p.name = std::string(l.substr(2, open - 2));
                std::string_view inside = l.substr(open + 2, close - open - 2);
                auto comma = inside.rfind(", ");
                expect(comma != std::string_view::npos, "', required' or ', optional'");
                auto req = inside.substr(comma + 2);
                expect(req == "required" || req == "optional", "required or optional");
                p.required = req == "required";
                auto [base, items] = split_bracket(inside.substr(0, comma));
                auto kind = param_kind_from_string(base);
                expect(kind.has_value(), "a parameter kind");
                p.kind = *kind;
                if (p.kind == ParamKind::Enum) p.values = items;
                if (p.kind == ParamKind::ResourceRef) {
                    expect(items.size() == 1, "one resource type");
                    p.resource_type = resource_type_or_throw(items[0]);
                }
                p.description = std::string(l.substr(close + 3));
                s.params.push_back(std::move(p));
                ++i;
            }
        }
        expect(i < lines.size() && starts_with(lines[i], "Returns: "), "'Returns:'");
        std::string_view r = std::string_view(lines[i]).substr(9);
        auto dot = r.find(". ");
        expect(dot != std::string_view::npos, "'Returns: kind. text'");
        auto [base, items] = split_bracket(r.substr(0, dot));
        auto rk = return_kind_from_string(base);
        expect(rk.has_value(), "a return kind");
        s.returns.kind = *rk;
        for (const auto& t : items) s.returns.resource_types.push_back(resource_type_or_throw(t));
        s.returns.description = std::string(r.substr(dot + 2));
        ++i;
        schemas.push_back(std::move(s));
    }
    return Registry(std::move(schemas));
}

}  // namespace almanac::tools

#include "almanac/fhir/model.hpp"

#include "almanac/common/error.hpp"

#include <algorithm>
#include <cmath>
#include <initializer_list>
#include <set>

namespace almanac::fhir {

namespace {

constexpr std::string_view kObservationCategorySystem =
    "http://terminology.hl7.org/CodeSystem/observation-category";
constexpr std::string_view kActCodeSystem = "http://terminology.hl7.org/CodeSystem/v3-ActCode";
constexpr std::string_view kConditionClinicalSystem =
    "http://terminology.hl7.org/CodeSystem/condition-clinical";
constexpr std::string_view kConditionCategorySystem =
    "http://terminology.hl7.org/CodeSystem/condition-category";
constexpr std::string_view kAllergyClinicalSystem =
    "http://terminology.hl7.org/CodeSystem/allergyintolerance-clinical";
constexpr std::string_view kMedicationCategorySystem =
    "http://terminology.hl7.org/CodeSystem/medicationrequest-category";
constexpr std::string_view kOrderCategorySystem = "urn:almanac:order-category";

bool is_id_char(char c) noexcept {
    return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') ||
           c == '-' || c == '.';
}

// -----------------------------------------------------------------------------
// Field readers. Every failure names the JSON member that caused it.
// -----------------------------------------------------------------------------

class ObjectReader {
public:
    ObjectReader(const json& object, std::string prefix)
        : object_(object), prefix_(std::move(prefix)) {
        if (!object_.is_object()) throw InvariantViolation(scope(), "expected object");
    }

    std::string path(std::string_view key) const {
        return prefix_.empty() ? std::string(key) : prefix_ + "." + std::string(key);
    }

    const json* get(std::string_view key) {
        seen_.insert(std::string(key));
        auto it = object_.find(std::string(key));
        if (it == object_.end() || it->is_null()) return nullptr;
        return &*it;
    }

    const json& require(std::string_view key) {
        const json* v = get(key);
        if (!v) throw InvariantViolation(path(key), "required");
        return *v;
    }

    std::string string(std::string_view key) {
        const json& v = require(key);
        if (!v.is_string()) throw InvariantViolation(path(key), "expected string");
        return v.get<std::string>();
    }

    std::optional<std::string> opt_string(std::string_view key) {
        const json* v = get(key);
        if (!v) return std::nullopt;
        if (!v->is_string()) throw InvariantViolation(path(key), "expected string");
        return v->get<std::string>();
    }

    double number(std::string_view key) {
        const json& v = require(key);
        if (!v.is_number()) throw InvariantViolation(path(key), "expected number");
        return v.get<double>();
    }

    DateTime datetime(std::string_view key) {
        std::string text = string(key);
        auto parsed = DateTime::parse(text);
        if (!parsed) throw InvariantViolation(path(key), "'" + text + "' is not an ISO-8601 date");
        return *parsed;
    }

    std::optional<DateTime> opt_datetime(std::string_view key) {
        if (!get(key)) return std::nullopt;
        return datetime(key);
    }

    template <typename E>
    E code(std::string_view key) {
        std::string text = string(key);
        return enum_value<E>(path(key), text);
    }

    const json& array(std::string_view key) {
        const json& v = require(key);
        if (!v.is_array() || v.empty()) throw InvariantViolation(path(key), "expected non-empty array");
        return v;
    }

    const json* opt_array(std::string_view key) {
        const json* v = get(key);
        if (!v) return nullptr;
        if (!v->is_array() || v->empty()) throw InvariantViolation(path(key), "expected non-empty array");
        return v;
    }

    /// Unread members, preserved verbatim.
    json remainder() const {
        json extra = json::object();
        for (const auto& [k, v] : object_.items()) {
            if (!seen_.count(k)) extra[k] = v;
        }
        return extra;
    }

    template <typename E>
    static E enum_value(const std::string& field, const std::string& text) {
        auto parsed = enum_from_string<E>(text);
        if (!parsed) throw InvariantViolation(field, "'" + text + "' is not in the closed code set");
        return *parsed;
    }

private:
    std::string scope() const { return prefix_.empty() ? "(root)" : prefix_; }

    const json& object_;
    std::string prefix_;
    std::set<std::string> seen_;
};

ResourceId read_reference(ObjectReader& r, std::string_view key) {
    ObjectReader ref(r.require(key), r.path(key));
    std::string text = ref.string("reference");
    auto parsed = ResourceId::parse_reference(text);
    if (!parsed) throw InvariantViolation(r.path(key) + ".reference", "'" + text + "' is not Type/id");
    return *parsed;
}

std::optional<ResourceId> read_opt_reference(ObjectReader& r, std::string_view key) {
    if (!r.get(key)) return std::nullopt;
    return read_reference(r, key);
}

CodeableConcept read_concept(ObjectReader& r, std::string_view key) {
    ObjectReader cc(r.require(key), r.path(key));
    CodeableConcept out;
    out.text = cc.string("text");
    if (const json* codings = cc.opt_array("coding")) {
        ObjectReader c((*codings)[0], cc.path("coding[0]"));
        Coding coding;
        coding.code = c.string("code");
        coding.system = c.opt_string("system").value_or("");
        coding.display = c.opt_string("display").value_or("");
        out.coding = coding;
    }
    return out;
}

/// Reads `{"coding":[{"system":S,"code":C}]}` and maps C to an enum.
template <typename E>
E read_coded(const json& node, const std::string& field, std::string_view system) {
    ObjectReader cc(node, field);
    const json& codings = cc.array("coding");
    ObjectReader c(codings[0], field + ".coding[0]");
    auto sys = c.opt_string("system");
    if (sys && *sys != system) {
        throw InvariantViolation(field + ".coding[0].system", "expected " + std::string(system));
    }
    return ObjectReader::enum_value<E>(field + ".coding[0].code", c.string("code"));
}

std::optional<std::string> read_first_text(ObjectReader& r, std::string_view key) {
    const json* arr = r.opt_array(key);
    if (!arr) return std::nullopt;
    ObjectReader item((*arr)[0], r.path(key) + "[0]");
    return item.string("text");
}

// -----------------------------------------------------------------------------
// Writers
// -----------------------------------------------------------------------------

json write_reference(const ResourceId& id) {
    return json{{"reference", id.reference()}};
}

json write_concept(const CodeableConcept& cc) {
    json out{{"text", cc.text}};
    if (cc.coding) {
        json coding{{"code", cc.coding->code}};
        if (!cc.coding->system.empty()) coding["system"] = cc.coding->system;
        if (!cc.coding->display.empty()) coding["display"] = cc.coding->display;
        out["coding"] = json::array({coding});
    }
    return out;
}

template <typename E>
json write_coded(E value, std::string_view system) {
    return json{{"coding", json::array({json{{"system", system}, {"code", to_string(value)}}})}};
}

json write_text_list(const std::string& text) {
    return json::array({json{{"text", text}}});
}

json write_quantity(double value, const std::string& unit) {
    json q{{"value", value}};
    if (!unit.empty()) q["unit"] = unit;
    return q;
}

void merge_extra(json& out, const json& extra) {
    if (!extra.is_object()) return;
    for (const auto& [k, v] : extra.items()) {
        if (!out.contains(k)) out[k] = v;
    }
}

// -----------------------------------------------------------------------------
// Per-resource conversion
// -----------------------------------------------------------------------------

json encode(const Patient& p) {
    json out{{"resourceType", "Patient"},
             {"id", p.id},
             {"name", write_text_list(p.name)},
             {"gender", to_string(p.gender)},
             {"birthDate", p.birth_date.to_string()}};
    merge_extra(out, p.extra);
    return out;
}

json encode(const Encounter& e) {
    json out{{"resourceType", "Encounter"},
             {"id", e.id},
             {"status", to_string(e.status)},
             {"class", json{{"system", kActCodeSystem}, {"code", to_string(e.encounter_class)}}},
             {"subject", write_reference(e.subject)},
             {"serviceType", json{{"text", e.service_type}}}};
    json period{{"start", e.period_start.to_string()}};
    if (e.period_end) period["end"] = e.period_end->to_string();
    out["period"] = period;
    if (e.reason) out["reasonCode"] = write_text_list(*e.reason);
    if (e.location) {
        out["location"] = json::array({json{{"location", json{{"display", *e.location}}}}});
    }
    if (e.discharge_summary) {
        out["hospitalization"] = json{{"dischargeDisposition", json{{"text", *e.discharge_summary}}}};
    }
    merge_extra(out, e.extra);
    return out;
}

json encode(const MedicationRequest& m) {
    json dosage{{"text", m.dosage}, {"timing", json{{"code", json{{"text", m.frequency}}}}}};
    json out{{"resourceType", "MedicationRequest"},
             {"id", m.id},
             {"status", to_string(m.status)},
             {"intent", to_string(m.intent)},
             {"medicationCodeableConcept", json{{"text", m.medication_name}}},
             {"dosageInstruction", json::array({dosage})},
             {"subject", write_reference(m.subject)},
             {"authoredOn", m.authored_on.to_string()}};
    if (m.category) out["category"] = json::array({write_coded(*m.category, kMedicationCategorySystem)});
    if (m.encounter) out["encounter"] = write_reference(*m.encounter);
    if (m.reason) out["reasonCode"] = write_text_list(*m.reason);
    merge_extra(out, m.extra);
    return out;
}

json encode(const Observation& o) {
    json out{{"resourceType", "Observation"},
             {"id", o.id},
             {"status", to_string(o.status)},
             {"category", json::array({write_coded(o.category, kObservationCategorySystem)})},
             {"code", write_concept(o.code)},
             {"effectiveDateTime", o.effective.to_string()},
             {"subject", write_reference(o.subject)}};
    if (const auto* q = std::get_if<Quantity>(&o.value)) {
        out["valueQuantity"] = write_quantity(q->value, q->unit);
    } else if (const auto* s = std::get_if<std::string>(&o.value)) {
        out["valueString"] = *s;
    }
    if (o.reference_range) {
        const auto& rr = *o.reference_range;
        out["referenceRange"] = json::array(
            {json{{"low", write_quantity(rr.low, rr.unit)}, {"high", write_quantity(rr.high, rr.unit)}}});
    }
    if (o.encounter) out["encounter"] = write_reference(*o.encounter);
    merge_extra(out, o.extra);
    return out;
}

json encode(const ServiceRequest& s) {
    json out{{"resourceType", "ServiceRequest"},
             {"id", s.id},
             {"status", to_string(s.status)},
             {"intent", to_string(s.intent)},
             {"category", json::array({write_coded(s.category, kOrderCategorySystem)})},
             {"code", write_concept(s.code)},
             {"subject", write_reference(s.subject)},
             {"authoredOn", s.authored_on.to_string()}};
    if (s.encounter) out["encounter"] = write_reference(*s.encounter);
    if (s.reason) out["reasonCode"] = write_text_list(*s.reason);
    if (s.frequency) out["occurrenceTiming"] = json{{"code", json{{"text", *s.frequency}}}};
    merge_extra(out, s.extra);
    return out;
}

json encode(const Condition& c) {
    json out{{"resourceType", "Condition"},
             {"id", c.id},
             {"clinicalStatus", write_coded(c.clinical_status, kConditionClinicalSystem)},
             {"category", json::array({write_coded(c.category, kConditionCategorySystem)})},
             {"code", write_concept(c.code)},
             {"subject", write_reference(c.subject)},
             {"recordedDate", c.recorded_date.to_string()}};
    if (c.encounter) out["encounter"] = write_reference(*c.encounter);
    merge_extra(out, c.extra);
    return out;
}

json encode(const AllergyIntolerance& a) {
    json out{{"resourceType", "AllergyIntolerance"},
             {"id", a.id},
             {"clinicalStatus", write_coded(a.clinical_status, kAllergyClinicalSystem)},
             {"type", to_string(a.allergy_type)},
             {"code", write_concept(a.code)},
             {"patient", write_reference(a.subject)},
             {"recordedDate", a.recorded_date.to_string()}};
    if (a.reaction) {
        out["reaction"] = json::array({json{{"manifestation", write_text_list(*a.reaction)}}});
    }
    merge_extra(out, a.extra);
    return out;
}

json encode(const Procedure& p) {
    json out{{"resourceType", "Procedure"},
             {"id", p.id},
             {"status", to_string(p.status)},
             {"code", write_concept(p.code)},
             {"subject", write_reference(p.subject)},
             {"performedDateTime", p.performed.to_string()}};
    if (p.category) out["category"] = json{{"text", *p.category}};
    if (p.encounter) out["encounter"] = write_reference(*p.encounter);
    if (p.reason) out["reasonCode"] = write_text_list(*p.reason);
    merge_extra(out, p.extra);
    return out;
}

json encode(const CommunicationRequest& c) {
    json out{{"resourceType", "CommunicationRequest"},
             {"id", c.id},
             {"status", to_string(c.status)},
             {"category", write_text_list(c.category)},
             {"priority", to_string(c.priority)},
             {"payload", json::array({json{{"contentString", c.message}}})},
             {"subject", write_reference(c.subject)},
             {"authoredOn", c.authored_on.to_string()}};
    if (c.encounter) out["encounter"] = write_reference(*c.encounter);
    merge_extra(out, c.extra);
    return out;
}

Patient decode_patient(ObjectReader& r) {
    Patient p;
    p.id = r.string("id");
    p.name = read_first_text(r, "name").value_or("");
    if (p.name.empty()) throw InvariantViolation("name", "required");
    p.gender = r.code<Gender>("gender");
    p.birth_date = r.datetime("birthDate");
    return p;
}

Encounter decode_encounter(ObjectReader& r) {
    Encounter e;
    e.id = r.string("id");
    e.status = r.code<EncounterStatus>("status");
    {
        ObjectReader cls(r.require("class"), "class");
        auto sys = cls.opt_string("system");
        if (sys && *sys != kActCodeSystem) throw InvariantViolation("class.system", "expected v3 ActCode");
        e.encounter_class = ObjectReader::enum_value<EncounterClass>("class.code", cls.string("code"));
    }
    e.subject = read_reference(r, "subject");
    {
        ObjectReader period(r.require("period"), "period");
        e.period_start = period.datetime("start");
        e.period_end = period.opt_datetime("end");
    }
    {
        ObjectReader st(r.require("serviceType"), "serviceType");
        e.service_type = st.string("text");
    }
    e.reason = read_first_text(r, "reasonCode");
    if (const json* loc = r.opt_array("location")) {
        ObjectReader item((*loc)[0], "location[0]");
        ObjectReader inner(item.require("location"), "location[0].location");
        e.location = inner.string("display");
    }
    if (const json* hosp = r.get("hospitalization")) {
        ObjectReader h(*hosp, "hospitalization");
        ObjectReader d(h.require("dischargeDisposition"), "hospitalization.dischargeDisposition");
        e.discharge_summary = d.string("text");
    }
    return e;
}

MedicationRequest decode_medication_request(ObjectReader& r) {
    MedicationRequest m;
    m.id = r.string("id");
    m.status = r.code<MedicationRequestStatus>("status");
    m.intent = r.code<MedicationRequestIntent>("intent");
    if (const json* cat = r.opt_array("category")) {
        m.category = read_coded<MedicationRequestCategory>((*cat)[0], "category[0]",
                                                           kMedicationCategorySystem);
    }
    {
        ObjectReader med(r.require("medicationCodeableConcept"), "medicationCodeableConcept");
        m.medication_name = med.string("text");
    }
    {
        const json& instructions = r.array("dosageInstruction");
        ObjectReader dose(instructions[0], "dosageInstruction[0]");
        m.dosage = dose.string("text");
        ObjectReader timing(dose.require("timing"), "dosageInstruction[0].timing");
        ObjectReader code(timing.require("code"), "dosageInstruction[0].timing.code");
        m.frequency = code.string("text");
    }
    m.subject = read_reference(r, "subject");
    m.encounter = read_opt_reference(r, "encounter");
    m.authored_on = r.datetime("authoredOn");
    m.reason = read_first_text(r, "reasonCode");
    return m;
}

ReferenceRange decode_range(const json& node) {
    ObjectReader rr(node, "referenceRange[0]");
    ObjectReader low(rr.require("low"), "referenceRange[0].low");
    ObjectReader high(rr.require("high"), "referenceRange[0].high");
    ReferenceRange out;
    out.low = low.number("value");
    out.high = high.number("value");
    auto low_unit = low.opt_string("unit").value_or("");
    auto high_unit = high.opt_string("unit").value_or("");
    if (low_unit != high_unit) throw InvariantViolation("referenceRange[0]", "low and high units differ");
    out.unit = low_unit;
    return out;
}

Observation decode_observation(ObjectReader& r) {
    Observation o;
    o.id = r.string("id");
    o.status = r.code<ObservationStatus>("status");
    o.category = read_coded<ObservationCategory>(r.array("category")[0], "category[0]",
                                                 kObservationCategorySystem);
    o.code = read_concept(r, "code");
    const json* vq = r.get("valueQuantity");
    const json* vs = r.get("valueString");
    if (vq && vs) throw InvariantViolation("value[x]", "at most one value type");
    if (vq) {
        ObjectReader q(*vq, "valueQuantity");
        o.value = Quantity{q.number("value"), q.opt_string("unit").value_or("")};
    } else if (vs) {
        if (!vs->is_string()) throw InvariantViolation("valueString", "expected string");
        o.value = vs->get<std::string>();
    }
    if (const json* ranges = r.opt_array("referenceRange")) o.reference_range = decode_range((*ranges)[0]);
    o.effective = r.datetime("effectiveDateTime");
    o.subject = read_reference(r, "subject");
    o.encounter = read_opt_reference(r, "encounter");
    return o;
}

ServiceRequest decode_service_request(ObjectReader& r) {
    ServiceRequest s;
    s.id = r.string("id");
    s.status = r.code<RequestStatus>("status");
    s.intent = r.code<ServiceRequestIntent>("intent");
    s.category = read_coded<OrderCategory>(r.array("category")[0], "category[0]", kOrderCategorySystem);
    s.code = read_concept(r, "code");
    s.subject = read_reference(r, "subject");
    s.encounter = read_opt_reference(r, "encounter");
    s.authored_on = r.datetime("authoredOn");
    s.reason = read_first_text(r, "reasonCode");
    if (const json* timing = r.get("occurrenceTiming")) {
        ObjectReader t(*timing, "occurrenceTiming");
        ObjectReader code(t.require("code"), "occurrenceTiming.code");
        s.frequency = code.string("text");
    }
    return s;
}

Condition decode_condition(ObjectReader& r) {
    Condition c;
    c.id = r.string("id");
    c.clinical_status = read_coded<ConditionClinicalStatus>(r.require("clinicalStatus"), "clinicalStatus",
                                                            kConditionClinicalSystem);
    c.category = read_coded<ConditionCategory>(r.array("category")[0], "category[0]",
                                               kConditionCategorySystem);
    c.code = read_concept(r, "code");
    c.subject = read_reference(r, "subject");
    c.encounter = read_opt_reference(r, "encounter");
    c.recorded_date = r.datetime("recordedDate");
    return c;
}

AllergyIntolerance decode_allergy(ObjectReader& r) {
    AllergyIntolerance a;
    a.id = r.string("id");
    a.clinical_status = read_coded<AllergyClinicalStatus>(r.require("clinicalStatus"), "clinicalStatus",
                                                          kAllergyClinicalSystem);
    a.allergy_type = r.code<AllergyType>("type");
    a.code = read_concept(r, "code");
    if (const json* reactions = r.opt_array("reaction")) {
        ObjectReader item((*reactions)[0], "reaction[0]");
        a.reaction = read_first_text(item, "manifestation");
    }
    a.subject = read_reference(r, "patient");
    a.recorded_date = r.datetime("recordedDate");
    return a;
}

Procedure decode_procedure(ObjectReader& r) {
    Procedure p;
    p.id = r.string("id");
    p.status = r.code<ProcedureStatus>("status");
    if (const json* cat = r.get("category")) {
        ObjectReader c(*cat, "category");
        p.category = c.string("text");
    }
    p.code = read_concept(r, "code");
    p.subject = read_reference(r, "subject");
    p.encounter = read_opt_reference(r, "encounter");
    p.performed = r.datetime("performedDateTime");
    p.reason = read_first_text(r, "reasonCode");
    return p;
}

CommunicationRequest decode_communication(ObjectReader& r) {
    CommunicationRequest c;
    c.id = r.string("id");
    c.status = r.code<RequestStatus>("status");
    c.category = read_first_text(r, "category").value_or("");
    c.priority = r.code<CommunicationPriority>("priority");
    {
        const json& payload = r.array("payload");
        ObjectReader item(payload[0], "payload[0]");
        c.message = item.string("contentString");
    }
    c.subject = read_reference(r, "subject");
    c.encounter = read_opt_reference(r, "encounter");
    c.authored_on = r.datetime("authoredOn");
    return c;
}

// -----------------------------------------------------------------------------
// Validation
// -----------------------------------------------------------------------------

class Checker {
public:
    std::vector<Violation> out;

    void add(std::string field, std::string rule) { out.push_back({std::move(field), std::move(rule)}); }

    void id(const std::string& value) {
        std::string why = id_violation(value);
        if (!why.empty()) add("id", why);
    }

    void non_empty(const std::string& field, const std::string& value) {
        if (trimmed_empty(value)) add(field, "must be non-empty");
    }

    void reference(const std::string& field, const ResourceId& ref, ResourceType expected) {
        if (ref.type != expected) {
            add(field, "must reference a " + std::string(to_string(expected)));
        }
        std::string why = id_violation(ref.id);
        if (!why.empty()) add(field, why);
    }

    void opt_reference(const std::string& field, const std::optional<ResourceId>& ref,
                       ResourceType expected) {
        if (ref) reference(field, *ref, expected);
    }

    void finite(const std::string& field, double value) {
        if (!std::isfinite(value)) add(field, "must be a finite number");
    }

    void coded_concept(const std::string& field, const CodeableConcept& cc) {
        non_empty(field + ".text", cc.text);
        if (cc.coding && cc.coding->code.empty()) add(field + ".coding[0].code", "must be non-empty");
    }

    void extra(const json& extra, const json& encoded_without_extra) {
        if (!extra.is_object()) {
            add("(extra)", "unknown members must form an object");
            return;
        }
        for (const auto& [k, v] : extra.items()) {
            if (encoded_without_extra.contains(k) || k == "resourceType") {
                add(k, "unknown member shadows a modeled field");
            }
        }
    }

private:
    static bool trimmed_empty(const std::string& s) {
        return std::all_of(s.begin(), s.end(), [](char c) { return c == ' ' || c == '\t' || c == '\n'; });
    }
};

void check(Checker& c, const Patient& p) {
    c.non_empty("name", p.name);
    if (!p.birth_date.date_only()) c.add("birthDate", "must be a calendar date");
}

void check(Checker& c, const Encounter& e) {
    c.reference("subject", e.subject, ResourceType::Patient);
    c.non_empty("serviceType.text", e.service_type);
    if (e.period_end && *e.period_end < e.period_start) c.add("period.end", "must not precede period.start");
    if (e.reason) c.non_empty("reasonCode[0].text", *e.reason);
    if (e.location) c.non_empty("location[0].location.display", *e.location);
    if (e.discharge_summary) c.non_empty("hospitalization.dischargeDisposition.text", *e.discharge_summary);
}

void check(Checker& c, const MedicationRequest& m) {
    c.non_empty("medicationCodeableConcept.text", m.medication_name);
    c.non_empty("dosageInstruction[0].text", m.dosage);
    c.non_empty("dosageInstruction[0].timing.code.text", m.frequency);
    c.reference("subject", m.subject, ResourceType::Patient);
    c.opt_reference("encounter", m.encounter, ResourceType::Encounter);
    if (m.reason) c.non_empty("reasonCode[0].text", *m.reason);
}

void check(Checker& c, const Observation& o) {
    c.coded_concept("code", o.code);
    if (const auto* q = std::get_if<Quantity>(&o.value)) c.finite("valueQuantity.value", q->value);
    if (o.reference_range) {
        c.finite("referenceRange[0].low.value", o.reference_range->low);
        c.finite("referenceRange[0].high.value", o.reference_range->high);
        if (o.reference_range->low > o.reference_range->high) {
            c.add("referenceRange[0]", "low must not exceed high");
        }
    }
    c.reference("subject", o.subject, ResourceType::Patient);
    c.opt_reference("encounter", o.encounter, ResourceType::Encounter);
}

void check(Checker& c, const ServiceRequest& s) {
    c.coded_concept("code", s.code);
    c.reference("subject", s.subject, ResourceType::Patient);
    c.opt_reference("encounter", s.encounter, ResourceType::Encounter);
    if (s.reason) c.non_empty("reasonCode[0].text", *s.reason);
    if (s.frequency) c.non_empty("occurrenceTiming.code.text", *s.frequency);
}

void check(Checker& c, const Condition& cond) {
    c.coded_concept("code", cond.code);
    c.reference("subject", cond.subject, ResourceType::Patient);
    c.opt_reference("encounter", cond.encounter, ResourceType::Encounter);
}

void check(Checker& c, const AllergyIntolerance& a) {
    c.coded_concept("code", a.code);
    c.reference("patient", a.subject, ResourceType::Patient);
    if (a.reaction) c.non_empty("reaction[0].manifestation[0].text", *a.reaction);
}

void check(Checker& c, const Procedure& p) {
    c.coded_concept("code", p.code);
    c.reference("subject", p.subject, ResourceType::Patient);
    c.opt_reference("encounter", p.encounter, ResourceType::Encounter);
    if (p.category) c.non_empty("category.text", *p.category);
    if (p.reason) c.non_empty("reasonCode[0].text", *p.reason);
}

void check(Checker& c, const CommunicationRequest& m) {
    c.non_empty("category[0].text", m.category);
    c.non_empty("payload[0].contentString", m.message);
    c.reference("subject", m.subject, ResourceType::Patient);
    c.opt_reference("encounter", m.encounter, ResourceType::Encounter);
}

}  // namespace

// =============================================================================
// Identifiers
// =============================================================================

std::string id_violation(std::string_view id) {
    if (id.empty()) return "id must be non-empty";
    if (id.size() > 64) return "id longer than 64 characters";
    if (!std::all_of(id.begin(), id.end(), is_id_char)) return "id contains characters outside [A-Za-z0-9-.]";
    if (is_iso_datetime(id)) return "id parses as ISO date";
    return {};
}

bool is_valid_id(std::string_view id) noexcept {
    if (id.empty() || id.size() > 64) return false;
    if (!std::all_of(id.begin(), id.end(), is_id_char)) return false;
    return !is_iso_datetime(id);
}

std::string ResourceId::reference() const {
    return std::string(to_string(type)) + "/" + id;
}

std::optional<ResourceId> ResourceId::parse_reference(std::string_view text) {
    auto slash = text.find('/');
    if (slash == std::string_view::npos) return std::nullopt;
    auto type = resource_type_from_string(text.substr(0, slash));
    if (!type) return std::nullopt;
    return ResourceId{*type, std::string(text.substr(slash + 1))};
}

std::optional<ResourceType> resource_type_from_string(std::string_view name) noexcept {
    return enum_from_string<ResourceType>(name);
}

// =============================================================================
// FhirResource
// =============================================================================

const std::string& FhirResource::id() const noexcept {
    return std::visit([](const auto& r) -> const std::string& { return r.id; }, value_);
}

std::optional<ResourceId> FhirResource::subject() const {
    return std::visit(
        [](const auto& r) -> std::optional<ResourceId> {
            using T = std::decay_t<decltype(r)>;
            if constexpr (std::is_same_v<T, Patient>) {
                return ResourceId{ResourceType::Patient, r.id};
            } else {
                return r.subject;
            }
        },
        value_);
}

std::optional<ResourceId> FhirResource::encounter() const {
    return std::visit(
        [](const auto& r) -> std::optional<ResourceId> {
            using T = std::decay_t<decltype(r)>;
            if constexpr (std::is_same_v<T, Encounter>) {
                return ResourceId{ResourceType::Encounter, r.id};
            } else if constexpr (std::is_same_v<T, Patient> || std::is_same_v<T, AllergyIntolerance>) {
                return std::nullopt;
            } else {
                return r.encounter;
            }
        },
        value_);
}

std::optional<DateTime> FhirResource::primary_time() const {
    return std::visit(
        [](const auto& r) -> std::optional<DateTime> {
            using T = std::decay_t<decltype(r)>;
            if constexpr (std::is_same_v<T, Patient>) {
                return std::nullopt;
            } else if constexpr (std::is_same_v<T, Encounter>) {
                return r.period_start;
            } else if constexpr (std::is_same_v<T, Observation>) {
                return r.effective;
            } else if constexpr (std::is_same_v<T, Condition> || std::is_same_v<T, AllergyIntolerance>) {
                return r.recorded_date;
            } else if constexpr (std::is_same_v<T, Procedure>) {
                return r.performed;
            } else {
                return r.authored_on;
            }
        },
        value_);
}

FhirResource FhirResource::with_id(std::string id) const {
    ResourceVariant copy = value_;
    std::visit([&](auto& r) { r.id = std::move(id); }, copy);
    return std::visit([](auto&& r) { return FhirResource(std::move(r)); }, std::move(copy));
}

// =============================================================================
// Validation / serialization
// =============================================================================

ValidationReport validate_resource(const FhirResource& resource) {
    Checker c;
    std::visit(
        [&](const auto& r) {
            c.id(r.id);
            check(c, r);
            using T = std::decay_t<decltype(r)>;
            T bare = r;
            bare.extra = json::object();
            c.extra(r.extra, encode(bare));
        },
        resource.value());
    return {std::move(c.out)};
}

void ensure_valid(const FhirResource& resource) {
    auto report = validate_resource(resource);
    if (!report.ok()) {
        throw InvariantViolation(report.violations.front().field, report.violations.front().rule);
    }
}

json to_json(const FhirResource& resource) {
    return std::visit([](const auto& r) { return encode(r); }, resource.value());
}

FhirResource from_json(const json& document) {
    if (!document.is_object()) throw Error(Errc::MalformedJson, "resource must be a JSON object");
    auto it = document.find("resourceType");
    if (it == document.end() || !it->is_string()) {
        throw Error(Errc::MalformedJson, "missing resourceType");
    }
    auto name = it->get<std::string>();
    auto type = resource_type_from_string(name);
    if (!type) throw Error(Errc::UnknownResourceType, name);

    ObjectReader r(document, "");
    r.get("resourceType");
    auto build = [&]() -> FhirResource {
        switch (*type) {
            case ResourceType::Patient: return decode_patient(r);
            case ResourceType::Encounter: return decode_encounter(r);
            case ResourceType::MedicationRequest: return decode_medication_request(r);
            case ResourceType::Observation: return decode_observation(r);
            case ResourceType::ServiceRequest: return decode_service_request(r);
            case ResourceType::Condition: return decode_condition(r);
            case ResourceType::AllergyIntolerance: return decode_allergy(r);
            case ResourceType::Procedure: return decode_procedure(r);
            case ResourceType::CommunicationRequest: return decode_communication(r);
        }
        throw Error(Errc::UnknownResourceType, name);
    };
    FhirResource decoded = build();
    json extra = r.remainder();
    ResourceVariant v = decoded.value();
    std::visit([&](auto& res) { res.extra = extra; }, v);
    FhirResource out = std::visit([](auto&& res) { return FhirResource(std::move(res)); }, std::move(v));
    ensure_valid(out);
    return out;
}

std::string serialize_resource(const FhirResource& resource) {
    return to_json(resource).dump();
}

FhirResource parse_resource(std::string_view json_text) {
    json document = json::parse(json_text, nullptr, false);
    if (document.is_discarded()) throw Error(Errc::MalformedJson, "input is not well-formed JSON");
    return from_json(document);
}

}  // namespace almanac::fhir

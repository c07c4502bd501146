#include "almanac/exec/runtime.hpp"

#include "almanac/common/error.hpp"
#include "almanac/common/text.hpp"
#include "almanac/knowledge/embed.hpp"
#include "almanac/tools/call.hpp"

#include <algorithm>

namespace almanac::exec {

using namespace fhir;
using store::Filter;
using store::FilterOp;
using store::SearchQuery;

StepFailure::StepFailure(std::string code, std::string message)
    : std::runtime_error(code + ": " + message), code_(std::move(code)) {}

namespace {

[[noreturn]] void tool_error(const std::string& message) {
    throw StepFailure(runtime_code::kToolError, message);
}

std::optional<std::string> opt_string(const Arguments& args, const char* name) {
    auto it = args.find(name);
    if (it == args.end() || !it->second.is_string()) return std::nullopt;
    return it->second.get<std::string>();
}

std::string req_string(const Arguments& args, const char* name) {
    auto v = opt_string(args, name);
    if (!v) throw StepFailure(runtime_code::kValueInvalid, std::string(name) + " is required");
    return *v;
}

ResourceId req_ref(const Arguments& args, const char* name, ResourceType type) {
    auto ref = tools::parse_ref_literal(req_string(args, name), type);
    if (!ref) throw StepFailure(runtime_code::kValueInvalid, std::string(name) + " is not a " + std::string(to_string(type)) + " id");
    return *ref;
}

std::optional<ResourceId> opt_ref(const Arguments& args, const char* name, ResourceType type) {
    if (!args.count(name)) return std::nullopt;
    return req_ref(args, name, type);
}

template <typename E>
E req_enum(const Arguments& args, const char* name) {
    auto v = enum_from_string<E>(req_string(args, name));
    if (!v) throw StepFailure(runtime_code::kValueInvalid, std::string(name) + " is not an allowed value");
    return *v;
}

DateTime date_or_now(const Arguments& args, const char* name, const Clock& clock) {
    auto s = opt_string(args, name);
    if (!s) return clock();
    auto d = DateTime::parse(*s);
    if (!d) throw StepFailure(runtime_code::kValueInvalid, std::string(name) + " is not an ISO-8601 date");
    return *d;
}

std::vector<std::string> text_fields(const FhirResource& r) {
    std::vector<std::string> out;
    auto concept_text = [&](const CodeableConcept& c) {
        out.push_back(c.text);
        if (c.coding) out.push_back(c.coding->display);
    };
    std::visit(
        [&](const auto& v) {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, MedicationRequest>) {
                out.push_back(v.medication_name);
                out.push_back(v.dosage);
                if (v.reason) out.push_back(*v.reason);
            } else if constexpr (std::is_same_v<T, Observation>) {
                concept_text(v.code);
                if (const auto* s = std::get_if<std::string>(&v.value)) out.push_back(*s);
            } else if constexpr (std::is_same_v<T, Encounter>) {
                out.push_back(v.service_type);
                for (const auto* o : {&v.reason, &v.location, &v.discharge_summary}) {
                    if (*o) out.push_back(**o);
                }
            } else if constexpr (std::is_same_v<T, Condition>) {
                concept_text(v.code);
            } else if constexpr (std::is_same_v<T, AllergyIntolerance>) {
                concept_text(v.code);
                if (v.reaction) out.push_back(*v.reaction);
            } else if constexpr (std::is_same_v<T, Procedure>) {
                concept_text(v.code);
                if (v.category) out.push_back(*v.category);
                if (v.reason) out.push_back(*v.reason);
            } else if constexpr (std::is_same_v<T, ServiceRequest>) {
                concept_text(v.code);
                if (v.reason) out.push_back(*v.reason);
            } else if constexpr (std::is_same_v<T, CommunicationRequest>) {
                out.push_back(v.message);
            } else if constexpr (std::is_same_v<T, Patient>) {
                out.push_back(v.name);
            }
        },
        r.value());
    return out;
}

/// 2 = whole phrase, 1 = some token, 0 = no match.
int query_score(const FhirResource& r, std::string_view query) {
    const auto phrase = trim(query);
    if (phrase.empty()) return 1;
    const auto fields = text_fields(r);
    for (const auto& f : fields) {
        if (icontains(f, phrase)) return 2;
    }
    for (const auto& token : knowledge::tokenize(phrase)) {
        for (const auto& f : fields) {
            if (icontains(f, token)) return 1;
        }
    }
    return 0;
}

}  // namespace

ToolRuntime::ToolRuntime(store::Store& store, const tools::Registry& registry,
                         std::shared_ptr<const knowledge::LiteratureTool> literature,
                         std::shared_ptr<const knowledge::CalculatorLibrary> calculators)
    : store_(store), registry_(registry), literature_(std::move(literature)), calculators_(std::move(calculators)) {}

FhirResource ToolRuntime::build_order(const std::string& function, const Arguments& args) const {
    const Clock& clock = store_.clock();
    if (function == "create_medication_request_order") {
        MedicationRequest m;
        m.status = req_enum<MedicationRequestStatus>(args, "status");
        m.intent = req_enum<MedicationRequestIntent>(args, "intent");
        m.medication_name = req_string(args, "name");
        m.dosage = req_string(args, "dosage");
        m.frequency = req_string(args, "frequency");
        m.subject = req_ref(args, "subject", ResourceType::Patient);
        m.encounter = opt_ref(args, "encounter_id", ResourceType::Encounter);
        m.authored_on = date_or_now(args, "authored_on", clock);
        m.reason = opt_string(args, "reason");
        return m;
    }
    if (function == "create_service_request_order") {
        ServiceRequest s;
        s.category = req_enum<OrderCategory>(args, "category");
        s.code.text = req_string(args, "code");
        s.subject = req_ref(args, "subject", ResourceType::Patient);
        s.encounter = opt_ref(args, "encounter_id", ResourceType::Encounter);
        s.authored_on = date_or_now(args, "authored_on", clock);
        s.reason = opt_string(args, "reason");
        s.frequency = opt_string(args, "frequency");
        return s;
    }
    if (function == "create_nursing_communication") {
        CommunicationRequest c;
        c.message = req_string(args, "message");
        c.subject = req_ref(args, "subject", ResourceType::Patient);
        c.encounter = opt_ref(args, "encounter_id", ResourceType::Encounter);
        if (args.count("priority")) c.priority = req_enum<CommunicationPriority>(args, "priority");
        c.authored_on = clock();
        return c;
    }
    tool_error("no order builder for " + function);
}

json ToolRuntime::search(const std::string& function, const Arguments& args) const {
    const ResourceId patient = req_ref(args, "patient_id", ResourceType::Patient);
    if (!store_.contains(patient)) tool_error(patient.reference() + " does not exist");
    std::vector<ResourceType> types;
    std::vector<Filter> filters{{"patient", FilterOp::Eq, patient.id}};
    auto add_filter = [&](const char* arg, const char* field) {
        if (auto v = opt_string(args, arg)) filters.push_back({field, FilterOp::Eq, *v});
    };

    if (function == "search_medication_request_database") {
        types = {ResourceType::MedicationRequest};
        add_filter("status", "status");
        add_filter("date", "date");
    } else if (function == "search_observation_database") {
        types = {ResourceType::Observation};
        add_filter("status", "status");
        add_filter("category", "category");
        add_filter("date", "date");
    } else if (function == "search_encounter_database") {
        types = {ResourceType::Encounter};
        add_filter("date", "date");
        if (auto e = opt_ref(args, "encounter_id", ResourceType::Encounter)) filters.push_back({"_id", FilterOp::Eq, e->id});
    } else if (function == "search_condition_database") {
        const auto kind = opt_string(args, "kind");
        if (!kind || *kind == "condition") types.push_back(ResourceType::Condition);
        if (!kind || *kind == "allergy") types.push_back(ResourceType::AllergyIntolerance);
        if (!kind || *kind == "procedure") types.push_back(ResourceType::Procedure);
    } else {
        tool_error("no search for " + function);
    }
    if (function != "search_encounter_database") {
        if (auto e = opt_ref(args, "encounter_id", ResourceType::Encounter)) filters.push_back({"encounter", FilterOp::Eq, e->id});
    }

    const std::string query = opt_string(args, "query").value_or("");
    struct Ranked {
        int score;
        FhirResource resource;
    };
    std::vector<Ranked> ranked;
    for (auto type : types) {
        SearchQuery q{type, filters, std::nullopt, 100000};
        for (auto& r : store_.search(q)) {
            if (int s = query_score(r, query); s > 0) ranked.push_back({s, std::move(r)});
        }
    }
    std::stable_sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) {
        if (a.score != b.score) return a.score > b.score;
        const auto ta = a.resource.primary_time(), tb = b.resource.primary_time();
        if (ta != tb) return tb < ta;
        if (a.resource.type() != b.resource.type()) return a.resource.type() < b.resource.type();
        return a.resource.id() < b.resource.id();
    });
    json out = json::array();
    for (const auto& r : ranked) out.push_back(to_json(r.resource));
    return out;
}

json ToolRuntime::invoke(const std::string& function, const Arguments& args, const store::WriteContext& ctx,
                         bool preview) {
    const tools::ToolSchema* schema = registry_.find(function);
    if (!schema) tool_error("no function named " + function);
    try {
        if (function == "search_medical_literature") {
            if (!literature_) tool_error("no literature corpus is configured");
            return knowledge::LiteratureTool::render(literature_->answer(req_string(args, "query")));
        }
        if (function == "run_clinical_calculator") {
            if (!calculators_) tool_error("no calculators are configured");
            const auto result = calculators_->evaluate(req_string(args, "calculator_id"),
                                                       knowledge::parse_calculator_inputs(req_string(args, "inputs")));
            return result.value;
        }
        if (schema->mutating) {
            FhirResource order = build_order(function, args);
            if (!preview) {
                const ResourceId id = store_.create(order, ctx);
                return to_json(store_.get(id));
            }
            std::string id = "preview-" + ctx.step_id.value_or("step");
            std::replace(id.begin(), id.end(), '_', '-');
            order = order.with_id(id.substr(0, 64));
            ensure_valid(order);
            for (const auto& ref : {order.subject(), order.encounter()}) {
                if (ref && !store_.contains(*ref)) tool_error(ref->reference() + " does not exist");
            }
            return to_json(order);
        }
        return search(function, args);
    } catch (const StepFailure&) {
        throw;
    } catch (const Error& e) {
        tool_error(e.what());
    }
}

}  // namespace almanac::exec

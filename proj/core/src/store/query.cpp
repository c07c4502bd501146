#include "almanac/store/query.hpp"

#include "almanac/common/error.hpp"
#include "almanac/common/text.hpp"

#include <array>
#include <charconv>
#include <cmath>

namespace almanac::store {

using namespace almanac::fhir;

namespace {

template <typename T, typename F>
SearchField field(std::string name, FieldKind kind, F get) {
    return {std::move(name), kind, [get](const FhirResource& r) -> std::optional<FieldValue> {
                const T* typed = r.template get_if<T>();
                if (!typed) return std::nullopt;
                return get(*typed);
            }};
}

std::optional<FieldValue> text(const std::optional<std::string>& s) {
    if (!s) return std::nullopt;
    return FieldValue{*s};
}

std::optional<FieldValue> ref_value(const std::optional<ResourceId>& id) {
    if (!id) return std::nullopt;
    return FieldValue{id->id};
}

template <typename E>
std::optional<FieldValue> token(E value) {
    return FieldValue{std::string(to_string(value))};
}

/// Fields every non-Patient resource has, in addition to its own.
void add_common(std::vector<SearchField>& out, bool has_status, bool has_encounter) {
    out.push_back({"patient", FieldKind::Reference,
                   [](const FhirResource& r) { return ref_value(r.subject()); }});
    if (has_encounter) {
        out.push_back({"encounter", FieldKind::Reference,
                       [](const FhirResource& r) { return ref_value(r.encounter()); }});
    }
    out.push_back({"date", FieldKind::Date, [](const FhirResource& r) -> std::optional<FieldValue> {
                       auto t = r.primary_time();
                       if (!t) return std::nullopt;
                       return FieldValue{*t};
                   }});
    if (has_status) {
        out.push_back({"status", FieldKind::Token, [](const FhirResource& r) -> std::optional<FieldValue> {
                           return std::visit(
                               [](const auto& x) -> std::optional<FieldValue> {
                                   if constexpr (requires { x.status; }) {
                                       return token(x.status);
                                   } else {
                                       return std::nullopt;
                                   }
                               },
                               r.value());
                       }});
    }
}

std::vector<SearchField> build_fields(ResourceType type) {
    std::vector<SearchField> out;
    out.push_back({"_id", FieldKind::Token, [](const FhirResource& r) -> std::optional<FieldValue> {
                       return FieldValue{r.id()};
                   }});
    switch (type) {
        case ResourceType::Patient:
            out.push_back(field<Patient>("name", FieldKind::Text, [](const Patient& p) { return text(p.name); }));
            out.push_back(field<Patient>("gender", FieldKind::Token, [](const Patient& p) { return token(p.gender); }));
            out.push_back(field<Patient>("birthdate", FieldKind::Date, [](const Patient& p) {
                return std::optional<FieldValue>{p.birth_date};
            }));
            break;
        case ResourceType::Encounter:
            add_common(out, true, true);
            out.push_back(field<Encounter>("class", FieldKind::Token,
                                           [](const Encounter& e) { return token(e.encounter_class); }));
            out.push_back(field<Encounter>("service_type", FieldKind::Text,
                                           [](const Encounter& e) { return text(e.service_type); }));
            out.push_back(field<Encounter>("reason", FieldKind::Text, [](const Encounter& e) { return text(e.reason); }));
            out.push_back(field<Encounter>("location", FieldKind::Text,
                                           [](const Encounter& e) { return text(e.location); }));
            out.push_back(field<Encounter>("discharge", FieldKind::Text,
                                           [](const Encounter& e) { return text(e.discharge_summary); }));
            break;
        case ResourceType::MedicationRequest:
            add_common(out, true, true);
            out.push_back(field<MedicationRequest>("intent", FieldKind::Token,
                                                   [](const MedicationRequest& m) { return token(m.intent); }));
            out.push_back(field<MedicationRequest>("category", FieldKind::Token,
                                                   [](const MedicationRequest& m) -> std::optional<FieldValue> {
                                                       if (!m.category) return std::nullopt;
                                                       return token(*m.category);
                                                   }));
            out.push_back(field<MedicationRequest>("medication", FieldKind::Text,
                                                   [](const MedicationRequest& m) { return text(m.medication_name); }));
            out.push_back(field<MedicationRequest>("dosage", FieldKind::Text,
                                                   [](const MedicationRequest& m) { return text(m.dosage); }));
            out.push_back(field<MedicationRequest>("frequency", FieldKind::Text,
                                                   [](const MedicationRequest& m) { return text(m.frequency); }));
            out.push_back(field<MedicationRequest>("reason", FieldKind::Text,
                                                   [](const MedicationRequest& m) { return text(m.reason); }));
            break;
        case ResourceType::Observation:
            add_common(out, true, true);
            out.push_back(field<Observation>("category", FieldKind::Token,
                                             [](const Observation& o) { return token(o.category); }));
            out.push_back(field<Observation>("code", FieldKind::Text, [](const Observation& o) { return text(o.code.text); }));
            out.push_back(field<Observation>("value", FieldKind::Number,
                                             [](const Observation& o) -> std::optional<FieldValue> {
                                                 if (const auto* q = std::get_if<Quantity>(&o.value)) return q->value;
                                                 return std::nullopt;
                                             }));
            out.push_back(field<Observation>("value_string", FieldKind::Text,
                                             [](const Observation& o) -> std::optional<FieldValue> {
                                                 if (const auto* s = std::get_if<std::string>(&o.value)) return *s;
                                                 return std::nullopt;
                                             }));
            break;
        case ResourceType::ServiceRequest:
            add_common(out, true, true);
            out.push_back(field<ServiceRequest>("intent", FieldKind::Token,
                                                [](const ServiceRequest& s) { return token(s.intent); }));
            out.push_back(field<ServiceRequest>("category", FieldKind::Token,
                                                [](const ServiceRequest& s) { return token(s.category); }));
            out.push_back(field<ServiceRequest>("code", FieldKind::Text,
                                                [](const ServiceRequest& s) { return text(s.code.text); }));
            out.push_back(field<ServiceRequest>("reason", FieldKind::Text,
                                                [](const ServiceRequest& s) { return text(s.reason); }));
            break;
        case ResourceType::Condition:
            add_common(out, false, true);
            out.push_back(field<Condition>("clinical_status", FieldKind::Token,
                                           [](const Condition& c) { return token(c.clinical_status); }));
            out.push_back(field<Condition>("category", FieldKind::Token,
                                           [](const Condition& c) { return token(c.category); }));
            out.push_back(field<Condition>("code", FieldKind::Text, [](const Condition& c) { return text(c.code.text); }));
            break;
        case ResourceType::AllergyIntolerance:
            add_common(out, false, false);
            out.push_back(field<AllergyIntolerance>("clinical_status", FieldKind::Token,
                                                    [](const AllergyIntolerance& a) { return token(a.clinical_status); }));
            out.push_back(field<AllergyIntolerance>("type", FieldKind::Token,
                                                    [](const AllergyIntolerance& a) { return token(a.allergy_type); }));
            out.push_back(field<AllergyIntolerance>("code", FieldKind::Text,
                                                    [](const AllergyIntolerance& a) { return text(a.code.text); }));
            out.push_back(field<AllergyIntolerance>("reaction", FieldKind::Text,
                                                    [](const AllergyIntolerance& a) { return text(a.reaction); }));
            break;
        case ResourceType::Procedure:
            add_common(out, true, true);
            out.push_back(field<Procedure>("category", FieldKind::Text, [](const Procedure& p) { return text(p.category); }));
            out.push_back(field<Procedure>("code", FieldKind::Text, [](const Procedure& p) { return text(p.code.text); }));
            out.push_back(field<Procedure>("reason", FieldKind::Text, [](const Procedure& p) { return text(p.reason); }));
            break;
        case ResourceType::CommunicationRequest:
            add_common(out, true, true);
            out.push_back(field<CommunicationRequest>("priority", FieldKind::Token,
                                                      [](const CommunicationRequest& c) { return token(c.priority); }));
            out.push_back(field<CommunicationRequest>("category", FieldKind::Text,
                                                      [](const CommunicationRequest& c) { return text(c.category); }));
            out.push_back(field<CommunicationRequest>("message", FieldKind::Text,
                                                      [](const CommunicationRequest& c) { return text(c.message); }));
            break;
    }
    return out;
}

std::optional<double> parse_number(std::string_view text) {
    double v = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || ptr != text.data() + text.size() || !std::isfinite(v)) return std::nullopt;
    return v;
}

std::string_view strip_reference_prefix(std::string_view value) {
    auto slash = value.find('/');
    return slash == std::string_view::npos ? value : value.substr(slash + 1);
}

bool match_one(const SearchField& f, const Filter& filter, const FieldValue& v) {
    switch (f.kind) {
        case FieldKind::Text: {
            const auto& s = std::get<std::string>(v);
            switch (filter.op) {
                case FilterOp::Eq: return iequals(s, filter.value);
                case FilterOp::Contains: return icontains(s, filter.value);
                case FilterOp::Ge: return s >= filter.value;
                case FilterOp::Le: return s <= filter.value;
            }
            return false;
        }
        case FieldKind::Token: {
            const auto& s = std::get<std::string>(v);
            switch (filter.op) {
                case FilterOp::Eq: return s == filter.value;
                case FilterOp::Ge: return s >= filter.value;
                case FilterOp::Le: return s <= filter.value;
                case FilterOp::Contains: return false;
            }
            return false;
        }
        case FieldKind::Reference:
            return std::get<std::string>(v) == strip_reference_prefix(filter.value);
        case FieldKind::Date: {
            const auto& t = std::get<DateTime>(v);
            auto bound = *DateTime::parse(filter.value);
            bool by_day = filter.op == FilterOp::Eq || bound.date_only();
            if (by_day) {
                auto a = t.day();
                auto b = bound.day();
                if (filter.op == FilterOp::Eq) return a == b;
                return filter.op == FilterOp::Ge ? a >= b : a <= b;
            }
            return filter.op == FilterOp::Ge ? t.epoch_seconds() >= bound.epoch_seconds()
                                             : t.epoch_seconds() <= bound.epoch_seconds();
        }
        case FieldKind::Number: {
            double x = std::get<double>(v);
            double y = *parse_number(filter.value);
            switch (filter.op) {
                case FilterOp::Eq: return x == y;
                case FilterOp::Ge: return x >= y;
                case FilterOp::Le: return x <= y;
                case FilterOp::Contains: return false;
            }
            return false;
        }
    }
    return false;
}

/// Negative, zero or positive; missing values sort first.
int compare_values(const std::optional<FieldValue>& a, const std::optional<FieldValue>& b) {
    if (!a || !b) return static_cast<int>(a.has_value()) - static_cast<int>(b.has_value());
    if (const auto* x = std::get_if<std::string>(&*a)) {
        const auto& y = std::get<std::string>(*b);
        return x->compare(y) < 0 ? -1 : (*x == y ? 0 : 1);
    }
    if (const auto* x = std::get_if<DateTime>(&*a)) {
        auto xs = x->epoch_seconds();
        auto ys = std::get<DateTime>(*b).epoch_seconds();
        return xs < ys ? -1 : (xs == ys ? 0 : 1);
    }
    double x = std::get<double>(*a);
    double y = std::get<double>(*b);
    return x < y ? -1 : (x == y ? 0 : 1);
}

}  // namespace

std::string_view to_string(FilterOp op) noexcept {
    switch (op) {
        case FilterOp::Eq: return "eq";
        case FilterOp::Ge: return "ge";
        case FilterOp::Le: return "le";
        case FilterOp::Contains: return "contains";
    }
    return "eq";
}

std::optional<FilterOp> filter_op_from_string(std::string_view text) noexcept {
    if (text == "eq") return FilterOp::Eq;
    if (text == "ge") return FilterOp::Ge;
    if (text == "le") return FilterOp::Le;
    if (text == "contains") return FilterOp::Contains;
    return std::nullopt;
}

const std::vector<SearchField>& search_fields(ResourceType type) {
    static const auto table = [] {
        std::array<std::vector<SearchField>, kResourceTypeCount> t;
        for (std::size_t i = 0; i < kResourceTypeCount; ++i) t[i] = build_fields(static_cast<ResourceType>(i));
        return t;
    }();
    return table[static_cast<std::size_t>(type)];
}

const SearchField* find_search_field(ResourceType type, std::string_view name) {
    for (const auto& f : search_fields(type)) {
        if (f.name == name) return &f;
    }
    return nullptr;
}

void check_query(const SearchQuery& query) {
    if (query.limit == 0) throw Error(Errc::InvalidQuery, "limit must be positive");
    for (const auto& filter : query.filters) {
        const SearchField* f = find_search_field(query.type, filter.field);
        if (!f) throw Error(Errc::UnknownField, std::string(to_string(query.type)) + "." + filter.field);
        auto bad = [&](const std::string& why) {
            throw Error(Errc::InvalidQuery, filter.field + ": " + why);
        };
        switch (f->kind) {
            case FieldKind::Text: break;
            case FieldKind::Token:
                if (filter.op == FilterOp::Contains) bad("contains is not defined for codes");
                break;
            case FieldKind::Reference:
                if (filter.op != FilterOp::Eq) bad("references support eq only");
                break;
            case FieldKind::Date:
                if (filter.op == FilterOp::Contains) bad("contains is not defined for dates");
                if (!DateTime::parse(filter.value)) bad("'" + filter.value + "' is not an ISO-8601 date");
                break;
            case FieldKind::Number:
                if (filter.op == FilterOp::Contains) bad("contains is not defined for numbers");
                if (!parse_number(filter.value)) bad("'" + filter.value + "' is not a number");
                break;
        }
    }
    if (query.sort && !find_search_field(query.type, query.sort->field)) {
        throw Error(Errc::UnknownField, std::string(to_string(query.type)) + "." + query.sort->field);
    }
}

bool matches(const SearchQuery& query, const FhirResource& resource) {
    if (resource.type() != query.type) return false;
    for (const auto& filter : query.filters) {
        const SearchField* f = find_search_field(query.type, filter.field);
        auto v = f->extract(resource);
        if (!v || !match_one(*f, filter, *v)) return false;
    }
    return true;
}

bool result_before(const SearchQuery& query, const FhirResource& a, const FhirResource& b) {
    if (query.sort) {
        const SearchField* f = find_search_field(query.type, query.sort->field);
        int c = compare_values(f->extract(a), f->extract(b));
        if (query.sort->descending) c = -c;
        if (c != 0) return c < 0;
    }
    return a.id() < b.id();
}

}  // namespace almanac::store

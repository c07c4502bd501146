#include "almanac/tools/call.hpp"

#include "almanac/fhir/datetime.hpp"

#include <cmath>

namespace almanac::tools {

using fhir::ResourceId;
using fhir::ResourceType;
using nlohmann::json;

std::string Ref::to_string() const {
    std::string out = "$" + step_id + ".result";
    for (const auto& seg : path) {
        if (const auto* name = std::get_if<std::string>(&seg)) {
            out += "." + *name;
        } else {
            out += "[" + std::to_string(std::get<std::size_t>(seg)) + "]";
        }
    }
    return out;
}

std::string_view to_string(ViolationCode code) noexcept {
    switch (code) {
        case ViolationCode::FabricatedTool: return "FABRICATED_TOOL";
        case ViolationCode::MissingRequired: return "MISSING_REQUIRED";
        case ViolationCode::TypeMismatch: return "TYPE_MISMATCH";
        case ViolationCode::EnumViolation: return "ENUM_VIOLATION";
        case ViolationCode::IdDateConfound: return "ID_DATE_CONFOUND";
        case ViolationCode::DanglingRef: return "DANGLING_REF";
        case ViolationCode::UnknownParam: return "UNKNOWN_PARAM";
    }
    return "UNKNOWN";
}

bool CallValidation::has(ViolationCode code) const noexcept {
    for (const auto& v : violations) {
        if (v.code == code) return true;
    }
    return false;
}

std::optional<ResourceId> parse_ref_literal(std::string_view text, ResourceType expected) {
    std::string_view id = text;
    if (auto slash = text.find('/'); slash != std::string_view::npos) {
        auto type = fhir::resource_type_from_string(text.substr(0, slash));
        if (!type || *type != expected) return std::nullopt;
        id = text.substr(slash + 1);
    }
    if (!fhir::is_valid_id(id)) return std::nullopt;
    return ResourceId{expected, std::string(id)};
}

namespace {

std::string describe(const json& v) {
    return v.dump();
}

std::optional<CallViolation> check_literal(const ParamSpec& p, const json& v, const RefResolver& resolver) {
    auto mismatch = [&](const std::string& expected) {
        return CallViolation{ViolationCode::TypeMismatch, p.name, "expected " + expected + ", got " + describe(v)};
    };
    switch (p.kind) {
        case ParamKind::String:
            if (!v.is_string()) return mismatch("string");
            return std::nullopt;
        case ParamKind::Number:
            if (!v.is_number() || !std::isfinite(v.get<double>())) return mismatch("number");
            return std::nullopt;
        case ParamKind::Boolean:
            if (!v.is_boolean()) return mismatch("boolean");
            return std::nullopt;
        case ParamKind::Date:
            if (!v.is_string() || !fhir::is_iso_datetime(v.get<std::string>())) return mismatch("ISO-8601 date");
            return std::nullopt;
        case ParamKind::Enum: {
            if (!v.is_string()) return mismatch("string");
            const auto s = v.get<std::string>();
            for (const auto& allowed : p.values) {
                if (allowed == s) return std::nullopt;
            }
            return CallViolation{ViolationCode::EnumViolation, p.name, "'" + s + "' is not one of the allowed values"};
        }
        case ParamKind::ResourceRef: {
            if (!v.is_string()) return mismatch(std::string(fhir::to_string(*p.resource_type)) + " id");
            const auto s = v.get<std::string>();
            std::string_view bare = s;
            if (auto slash = bare.find('/'); slash != std::string_view::npos) bare = bare.substr(slash + 1);
            if (fhir::is_iso_datetime(bare)) {
                return CallViolation{ViolationCode::IdDateConfound, p.name,
                                     "'" + s + "' is a date, not a " + std::string(fhir::to_string(*p.resource_type)) +
                                         " id"};
            }
            auto ref = parse_ref_literal(s, *p.resource_type);
            if (!ref) return mismatch(std::string(fhir::to_string(*p.resource_type)) + " id");
            if (resolver && !resolver(*ref)) {
                return CallViolation{ViolationCode::DanglingRef, p.name, ref->reference() + " does not exist"};
            }
            return std::nullopt;
        }
    }
    return std::nullopt;
}

}  // namespace

CallValidation validate_call(const Registry& registry, const ToolCall& call, const RefResolver& resolver) {
    CallValidation out;
    const ToolSchema* schema = registry.find(call.function);
    if (!schema) {
        out.violations.push_back({ViolationCode::FabricatedTool, "", "no function named '" + call.function + "'"});
        return out;
    }
    for (const auto& p : schema->params) {
        auto it = call.args.find(p.name);
        if (it == call.args.end()) {
            if (p.required) out.violations.push_back({ViolationCode::MissingRequired, p.name, "required"});
            continue;
        }
        const json* literal = it->second.literal();
        if (!literal) continue;
        if (auto v = check_literal(p, *literal, resolver)) out.violations.push_back(*v);
    }
    for (const auto& [name, value] : call.args) {
        if (!schema->param(name)) {
            out.violations.push_back({ViolationCode::UnknownParam, name, "not a parameter of " + schema->name});
        }
    }
    return out;
}

}  // namespace almanac::tools

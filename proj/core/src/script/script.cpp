#include "almanac/script/script.hpp"

#include "almanac/common/error.hpp"
#include "almanac/common/json_reader.hpp"
#include "almanac/fhir/shape.hpp"

#include <algorithm>
#include <cctype>
#include <set>

namespace almanac::script {

using nlohmann::json;
using tools::ParamKind;
using tools::ReturnKind;

namespace {

bool is_field_start(char c) {
    return std::isalpha(static_cast<unsigned char>(c)) || c == '_';
}

bool is_field_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
}

[[noreturn]] void fail_at(const JsonNode& node, const std::string& expected) {
    throw SyntaxError(node.line, node.column, expected);
}

void only_members(const JsonNode& node, std::initializer_list<std::string_view> allowed, const char* what) {
    for (std::size_t i = 0; i < node.keys.size(); ++i) {
        if (std::find(allowed.begin(), allowed.end(), node.keys[i]) == allowed.end()) {
            std::string list;
            for (auto a : allowed) list += (list.empty() ? "" : ", ") + std::string(a);
            fail_at(node.children[i], std::string(what) + " member (one of " + list + ")");
        }
    }
}

const JsonNode& require_member(const JsonNode& node, std::string_view key, const char* expected) {
    const JsonNode* m = node.find(key);
    if (!m) fail_at(node, expected);
    return *m;
}

/// Reads a literal or reference argument. `earlier` holds the ids of preceding steps.
ArgValue read_arg(const JsonNode& node, const std::set<std::string>& earlier) {
    switch (node.type) {
        case JsonNode::Type::Number:
        case JsonNode::Type::Boolean:
            return ArgValue{node.scalar};
        case JsonNode::Type::String: {
            const auto s = node.scalar.get<std::string>();
            if (s.empty() || s[0] != '$') return ArgValue{node.scalar};
            if (s.size() > 1 && s[1] == '$') return ArgValue{json(s.substr(1))};
            const auto end = s.find_first_of(".[", 1);
            if (!earlier.count(s.substr(1, end == std::string::npos ? std::string::npos : end - 1))) {
                fail_at(node, "reference to an earlier step");
            }
            auto ref = parse_ref(s);
            if (!ref) fail_at(node, "reference of the form $<step>.result[.field|[n]]*");
            return ArgValue{*ref};
        }
        default:
            fail_at(node, "string, number, boolean or reference");
    }
}

json print_arg(const ArgValue& arg) {
    if (const auto* ref = arg.ref()) return ref->to_string();
    const json& lit = *arg.literal();
    if (lit.is_string()) {
        const auto& s = lit.get_ref<const std::string&>();
        if (!s.empty() && s[0] == '$') return "$" + s;
    }
    return lit;
}

// -----------------------------------------------------------------------------
// Ref typing
// -----------------------------------------------------------------------------

ValueKind to_value_kind(fhir::Shape::Kind k) {
    switch (k) {
        case fhir::Shape::Kind::String: return ValueKind::String;
        case fhir::Shape::Kind::Number: return ValueKind::Number;
        case fhir::Shape::Kind::Boolean: return ValueKind::Boolean;
        case fhir::Shape::Kind::Date: return ValueKind::Date;
        case fhir::Shape::Kind::Object: return ValueKind::Object;
        case fhir::Shape::Kind::Array: return ValueKind::Array;
    }
    return ValueKind::String;
}

std::string segment_text(const PathSegment& seg) {
    if (const auto* name = std::get_if<std::string>(&seg)) return "." + *name;
    return "[" + std::to_string(std::get<std::size_t>(seg)) + "]";
}

bool compatible(ParamKind param, ValueKind value) {
    switch (param) {
        case ParamKind::String: return value == ValueKind::String || value == ValueKind::Date;
        case ParamKind::Date: return value == ValueKind::Date || value == ValueKind::String;
        case ParamKind::Enum: return value == ValueKind::String;
        case ParamKind::ResourceRef: return value == ValueKind::String;
        case ParamKind::Number: return value == ValueKind::Number;
        case ParamKind::Boolean: return value == ValueKind::Boolean;
    }
    return false;
}

bool comparable(ValueKind lhs, const json& rhs) {
    if (rhs.is_number()) return lhs == ValueKind::Number;
    if (rhs.is_string()) return lhs == ValueKind::String || lhs == ValueKind::Date;
    return false;
}

std::optional<ValueKind> literal_kind(const json& v) {
    if (v.is_number()) return ValueKind::Number;
    if (v.is_string()) return ValueKind::String;
    if (v.is_boolean()) return ValueKind::Boolean;
    return std::nullopt;
}

}  // namespace

// =============================================================================
// Basics
// =============================================================================

std::string_view to_string(CompareOp op) noexcept {
    switch (op) {
        case CompareOp::Lt: return "lt";
        case CompareOp::Le: return "le";
        case CompareOp::Gt: return "gt";
        case CompareOp::Ge: return "ge";
        case CompareOp::Eq: return "eq";
        case CompareOp::Ne: return "ne";
    }
    return "eq";
}

std::optional<CompareOp> compare_op_from_string(std::string_view text) noexcept {
    for (auto op : {CompareOp::Lt, CompareOp::Le, CompareOp::Gt, CompareOp::Ge, CompareOp::Eq, CompareOp::Ne}) {
        if (to_string(op) == text) return op;
    }
    return std::nullopt;
}

std::string_view to_string(ValueKind kind) noexcept {
    switch (kind) {
        case ValueKind::String: return "string";
        case ValueKind::Number: return "number";
        case ValueKind::Boolean: return "boolean";
        case ValueKind::Date: return "date";
        case ValueKind::Object: return "object";
        case ValueKind::Array: return "array";
    }
    return "string";
}

const Step* Script::find(std::string_view id) const noexcept {
    for (const auto& s : steps) {
        if (s.id == id) return &s;
    }
    return nullptr;
}

bool is_step_id(std::string_view text) noexcept {
    if (text.empty() || !is_field_start(text[0])) return false;
    return std::all_of(text.begin(), text.end(), [](char c) { return is_field_char(c) || c == '-'; });
}

std::optional<Ref> parse_ref(std::string_view text) {
    if (text.empty() || text[0] != '$') return std::nullopt;
    std::size_t i = 1;
    std::size_t start = i;
    while (i < text.size() && (is_field_char(text[i]) || text[i] == '-')) ++i;
    Ref ref;
    ref.step_id = std::string(text.substr(start, i - start));
    if (!is_step_id(ref.step_id)) return std::nullopt;
    constexpr std::string_view root = ".result";
    if (text.substr(i, root.size()) != root) return std::nullopt;
    i += root.size();
    while (i < text.size()) {
        if (text[i] == '.') {
            ++i;
            std::size_t f = i;
            if (i >= text.size() || !is_field_start(text[i])) return std::nullopt;
            while (i < text.size() && is_field_char(text[i])) ++i;
            ref.path.emplace_back(std::string(text.substr(f, i - f)));
        } else if (text[i] == '[') {
            ++i;
            std::size_t f = i;
            while (i < text.size() && std::isdigit(static_cast<unsigned char>(text[i]))) ++i;
            if (i == f || i >= text.size() || text[i] != ']' || i - f > 9) return std::nullopt;
            // No leading zeros so that print(parse(x)) == x.
            if (i - f > 1 && text[f] == '0') return std::nullopt;
            ref.path.emplace_back(static_cast<std::size_t>(std::stoul(std::string(text.substr(f, i - f)))));
            ++i;
        } else {
            return std::nullopt;
        }
    }
    return ref;
}

Script parse_script(std::string_view text) {
    JsonNode root = read_json(text);
    if (!root.is_object()) fail_at(root, "object with a \"steps\" array");
    only_members(root, {"steps"}, "script");
    const JsonNode& steps = require_member(root, "steps", "\"steps\" member");
    if (!steps.is_array()) fail_at(steps, "array of steps");

    Script script;
    std::set<std::string> earlier;
    for (const auto& node : steps.children) {
        if (!node.is_object()) fail_at(node, "step object");
        only_members(node, {"id", "function", "args", "when"}, "step");
        Step step;
        const JsonNode& id = require_member(node, "id", "\"id\" member");
        if (!id.is_string() || !is_step_id(id.scalar.get<std::string>())) fail_at(id, "step id");
        step.id = id.scalar.get<std::string>();
        if (earlier.count(step.id)) throw Error(Errc::DuplicateStepId, step.id);

        const JsonNode& fn = require_member(node, "function", "\"function\" member");
        if (!fn.is_string() || fn.scalar.get<std::string>().empty()) fail_at(fn, "function name");
        step.call.function = fn.scalar.get<std::string>();

        const JsonNode& args = require_member(node, "args", "\"args\" member");
        if (!args.is_object()) fail_at(args, "argument object");
        for (std::size_t i = 0; i < args.keys.size(); ++i) {
            step.call.args.emplace(args.keys[i], read_arg(args.children[i], earlier));
        }

        if (const JsonNode* when = node.find("when")) {
            if (!when->is_object()) fail_at(*when, "guard object");
            only_members(*when, {"lhs", "op", "rhs"}, "guard");
            Guard g;
            g.lhs = read_arg(require_member(*when, "lhs", "\"lhs\" member"), earlier);
            const JsonNode& op = require_member(*when, "op", "\"op\" member");
            auto parsed_op = op.is_string() ? compare_op_from_string(op.scalar.get<std::string>()) : std::nullopt;
            if (!parsed_op) fail_at(op, "comparison operator (lt, le, gt, ge, eq, ne)");
            g.op = *parsed_op;
            const JsonNode& rhs = require_member(*when, "rhs", "\"rhs\" member");
            if (!(rhs.is_number() || rhs.is_string())) fail_at(rhs, "number or string literal");
            g.rhs = rhs.scalar;
            step.guard = std::move(g);
        }
        earlier.insert(step.id);
        script.steps.push_back(std::move(step));
    }
    return script;
}

json script_to_json(const Script& script) {
    json steps = json::array();
    for (const auto& s : script.steps) {
        json args = json::object();
        for (const auto& [name, value] : s.call.args) args[name] = print_arg(value);
        json step{{"id", s.id}, {"function", s.call.function}, {"args", args}};
        if (s.guard) step["when"] = {{"lhs", print_arg(s.guard->lhs)}, {"op", to_string(s.guard->op)}, {"rhs", s.guard->rhs}};
        steps.push_back(step);
    }
    return {{"steps", steps}};
}

std::string print_script(const Script& script) {
    return script_to_json(script).dump();
}

std::vector<std::pair<std::string, std::string>> reference_edges(const Script& script) {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& s : script.steps) {
        for (const auto& [name, value] : s.call.args) {
            if (const auto* r = value.ref()) out.emplace_back(s.id, r->step_id);
        }
        if (s.guard) {
            if (const auto* r = s.guard->lhs.ref()) out.emplace_back(s.id, r->step_id);
        }
    }
    return out;
}

// =============================================================================
// Typechecking
// =============================================================================

bool ScriptValidation::flagged(std::string_view flag) const noexcept {
    return std::find(flags.begin(), flags.end(), flag) != flags.end();
}

bool ScriptValidation::has(std::string_view code) const noexcept {
    return std::any_of(violations.begin(), violations.end(), [&](const auto& v) { return v.code == code; });
}

std::optional<RefType> type_ref(const Script& script, const tools::Registry& registry, std::size_t from_step,
                                const Ref& ref, std::string* why) {
    auto fail = [&](std::string message) -> std::optional<RefType> {
        if (why) *why = std::move(message);
        return std::nullopt;
    };
    std::size_t target = script.steps.size();
    for (std::size_t i = 0; i < from_step && i < script.steps.size(); ++i) {
        if (script.steps[i].id == ref.step_id) target = i;
    }
    if (target == script.steps.size()) return fail("no earlier step '" + ref.step_id + "'");
    const tools::ToolSchema* schema = registry.find(script.steps[target].call.function);
    if (!schema) return fail("step '" + ref.step_id + "' calls an unknown function");

    const auto& ret = schema->returns;
    auto path = ref.path;
    std::string where = "$" + ref.step_id + ".result";

    if (ret.kind == ReturnKind::String || ret.kind == ReturnKind::Number) {
        if (!path.empty()) return fail(where + " is a " + std::string(tools::to_string(ret.kind)) + " and has no " + segment_text(path[0]));
        return RefType{ret.kind == ReturnKind::String ? ValueKind::String : ValueKind::Number, std::nullopt};
    }

    std::size_t i = 0;
    if (ret.kind == ReturnKind::ResourceList) {
        if (path.empty()) return RefType{ValueKind::Array, std::nullopt};
        if (!std::holds_alternative<std::size_t>(path[0])) {
            return fail(where + " is a list; expected [n] before " + segment_text(path[0]));
        }
        where += segment_text(path[0]);
        i = 1;
    }
    auto shape = fhir::union_shape(ret.resource_types);
    const fhir::Shape* node = shape.get();
    std::optional<fhir::ResourceType> identifies;
    for (; i < path.size(); ++i) {
        const auto& seg = path[i];
        if (const auto* name = std::get_if<std::string>(&seg)) {
            if (node->kind != fhir::Shape::Kind::Object) {
                return fail(where + " is " + std::string(fhir::to_string(node->kind)) + "; cannot select ." + *name);
            }
            const fhir::Shape* next = node->field(*name);
            if (!next) return fail(where + " has no field '" + *name + "'");
            identifies.reset();
            if (node == shape.get() && *name == "id" && ret.resource_types.size() == 1) {
                identifies = ret.resource_types[0];
            }
            if (*name == "reference") {
                // subject.reference / patient.reference / encounter.reference
                if (i >= 1) {
                    if (const auto* parent = std::get_if<std::string>(&path[i - 1])) {
                        if (*parent == "subject" || *parent == "patient") identifies = fhir::ResourceType::Patient;
                        if (*parent == "encounter") identifies = fhir::ResourceType::Encounter;
                    }
                }
            }
            node = next;
        } else {
            if (node->kind != fhir::Shape::Kind::Array) {
                return fail(where + " is " + std::string(fhir::to_string(node->kind)) + "; cannot index it");
            }
            node = node->element.get();
            identifies.reset();
        }
        where += segment_text(seg);
    }
    return RefType{to_value_kind(node->kind), identifies};
}

ScriptValidation resolve_and_typecheck(const Script& script, const tools::Registry& registry,
                                       const tools::RefResolver& resolver) {
    ScriptValidation out;
    if (script.steps.empty()) {
        out.flags.emplace_back("EMPTY");
        return out;
    }
    std::set<std::string> seen;
    for (std::size_t idx = 0; idx < script.steps.size(); ++idx) {
        const Step& step = script.steps[idx];
        auto add = [&](std::string code, std::string param, std::string message) {
            out.violations.push_back({step.id, std::move(code), std::move(param), std::move(message)});
        };
        if (!seen.insert(step.id).second) add("DUPLICATE_STEP", "", "step id '" + step.id + "' repeats");

        auto call = tools::validate_call(registry, step.call, resolver);
        for (const auto& v : call.violations) add(std::string(tools::to_string(v.code)), v.param, v.message);
        const tools::ToolSchema* schema = registry.find(step.call.function);

        for (const auto& [name, value] : step.call.args) {
            const Ref* ref = value.ref();
            if (!ref) continue;
            std::string why;
            auto t = type_ref(script, registry, idx, *ref, &why);
            if (!t) {
                add(why.rfind("no earlier step", 0) == 0 ? "UNKNOWN_STEP" : "TYPE_MISMATCH", name, why);
                continue;
            }
            const tools::ParamSpec* p = schema ? schema->param(name) : nullptr;
            if (!p) continue;  // already reported as FABRICATED_TOOL or UNKNOWN_PARAM
            if (!compatible(p->kind, t->kind)) {
                add("TYPE_MISMATCH", name,
                    ref->to_string() + " is " + std::string(to_string(t->kind)) + ", parameter wants " +
                        std::string(tools::to_string(p->kind)));
            } else if (p->kind == ParamKind::ResourceRef && t->identifies && *t->identifies != *p->resource_type) {
                add("TYPE_MISMATCH", name,
                    ref->to_string() + " identifies a " + std::string(fhir::to_string(*t->identifies)) +
                        ", parameter wants a " + std::string(fhir::to_string(*p->resource_type)));
            }
        }

        if (step.guard) {
            const Guard& g = *step.guard;
            std::optional<ValueKind> lhs;
            if (const Ref* ref = g.lhs.ref()) {
                std::string why;
                auto t = type_ref(script, registry, idx, *ref, &why);
                if (!t) {
                    add(why.rfind("no earlier step", 0) == 0 ? "UNKNOWN_STEP" : "TYPE_MISMATCH", "when", why);
                    continue;
                }
                lhs = t->kind;
            } else {
                lhs = literal_kind(*g.lhs.literal());
            }
            if (!lhs || !comparable(*lhs, g.rhs)) {
                add("GUARD_KIND_MISMATCH", "when",
                    "cannot compare " + std::string(lhs ? to_string(*lhs) : "null") + " with " + g.rhs.dump());
            }
        }
    }
    return out;
}

}  // namespace almanac::script

#include "almanac/ehrqa/template.hpp"

#include "almanac/common/json_reader.hpp"
#include "almanac/common/text.hpp"

#include <algorithm>
#include <regex>
#include <set>

namespace almanac::ehrqa {

std::string_view to_string(Category c) noexcept {
    return c == Category::DataEntry ? "data_entry" : "information_retrieval";
}

std::string_view to_string(Matcher m) noexcept {
    switch (m) {
        case Matcher::Exact: return "exact";
        case Matcher::Date: return "date";
        case Matcher::CaseInsensitive: return "ci";
        case Matcher::Numeric: return "numeric";
        case Matcher::Contains: return "contains";
        case Matcher::Any: return "any";
    }
    return "exact";
}

std::optional<Matcher> matcher_from_string(std::string_view text) noexcept {
    for (auto m : {Matcher::Exact, Matcher::Date, Matcher::CaseInsensitive, Matcher::Numeric, Matcher::Contains,
                   Matcher::Any}) {
        if (to_string(m) == text) return m;
    }
    return std::nullopt;
}

TemplateError::TemplateError(std::size_t line, const std::string& detail)
    : Error(Errc::MalformedTemplate, "line " + std::to_string(line) + ": " + detail), line_(line) {}

const SlotSpec* QuestionTemplate::slot(std::string_view name) const noexcept {
    for (const auto& s : slots) {
        if (s.name == name) return &s;
    }
    return nullptr;
}

const std::vector<std::string>& slot_kinds() {
    static const std::vector<std::string> kinds = {"condition", "date",    "department", "direction", "dosage",
                                                   "frequency", "imaging", "medication", "message",   "patient",
                                                   "procedure", "specialty", "test",     "value"};
    return kinds;
}

const std::map<std::string, std::vector<std::string>>& slot_sources() {
    static const std::map<std::string, std::vector<std::string>> sources = {
        {"patient", {"id", "name"}},
        {"lab", {"name", "date", "value", "unit"}},
        {"pending_lab", {"name", "date"}},
        {"imaging", {"name", "date"}},
        {"social", {"name"}},
        {"medication", {"name", "dosage", "frequency", "date", "reason"}},
        {"discharge_medication", {"name", "dosage", "frequency"}},
        {"condition", {"name", "date"}},
        {"allergy", {"name", "reaction"}},
        {"procedure", {"name", "date"}},
        {"encounter", {"specialty", "date", "reason", "location", "discharge"}},
        {"communication", {"message"}},
    };
    return sources;
}

std::vector<std::pair<std::string, std::string>> text_slots(std::string_view text) {
    static const std::regex slot_re("<([a-z_]+):([a-z_]+)>");
    std::vector<std::pair<std::string, std::string>> out;
    const std::string s(text);
    for (auto it = std::sregex_iterator(s.begin(), s.end(), slot_re); it != std::sregex_iterator(); ++it) {
        out.emplace_back((*it)[1].str(), (*it)[2].str());
    }
    return out;
}

namespace {

bool has_field(const std::string& source, const std::string& field) {
    const auto& sources = slot_sources();
    auto it = sources.find(source);
    return it != sources.end() && std::find(it->second.begin(), it->second.end(), field) != it->second.end();
}

std::vector<std::string> format_slots(std::string_view format) {
    static const std::regex re("\\{([a-z_]+)\\}");
    std::vector<std::string> out;
    const std::string s(format);
    for (auto it = std::sregex_iterator(s.begin(), s.end(), re); it != std::sregex_iterator(); ++it) {
        out.push_back((*it)[1].str());
    }
    return out;
}

std::string fill_format(std::string format, const Bindings& bindings) {
    for (const auto& [name, value] : bindings) {
        const std::string key = "{" + name + "}";
        for (auto pos = format.find(key); pos != std::string::npos; pos = format.find(key, pos + value.size())) {
            format.replace(pos, key.size(), value);
        }
    }
    return format;
}

class Parser {
public:
    explicit Parser(const tools::Registry& registry) : registry_(registry) {}

    std::vector<QuestionTemplate> run(const JsonNode& root) {
        if (!root.is_array()) fail(root, "template file must be a JSON array");
        std::vector<QuestionTemplate> out;
        std::set<std::string> ids;
        for (const auto& node : root.children) {
            auto t = parse_template(node);
            if (!ids.insert(t.id).second) fail(node, "duplicate template id '" + t.id + "'");
            out.push_back(std::move(t));
        }
        return out;
    }

private:
    [[noreturn]] static void fail(const JsonNode& node, const std::string& why) { throw TemplateError(node.line, why); }

    static const JsonNode& member(const JsonNode& obj, const char* key) {
        const JsonNode* n = obj.find(key);
        if (!n) fail(obj, std::string("missing '") + key + "'");
        return *n;
    }

    static std::string string_member(const JsonNode& obj, const char* key) {
        const JsonNode& n = member(obj, key);
        if (!n.is_string() || n.scalar.get<std::string>().empty()) fail(n, std::string("'") + key + "' must be a non-empty string");
        return n.scalar.get<std::string>();
    }

    static void only(const JsonNode& obj, std::initializer_list<const char*> allowed) {
        for (std::size_t i = 0; i < obj.keys.size(); ++i) {
            if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return obj.keys[i] == a; })) {
                fail(obj.children[i], "unknown member '" + obj.keys[i] + "'");
            }
        }
    }

    QuestionTemplate parse_template(const JsonNode& node) {
        if (!node.is_object()) fail(node, "each template must be an object");
        only(node, {"id", "category", "text", "slots", "requires", "calls"});
        QuestionTemplate t;
        t.line = node.line;
        t.id = string_member(node, "id");
        const std::string category = string_member(node, "category");
        if (category == "information_retrieval") {
            t.category = Category::InformationRetrieval;
        } else if (category == "data_entry") {
            t.category = Category::DataEntry;
        } else {
            fail(member(node, "category"), "unknown category '" + category + "'");
        }
        t.text = string_member(node, "text");

        const JsonNode& slots = member(node, "slots");
        if (!slots.is_object()) fail(slots, "'slots' must be an object");
        for (std::size_t i = 0; i < slots.keys.size(); ++i) t.slots.push_back(parse_slot(slots.keys[i], slots.children[i]));

        std::set<std::string> in_text;
        for (const auto& [name, kind] : text_slots(t.text)) {
            const JsonNode& text_node = member(node, "text");
            const auto& kinds = slot_kinds();
            if (std::find(kinds.begin(), kinds.end(), kind) == kinds.end()) fail(text_node, "unknown slot kind '" + kind + "'");
            if (name != "patient" && !t.slot(name)) fail(text_node, "slot <" + name + "> is not declared in 'slots'");
            in_text.insert(name);
        }
        for (std::size_t i = 0; i < t.slots.size(); ++i) {
            auto& s = t.slots[i];
            if (!in_text.count(s.name)) fail(slots.children[i], "slot '" + s.name + "' does not appear in the text");
            for (const auto& [name, kind] : text_slots(t.text)) {
                if (name == s.name) s.kind = kind;
            }
        }

        if (const JsonNode* req = node.find("requires")) {
            if (!req->is_array()) fail(*req, "'requires' must be an array");
            for (const auto& r : req->children) {
                if (!r.is_string()) fail(r, "requirements are 'source.field' strings");
                const auto parts = split(r.scalar.get<std::string>(), '.');
                if (parts.size() != 2 || !has_field(parts[0], parts[1])) fail(r, "unknown requirement '" + r.scalar.get<std::string>() + "'");
                t.required_fields.push_back(r.scalar.get<std::string>());
            }
        }

        const JsonNode& calls = member(node, "calls");
        if (!calls.is_array() || calls.children.empty()) fail(calls, "'calls' must be a non-empty array");
        for (std::size_t i = 0; i < calls.children.size(); ++i) t.calls.push_back(parse_call(t, calls.children[i], i));
        return t;
    }

    static SlotSpec parse_slot(const std::string& name, const JsonNode& node) {
        if (!node.is_object()) fail(node, "slot '" + name + "' must be an object");
        SlotSpec s;
        s.name = name;
        if (name == "patient") fail(node, "'patient' is bound implicitly");
        if (const JsonNode* choice = node.find("choice")) {
            only(node, {"choice"});
            if (!choice->is_array() || choice->children.empty()) fail(*choice, "'choice' must be a non-empty array");
            for (const auto& c : choice->children) {
                if (!c.is_string()) fail(c, "choices must be strings");
                s.choices.push_back(c.scalar.get<std::string>());
            }
            return s;
        }
        only(node, {"source", "field"});
        s.source = string_member(node, "source");
        s.field = string_member(node, "field");
        if (!has_field(s.source, s.field)) fail(node, "unknown slot source '" + s.source + "." + s.field + "'");
        return s;
    }

    bool slot_known(const QuestionTemplate& t, const std::string& name) const {
        return name == "patient" || t.slot(name);
    }

    CallSpec parse_call(const QuestionTemplate& t, const JsonNode& node, std::size_t index) {
        if (!node.is_object()) fail(node, "each call must be an object");
        only(node, {"function", "args", "when"});
        CallSpec c;
        c.function = string_member(node, "function");
        const tools::ToolSchema* schema = registry_.find(c.function);
        if (!schema) fail(member(node, "function"), "function '" + c.function + "' is not in the registry");

        const JsonNode& args = member(node, "args");
        if (!args.is_object()) fail(args, "'args' must be an object");
        for (std::size_t i = 0; i < args.keys.size(); ++i) {
            const std::string& name = args.keys[i];
            const JsonNode& a = args.children[i];
            if (!schema->param(name)) fail(a, c.function + " has no parameter '" + name + "'");
            c.args.emplace(name, parse_arg(t, a));
        }
        for (const auto& p : schema->params) {
            if (p.required && !c.args.count(p.name)) fail(args, c.function + " needs '" + p.name + "'");
        }

        if (const JsonNode* when = node.find("when")) c.when = parse_guard(t, *when, index);
        return c;
    }

    ArgSpec parse_arg(const QuestionTemplate& t, const JsonNode& node) const {
        if (!node.is_object()) fail(node, "argument specs are objects");
        only(node, {"slot", "value", "format", "check", "match"});
        ArgSpec a;
        const int forms = (node.find("slot") ? 1 : 0) + (node.find("value") ? 1 : 0) + (node.find("format") ? 1 : 0);
        if (forms != 1) fail(node, "give exactly one of 'slot', 'value' or 'format'");
        if (node.find("slot")) {
            a.kind = ArgSpec::Kind::Slot;
            a.slot = string_member(node, "slot");
            if (!slot_known(t, a.slot)) fail(node, "unknown slot '" + a.slot + "'");
        } else if (const JsonNode* v = node.find("value")) {
            a.kind = ArgSpec::Kind::Value;
            if (v->is_object() || v->is_array() || v->type == JsonNode::Type::Null) fail(*v, "values are scalars");
            a.value = v->scalar;
        } else {
            a.kind = ArgSpec::Kind::Format;
            a.format = string_member(node, "format");
            for (const auto& s : format_slots(a.format)) {
                if (!slot_known(t, s)) fail(node, "unknown slot '{" + s + "}' in format");
            }
        }
        if (const JsonNode* check = node.find("check")) {
            if (a.kind != ArgSpec::Kind::Format || !check->is_string()) fail(*check, "'check' is a string for format arguments");
            a.check = check->scalar.get<std::string>();
            for (const auto& s : format_slots(*a.check)) {
                if (!slot_known(t, s)) fail(*check, "unknown slot '{" + s + "}' in check");
            }
        }
        if (const JsonNode* m = node.find("match")) {
            auto matcher = m->is_string() ? matcher_from_string(m->scalar.get<std::string>()) : std::nullopt;
            if (!matcher) fail(*m, "unknown matcher");
            a.match = *matcher;
        }
        return a;
    }

    GuardSpec parse_guard(const QuestionTemplate& t, const JsonNode& node, std::size_t index) const {
        if (!node.is_object()) fail(node, "'when' must be an object");
        only(node, {"lhs", "op", "rhs"});
        GuardSpec g;
        g.lhs = string_member(node, "lhs");
        auto ref = script::parse_ref(g.lhs);
        if (!ref) fail(node, "'lhs' must be a step reference");
        bool earlier = false;
        for (std::size_t k = 0; k < index; ++k) earlier = earlier || ref->step_id == "step" + std::to_string(k + 1);
        if (!earlier) fail(node, "'lhs' must reference an earlier call");

        const JsonNode& op = member(node, "op");
        if (op.is_string()) {
            g.op = op.scalar.get<std::string>();
            if (!script::compare_op_from_string(*g.op)) fail(op, "unknown operator");
        } else if (op.is_object()) {
            g.op_slot = string_member(op, "slot");
            const SlotSpec* s = t.slot(g.op_slot);
            if (!s || !s->is_choice()) fail(op, "operator slot must be a choice slot");
            const JsonNode& map = member(op, "map");
            for (std::size_t i = 0; i < map.keys.size(); ++i) {
                if (!map.children[i].is_string() || !script::compare_op_from_string(map.children[i].scalar.get<std::string>())) {
                    fail(map.children[i], "unknown operator");
                }
                g.op_map.emplace(map.keys[i], map.children[i].scalar.get<std::string>());
            }
            for (const auto& c : s->choices) {
                if (!g.op_map.count(c)) fail(map, "no operator for choice '" + c + "'");
            }
        } else {
            fail(op, "'op' is an operator or a slot mapping");
        }

        const JsonNode& rhs = member(node, "rhs");
        if (rhs.is_object()) {
            g.rhs_slot = string_member(rhs, "slot");
            if (!slot_known(t, g.rhs_slot)) fail(rhs, "unknown slot '" + g.rhs_slot + "'");
            if (const JsonNode* as = rhs.find("as")) g.rhs_number = as->is_string() && as->scalar == "number";
        } else if (rhs.is_number() || rhs.is_string()) {
            g.rhs = rhs.scalar;
        } else {
            fail(rhs, "'rhs' is a number, a string or a slot");
        }
        return g;
    }

    const tools::Registry& registry_;
};

}  // namespace

std::vector<QuestionTemplate> parse_templates(std::string_view text, const tools::Registry& registry) {
    JsonNode root;
    try {
        root = read_json(text);
    } catch (const SyntaxError& e) {
        throw TemplateError(e.line(), "invalid JSON, expected " + e.expected());
    }
    return Parser(registry).run(root);
}

std::vector<QuestionTemplate> load_templates(const std::filesystem::path& path, const tools::Registry& registry,
                                             bool require_full_bank) {
    auto bank = parse_templates(read_file(path), registry);
    if (require_full_bank) {
        const auto ir = std::count_if(bank.begin(), bank.end(),
                                      [](const auto& t) { return t.category == Category::InformationRetrieval; });
        const auto de = static_cast<std::ptrdiff_t>(bank.size()) - ir;
        if (bank.size() != 40 || ir != 29 || de != 11) {
            throw TemplateError(1, "expected 40 templates (29 information_retrieval, 11 data_entry), found " +
                                       std::to_string(ir) + " and " + std::to_string(de));
        }
    }
    return bank;
}

const QuestionTemplate* find_template(const std::vector<QuestionTemplate>& bank, std::string_view id) noexcept {
    for (const auto& t : bank) {
        if (t.id == id) return &t;
    }
    return nullptr;
}

std::string render_slot(const std::string& kind, const std::string& value) {
    return kind == "patient" ? "patient " + value : value;
}

std::string render_question(const QuestionTemplate& t, const Bindings& bindings) {
    std::string out = t.text;
    for (const auto& [name, kind] : text_slots(t.text)) {
        const std::string key = "<" + name + ":" + kind + ">";
        auto it = bindings.find(name);
        const std::string value = it == bindings.end() ? key : render_slot(kind, it->second);
        for (auto pos = out.find(key); pos != std::string::npos; pos = out.find(key, pos + value.size())) {
            out.replace(pos, key.size(), value);
        }
    }
    return out;
}

script::Script instantiate_calls(const QuestionTemplate& t, const Bindings& bindings) {
    auto bound = [&](const std::string& slot) {
        auto it = bindings.find(slot);
        if (it == bindings.end()) throw Error(Errc::InvalidArgument, "template " + t.id + " has no binding for '" + slot + "'");
        return it->second;
    };
    script::Script s;
    for (std::size_t i = 0; i < t.calls.size(); ++i) {
        const CallSpec& c = t.calls[i];
        script::Step step;
        step.id = "step" + std::to_string(i + 1);
        step.call.function = c.function;
        for (const auto& [name, a] : c.args) {
            json v;
            switch (a.kind) {
                case ArgSpec::Kind::Slot: v = bound(a.slot); break;
                case ArgSpec::Kind::Value: v = a.value; break;
                case ArgSpec::Kind::Format: v = fill_format(a.format, bindings); break;
            }
            step.call.args.emplace(name, tools::ArgValue{std::move(v)});
        }
        if (c.when) {
            script::Guard g;
            g.lhs = tools::ArgValue{*script::parse_ref(c.when->lhs)};
            std::string op;
            if (c.when->op) {
                op = *c.when->op;
            } else {
                const std::string choice = bound(c.when->op_slot);
                auto it = c.when->op_map.find(choice);
                if (it == c.when->op_map.end()) throw Error(Errc::InvalidArgument, "no operator for '" + choice + "'");
                op = it->second;
            }
            g.op = *script::compare_op_from_string(op);
            if (c.when->rhs) {
                g.rhs = *c.when->rhs;
            } else {
                const std::string raw = bound(c.when->rhs_slot);
                if (c.when->rhs_number) {
                    try {
                        g.rhs = std::stod(raw);
                    } catch (const std::exception&) {
                        throw Error(Errc::InvalidArgument, "slot '" + c.when->rhs_slot + "' is not a number: " + raw);
                    }
                } else {
                    g.rhs = raw;
                }
            }
            step.guard = std::move(g);
        }
        s.steps.push_back(std::move(step));
    }
    return s;
}

}  // namespace almanac::ehrqa

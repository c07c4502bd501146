#include "almanac/ehrqa/item.hpp"

#include "almanac/common/text.hpp"

#include <sstream>

namespace almanac::ehrqa {

namespace {

[[noreturn]] void malformed(const std::string& why) { throw Error(Errc::MalformedRecord, why); }

const json& need(const json& j, const char* key, json::value_t type) {
    auto it = j.find(key);
    if (it == j.end()) malformed(std::string("missing '") + key + "'");
    const bool ok = type == json::value_t::number_unsigned ? it->is_number_unsigned()
                    : type == json::value_t::number_float  ? it->is_number()
                                                           : it->type() == type;
    if (!ok) malformed(std::string("'") + key + "' has the wrong type");
    return *it;
}

std::string fill(std::string text, const Bindings& bindings) {
    for (const auto& [name, value] : bindings) {
        const std::string key = "{" + name + "}";
        for (auto pos = text.find(key); pos != std::string::npos; pos = text.find(key, pos + value.size())) {
            text.replace(pos, key.size(), value);
        }
    }
    return text;
}

}  // namespace

json GoldAnnotation::to_json() const {
    json constraints = json::array();
    for (const auto& call : param_constraints) {
        json c = json::object();
        for (const auto& [param, pc] : call) c[param] = {{"match", std::string(ehrqa::to_string(pc.match))}, {"value", pc.value}};
        constraints.push_back(std::move(c));
    }
    return {{"expected_functions", expected_functions},
            {"param_constraints", std::move(constraints)},
            {"allow_refusal", allow_refusal}};
}

GoldAnnotation GoldAnnotation::from_json(const json& j) {
    if (!j.is_object()) malformed("gold must be an object");
    GoldAnnotation g;
    for (const auto& f : need(j, "expected_functions", json::value_t::array)) {
        if (!f.is_string()) malformed("expected_functions holds strings");
        g.expected_functions.push_back(f.get<std::string>());
    }
    const json& constraints = need(j, "param_constraints", json::value_t::array);
    if (constraints.size() != g.expected_functions.size()) malformed("one param_constraints entry per expected function");
    for (const auto& call : constraints) {
        if (!call.is_object()) malformed("param_constraints entries are objects");
        std::map<std::string, ParamConstraint> m;
        for (const auto& [param, pc] : call.items()) {
            if (!pc.is_object()) malformed("constraint for '" + param + "' must be an object");
            auto match = matcher_from_string(need(pc, "match", json::value_t::string).get<std::string>());
            if (!match) malformed("unknown matcher for '" + param + "'");
            m.emplace(param, ParamConstraint{*match, pc.value("value", json())});
        }
        g.param_constraints.push_back(std::move(m));
    }
    g.allow_refusal = need(j, "allow_refusal", json::value_t::boolean).get<bool>();
    return g;
}

json EhrqaItem::to_json() const {
    return {{"item_id", item_id},
            {"patient_id", patient_id},
            {"template_id", template_id ? json(*template_id) : json()},
            {"question", question},
            {"negative", negative},
            {"gold", gold.to_json()},
            {"slots", slots},
            {"seed", seed},
            {"round", round}};
}

EhrqaItem EhrqaItem::from_json(const json& j) {
    if (!j.is_object()) malformed("item must be an object");
    EhrqaItem item;
    item.item_id = need(j, "item_id", json::value_t::string).get<std::string>();
    item.patient_id = need(j, "patient_id", json::value_t::string).get<std::string>();
    if (auto it = j.find("template_id"); it != j.end() && !it->is_null()) {
        if (!it->is_string()) malformed("'template_id' must be a string or null");
        item.template_id = it->get<std::string>();
    }
    item.question = need(j, "question", json::value_t::string).get<std::string>();
    item.negative = need(j, "negative", json::value_t::boolean).get<bool>();
    item.gold = GoldAnnotation::from_json(need(j, "gold", json::value_t::object));
    for (const auto& [k, v] : need(j, "slots", json::value_t::object).items()) {
        if (!v.is_string()) malformed("slot '" + k + "' must be a string");
        item.slots.emplace(k, v.get<std::string>());
    }
    item.seed = need(j, "seed", json::value_t::number_unsigned).get<std::uint64_t>();
    item.round = need(j, "round", json::value_t::number_unsigned).get<std::uint64_t>();
    if (!item.negative && !item.template_id) malformed("positive items need a template_id");
    return item;
}

GoldAnnotation build_gold(const QuestionTemplate& t, const Bindings& bindings) {
    GoldAnnotation g;
    for (const auto& call : t.calls) {
        g.expected_functions.push_back(call.function);
        std::map<std::string, ParamConstraint> constraints;
        for (const auto& [param, a] : call.args) {
            ParamConstraint pc{a.match, json()};
            if (a.match != Matcher::Any) {
                switch (a.kind) {
                    case ArgSpec::Kind::Slot: {
                        auto it = bindings.find(a.slot);
                        if (it == bindings.end()) throw Error(Errc::InvalidArgument, "no binding for '" + a.slot + "'");
                        pc.value = it->second;
                        break;
                    }
                    case ArgSpec::Kind::Value: pc.value = a.value; break;
                    case ArgSpec::Kind::Format: pc.value = fill(a.check.value_or(a.format), bindings); break;
                }
            }
            constraints.emplace(param, std::move(pc));
        }
        g.param_constraints.push_back(std::move(constraints));
    }
    return g;
}

GoldAnnotation negative_gold() {
    GoldAnnotation g;
    g.expected_functions = {"search_medical_literature"};
    g.param_constraints = {{{"query", ParamConstraint{Matcher::Any, json()}}}};
    g.allow_refusal = true;
    return g;
}

std::string dataset_text(const Dataset& dataset) {
    std::ostringstream out;
    const json header = {{"format", "ehrqa"},
                         {"version", 1},
                         {"config",
                          {{"n_questions", dataset.header.n_questions},
                           {"p_negative", dataset.header.p_negative},
                           {"seed", dataset.header.seed}}}};
    out << header.dump() << '\n';
    for (const auto& item : dataset.items) out << item.to_json().dump() << '\n';
    return out.str();
}

void write_dataset(const Dataset& dataset, const std::filesystem::path& path) { write_file(path, dataset_text(dataset)); }

Dataset parse_dataset(std::string_view text) {
    Dataset d;
    std::size_t line_no = 0;
    bool have_header = false;
    std::size_t start = 0;
    while (start < text.size()) {
        auto end = text.find('\n', start);
        if (end == std::string_view::npos) end = text.size();
        std::string_view line = text.substr(start, end - start);
        start = end + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (trim(line).empty()) continue;
        try {
            const json j = json::parse(line);
            if (!have_header) {
                if (!j.is_object() || j.value("format", "") != "ehrqa" || j.value("version", 0) != 1) {
                    malformed("expected the ehrqa header");
                }
                const json& cfg = need(j, "config", json::value_t::object);
                d.header.n_questions = need(cfg, "n_questions", json::value_t::number_unsigned).get<std::size_t>();
                d.header.p_negative = need(cfg, "p_negative", json::value_t::number_float).get<double>();
                d.header.seed = need(cfg, "seed", json::value_t::number_unsigned).get<std::uint64_t>();
                have_header = true;
            } else {
                d.items.push_back(EhrqaItem::from_json(j));
            }
        } catch (const json::exception& e) {
            throw Error(Errc::MalformedRecord, "line " + std::to_string(line_no) + ": " + e.what());
        } catch (const Error& e) {
            throw Error(Errc::MalformedRecord, "line " + std::to_string(line_no) + ": " + e.detail());
        }
    }
    if (!have_header) malformed("empty dataset");
    if (d.items.size() != d.header.n_questions) {
        malformed("header announces " + std::to_string(d.header.n_questions) + " items, found " +
                  std::to_string(d.items.size()));
    }
    return d;
}

Dataset read_dataset(const std::filesystem::path& path) { return parse_dataset(read_file(path)); }

}  // namespace almanac::ehrqa
